//! `irl-lab`: command-line runner for the tabular IRL toolkit.
//!
//! Every subcommand writes `result.json` (run metadata, config and summary) into the
//! output directory, next to its artifacts. Exit codes: 0 success, 1 a `check`
//! verdict was negative, 2 bad input, 3 numerical failure.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use irl_lab::Horizon;
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "irl-lab", version, about = "Tabular inverse reinforcement learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Built-in environments.
    Env {
        #[command(subcommand)]
        command: EnvCommand,
    },
    /// Soft value iteration on the spec's reward.
    Solve(SolveArgs),
    /// Sample demonstration trajectories.
    Demos(DemosArgs),
    /// Fit a reward to demonstrations.
    Irl {
        #[command(subcommand)]
        command: IrlCommand,
    },
    /// Analysis checks; the exit code carries the verdict.
    Check {
        #[command(subcommand)]
        command: CheckCommand,
    },
    /// Diagnostics on canonical examples.
    Diagnose {
        #[command(subcommand)]
        command: DiagnoseCommand,
    },
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct Common {
    /// Output directory.
    #[arg(long, env = "IRL_LAB_OUT", default_value = "irl-lab-out")]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SpecArgs {
    /// MDP spec file (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    /// Reward file replacing the spec's reward.
    #[arg(long)]
    pub reward: Option<PathBuf>,
    /// Override the spec's discount.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Override the spec's horizon: a step count or `infinite`.
    #[arg(long, value_parser = parse_horizon)]
    pub horizon: Option<Horizon>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ExpertArgs {
    /// Demonstrations (JSON lines). Without it the soft-optimal policy for the
    /// spec's reward serves as an exact expert.
    #[arg(long)]
    pub demos: Option<PathBuf>,
    /// Reward parameterization to learn; defaults to `linear` when the spec has
    /// features and `state` otherwise.
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Linear,
    State,
    StateAction,
    Transition,
}

pub fn parse_horizon(s: &str) -> Result<Horizon, String> {
    if s.eq_ignore_ascii_case("infinite") {
        return Ok(Horizon::Infinite);
    }
    match s.parse::<usize>() {
        Ok(0) | Err(_) => Err(format!("expected a positive step count or `infinite`, got {s:?}")),
        Ok(t) => Ok(Horizon::Finite(t)),
    }
}

#[derive(Subcommand, Debug)]
enum EnvCommand {
    /// Write a built-in environment as an MDP spec file.
    Export(EnvExportArgs),
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvName {
    RiskyPath,
    Gridworld,
    Cyclic,
    Random,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Encoding {
    Dense,
    Sparse,
}

#[derive(Args, Debug, Serialize)]
pub struct EnvExportArgs {
    #[arg(value_enum)]
    pub name: EnvName,
    #[arg(long, default_value_t = 3)]
    pub width: usize,
    #[arg(long, default_value_t = 3)]
    pub height: usize,
    /// Add a `stay` action to the gridworld.
    #[arg(long)]
    pub stay: bool,
    /// Gridworld state reward as `cell=value`; repeatable.
    #[arg(long = "goal", value_parser = parse_goal)]
    pub goals: Vec<(usize, f64)>,
    /// Give the cyclic MDP self-transitions.
    #[arg(long)]
    pub self_loops: bool,
    #[arg(long, default_value_t = 4)]
    pub n_states: usize,
    #[arg(long, default_value_t = 2)]
    pub n_actions: usize,
    #[arg(long)]
    pub deterministic: bool,
    #[arg(long, default_value_t = 3)]
    pub feature_dim: usize,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, value_parser = parse_horizon)]
    pub horizon: Option<Horizon>,
    #[arg(long, value_enum, default_value = "dense")]
    pub encoding: Encoding,
    #[command(flatten)]
    pub common: Common,
}

fn parse_goal(s: &str) -> Result<(usize, f64), String> {
    let (cell, value) = s.split_once('=').ok_or_else(|| format!("expected cell=value, got {s:?}"))?;
    let cell = cell.trim().parse().map_err(|_| format!("bad cell index in {s:?}"))?;
    let value = value.trim().parse().map_err(|_| format!("bad value in {s:?}"))?;
    Ok((cell, value))
}

#[derive(Args, Debug, Serialize)]
pub struct SolveArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Stopping tolerance for stationary soft VI.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iters: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemoPolicy {
    /// Soft-optimal for the spec's reward.
    Soft,
    Uniform,
}

#[derive(Args, Debug, Serialize)]
pub struct DemosArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, value_enum, default_value = "soft")]
    pub policy: DemoPolicy,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Subcommand, Debug)]
enum IrlCommand {
    /// Maximum causal entropy IRL by dual ascent.
    Mce(MceArgs),
    /// Maximum entropy IRL on a deterministic finite-horizon MDP.
    Me(MceArgs),
    /// Importance-sampled (guided cost learning) fit.
    Gcl(GclArgs),
    /// Adversarial IRL on a deterministic MDP.
    Airl(AirlArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct MceArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub expert: ExpertArgs,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    /// Use the schedule `lr / (1 + decay k)`.
    #[arg(long)]
    pub decay: Option<f64>,
    /// Stop once the gradient's infinity norm falls to this value.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iters: usize,
    /// Halve the step whenever the log-likelihood would decrease.
    #[arg(long)]
    pub backtrack: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GclModeArg {
    Exact,
    Sampled,
}

#[derive(Args, Debug, Serialize)]
pub struct GclArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub expert: ExpertArgs,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Outer iterations.
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 5)]
    pub rl_steps: usize,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, value_enum, default_value = "sampled")]
    pub mode: GclModeArg,
    /// Weight of the empirical expert policy in the proposal.
    #[arg(long, default_value_t = 0.0)]
    pub expert_mixture: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormArg {
    Free,
    Decomposed,
}

#[derive(Args, Debug, Serialize)]
pub struct AirlArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Demonstrations (JSON lines); defaults to the exact soft-optimal expert.
    #[arg(long)]
    pub demos: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "free")]
    pub form: FormArg,
    /// Discriminator learning rate.
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    /// Outer rounds.
    #[arg(long, default_value_t = 2000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1)]
    pub disc_steps: usize,
    #[arg(long, default_value_t = 5)]
    pub gen_sweeps: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Subcommand, Debug)]
enum CheckCommand {
    /// Compare the spec's reward with a shaped or supplied alternative.
    Shaping(ShapingArgs),
    /// Linkage partition of the transition graph.
    Decomposable(DecomposableArgs),
    /// Whether two state-only rewards differ by a constant.
    Offset(OffsetArgs),
    /// Analytic likelihood gradient against central differences.
    Gradcheck(GradcheckArgs),
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    Soft,
    Hard,
}

#[derive(Args, Debug, Serialize)]
pub struct ShapingArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Second reward to compare against; otherwise the spec's reward is shaped.
    #[arg(long, conflicts_with_all = ["potential", "lambda"])]
    pub reward2: Option<PathBuf>,
    /// Potential as a JSON array; random in [-1, 1] when absent.
    #[arg(long)]
    pub potential: Option<PathBuf>,
    /// Scale applied to the shaped reward.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_enum, default_value = "soft")]
    pub criterion: Criterion,
    /// Largest soft-advantage discrepancy accepted as equivalent.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct DecomposableArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct OffsetArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    /// State-only reward compared with the spec's.
    #[arg(long)]
    pub reward2: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub expert: ExpertArgs,
    /// Number of random parameter vectors.
    #[arg(long, default_value_t = 10)]
    pub thetas: usize,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    /// Largest relative error accepted.
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Subcommand, Debug)]
enum DiagnoseCommand {
    /// Naive ME density versus true returns on the RiskyPath MDP.
    RiskyPath(RiskyPathArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct RiskyPathArgs {
    /// Discount to report; repeatable.
    #[arg(long, required_unless_present = "gamma_grid")]
    pub gamma: Vec<f64>,
    /// Report every multiple of this step in (0, 1].
    #[arg(long, conflicts_with = "gamma")]
    pub gamma_grid: Option<f64>,
    #[command(flatten)]
    pub common: Common,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Env {
            command: EnvCommand::Export(a),
        } => commands::env_export(&a),
        Command::Solve(a) => commands::solve(&a),
        Command::Demos(a) => commands::demos(&a),
        Command::Irl { command } => match command {
            IrlCommand::Mce(a) => commands::irl_mce(&a, false),
            IrlCommand::Me(a) => commands::irl_mce(&a, true),
            IrlCommand::Gcl(a) => commands::irl_gcl(&a),
            IrlCommand::Airl(a) => commands::irl_airl(&a),
        },
        Command::Check { command } => match command {
            CheckCommand::Shaping(a) => commands::check_shaping(&a),
            CheckCommand::Decomposable(a) => commands::check_decomposable(&a),
            CheckCommand::Offset(a) => commands::check_offset(&a),
            CheckCommand::Gradcheck(a) => commands::check_gradcheck(&a),
        },
        Command::Diagnose {
            command: DiagnoseCommand::RiskyPath(a),
        } => commands::diagnose_risky_path(&a),
    };
    match outcome {
        Ok(status) => {
            if let Some(msg) = status.message() {
                eprintln!("{msg}");
            }
            ExitCode::from(status.code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
