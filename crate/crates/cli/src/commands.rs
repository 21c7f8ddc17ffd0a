use irl_lab::airl::{airl_fit, AirlConfig, AirlDiscriminator, DiscriminatorForm};
use irl_lab::envs::{
    make_cyclic_two_state, make_gridworld, make_random_mdp, make_risky_path, GridworldConfig, RandomMdpConfig,
};
use irl_lab::gcl::{gcl_fit, GclConfig, GclMode};
use irl_lab::io::{
    mdp_spec_to_string, parse_reward, read_mdp_spec, read_trajectories, reward_to_string, trajectories_to_string,
    MdpSpec, TransitionEncoding,
};
use irl_lab::mce::{dual_gradient, gradcheck, log_likelihood, mce_irl_fit, FitConfig, FitResult, LearningRate};
use irl_lab::me::{me_density_table, risky_path_report, risky_path_sweep, RiskyChoice};
use irl_lab::occupancy::expected_return;
use irl_lab::shaping::{
    check_hard_policy_equiv, check_soft_policy_equiv, constant_offset_check, linked_states, scaled_potential_shape,
    Potential,
};
use irl_lab::soft_vi::{initial_value, soft_vi_finite, soft_vi_infinite, soft_vi_infinite_with, SoftViOptions};
use irl_lab::trajectory::{discounted_return, sample_trajectories};
use irl_lab::{DemonstrationSet, FeatureMap, Horizon, Policy, RewardModel, TabularShape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::output::{input, policy_json, read_json_array, substream, values_json, CliResult, Run, Status};
use crate::{
    AirlArgs, Criterion, DemoPolicy, DemosArgs, DecomposableArgs, Encoding, EnvExportArgs, EnvName, FormArg,
    GclArgs, GclModeArg, GradcheckArgs, MceArgs, ModelKind, OffsetArgs, RiskyPathArgs, ShapingArgs, SolveArgs, SpecArgs,
};

fn config<T: serde::Serialize>(args: &T) -> Value {
    serde_json::to_value(args).expect("arguments serialize")
}

fn load_spec(a: &SpecArgs) -> CliResult<MdpSpec<f64>> {
    let mut spec = read_mdp_spec::<f64>(&a.spec)?;
    if let Some(path) = &a.reward {
        let text = std::fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
        let r = parse_reward(&text, spec.mdp.n_states(), spec.mdp.n_actions(), spec.features.as_ref())
            .map_err(|e| input(format!("{}: {e}", path.display())))?;
        spec.reward = Some(r);
    }
    if let Some(g) = a.gamma {
        spec.mdp = spec.mdp.with_gamma(g)?;
    }
    if let Some(h) = a.horizon {
        spec.mdp = spec.mdp.with_horizon(h)?;
    }
    Ok(spec)
}

fn reward_of(spec: &MdpSpec<f64>) -> CliResult<&RewardModel<f64>> {
    spec.reward
        .as_ref()
        .ok_or_else(|| input("the spec has no reward; pass --reward or add one to the spec"))
}

fn soft_optimal(spec: &MdpSpec<f64>, reward: &RewardModel<f64>) -> CliResult<Policy<f64>> {
    Ok(irl_lab::soft_vi::plan(&spec.mdp, reward)?.1)
}

fn template(spec: &MdpSpec<f64>, kind: Option<ModelKind>) -> CliResult<RewardModel<f64>> {
    let (n_s, n_a) = (spec.mdp.n_states(), spec.mdp.n_actions());
    let kind = kind.unwrap_or(if spec.features.is_some() { ModelKind::Linear } else { ModelKind::State });
    Ok(match kind {
        ModelKind::Linear => {
            let f = spec
                .features
                .clone()
                .ok_or_else(|| input("a linear model needs the spec's features table"))?;
            RewardModel::linear(vec![0.0; f.dim()], f)?
        }
        ModelKind::State => RewardModel::zeros(TabularShape::State, n_s, n_a),
        ModelKind::StateAction => RewardModel::zeros(TabularShape::StateAction, n_s, n_a),
        ModelKind::Transition => RewardModel::zeros(TabularShape::Transition, n_s, n_a),
    })
}

fn expert(spec: &MdpSpec<f64>, demos: Option<&std::path::Path>) -> CliResult<(DemonstrationSet<f64>, &'static str)> {
    match demos {
        Some(path) => {
            let trajs = read_trajectories(path)?;
            for (i, t) in trajs.iter().enumerate() {
                t.validate(&spec.mdp)
                    .map_err(|e| input(format!("{}: line {}: {e}", path.display(), i + 1)))?;
            }
            Ok((DemonstrationSet::Trajectories(trajs), "trajectories"))
        }
        None => {
            let r = reward_of(spec)?;
            Ok((DemonstrationSet::ExactPolicy(soft_optimal(spec, r)?), "exact_soft_optimal"))
        }
    }
}

fn horizon_json(h: Horizon) -> Value {
    match h {
        Horizon::Finite(t) => json!(t),
        Horizon::Infinite => json!("infinite"),
    }
}

pub fn env_export(a: &EnvExportArgs) -> CliResult<Status> {
    let run = Run::new("env export", &a.common, config(a))?;
    let mut spec: MdpSpec<f64> = match a.name {
        EnvName::RiskyPath => make_risky_path::<f64>().into(),
        EnvName::Gridworld => {
            let d = GridworldConfig::default();
            make_gridworld::<f64>(&GridworldConfig {
                width: a.width,
                height: a.height,
                stay_action: a.stay,
                gamma: a.gamma.unwrap_or(d.gamma),
                horizon: a.horizon.unwrap_or(d.horizon),
                goal_rewards: a.goals.clone(),
            })?
            .into()
        }
        EnvName::Cyclic => {
            let mdp = make_cyclic_two_state::<f64>(a.self_loops);
            MdpSpec {
                features: Some(FeatureMap::one_hot_state(mdp.n_states(), mdp.n_actions())),
                mdp,
                reward: None,
            }
        }
        EnvName::Random => {
            let d = RandomMdpConfig::default();
            make_random_mdp::<f64>(&RandomMdpConfig {
                seed: substream(a.common.seed, "env"),
                n_states: a.n_states,
                n_actions: a.n_actions,
                gamma: a.gamma.unwrap_or(d.gamma),
                horizon: a.horizon.unwrap_or(d.horizon),
                deterministic: a.deterministic,
                feature_dim: a.feature_dim,
            })?
            .into()
        }
    };
    if let Some(g) = a.gamma {
        spec.mdp = spec.mdp.with_gamma(g)?;
    }
    if let Some(h) = a.horizon {
        spec.mdp = spec.mdp.with_horizon(h)?;
    }
    let enc = match a.encoding {
        Encoding::Dense => TransitionEncoding::Dense,
        Encoding::Sparse => TransitionEncoding::Sparse,
    };
    run.write_text("mdp.json", &mdp_spec_to_string(&spec, enc))?;
    let m = &spec.mdp;
    run.finish(
        Status::Ok,
        json!({
            "spec_file": "mdp.json",
            "n_states": m.n_states(),
            "n_actions": m.n_actions(),
            "gamma": m.gamma(),
            "horizon": horizon_json(m.horizon()),
            "deterministic": m.is_deterministic(),
        }),
    )
}

pub fn solve(a: &SolveArgs) -> CliResult<Status> {
    let run = Run::new("solve", &a.common, config(a))?;
    let spec = load_spec(&a.spec)?;
    let reward = reward_of(&spec)?;
    let (values, policy, iterations) = match spec.mdp.horizon() {
        Horizon::Finite(t) => {
            let (v, p) = soft_vi_finite(&spec.mdp, reward)?;
            (v, p, t)
        }
        Horizon::Infinite => {
            let opts = SoftViOptions {
                tol: a.tol,
                max_iter: a.max_iters,
                init: None,
            };
            let (v, p, report) = soft_vi_infinite_with(&spec.mdp, reward, &opts)?;
            (v, p, report.iterations)
        }
    };
    run.write_json("values.json", &values_json(&values))?;
    run.write_json("policy.json", &policy_json(&policy))?;
    run.finish(
        Status::Ok,
        json!({
            "values_file": "values.json",
            "policy_file": "policy.json",
            "iterations": iterations,
            "initial_value": initial_value(&spec.mdp, &values),
            "expected_return": expected_return(&spec.mdp, &policy, reward)?,
        }),
    )
}

pub fn demos(a: &DemosArgs) -> CliResult<Status> {
    let run = Run::new("demos", &a.common, config(a))?;
    let spec = load_spec(&a.spec)?;
    let policy = match a.policy {
        DemoPolicy::Soft => soft_optimal(&spec, reward_of(&spec)?)?,
        DemoPolicy::Uniform => Policy::uniform(spec.mdp.n_states(), spec.mdp.n_actions()),
    };
    let trajs = sample_trajectories(&spec.mdp, &policy, a.count, substream(a.common.seed, "demos"))?;
    run.write_text("demos.jsonl", &trajectories_to_string(&trajs))?;
    let mean_return = spec.reward.as_ref().map(|r| {
        trajs.iter().map(|t| discounted_return(t, r, spec.mdp.gamma())).sum::<f64>() / trajs.len() as f64
    });
    run.finish(
        Status::Ok,
        json!({
            "demos_file": "demos.jsonl",
            "count": trajs.len(),
            "mean_return": mean_return,
        }),
    )
}

fn feature_gap(spec: &MdpSpec<f64>, model: &RewardModel<f64>, demos: &DemonstrationSet<f64>) -> CliResult<f64> {
    let demo_grad = demos.grad_expectations(&spec.mdp, model)?;
    let g = dual_gradient(&spec.mdp, model, &demo_grad)?;
    Ok(g.iter().fold(0.0f64, |m, x| m.max(x.abs())))
}

fn write_fit(run: &Run, fit: &FitResult<f64>) -> CliResult<()> {
    run.write_text("reward.json", &reward_to_string(&fit.model))?;
    run.write_json("policy.json", &policy_json(&fit.policy))?;
    run.write_fit_trace("trace.csv", &fit.trace)
}

fn fit_summary(
    spec: &MdpSpec<f64>,
    fit: &FitResult<f64>,
    demos: &DemonstrationSet<f64>,
    expert_kind: &str,
) -> CliResult<Value> {
    let healthy = fit.trace.failure.is_none();
    Ok(json!({
        "reward_file": "reward.json",
        "policy_file": "policy.json",
        "trace_file": "trace.csv",
        "expert": expert_kind,
        "converged": fit.trace.converged,
        "iterations": fit.trace.records.len(),
        "final_grad_norm": fit.trace.final_grad_norm(),
        "theta": fit.theta(),
        "log_likelihood": if healthy { Some(log_likelihood(&spec.mdp, &fit.model, demos)?) } else { None },
        "feature_gap_inf": if healthy { Some(feature_gap(spec, &fit.model, demos)?) } else { None },
    }))
}

pub fn irl_mce(a: &MceArgs, me: bool) -> CliResult<Status> {
    let run = Run::new(if me { "irl me" } else { "irl mce" }, &a.common, config(a))?;
    let spec = load_spec(&a.spec)?;
    if me {
        if !spec.mdp.is_deterministic() || spec.mdp.deterministic_start().is_none() {
            return Err(input(
                "ME IRL needs deterministic dynamics and start state; use `irl mce` or `diagnose risky-path`",
            ));
        }
        if !spec.mdp.horizon().is_finite() {
            return Err(input("ME IRL needs a finite horizon"));
        }
    }
    let model = template(&spec, a.expert.model)?;
    let (demos, expert_kind) = expert(&spec, a.expert.demos.as_deref())?;
    let cfg = FitConfig {
        learning_rate: match a.decay {
            Some(decay) => LearningRate::Decay { initial: a.lr, decay },
            None => LearningRate::Constant(a.lr),
        },
        stop_grad_norm: a.tol,
        max_iters: a.max_iters,
        seed: a.common.seed,
        backtrack: a.backtrack,
    };
    let fit = mce_irl_fit(&spec.mdp, &demos, &model, &cfg)?;
    write_fit(&run, &fit)?;
    let mut summary = fit_summary(&spec, &fit, &demos, expert_kind)?;
    if me && fit.trace.failure.is_none() {
        match me_density_table(&spec.mdp, &fit.model) {
            Ok(table) => {
                let rows: Vec<Value> = table
                    .trajectories
                    .iter()
                    .zip(&table.log_density)
                    .map(|(t, l)| json!({ "states": t.states, "actions": t.actions, "log_density": l }))
                    .collect();
                run.write_json(
                    "density.json",
                    &json!({ "log_partition": table.log_partition, "trajectories": rows }),
                )?;
                summary["density_file"] = json!("density.json");
                summary["log_partition"] = json!(table.log_partition);
                summary["density_total_mass"] = json!(table.total_mass());
            }
            Err(irl_lab::Error::EnumerationCap { estimate, cap }) => {
                summary["density_file"] = json!(null);
                summary["density_note"] = json!(format!("enumeration of ~{estimate:e} trajectories exceeds {cap:e}"));
            }
            Err(e) => return Err(e.into()),
        }
    }
    let status = match &fit.trace.failure {
        Some(m) => Status::NumericalFailure(m.clone()),
        None => Status::Ok,
    };
    run.finish(status, summary)
}

pub fn irl_gcl(a: &GclArgs) -> CliResult<Status> {
    let run = Run::new("irl gcl", &a.common, config(a))?;
    let spec = load_spec(&a.spec)?;
    let model = template(&spec, a.expert.model)?;
    let (demos, expert_kind) = expert(&spec, a.expert.demos.as_deref())?;
    let cfg = GclConfig {
        outer_iters: a.max_iters,
        rl_steps_per_iter: a.rl_steps,
        n_samples: a.samples,
        lr: a.lr,
        seed: substream(a.common.seed, "gcl"),
        mode: match a.mode {
            GclModeArg::Exact => GclMode::Exact,
            GclModeArg::Sampled => GclMode::Sampled,
        },
        expert_mixture: a.expert_mixture,
        stop_grad_norm: a.tol,
    };
    let out = gcl_fit(&spec.mdp, &demos, &model, &cfg)?;
    write_fit(&run, &out.fit)?;
    run.write_json("proposal.json", &policy_json(&out.proposal.effective_policy()?))?;
    let mut summary = fit_summary(&spec, &out.fit, &demos, expert_kind)?;
    summary["proposal_file"] = json!("proposal.json");
    summary["degenerate_iterations"] = json!(out
        .fit
        .trace
        .records
        .iter()
        .filter(|r| r.note.as_deref().is_some_and(|n| n.starts_with("degenerate")))
        .count());
    let status = match &out.fit.trace.failure {
        Some(m) => Status::NumericalFailure(m.clone()),
        None => Status::Ok,
    };
    run.finish(status, summary)
}

fn std_dev(xs: &[f64]) -> f64 {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

pub fn irl_airl(a: &AirlArgs) -> CliResult<Status> {
    let run = Run::new("irl airl", &a.common, config(a))?;
    let spec = load_spec(&a.spec)?;
    let (demos, expert_kind) = match &a.demos {
        None if spec.mdp.gamma() < 1.0 => {
            let (_, pi) = soft_vi_infinite(&spec.mdp, reward_of(&spec)?, 1e-12, 1_000_000)?;
            (DemonstrationSet::ExactPolicy(pi), "exact_stationary_soft_optimal")
        }
        _ => expert(&spec, a.demos.as_deref())?,
    };
    let cfg = AirlConfig {
        outer_iters: a.max_iters,
        disc_lr: a.lr,
        disc_steps: a.disc_steps,
        gen_soft_vi_sweeps: a.gen_sweeps,
        seed: a.common.seed,
        form: match a.form {
            FormArg::Free => DiscriminatorForm::Free,
            FormArg::Decomposed => DiscriminatorForm::Decomposed,
        },
    };
    let state = airl_fit(&spec.mdp, &demos, &cfg)?;
    let (n_s, n_a) = (spec.mdp.n_states(), spec.mdp.n_actions());
    run.write_json("discriminator.json", &state.discriminator)?;
    run.write_text("reward.json", &reward_to_string(&state.discriminator.to_reward_model()))?;
    run.write_json("policy.json", &policy_json(&state.generator))?;
    run.write_csv("trace.csv", &state.trace)?;
    let last = state.trace.last();
    let mut summary = json!({
        "discriminator_file": "discriminator.json",
        "reward_file": "reward.json",
        "policy_file": "policy.json",
        "trace_file": "trace.csv",
        "expert": expert_kind,
        "iterations": state.trace.len(),
        "diverged": state.diverged,
        "final_loss": last.map(|r| r.loss),
        "final_disc_grad_norm": last.map(|r| r.disc_grad_norm),
    });
    if let AirlDiscriminator::Decomposed { g, .. } = &state.discriminator {
        let g_reward = RewardModel::tabular(TabularShape::State, n_s, n_a, g.clone())?;
        run.write_text("reward_g.json", &reward_to_string(&g_reward))?;
        summary["reward_g_file"] = json!("reward_g.json");
        if let Some(RewardModel::Tabular {
            shape: TabularShape::State,
            params,
            ..
        }) = &spec.reward
        {
            let diff: Vec<f64> = g.iter().zip(params).map(|(x, y)| x - y).collect();
            summary["g_minus_true_std"] = json!(std_dev(&diff));
        }
    }
    let status = if state.diverged {
        Status::NumericalFailure("discriminator loss became non-finite".into())
    } else {
        Status::Ok
    };
    run.finish(status, summary)
}

fn random_vector(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn check_shaping(a: &ShapingArgs) -> CliResult<Status> {
    let run = Run::new("check shaping", &a.common, config(a))?;
    let spec = load_spec(&a.spec)?;
    let r = reward_of(&spec)?;
    let (n_s, n_a) = (spec.mdp.n_states(), spec.mdp.n_actions());
    let (r2, phi, lambda) = match &a.reward2 {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
            let r2 = parse_reward(&text, n_s, n_a, spec.features.as_ref())
                .map_err(|e| input(format!("{}: {e}", path.display())))?;
            (r2, None, None)
        }
        None => {
            let phi = match &a.potential {
                Some(p) => read_json_array(p)?,
                None => random_vector(substream(a.common.seed, "potential"), n_s),
            };
            let lambda = a.lambda.unwrap_or(1.0);
            if !(lambda > 0.0) {
                return Err(input("--lambda must be positive"));
            }
            let pot = Potential::new(phi.clone())?;
            let r2 = scaled_potential_shape(r, &pot, spec.mdp.gamma(), lambda)?;
            (r2, Some(phi), Some(lambda))
        }
    };
    run.write_text("reward2.json", &reward_to_string(&r2))?;
    let soft = check_soft_policy_equiv(&spec.mdp, r, &r2)?;
    let hard = check_hard_policy_equiv(&spec.mdp, r, &r2)?;
    let soft_ok = soft <= a.tol;
    let status = match a.criterion {
        Criterion::Soft => Status::check(soft_ok, || format!("soft advantages differ by {soft:e} > {:e}", a.tol)),
        Criterion::Hard => Status::check(hard.equal, || {
            format!("argmax sets differ at {} (step, state) pairs", hard.mismatches.len())
        }),
    };
    run.finish(
        status,
        json!({
            "reward2_file": "reward2.json",
            "potential": phi,
            "lambda": lambda,
            "soft_advantage_discrepancy": soft,
            "soft_equivalent": soft_ok,
            "hard_equivalent": hard.equal,
            "hard_mismatches": hard.mismatches,
        }),
    )
}

pub fn check_decomposable(a: &DecomposableArgs) -> CliResult<Status> {
    let run = Run::new("check decomposable", &a.common, config(a))?;
    let spec = read_mdp_spec::<f64>(&a.spec)?;
    let part = linked_states(&spec.mdp);
    let status = Status::check(part.decomposable, || {
        format!("{} linkage classes, {} orphan states", part.classes.len(), part.orphans.len())
    });
    run.finish(
        status,
        json!({
            "decomposable": part.decomposable,
            "classes": part.classes,
            "orphans": part.orphans,
            "deterministic": spec.mdp.is_deterministic(),
        }),
    )
}

fn state_values(r: &RewardModel<f64>, what: &str) -> CliResult<Vec<f64>> {
    match r {
        RewardModel::Tabular {
            shape: TabularShape::State,
            params,
            ..
        } => Ok(params.clone()),
        _ => Err(input(format!("{what} must be a tabular state-only reward"))),
    }
}

pub fn check_offset(a: &OffsetArgs) -> CliResult<Status> {
    let run = Run::new("check offset", &a.common, config(a))?;
    let spec = load_spec(&a.spec)?;
    let r = state_values(reward_of(&spec)?, "the spec's reward")?;
    let text = std::fs::read_to_string(&a.reward2).map_err(|e| input(format!("{}: {e}", a.reward2.display())))?;
    let r2 = parse_reward(&text, spec.mdp.n_states(), spec.mdp.n_actions(), spec.features.as_ref())
        .map_err(|e| input(format!("{}: {e}", a.reward2.display())))?;
    let r2 = state_values(&r2, "--reward2")?;
    let (ok, k) = constant_offset_check(&r, &r2, a.tol)?;
    let residual = r.iter().zip(&r2).fold(0.0f64, |m, (x, y)| m.max((y - x - k).abs()));
    let status = Status::check(ok, || format!("residual {residual:e} exceeds {:e}", a.tol));
    run.finish(
        status,
        json!({ "offset": k, "max_residual": residual, "constant_offset": ok }),
    )
}

pub fn check_gradcheck(a: &GradcheckArgs) -> CliResult<Status> {
    let run = Run::new("check gradcheck", &a.common, config(a))?;
    let spec = load_spec(&a.spec)?;
    let model = template(&spec, a.expert.model)?;
    let (demos, expert_kind) = match (&a.expert.demos, &spec.reward) {
        (None, None) => (
            DemonstrationSet::ExactPolicy(Policy::uniform(spec.mdp.n_states(), spec.mdp.n_actions())),
            "uniform",
        ),
        _ => expert(&spec, a.expert.demos.as_deref())?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(substream(a.common.seed, "gradcheck"));
    let mut errors = Vec::with_capacity(a.thetas);
    for _ in 0..a.thetas {
        let theta: Vec<f64> = (0..model.n_params()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m = model.with_params(theta)?;
        errors.push(gradcheck(&spec.mdp, &m, &demos, a.step)?.relative_error);
    }
    let worst = errors.iter().copied().fold(0.0f64, f64::max);
    let status = Status::check(worst < a.tol, || format!("relative error {worst:e} >= {:e}", a.tol));
    run.finish(
        status,
        json!({
            "expert": expert_kind,
            "relative_errors": errors,
            "max_relative_error": worst,
        }),
    )
}

pub fn diagnose_risky_path(a: &RiskyPathArgs) -> CliResult<Status> {
    let run = Run::new("diagnose risky-path", &a.common, config(a))?;
    let reports = match a.gamma_grid {
        Some(step) => risky_path_sweep(step)?,
        None => a.gamma.iter().map(|&g| risky_path_report(g)).collect::<Result<Vec<_>, _>>()?,
    };
    run.write_csv("reports.csv", &reports)?;
    let naive_risky: Vec<f64> = reports
        .iter()
        .filter(|r| r.naive_preferred == RiskyChoice::Risky)
        .map(|r| r.gamma)
        .collect();
    run.finish(
        Status::Ok,
        json!({
            "reports_file": "reports.csv",
            "reports": reports,
            "safe_return_always_higher": reports.iter().all(|r| r.return_preferred == RiskyChoice::Safe),
            "naive_prefers_risky_at": naive_risky,
        }),
    )
}
