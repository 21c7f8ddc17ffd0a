use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use irl_lab::mce::FitTrace;
use irl_lab::{Error, Policy, SoftMode, SoftValues};
use serde::Serialize;
use serde_json::{json, Value};

use crate::Common;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Numerical(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "{m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Numerical(_)
            | Error::ConvergenceFailure { .. }
            | Error::DegenerateEstimate(_)
            | Error::InvalidSupport(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Ok,
    CheckFailed(String),
    NumericalFailure(String),
}

impl Status {
    pub fn code(&self) -> u8 {
        match self {
            Status::Ok => 0,
            Status::CheckFailed(_) => 1,
            Status::NumericalFailure(_) => 3,
        }
    }

    pub fn message(&self) -> Option<String> {
        match self {
            Status::Ok => None,
            Status::CheckFailed(m) => Some(format!("check failed: {m}")),
            Status::NumericalFailure(m) => Some(format!("numerical failure: {m}")),
        }
    }

    fn label(&self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::CheckFailed(_) => "check_failed",
            Status::NumericalFailure(_) => "numerical_failure",
        }
    }

    pub fn check(passed: bool, why: impl FnOnce() -> String) -> Self {
        if passed {
            Status::Ok
        } else {
            Status::CheckFailed(why())
        }
    }
}

/// Derives an independent seed for a named component from the run seed.
pub fn substream(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    // splitmix64 finaliser
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Output directory plus the metadata shared by every record written there.
pub struct Run {
    dir: PathBuf,
    command: &'static str,
    seed: u64,
    config: Value,
}

impl Run {
    pub fn new(command: &'static str, common: &Common, config: Value) -> CliResult<Self> {
        fs::create_dir_all(&common.out).map_err(|e| input(format!("{}: {e}", common.out.display())))?;
        Ok(Self {
            dir: common.out.clone(),
            command,
            seed: common.seed,
            config,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_text(&self, name: &str, text: &str) -> CliResult<()> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| input(format!("{}: {e}", p.display())))
    }

    pub fn write_json(&self, name: &str, value: &impl Serialize) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| input(e.to_string()))?;
        text.push('\n');
        self.write_text(name, &text)
    }

    /// Writes `result.json` and hands back the status.
    pub fn finish(self, status: Status, result: Value) -> CliResult<Status> {
        let record = json!({
            "command": self.command,
            "versions": { "irl-lab-cli": env!("CARGO_PKG_VERSION") },
            "seed": self.seed,
            "config": self.config,
            "status": status.label(),
            "detail": status.message(),
            "result": result,
        });
        self.write_json("result.json", &record)?;
        Ok(status)
    }

    pub fn write_fit_trace(&self, name: &str, trace: &FitTrace) -> CliResult<()> {
        let n_theta = trace.records.first().map_or(0, |r| r.theta.len());
        let mut w = csv::Writer::from_path(self.path(name)).map_err(|e| input(e.to_string()))?;
        let mut header: Vec<String> = ["iteration", "grad_norm", "log_likelihood", "gap_norm", "step_size", "ess", "note"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((0..n_theta).map(|i| format!("theta_{i}")));
        w.write_record(&header).map_err(|e| input(e.to_string()))?;
        for r in &trace.records {
            let mut row = vec![
                r.iteration.to_string(),
                r.grad_norm.to_string(),
                r.log_likelihood.to_string(),
                r.gap_norm.to_string(),
                r.step_size.to_string(),
                r.ess.map_or(String::new(), |e| e.to_string()),
                r.note.clone().unwrap_or_default(),
            ];
            row.extend(r.theta.iter().map(|t| t.to_string()));
            w.write_record(&row).map_err(|e| input(e.to_string()))?;
        }
        w.flush().map_err(|e| input(e.to_string()))
    }

    pub fn write_csv<T: Serialize>(&self, name: &str, rows: &[T]) -> CliResult<()> {
        let mut w = csv::Writer::from_path(self.path(name)).map_err(|e| input(e.to_string()))?;
        for r in rows {
            w.serialize(r).map_err(|e| input(e.to_string()))?;
        }
        w.flush().map_err(|e| input(e.to_string()))
    }
}

/// `{"mode": ..., "v": [[...]], "q": [[...]]}`, one inner row per time step.
pub fn values_json(values: &SoftValues<f64>) -> Value {
    json!({
        "mode": match values.mode {
            SoftMode::Finite => "finite",
            SoftMode::Stationary => "stationary",
        },
        "n_states": values.n_states,
        "n_actions": values.n_actions,
        "v": values.v,
        "q": values.q,
    })
}

pub fn policy_json(policy: &Policy<f64>) -> Value {
    serde_json::to_value(policy).expect("policy serializes")
}

pub fn read_json_array(path: &Path) -> CliResult<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| input(format!("{}: {e}", path.display())))
}
