//! JSON MDP specs and JSON-lines trajectory files.
//!
//! An MDP spec looks like
//!
//! ```json
//! {
//!   "n_states": 2,
//!   "n_actions": 1,
//!   "gamma": 0.9,
//!   "horizon": "infinite",
//!   "initial": [1.0, 0.0],
//!   "transitions": { "sparse": [[0, 0, 1, 1.0], [1, 0, 0, 1.0]] },
//!   "terminal": [],
//!   "reward": { "kind": "tabular", "shape": "state", "values": [0.0, 1.0] }
//! }
//! ```
//!
//! `horizon` is a positive step count or `"infinite"`. Dense transitions are nested
//! `[s][a][s']`; sparse ones are `[s, a, s', p]` quadruples with omitted entries zero.
//! `terminal` lists absorbing states. Optional `features` are nested `[s][a][k]`;
//! a `linear` reward uses them. Tabular reward values are flattened row-major.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMap, RewardModel, TabularShape};
use crate::mdp::{Horizon, TabularMdp, Trajectory};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum HorizonField {
    Steps(usize),
    Marker(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum TransitionsField {
    Dense(Vec<Vec<Vec<f64>>>),
    Sparse(Vec<(usize, usize, usize, f64)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RewardField {
    Tabular { shape: TabularShape, values: Vec<f64> },
    Linear { theta: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpFile {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    horizon: HorizonField,
    initial: Vec<f64>,
    transitions: TransitionsField,
    #[serde(default)]
    terminal: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    features: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reward: Option<RewardField>,
}

/// An MDP with its optional features and reward.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpSpec<S> {
    pub mdp: TabularMdp<S>,
    pub features: Option<FeatureMap<S>>,
    pub reward: Option<RewardModel<S>>,
}

impl<S: Scalar> From<crate::envs::EnvBundle<S>> for MdpSpec<S> {
    fn from(b: crate::envs::EnvBundle<S>) -> Self {
        Self {
            mdp: b.mdp,
            features: Some(b.features),
            reward: b.reward,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionEncoding {
    Dense,
    Sparse,
}

fn build<S: Scalar>(file: MdpFile) -> Result<MdpSpec<S>> {
    let (n_s, n_a) = (file.n_states, file.n_actions);
    let mut problems = Vec::new();
    let horizon = match &file.horizon {
        HorizonField::Steps(t) => Some(Horizon::Finite(*t)),
        HorizonField::Marker(m) if m == "infinite" => Some(Horizon::Infinite),
        HorizonField::Marker(m) => {
            problems.push(format!("horizon: expected a step count or \"infinite\", got {m:?}"));
            None
        }
    };
    let mut transitions = vec![0.0; n_s * n_a * n_s];
    match &file.transitions {
        TransitionsField::Dense(t) => {
            if t.len() != n_s {
                problems.push(format!("transitions: {} state blocks, expected {n_s}", t.len()));
            }
            for (s, block) in t.iter().enumerate().take(n_s) {
                if block.len() != n_a {
                    problems.push(format!("transitions[{s}]: {} action rows, expected {n_a}", block.len()));
                }
                for (a, row) in block.iter().enumerate().take(n_a) {
                    if row.len() != n_s {
                        problems.push(format!("transitions[{s}][{a}]: {} entries, expected {n_s}", row.len()));
                        continue;
                    }
                    transitions[(s * n_a + a) * n_s..(s * n_a + a + 1) * n_s].copy_from_slice(row);
                }
            }
        }
        TransitionsField::Sparse(entries) => {
            let mut seen = BTreeSet::new();
            for (i, &(s, a, s2, p)) in entries.iter().enumerate() {
                if s >= n_s || a >= n_a || s2 >= n_s {
                    problems.push(format!("transitions.sparse[{i}]: index ({s}, {a}, {s2}) out of range"));
                } else if !seen.insert((s, a, s2)) {
                    problems.push(format!("transitions.sparse[{i}]: duplicate entry ({s}, {a}, {s2})"));
                } else {
                    transitions[(s * n_a + a) * n_s + s2] = p;
                }
            }
        }
    }
    let mut terminal = vec![false; n_s];
    for &s in &file.terminal {
        match terminal.get_mut(s) {
            Some(t) => *t = true,
            None => problems.push(format!("terminal: state {s} out of range")),
        }
    }
    let features = match &file.features {
        None => None,
        Some(f) => {
            let dim = f.first().and_then(|b| b.first()).map_or(0, Vec::len);
            let mut table = Vec::with_capacity(n_s * n_a * dim);
            let mut ok = f.len() == n_s;
            for block in f {
                ok &= block.len() == n_a;
                for row in block {
                    ok &= row.len() == dim;
                    table.extend(row.iter().map(|&x| S::lit(x)));
                }
            }
            if !ok {
                problems.push(format!("features: expected a [{n_s}][{n_a}][k] table"));
                None
            } else {
                FeatureMap::new(n_s, n_a, dim, table)
                    .map_err(|e| problems.push(format!("features: {e}")))
                    .ok()
            }
        }
    };
    let reward = match &file.reward {
        None => None,
        Some(RewardField::Tabular { shape, values }) => RewardModel::tabular(*shape, n_s, n_a, values.iter().map(|&x| S::lit(x)).collect())
            .map_err(|e| problems.push(format!("reward: {e}")))
            .ok(),
        Some(RewardField::Linear { theta }) => match &features {
            Some(f) => RewardModel::linear(theta.iter().map(|&x| S::lit(x)).collect(), f.clone())
                .map_err(|e| problems.push(format!("reward: {e}")))
                .ok(),
            None => {
                problems.push("reward: a linear reward needs a features table".into());
                None
            }
        },
    };
    let mdp = match horizon {
        Some(h) => TabularMdp::new(
            n_s,
            n_a,
            S::lit(file.gamma),
            h,
            file.initial.iter().map(|&x| S::lit(x)).collect(),
            transitions.into_iter().map(S::lit).collect(),
            terminal,
        ),
        None => Err(Error::InvalidMdp(Vec::new())),
    };
    match mdp {
        Ok(mdp) if problems.is_empty() => Ok(MdpSpec { mdp, features, reward }),
        Ok(_) => Err(Error::InvalidMdp(problems)),
        Err(Error::InvalidMdp(more)) => {
            problems.extend(more);
            Err(Error::InvalidMdp(problems))
        }
        Err(e) => {
            problems.push(e.to_string());
            Err(Error::InvalidMdp(problems))
        }
    }
}

/// Parses and validates a JSON MDP spec, reporting every schema violation found.
pub fn parse_mdp_spec<S: Scalar>(text: &str) -> Result<MdpSpec<S>> {
    let file: MdpFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    build(file)
}

pub fn read_mdp_spec<S: Scalar>(path: impl AsRef<Path>) -> Result<MdpSpec<S>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_mdp_spec(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Pretty-printed JSON with a trailing newline.
pub fn mdp_spec_to_string<S: Scalar>(spec: &MdpSpec<S>, encoding: TransitionEncoding) -> String {
    let mdp = &spec.mdp;
    let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
    let p = mdp.transitions();
    let transitions = match encoding {
        TransitionEncoding::Dense => TransitionsField::Dense(
            (0..n_s)
                .map(|s| {
                    (0..n_a)
                        .map(|a| p[(s * n_a + a) * n_s..(s * n_a + a + 1) * n_s].iter().map(|x| x.as_f64()).collect())
                        .collect()
                })
                .collect(),
        ),
        TransitionEncoding::Sparse => TransitionsField::Sparse(
            (0..n_s)
                .flat_map(|s| (0..n_a).map(move |a| (s, a)))
                .flat_map(|(s, a)| mdp.successors(s, a).iter().map(move |&(s2, q)| (s, a, s2, q.as_f64())))
                .collect(),
        ),
    };
    let features = spec.features.as_ref().map(|f| {
        (0..n_s)
            .map(|s| (0..n_a).map(|a| f.get(s, a).iter().map(|x| x.as_f64()).collect()).collect())
            .collect()
    });
    let reward = spec.reward.as_ref().map(reward_field);
    let file = MdpFile {
        n_states: n_s,
        n_actions: n_a,
        gamma: mdp.gamma().as_f64(),
        horizon: match mdp.horizon() {
            Horizon::Finite(t) => HorizonField::Steps(t),
            Horizon::Infinite => HorizonField::Marker("infinite".into()),
        },
        initial: mdp.initial().iter().map(|x| x.as_f64()).collect(),
        transitions,
        terminal: (0..n_s).filter(|&s| mdp.is_terminal(s)).collect(),
        features,
        reward,
    };
    let mut out = serde_json::to_string_pretty(&file).expect("spec serializes");
    out.push('\n');
    out
}

pub fn write_mdp_spec<S: Scalar>(path: impl AsRef<Path>, spec: &MdpSpec<S>, encoding: TransitionEncoding) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, mdp_spec_to_string(spec, encoding)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn reward_field<S: Scalar>(r: &RewardModel<S>) -> RewardField {
    match r {
        RewardModel::Linear { theta, .. } => RewardField::Linear {
            theta: theta.iter().map(|x| x.as_f64()).collect(),
        },
        RewardModel::Tabular { shape, params, .. } => RewardField::Tabular {
            shape: *shape,
            values: params.iter().map(|x| x.as_f64()).collect(),
        },
    }
}

/// Parses a standalone reward object in the schema of the spec's `reward` field.
pub fn parse_reward<S: Scalar>(
    text: &str,
    n_states: usize,
    n_actions: usize,
    features: Option<&FeatureMap<S>>,
) -> Result<RewardModel<S>> {
    let field: RewardField = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    match field {
        RewardField::Tabular { shape, values } => {
            RewardModel::tabular(shape, n_states, n_actions, values.into_iter().map(S::lit).collect())
        }
        RewardField::Linear { theta } => match features {
            Some(f) => RewardModel::linear(theta.into_iter().map(S::lit).collect(), f.clone()),
            None => Err(Error::Parse("a linear reward needs the spec's features table".into())),
        },
    }
}

pub fn reward_to_string<S: Scalar>(reward: &RewardModel<S>) -> String {
    let mut out = serde_json::to_string_pretty(&reward_field(reward)).expect("reward serializes");
    out.push('\n');
    out
}

/// One JSON object `{"states": [...], "actions": [...]}` per non-empty line.
pub fn parse_trajectories(text: &str) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    let mut problems = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Trajectory>(line) {
            Ok(t) if t.states.len() == t.actions.len() + 1 => out.push(t),
            Ok(_) => problems.push(format!("line {}: need exactly one more state than actions", i + 1)),
            Err(e) => problems.push(format!("line {}: {e}", i + 1)),
        }
    }
    if !problems.is_empty() {
        return Err(Error::Parse(problems.join("; ")));
    }
    if out.is_empty() {
        return Err(Error::EmptyDemonstrations);
    }
    Ok(out)
}

pub fn read_trajectories(path: impl AsRef<Path>) -> Result<Vec<Trajectory>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut text = String::new();
    for line in std::io::BufReader::new(f).lines() {
        text.push_str(&line.map_err(|e| Error::Io(format!("{}: {e}", path.display())))?);
        text.push('\n');
    }
    parse_trajectories(&text)
}

pub fn trajectories_to_string(trajs: &[Trajectory]) -> String {
    let mut out = String::new();
    for t in trajs {
        out.push_str(&serde_json::to_string(t).expect("trajectory serializes"));
        out.push('\n');
    }
    out
}

pub fn write_trajectories(path: impl AsRef<Path>, trajs: &[Trajectory]) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    f.write_all(trajectories_to_string(trajs).as_bytes())
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_gridworld, make_random_mdp, make_risky_path, GridworldConfig, RandomMdpConfig};

    #[test]
    fn round_trip_is_byte_stable() {
        let specs: Vec<MdpSpec<f64>> = vec![
            make_risky_path().into(),
            make_gridworld(&GridworldConfig {
                goal_rewards: vec![(8, 1.0)],
                ..Default::default()
            })
            .unwrap()
            .into(),
            make_random_mdp(&RandomMdpConfig::default()).unwrap().into(),
        ];
        for spec in specs {
            for enc in [TransitionEncoding::Dense, TransitionEncoding::Sparse] {
                let text = mdp_spec_to_string(&spec, enc);
                let back = parse_mdp_spec::<f64>(&text).unwrap();
                assert_eq!(back, spec);
                assert_eq!(mdp_spec_to_string(&back, enc), text);
            }
            let dense = parse_mdp_spec::<f64>(&mdp_spec_to_string(&spec, TransitionEncoding::Dense)).unwrap();
            let sparse = parse_mdp_spec::<f64>(&mdp_spec_to_string(&spec, TransitionEncoding::Sparse)).unwrap();
            assert_eq!(dense, sparse);
        }
    }

    #[test]
    fn bad_row_is_named_and_all_problems_reported() {
        let text = r#"{
            "n_states": 2, "n_actions": 1, "gamma": 0.9, "horizon": "forever",
            "initial": [1.0, 0.0],
            "transitions": {"sparse": [[0, 0, 1, 0.9], [1, 0, 0, 1.0], [1, 0, 5, 0.1]]},
            "terminal": [7]
        }"#;
        let Err(Error::InvalidMdp(problems)) = parse_mdp_spec::<f64>(text) else {
            panic!("expected schema errors")
        };
        let all = problems.join("\n");
        assert!(all.contains("horizon"));
        assert!(all.contains("(1, 0, 5)"));
        assert!(all.contains("terminal: state 7"));
        let text = text.replace("\"forever\"", "3").replace(", [1, 0, 5, 0.1]", "").replace("[7]", "[]");
        let Err(Error::InvalidMdp(problems)) = parse_mdp_spec::<f64>(&text) else {
            panic!("expected row error")
        };
        assert!(problems.iter().any(|p| p.contains("(s=0, a=0)")));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_mdp_spec::<f64>("{\"n_states\": }").unwrap_err();
        assert!(matches!(err, Error::Parse(m) if m.contains("line 1")));
    }

    #[test]
    fn standalone_reward_round_trip() {
        let r = RewardModel::<f64>::tabular(TabularShape::State, 3, 2, vec![0.5, -1.0, 2.0]).unwrap();
        assert_eq!(parse_reward::<f64>(&reward_to_string(&r), 3, 2, None).unwrap(), r);
        assert!(parse_reward::<f64>("{\"kind\": \"linear\", \"theta\": [1.0]}", 3, 2, None).is_err());
    }

    #[test]
    fn trajectories_round_trip() {
        let trajs = vec![
            Trajectory::new(vec![0, 1, 2], vec![1, 0]).unwrap(),
            Trajectory::new(vec![3], vec![]).unwrap(),
        ];
        let text = trajectories_to_string(&trajs);
        assert_eq!(parse_trajectories(&text).unwrap(), trajs);
        let err = parse_trajectories("{\"states\":[0,1],\"actions\":[]}\nnot json\n").unwrap_err();
        assert!(matches!(err, Error::Parse(m) if m.contains("line 1") && m.contains("line 2")));
    }
}
