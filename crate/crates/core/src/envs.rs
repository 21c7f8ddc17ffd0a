//! Environment zoo: small canonical MDPs and seeded random generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureMap, RewardModel, TabularShape};
use crate::mdp::{Horizon, TabularMdp};
use crate::scalar::Scalar;

/// An MDP with its features and, where known, its ground-truth reward.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvBundle<S> {
    pub mdp: TabularMdp<S>,
    pub features: FeatureMap<S>,
    pub reward: Option<RewardModel<S>>,
}

pub const RISKY_SAFE: usize = 0;
pub const RISKY_SHORTCUT: usize = 1;
pub const RISKY_GOAL_REWARD: f64 = 1.0;
pub const RISKY_TRAP_REWARD: f64 = -100.0;

/// Four-state shortcut MDP.
///
/// `s0 --safe--> s1 --any--> s2`, `s0 --shortcut--> {s2: 1/2, s3: 1/2}`; `s2` and
/// `s3` absorb. Entering `s2` pays 1 and entering `s3` pays -100; the self-loops
/// inside the absorbing states pay nothing. Horizon 2, `gamma = 1`.
pub fn make_risky_path<S: Scalar>() -> EnvBundle<S> {
    let (z, o, h) = (S::zero(), S::one(), S::lit(0.5));
    let n = 4;
    let mut p = vec![z; n * 2 * n];
    let mut set = |s: usize, a: usize, s2: usize, x: S| p[(s * 2 + a) * n + s2] = x;
    set(0, RISKY_SAFE, 1, o);
    set(0, RISKY_SHORTCUT, 2, h);
    set(0, RISKY_SHORTCUT, 3, h);
    for a in 0..2 {
        set(1, a, 2, o);
        set(2, a, 2, o);
        set(3, a, 3, o);
    }
    let mdp = TabularMdp::new(
        n,
        2,
        o,
        Horizon::Finite(2),
        vec![o, z, z, z],
        p,
        vec![false, false, true, true],
    )
    .expect("risky path is a valid MDP");
    let mut r = vec![z; n * 2 * n];
    for s in 0..2 {
        for a in 0..2 {
            r[(s * 2 + a) * n + 2] = S::lit(RISKY_GOAL_REWARD);
            r[(s * 2 + a) * n + 3] = S::lit(RISKY_TRAP_REWARD);
        }
    }
    EnvBundle {
        features: FeatureMap::one_hot_state(n, 2),
        reward: Some(RewardModel::tabular(TabularShape::Transition, n, 2, r).unwrap()),
        mdp,
    }
}

/// Gridworld options. Cells are numbered row-major from the top-left corner,
/// which is also the start cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridworldConfig {
    pub width: usize,
    pub height: usize,
    pub stay_action: bool,
    pub gamma: f64,
    pub horizon: Horizon,
    /// `(cell, reward)` pairs for a state-only ground-truth reward.
    pub goal_rewards: Vec<(usize, f64)>,
}

impl Default for GridworldConfig {
    fn default() -> Self {
        Self {
            width: 3,
            height: 3,
            stay_action: false,
            gamma: 0.9,
            horizon: Horizon::Finite(10),
            goal_rewards: Vec::new(),
        }
    }
}

/// Deterministic gridworld with moves `up, down, left, right` and an optional `stay`.
///
/// A move into a wall bounces to the opposite neighbour, or to the first legal move
/// when that is blocked too, so moves never self-loop. Only `stay` keeps the agent
/// in place. Features are one-hot in the state.
pub fn make_gridworld<S: Scalar>(cfg: &GridworldConfig) -> Result<EnvBundle<S>> {
    let (w, h) = (cfg.width, cfg.height);
    if w * h < 2 {
        return Err(Error::InvalidConfig("gridworld needs at least two cells".into()));
    }
    const MOVES: [(isize, isize); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)];
    let n = w * h;
    let target = |cell: usize, (dx, dy): (isize, isize)| -> Option<usize> {
        let (x, y) = ((cell % w) as isize + dx, (cell / w) as isize + dy);
        (x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h).then(|| y as usize * w + x as usize)
    };
    let mut next = Vec::with_capacity(n);
    for cell in 0..n {
        let mut row: Vec<usize> = MOVES
            .iter()
            .map(|&(dx, dy)| {
                target(cell, (dx, dy))
                    .or_else(|| target(cell, (-dx, -dy)))
                    .or_else(|| MOVES.iter().find_map(|&m| target(cell, m)))
                    .expect("grid with >= 2 cells has a legal move")
            })
            .collect();
        if cfg.stay_action {
            row.push(cell);
        }
        next.push(row);
    }
    let n_a = next[0].len();
    let mut initial = vec![S::zero(); n];
    initial[0] = S::one();
    let mdp = TabularMdp::deterministic(S::lit(cfg.gamma), cfg.horizon, initial, &next, vec![false; n])?;
    let reward = if cfg.goal_rewards.is_empty() {
        None
    } else {
        let mut r = vec![S::zero(); n];
        for &(cell, v) in &cfg.goal_rewards {
            if cell >= n {
                return Err(Error::IndexOutOfRange {
                    kind: "state",
                    index: cell,
                    size: n,
                });
            }
            r[cell] = S::lit(v);
        }
        Some(RewardModel::tabular(TabularShape::State, n, n_a, r)?)
    };
    Ok(EnvBundle {
        features: FeatureMap::one_hot_state(n, n_a),
        reward,
        mdp,
    })
}

/// Two states that swap on every move; `self_loops` adds a `stay` action.
pub fn make_cyclic_two_state<S: Scalar>(self_loops: bool) -> TabularMdp<S> {
    let next: Vec<Vec<usize>> = if self_loops {
        vec![vec![1, 0], vec![0, 1]]
    } else {
        vec![vec![1, 1], vec![0, 0]]
    };
    TabularMdp::deterministic(
        S::lit(0.9),
        Horizon::Infinite,
        vec![S::one(), S::zero()],
        &next,
        vec![false, false],
    )
    .expect("cyclic MDP is valid")
}

/// Options for [`make_random_mdp`].
#[derive(Debug, Clone, PartialEq)]
pub struct RandomMdpConfig {
    pub seed: u64,
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub horizon: Horizon,
    /// One-hot transition rows and a point-mass start at state 0.
    pub deterministic: bool,
    pub feature_dim: usize,
}

impl Default for RandomMdpConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_states: 4,
            n_actions: 2,
            gamma: 0.9,
            horizon: Horizon::Finite(4),
            deterministic: false,
            feature_dim: 3,
        }
    }
}

/// Dirichlet(1) row with `n` entries.
fn dirichlet_row<S: Scalar, R: Rng>(rng: &mut R, n: usize) -> Vec<S> {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| S::lit(x / total)).collect()
}

/// Seeded random MDP with features uniform in `[-1, 1]`.
pub fn make_random_mdp<S: Scalar>(cfg: &RandomMdpConfig) -> Result<EnvBundle<S>> {
    if cfg.n_states == 0 || cfg.n_actions == 0 {
        return Err(Error::InvalidConfig("need at least one state and one action".into()));
    }
    let (n_s, n_a) = (cfg.n_states, cfg.n_actions);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut transitions = Vec::with_capacity(n_s * n_a * n_s);
    let initial: Vec<S> = if cfg.deterministic {
        for _ in 0..n_s * n_a {
            let s2 = rng.gen_range(0..n_s);
            transitions.extend((0..n_s).map(|i| if i == s2 { S::one() } else { S::zero() }));
        }
        (0..n_s).map(|i| if i == 0 { S::one() } else { S::zero() }).collect()
    } else {
        for _ in 0..n_s * n_a {
            transitions.extend(dirichlet_row::<S, _>(&mut rng, n_s));
        }
        dirichlet_row(&mut rng, n_s)
    };
    let features: Vec<S> = (0..n_s * n_a * cfg.feature_dim)
        .map(|_| S::lit(rng.gen_range(-1.0..1.0)))
        .collect();
    let mdp = TabularMdp::new(
        n_s,
        n_a,
        S::lit(cfg.gamma),
        cfg.horizon,
        initial,
        transitions,
        vec![false; n_s],
    )?;
    Ok(EnvBundle {
        features: FeatureMap::new(n_s, n_a, cfg.feature_dim, features)?,
        reward: None,
        mdp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn risky_path_layout() {
        let env = make_risky_path::<f64>();
        let r = env.reward.unwrap();
        assert_eq!(env.mdp.p(0, RISKY_SHORTCUT, 2), 0.5);
        assert_eq!(env.mdp.p(0, RISKY_SHORTCUT, 3), 0.5);
        assert_eq!(r.value(1, 0, 2), 1.0);
        assert_eq!(r.value(0, RISKY_SHORTCUT, 3), -100.0);
        assert_eq!(r.value(2, 0, 2), 0.0);
    }

    #[test]
    fn random_mdp_is_reproducible() {
        let cfg = RandomMdpConfig {
            seed: 11,
            ..Default::default()
        };
        let a = make_random_mdp::<f64>(&cfg).unwrap();
        let b = make_random_mdp::<f64>(&cfg).unwrap();
        assert_eq!(a, b);
        let det = make_random_mdp::<f64>(&RandomMdpConfig {
            deterministic: true,
            ..cfg
        })
        .unwrap();
        assert!(det.mdp.is_deterministic());
    }

    #[test]
    fn gridworld_moves_never_self_loop_without_stay() {
        let env = make_gridworld::<f64>(&GridworldConfig::default()).unwrap();
        for s in 0..9 {
            for a in 0..4 {
                assert_ne!(env.mdp.successors(s, a)[0].0, s);
            }
        }
        let tiny = make_gridworld::<f64>(&GridworldConfig {
            width: 1,
            height: 2,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(tiny.mdp.successors(0, 2)[0].0, 1);
        assert!(make_gridworld::<f64>(&GridworldConfig {
            width: 1,
            height: 1,
            ..Default::default()
        })
        .is_err());
    }
}
