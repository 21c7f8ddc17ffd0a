//! Discounted occupancy measures and the quantities derived from them.

use crate::error::{Error, Result};
use crate::features::RewardModel;
use crate::mdp::{Horizon, Policy, TabularMdp};
use crate::scalar::{xlogx, Scalar};

/// Cut-off for infinite-horizon occupancy roll-forward: stop once `gamma^t < tol`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccupancyOptions {
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for OccupancyOptions {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_steps: 1_000_000,
        }
    }
}

/// Per-step discounted visitation `rho_t(s)` and `rho_t(s) pi_t(a|s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure<S> {
    pub n_states: usize,
    pub n_actions: usize,
    pub state_occ: Vec<Vec<S>>,
    pub state_action_occ: Vec<Vec<S>>,
}

impl<S: Scalar> OccupancyMeasure<S> {
    pub fn n_steps(&self) -> usize {
        self.state_occ.len()
    }

    /// `sum_t rho_t(s) pi_t(a|s)`, flattened `[s][a]`.
    pub fn total_state_action(&self) -> Vec<S> {
        sum_rows(&self.state_action_occ, self.n_states * self.n_actions)
    }

    /// `sum_t rho_t(s)`.
    pub fn total_state(&self) -> Vec<S> {
        sum_rows(&self.state_occ, self.n_states)
    }
}

fn sum_rows<S: Scalar>(rows: &[Vec<S>], len: usize) -> Vec<S> {
    let mut out = vec![S::zero(); len];
    for row in rows {
        for (o, &x) in out.iter_mut().zip(row) {
            *o = *o + x;
        }
    }
    out
}

/// `rho_{t+1}(s') = gamma * sum_{s,a} rho_t(s) pi_t(a|s) P(s'|s,a)`, with a state-action table.
fn step_forward<S: Scalar>(
    mdp: &TabularMdp<S>,
    policy: &Policy<S>,
    t: usize,
    rho: &[S],
    scale: S,
) -> (Vec<S>, Vec<S>) {
    let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
    let mut sa = vec![S::zero(); n_s * n_a];
    let mut next = vec![S::zero(); n_s];
    for s in 0..n_s {
        if rho[s] == S::zero() {
            continue;
        }
        let row = policy.row(t, s);
        for a in 0..n_a {
            let w = rho[s] * row[a];
            sa[s * n_a + a] = w;
            if w == S::zero() {
                continue;
            }
            for &(s2, p) in mdp.successors(s, a) {
                next[s2] = next[s2] + scale * w * p;
            }
        }
    }
    (sa, next)
}

/// Forward recursion for the discounted occupancy measure.
///
/// Finite horizons produce exactly `T` steps. Infinite horizons (`gamma < 1`)
/// stop once the remaining mass `gamma^t` drops below the tolerance.
pub fn compute_occupancy<S: Scalar>(
    mdp: &TabularMdp<S>,
    policy: &Policy<S>,
) -> Result<OccupancyMeasure<S>> {
    compute_occupancy_with(mdp, policy, OccupancyOptions::default())
}

pub fn compute_occupancy_with<S: Scalar>(
    mdp: &TabularMdp<S>,
    policy: &Policy<S>,
    opts: OccupancyOptions,
) -> Result<OccupancyMeasure<S>> {
    policy.check_shape(mdp)?;
    let gamma = mdp.gamma();
    let steps = match mdp.horizon() {
        Horizon::Finite(t) => t,
        Horizon::Infinite => {
            if gamma >= S::one() {
                return Err(Error::Unsupported(
                    "occupancy over an infinite horizon needs gamma < 1".into(),
                ));
            }
            if gamma == S::zero() {
                1
            } else {
                let n = (opts.tol.ln() / gamma.as_f64().ln()).ceil().max(1.0) as usize;
                if n > opts.max_steps {
                    return Err(Error::Unsupported(format!(
                        "infinite-horizon occupancy needs {n} steps (> {})",
                        opts.max_steps
                    )));
                }
                n
            }
        }
    };
    let mut state_occ = Vec::with_capacity(steps);
    let mut state_action_occ = Vec::with_capacity(steps);
    let mut rho = mdp.initial().to_vec();
    for t in 0..steps {
        let (sa, next) = step_forward(mdp, policy, t, &rho, gamma);
        state_occ.push(std::mem::replace(&mut rho, next));
        state_action_occ.push(sa);
    }
    Ok(OccupancyMeasure {
        n_states: mdp.n_states(),
        n_actions: mdp.n_actions(),
        state_occ,
        state_action_occ,
    })
}

/// Expected undiscounted visit counts to `(s, a)` over non-absorbing states.
///
/// Finite horizons sum the first `T` steps. Infinite horizons roll forward until
/// the mass not yet absorbed falls below `tol`; an MDP that does not absorb within
/// `max_steps` is reported as unsupported.
pub fn undiscounted_visits<S: Scalar>(
    mdp: &TabularMdp<S>,
    policy: &Policy<S>,
    tol: f64,
    max_steps: usize,
) -> Result<Vec<S>> {
    policy.check_shape(mdp)?;
    let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
    let mut visits = vec![S::zero(); n_s * n_a];
    let mut rho: Vec<S> = mdp.initial().to_vec();
    let limit = mdp.horizon().finite();
    let mut t = 0;
    loop {
        if let Some(h) = limit {
            if t >= h {
                break;
            }
        }
        for s in 0..n_s {
            if mdp.is_terminal(s) {
                rho[s] = S::zero();
            }
        }
        let live: S = rho.iter().copied().sum();
        if limit.is_none() && live.as_f64() < tol {
            break;
        }
        if t >= max_steps {
            return Err(Error::Unsupported(format!(
                "policy keeps {live:e} mass outside absorbing states after {max_steps} steps"
            )));
        }
        let (sa, next) = step_forward(mdp, policy, t, &rho, S::one());
        for (v, x) in visits.iter_mut().zip(&sa) {
            *v = *v + *x;
        }
        rho = next;
        t += 1;
    }
    Ok(visits)
}

/// `G(pi) = E[sum_t gamma^t r(S_t, A_t, S_{t+1})]`.
pub fn expected_return<S: Scalar>(
    mdp: &TabularMdp<S>,
    policy: &Policy<S>,
    reward: &RewardModel<S>,
) -> Result<S> {
    reward.check_shape(mdp)?;
    let occ = compute_occupancy(mdp, policy)?;
    let n_a = mdp.n_actions();
    let sa = occ.total_state_action();
    let mut g = S::zero();
    for s in 0..mdp.n_states() {
        for a in 0..n_a {
            let w = sa[s * n_a + a];
            if w != S::zero() {
                g = g + w * reward.expected_value(mdp, s, a);
            }
        }
    }
    Ok(g)
}

/// Discounted causal entropy `sum_t gamma^t H(A_t | S_t)`; `0 log 0 = 0`.
pub fn causal_entropy<S: Scalar>(mdp: &TabularMdp<S>, policy: &Policy<S>) -> Result<S> {
    let occ = compute_occupancy(mdp, policy)?;
    let mut h = S::zero();
    for (t, rho) in occ.state_occ.iter().enumerate() {
        for (s, &w) in rho.iter().enumerate() {
            if w == S::zero() {
                continue;
            }
            let ent: S = policy.row(t, s).iter().map(|&p| -xlogx(p)).sum();
            h = h + w * ent;
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::TabularShape;

    fn single_state(gamma: f64, horizon: usize, n_actions: usize) -> TabularMdp<f64> {
        TabularMdp::deterministic(
            gamma,
            Horizon::Finite(horizon),
            vec![1.0],
            &[vec![0; n_actions]],
            vec![false],
        )
        .unwrap()
    }

    #[test]
    fn base_case_and_mass_conservation() {
        let mdp = TabularMdp::new(
            2,
            2,
            0.7,
            Horizon::Finite(5),
            vec![0.3, 0.7],
            vec![0.2, 0.8, 1.0, 0.0, 0.5, 0.5, 0.0, 1.0],
            vec![false, false],
        )
        .unwrap();
        let pi = Policy::stationary(2, 2, vec![0.4, 0.6, 0.9, 0.1]).unwrap();
        let occ = compute_occupancy(&mdp, &pi).unwrap();
        assert_eq!(occ.state_occ[0], vec![0.3, 0.7]);
        for (t, rho) in occ.state_occ.iter().enumerate() {
            let mass: f64 = rho.iter().sum();
            assert!((mass - 0.7f64.powi(t as i32)).abs() < 1e-14);
        }
    }

    #[test]
    fn infinite_horizon_requires_discount() {
        let mdp = single_state(1.0, 3, 1);
        let pi = Policy::uniform(1, 1);
        let occ = compute_occupancy(&mdp, &pi).unwrap();
        assert_eq!(occ.n_steps(), 3);
        let inf = single_state(0.5, 3, 1).with_horizon(Horizon::Infinite).unwrap();
        let total: f64 = compute_occupancy(&inf, &pi).unwrap().total_state()[0];
        assert!((total - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_reward_return() {
        let mdp = single_state(1.0, 4, 2);
        let r = RewardModel::tabular(TabularShape::State, 1, 2, vec![2.5]).unwrap();
        let g = expected_return(&mdp, &Policy::uniform(1, 2), &r).unwrap();
        assert!((g - 10.0).abs() < 1e-14);
        let zero = RewardModel::zeros(TabularShape::Transition, 1, 2);
        assert_eq!(expected_return(&mdp, &Policy::uniform(1, 2), &zero).unwrap(), 0.0);
    }

    #[test]
    fn causal_entropy_examples() {
        let ln2 = 2f64.ln();
        let h = causal_entropy(&single_state(1.0, 3, 2), &Policy::uniform(1, 2)).unwrap();
        assert!((h - 3.0 * ln2).abs() < 1e-14);
        let h = causal_entropy(&single_state(0.5, 2, 2), &Policy::uniform(1, 2)).unwrap();
        assert!((h - 1.5 * ln2).abs() < 1e-14);
        let det = Policy::deterministic(2, &[1]).unwrap();
        assert_eq!(causal_entropy(&single_state(0.9, 5, 2), &det).unwrap(), 0.0);
    }

    #[test]
    fn visits_stop_at_absorption() {
        // 0 -> 1 -> 2 (absorbing)
        let mdp = TabularMdp::deterministic(
            0.9,
            Horizon::Infinite,
            vec![1.0, 0.0, 0.0],
            &[vec![1], vec![2], vec![2]],
            vec![false, false, true],
        )
        .unwrap();
        let v = undiscounted_visits(&mdp, &Policy::uniform(3, 1), 1e-12, 100).unwrap();
        assert_eq!(v, vec![1.0, 1.0, 0.0]);

        let looping = TabularMdp::deterministic(
            0.9,
            Horizon::Infinite,
            vec![1.0],
            &[vec![0]],
            vec![false],
        )
        .unwrap();
        assert!(undiscounted_visits(&looping, &Policy::uniform(1, 1), 1e-12, 50).is_err());
    }
}
