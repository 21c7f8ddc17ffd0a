//! Soft (log-sum-exp) value iteration for finite and infinite horizons.
//!
//! The finite-horizon recursion runs backwards from the last step,
//!
//! ```text
//! Q_{T-1}(s,a) = E[r(s,a,S')]
//! Q_t(s,a)     = E[r(s,a,S') + gamma V_{t+1}(S')]
//! V_t(s)       = log sum_a exp Q_t(s,a)
//! ```
//!
//! and the maximum causal entropy policy is `pi_t(a|s) = exp(Q_t(s,a) - V_t(s))`.
//! The infinite-horizon variant iterates the stationary recurrence to its unique
//! fixed point, which exists because the backup is a `gamma`-contraction in the
//! sup norm.

use crate::error::{Error, Result};
use crate::features::RewardModel;
use crate::mdp::{Horizon, Policy, TabularMdp};
use crate::scalar::{log_sum_exp, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoftMode {
    /// One table per time step.
    Finite,
    /// A single stationary table.
    Stationary,
}

/// Soft Q and V tables. `q[t]` is `[s][a]`, `v[t]` is `[s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftValues<S> {
    pub mode: SoftMode,
    pub n_states: usize,
    pub n_actions: usize,
    pub q: Vec<Vec<S>>,
    pub v: Vec<Vec<S>>,
}

impl<S: Scalar> SoftValues<S> {
    pub fn n_steps(&self) -> usize {
        self.q.len()
    }

    /// The policy `exp(Q - V)` these tables induce.
    pub fn policy(&self) -> Result<Policy<S>> {
        let tables = soft_advantage(self)
            .into_iter()
            .map(|adv| adv.into_iter().map(S::exp).collect())
            .collect::<Vec<Vec<S>>>();
        match self.mode {
            SoftMode::Stationary => {
                Policy::stationary(self.n_states, self.n_actions, tables.into_iter().next().unwrap())
            }
            SoftMode::Finite => Policy::time_indexed(self.n_states, self.n_actions, tables),
        }
    }
}

/// `A = Q - V`, per step.
pub fn soft_advantage<S: Scalar>(values: &SoftValues<S>) -> Vec<Vec<S>> {
    let n_a = values.n_actions;
    values
        .q
        .iter()
        .zip(&values.v)
        .map(|(q, v)| q.iter().enumerate().map(|(i, &x)| x - v[i / n_a]).collect())
        .collect()
}

/// `E[r(s,a,S')]` as an `[s][a]` table.
pub fn expected_reward_table<S: Scalar>(mdp: &TabularMdp<S>, reward: &RewardModel<S>) -> Vec<S> {
    let n_a = mdp.n_actions();
    (0..mdp.n_states() * n_a)
        .map(|sa| reward.expected_value(mdp, sa / n_a, sa % n_a))
        .collect()
}

/// One backup `Q(s,a) = r(s,a) + gamma E[V(S')]`, `V = lse_a Q` (Jacobi style).
fn backup<S: Scalar>(
    mdp: &TabularMdp<S>,
    r_exp: &[S],
    v_next: Option<&[S]>,
) -> (Vec<S>, Vec<S>) {
    let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
    let gamma = mdp.gamma();
    let mut q = vec![S::zero(); n_s * n_a];
    let mut v = vec![S::zero(); n_s];
    for s in 0..n_s {
        for a in 0..n_a {
            let cont = match v_next {
                Some(vn) => gamma * mdp.expect_next(s, a, |s2| vn[s2]),
                None => S::zero(),
            };
            q[s * n_a + a] = r_exp[s * n_a + a] + cont;
        }
        v[s] = log_sum_exp(&q[s * n_a..(s + 1) * n_a]);
    }
    (q, v)
}

/// Backward soft value iteration over a finite horizon.
pub fn soft_vi_finite<S: Scalar>(
    mdp: &TabularMdp<S>,
    reward: &RewardModel<S>,
) -> Result<(SoftValues<S>, Policy<S>)> {
    let horizon = match mdp.horizon() {
        Horizon::Finite(t) => t,
        Horizon::Infinite => {
            return Err(Error::WrongMode(
                "finite-horizon soft VI called on an infinite-horizon MDP".into(),
            ))
        }
    };
    reward.check_shape(mdp)?;
    let r_exp = expected_reward_table(mdp, reward);
    let mut q = vec![Vec::new(); horizon];
    let mut v = vec![Vec::new(); horizon];
    for t in (0..horizon).rev() {
        let next = if t + 1 < horizon { Some(v[t + 1].as_slice()) } else { None };
        let (qt, vt) = backup(mdp, &r_exp, next);
        q[t] = qt;
        v[t] = vt;
    }
    let values = SoftValues {
        mode: SoftMode::Finite,
        n_states: mdp.n_states(),
        n_actions: mdp.n_actions(),
        q,
        v,
    };
    check_finite(&values)?;
    let policy = values.policy()?;
    Ok((values, policy))
}

/// Options for the stationary fixed-point iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftViOptions<S> {
    /// Stop once `||V_{k+1} - V_k||_inf < tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Starting `V`; zeros when absent.
    pub init: Option<Vec<S>>,
}

impl<S> Default for SoftViOptions<S> {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
            init: None,
        }
    }
}

/// Sup-norm change of `V` at each iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftViReport<S> {
    pub iterations: usize,
    pub residuals: Vec<S>,
}

/// Stationary soft value iteration with default initialisation.
pub fn soft_vi_infinite<S: Scalar>(
    mdp: &TabularMdp<S>,
    reward: &RewardModel<S>,
    tol: f64,
    max_iter: usize,
) -> Result<(SoftValues<S>, Policy<S>)> {
    let opts = SoftViOptions {
        tol,
        max_iter,
        init: None,
    };
    soft_vi_infinite_with(mdp, reward, &opts).map(|(v, p, _)| (v, p))
}

/// Stationary soft value iteration, returning the residual trace.
///
/// Uses the MDP's discount and ignores its horizon, so finite-horizon MDPs with
/// `gamma < 1` can also be given a stationary solution.
pub fn soft_vi_infinite_with<S: Scalar>(
    mdp: &TabularMdp<S>,
    reward: &RewardModel<S>,
    opts: &SoftViOptions<S>,
) -> Result<(SoftValues<S>, Policy<S>, SoftViReport<S>)> {
    if mdp.gamma() >= S::one() {
        return Err(Error::Unsupported(
            "stationary soft VI needs gamma < 1".into(),
        ));
    }
    reward.check_shape(mdp)?;
    let r_exp = expected_reward_table(mdp, reward);
    let mut v = match &opts.init {
        Some(init) if init.len() == mdp.n_states() => init.clone(),
        Some(init) => {
            return Err(Error::Dimension(format!(
                "initial V has {} entries, expected {}",
                init.len(),
                mdp.n_states()
            )))
        }
        None => vec![S::zero(); mdp.n_states()],
    };
    let mut residuals = Vec::new();
    for it in 0..opts.max_iter {
        let (_, v_new) = backup(mdp, &r_exp, Some(&v));
        let res = v_new
            .iter()
            .zip(&v)
            .fold(S::zero(), |m, (&a, &b)| m.max((a - b).abs()));
        if !res.is_finite() {
            return Err(Error::Numerical(format!("soft VI residual became {res}")));
        }
        residuals.push(res);
        v = v_new;
        if res.as_f64() < opts.tol {
            // one more backup so that Q is consistent with the stored V
            let (q_final, v_final) = backup(mdp, &r_exp, Some(&v));
            let values = SoftValues {
                mode: SoftMode::Stationary,
                n_states: mdp.n_states(),
                n_actions: mdp.n_actions(),
                q: vec![q_final],
                v: vec![v_final],
            };
            let policy = values.policy()?;
            return Ok((
                values,
                policy,
                SoftViReport {
                    iterations: it + 1,
                    residuals,
                },
            ));
        }
    }
    Err(Error::ConvergenceFailure {
        iterations: opts.max_iter,
        residual: residuals.last().map_or(f64::NAN, |r| r.as_f64()),
    })
}

/// Finite-horizon MDPs use backward induction, infinite ones the stationary solver.
pub fn plan<S: Scalar>(
    mdp: &TabularMdp<S>,
    reward: &RewardModel<S>,
) -> Result<(SoftValues<S>, Policy<S>)> {
    match mdp.horizon() {
        Horizon::Finite(_) => soft_vi_finite(mdp, reward),
        Horizon::Infinite => {
            let o = SoftViOptions::<S>::default();
            soft_vi_infinite(mdp, reward, o.tol, o.max_iter)
        }
    }
}

/// Expected soft value of the start distribution, `E_I[V_0(S_0)]`.
pub fn initial_value<S: Scalar>(mdp: &TabularMdp<S>, values: &SoftValues<S>) -> S {
    mdp.initial()
        .iter()
        .zip(&values.v[0])
        .filter(|(&p, _)| p > S::zero())
        .fold(S::zero(), |acc, (&p, &v)| acc + p * v)
}

fn check_finite<S: Scalar>(values: &SoftValues<S>) -> Result<()> {
    if values.v.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("soft value table is not finite".into()));
    }
    Ok(())
}

/// Soft value tables advanced a fixed number of backup sweeps at a time.
///
/// A finite-horizon state keeps one `V_t` per step and updates all of them from the
/// previous sweep's tables, so `T` sweeps reproduce [`soft_vi_finite`] exactly. A
/// stationary state performs ordinary fixed-point sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialSoftPlanner<S> {
    mode: SoftMode,
    v: Vec<Vec<S>>,
}

impl<S: Scalar> PartialSoftPlanner<S> {
    pub fn finite(horizon: usize, n_states: usize) -> Self {
        Self {
            mode: SoftMode::Finite,
            v: vec![vec![S::zero(); n_states]; horizon],
        }
    }

    pub fn stationary(n_states: usize) -> Self {
        Self {
            mode: SoftMode::Stationary,
            v: vec![vec![S::zero(); n_states]],
        }
    }

    /// Matches the MDP: finite horizon gives a time-indexed planner.
    pub fn for_mdp(mdp: &TabularMdp<S>) -> Self {
        match mdp.horizon() {
            Horizon::Finite(t) => Self::finite(t, mdp.n_states()),
            Horizon::Infinite => Self::stationary(mdp.n_states()),
        }
    }

    /// Stationary planner starting from a given `V`.
    pub fn stationary_from(v: Vec<S>) -> Self {
        Self {
            mode: SoftMode::Stationary,
            v: vec![v],
        }
    }

    pub fn mode(&self) -> SoftMode {
        self.mode
    }

    pub fn values(&self) -> &[Vec<S>] {
        &self.v
    }

    fn q_tables(&self, mdp: &TabularMdp<S>, r_exp: &[S]) -> Vec<Vec<S>> {
        match self.mode {
            SoftMode::Stationary => vec![backup(mdp, r_exp, Some(&self.v[0])).0],
            SoftMode::Finite => {
                let h = self.v.len();
                (0..h)
                    .map(|t| {
                        let next = if t + 1 < h { Some(self.v[t + 1].as_slice()) } else { None };
                        backup(mdp, r_exp, next).0
                    })
                    .collect()
            }
        }
    }

    /// Applies `sweeps` Jacobi backups against `reward`; returns the last sup-norm change.
    pub fn sweep(&mut self, mdp: &TabularMdp<S>, reward: &RewardModel<S>, sweeps: usize) -> S {
        let r_exp = expected_reward_table(mdp, reward);
        let n_a = mdp.n_actions();
        let mut change = S::zero();
        for _ in 0..sweeps {
            let q = self.q_tables(mdp, &r_exp);
            let new_v: Vec<Vec<S>> = q
                .iter()
                .map(|qt| qt.chunks(n_a).map(log_sum_exp).collect())
                .collect();
            change = new_v
                .iter()
                .flatten()
                .zip(self.v.iter().flatten())
                .fold(S::zero(), |m, (&a, &b)| m.max((a - b).abs()));
            self.v = new_v;
        }
        change
    }

    /// Softmax policy of the current `Q` tables.
    pub fn policy(&self, mdp: &TabularMdp<S>, reward: &RewardModel<S>) -> Result<Policy<S>> {
        let r_exp = expected_reward_table(mdp, reward);
        let n_a = mdp.n_actions();
        let tables: Vec<Vec<S>> = self
            .q_tables(mdp, &r_exp)
            .into_iter()
            .map(|q| {
                q.chunks(n_a)
                    .flat_map(|row| {
                        let l = log_sum_exp(row);
                        row.iter().map(move |&x| (x - l).exp())
                    })
                    .collect()
            })
            .collect();
        match self.mode {
            SoftMode::Stationary => {
                Policy::stationary(mdp.n_states(), n_a, tables.into_iter().next().unwrap())
            }
            SoftMode::Finite => Policy::time_indexed(mdp.n_states(), n_a, tables),
        }
    }
}

/// Hard (max) value iteration: per-step `Q` tables for finite horizons, one
/// stationary table otherwise.
pub fn hard_q_values<S: Scalar>(
    mdp: &TabularMdp<S>,
    reward: &RewardModel<S>,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<Vec<S>>> {
    reward.check_shape(mdp)?;
    let r_exp = expected_reward_table(mdp, reward);
    let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
    let gamma = mdp.gamma();
    let hard_backup = |v_next: Option<&[S]>| -> (Vec<S>, Vec<S>) {
        let mut q = vec![S::zero(); n_s * n_a];
        let mut v = vec![S::neg_infinity(); n_s];
        for s in 0..n_s {
            for a in 0..n_a {
                let cont = v_next.map_or(S::zero(), |vn| gamma * mdp.expect_next(s, a, |s2| vn[s2]));
                let x = r_exp[s * n_a + a] + cont;
                q[s * n_a + a] = x;
                v[s] = v[s].max(x);
            }
        }
        (q, v)
    };
    match mdp.horizon() {
        Horizon::Finite(h) => {
            let mut qs = vec![Vec::new(); h];
            let mut v_next: Option<Vec<S>> = None;
            for t in (0..h).rev() {
                let (q, v) = hard_backup(v_next.as_deref());
                qs[t] = q;
                v_next = Some(v);
            }
            Ok(qs)
        }
        Horizon::Infinite => {
            let mut v = vec![S::zero(); n_s];
            for _ in 0..max_iter {
                let (_, v_new) = hard_backup(Some(&v));
                let res = v_new
                    .iter()
                    .zip(&v)
                    .fold(S::zero(), |m, (&a, &b)| m.max((a - b).abs()));
                v = v_new;
                if res.as_f64() < tol {
                    return Ok(vec![hard_backup(Some(&v)).0]);
                }
            }
            Err(Error::ConvergenceFailure {
                iterations: max_iter,
                residual: f64::NAN,
            })
        }
    }
}

/// Actions whose value is within `tol * (1 + |max|)` of the row maximum.
pub fn argmax_set<S: Scalar>(row: &[S], tol: f64) -> Vec<usize> {
    let m = row.iter().copied().fold(S::neg_infinity(), S::max);
    let slack = S::lit(tol) * (S::one() + m.abs());
    row.iter()
        .enumerate()
        .filter(|(_, &x)| m - x <= slack)
        .map(|(a, _)| a)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::TabularShape;

    fn single_state(gamma: f64, horizon: Horizon, n_actions: usize) -> TabularMdp<f64> {
        TabularMdp::deterministic(gamma, horizon, vec![1.0], &[vec![0; n_actions]], vec![false])
            .unwrap()
    }

    #[test]
    fn symmetric_single_step() {
        let mdp = single_state(1.0, Horizon::Finite(1), 2);
        let r = RewardModel::zeros(TabularShape::StateAction, 1, 2);
        let (vals, pi) = soft_vi_finite(&mdp, &r).unwrap();
        assert!((vals.v[0][0] - 2f64.ln()).abs() < 1e-15);
        assert_eq!(pi.row(0, 0), &[0.5, 0.5]);
        let adv = soft_advantage(&vals);
        assert!(adv[0].iter().all(|&a| (a + 2f64.ln()).abs() < 1e-15));
    }

    #[test]
    fn asymmetric_single_step_closed_form() {
        let e = std::f64::consts::E;
        let mdp = single_state(1.0, Horizon::Finite(1), 2);
        let r = RewardModel::tabular(TabularShape::StateAction, 1, 2, vec![1.0, 0.0]).unwrap();
        let (vals, pi) = soft_vi_finite(&mdp, &r).unwrap();
        assert!((vals.v[0][0] - (e + 1.0).ln()).abs() < 1e-14);
        assert!((pi.prob(0, 0, 0) - e / (e + 1.0)).abs() < 1e-14);
    }

    #[test]
    fn wrong_mode_errors() {
        let inf = single_state(0.9, Horizon::Infinite, 2);
        let r = RewardModel::zeros(TabularShape::State, 1, 2);
        assert!(matches!(soft_vi_finite(&inf, &r), Err(Error::WrongMode(_))));
        let undiscounted = single_state(1.0, Horizon::Finite(3), 2);
        assert!(matches!(
            soft_vi_infinite(&undiscounted, &r, 1e-10, 100),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn geometric_series_value() {
        let mdp = single_state(0.9, Horizon::Infinite, 1);
        let r = RewardModel::tabular(TabularShape::State, 1, 1, vec![1.0]).unwrap();
        let (vals, _) = soft_vi_infinite(&mdp, &r, 1e-12, 100_000).unwrap();
        assert!((vals.v[0][0] - 10.0).abs() < 1e-9);
        assert!((vals.q[0][0] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn max_iter_reports_residual() {
        let mdp = single_state(0.99, Horizon::Infinite, 2);
        let r = RewardModel::zeros(TabularShape::State, 1, 2);
        match soft_vi_infinite(&mdp, &r, 1e-12, 5) {
            Err(Error::ConvergenceFailure { iterations, residual }) => {
                assert_eq!(iterations, 5);
                assert!(residual > 0.0);
            }
            other => panic!("expected convergence failure, got {other:?}"),
        }
    }

    #[test]
    fn partial_planner_matches_backward_induction_after_horizon_sweeps() {
        let mdp = TabularMdp::new(
            2,
            2,
            0.8,
            Horizon::Finite(3),
            vec![1.0, 0.0],
            vec![0.3, 0.7, 1.0, 0.0, 0.0, 1.0, 0.6, 0.4],
            vec![false, false],
        )
        .unwrap();
        let r = RewardModel::tabular(TabularShape::StateAction, 2, 2, vec![0.1, -0.4, 0.9, 0.2])
            .unwrap();
        let (_, exact): (_, Policy<f64>) = soft_vi_finite(&mdp, &r).unwrap();
        let mut planner = PartialSoftPlanner::for_mdp(&mdp);
        planner.sweep(&mdp, &r, 1);
        let partial = planner.policy(&mdp, &r).unwrap();
        assert_ne!(partial, exact);
        planner.sweep(&mdp, &r, 1);
        let full = planner.policy(&mdp, &r).unwrap();
        for (a, b) in full.tables().iter().flatten().zip(exact.tables().iter().flatten()) {
            assert!((a - b).abs() < 1e-15f64);
        }
    }

    #[test]
    fn argmax_set_uses_relative_slack() {
        assert_eq!(argmax_set(&[1.0, 1.0 + 1e-13, 0.5], 1e-9), vec![0, 1]);
        assert_eq!(argmax_set(&[1.0, 2.0], 1e-9), vec![1]);
    }
}
