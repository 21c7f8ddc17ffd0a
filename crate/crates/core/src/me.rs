//! Maximum entropy IRL on deterministic MDPs, plus the naive stochastic extension
//! and its risk-seeking failure on the RiskyPath MDP.

use serde::Serialize;

use crate::envs::{make_risky_path, RISKY_SAFE, RISKY_SHORTCUT};
use crate::error::{Error, Result};
use crate::features::RewardModel;
use crate::mdp::{Policy, TabularMdp, Trajectory};
use crate::occupancy::expected_return;
use crate::scalar::{log_sum_exp, Scalar};
use crate::soft_vi::{plan, soft_vi_finite};
use crate::trajectory::{discounted_log_likelihood, discounted_return, dynamics_log_prob, enumerate_trajectories};

fn require_me_setting<S: Scalar>(mdp: &TabularMdp<S>) -> Result<(usize, usize)> {
    if !mdp.is_deterministic() {
        return Err(Error::WrongMode(
            "the ME density needs deterministic transitions; use the naive stochastic density instead".into(),
        ));
    }
    let s0 = mdp
        .deterministic_start()
        .ok_or_else(|| Error::WrongMode("the ME density needs a deterministic initial state".into()))?;
    Ok((mdp.require_finite_horizon("the ME density")?, s0))
}

/// `log p(tau) = R(tau) - V_0(s_0)`; `-inf` for infeasible trajectories.
pub fn me_log_density<S: Scalar>(mdp: &TabularMdp<S>, model: &RewardModel<S>, traj: &Trajectory) -> Result<S> {
    let (horizon, s0) = require_me_setting(mdp)?;
    traj.validate(mdp)?;
    if traj.len() != horizon {
        return Err(Error::Dimension(format!(
            "trajectory has {} steps, horizon is {horizon}",
            traj.len()
        )));
    }
    if traj.states[0] != s0 || dynamics_log_prob(mdp, traj)? == S::neg_infinity() {
        return Ok(S::neg_infinity());
    }
    let (values, _) = soft_vi_finite(mdp, model)?;
    Ok(discounted_return(traj, model, mdp.gamma()) - values.v[0][s0])
}

/// `exp(R(tau)) / Z` with `Z = exp V_0(s_0)`; 0 for infeasible trajectories.
pub fn me_trajectory_density<S: Scalar>(mdp: &TabularMdp<S>, model: &RewardModel<S>, traj: &Trajectory) -> Result<S> {
    Ok(me_log_density(mdp, model, traj)?.exp())
}

/// Log-densities of every feasible trajectory.
///
/// At `gamma = 1` the densities sum to one. For `gamma < 1` each entry is the
/// discounted likelihood of the trajectory, which is not a normalized distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeDensity<S> {
    pub trajectories: Vec<Trajectory>,
    pub log_density: Vec<S>,
    pub log_partition: S,
}

impl<S: Scalar> MeDensity<S> {
    pub fn total_mass(&self) -> S {
        self.log_density.iter().map(|x| x.exp()).sum()
    }

    /// `log sum_tau exp R(tau)` over the enumeration.
    pub fn enumerated_log_partition(&self) -> S {
        let logs: Vec<S> = self.log_density.iter().map(|&l| l + self.log_partition).collect();
        log_sum_exp(&logs)
    }
}

pub fn me_density_table<S: Scalar>(mdp: &TabularMdp<S>, model: &RewardModel<S>) -> Result<MeDensity<S>> {
    let (horizon, s0) = require_me_setting(mdp)?;
    let (values, _) = soft_vi_finite(mdp, model)?;
    let log_partition = values.v[0][s0];
    let (trajectories, log_density) = enumerate_trajectories(mdp, horizon)?
        .into_iter()
        .map(|(tr, _)| {
            let l = discounted_return(&tr, model, mdp.gamma()) - log_partition;
            (tr, l)
        })
        .unzip();
    Ok(MeDensity {
        trajectories,
        log_density,
        log_partition,
    })
}

/// Largest `|exp(discounted log-likelihood under pi_soft) - p_ME(tau)|` over all feasible trajectories.
pub fn me_density_matches_policy<S: Scalar>(mdp: &TabularMdp<S>, model: &RewardModel<S>) -> Result<S> {
    let table = me_density_table(mdp, model)?;
    let (_, policy) = plan(mdp, model)?;
    let mut worst = S::zero();
    for (tr, &l) in table.trajectories.iter().zip(&table.log_density) {
        let lik = discounted_log_likelihood(mdp, &policy, tr)?.exp();
        worst = worst.max((lik - l.exp()).abs());
    }
    Ok(worst)
}

/// `R(tau) + log I(s_0) + sum_t log P(s_{t+1}|s_t,a_t)`.
pub fn naive_me_log_density<S: Scalar>(mdp: &TabularMdp<S>, model: &RewardModel<S>, traj: &Trajectory) -> Result<S> {
    Ok(discounted_return(traj, model, mdp.gamma()) + dynamics_log_prob(mdp, traj)?)
}

/// Unnormalized naive density `exp(R(tau)) I(s_0) prod_t P(s_{t+1}|s_t,a_t)`.
pub fn naive_me_stochastic_density<S: Scalar>(
    mdp: &TabularMdp<S>,
    model: &RewardModel<S>,
    traj: &Trajectory,
) -> Result<S> {
    Ok(naive_me_log_density(mdp, model, traj)?.exp())
}

/// Naive density divided by its sum over the full enumeration.
pub fn naive_me_normalized<S: Scalar>(mdp: &TabularMdp<S>, model: &RewardModel<S>) -> Result<Vec<(Trajectory, S)>> {
    let horizon = mdp.require_finite_horizon("naive density normalization")?;
    let all = enumerate_trajectories(mdp, horizon)?;
    let logs = all
        .iter()
        .map(|(tr, _)| naive_me_log_density(mdp, model, tr))
        .collect::<Result<Vec<S>>>()?;
    let z = log_sum_exp(&logs);
    Ok(all
        .into_iter()
        .zip(logs)
        .map(|((tr, _), l)| (tr, (l - z).exp()))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskyChoice {
    Safe,
    Risky,
    Tie,
}

fn choose(safe: f64, risky: f64) -> RiskyChoice {
    if safe > risky {
        RiskyChoice::Safe
    } else if risky > safe {
        RiskyChoice::Risky
    } else {
        RiskyChoice::Tie
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskyPathReport {
    pub gamma: f64,
    /// Normalized naive density mass on trajectories that open with each action.
    pub naive_safe_mass: f64,
    pub naive_risky_mass: f64,
    pub naive_preferred: RiskyChoice,
    pub safe_return: f64,
    pub risky_return: f64,
    pub return_preferred: RiskyChoice,
    /// Soft-optimal probability of the safe action at `s0`.
    pub mce_safe_prob: f64,
    pub mce_preferred: RiskyChoice,
}

/// Compares naive ME, true returns and the MCE policy on RiskyPath at discount `gamma`.
pub fn risky_path_report(gamma: f64) -> Result<RiskyPathReport> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidConfig(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    let env = make_risky_path::<f64>();
    let mdp = env.mdp.with_gamma(gamma)?;
    let reward = env.reward.expect("risky path has a reward");
    let (mut safe, mut risky) = (0.0, 0.0);
    for (tr, p) in naive_me_normalized(&mdp, &reward)? {
        match tr.actions[0] {
            RISKY_SAFE => safe += p,
            _ => risky += p,
        }
    }
    let always = |a: usize| Policy::deterministic(2, &[a; 4]);
    let safe_return = expected_return(&mdp, &always(RISKY_SAFE)?, &reward)?;
    let risky_return = expected_return(&mdp, &always(RISKY_SHORTCUT)?, &reward)?;
    let (_, pi) = plan(&mdp, &reward)?;
    let p_safe = pi.prob(0, 0, RISKY_SAFE);
    Ok(RiskyPathReport {
        gamma,
        naive_safe_mass: safe,
        naive_risky_mass: risky,
        naive_preferred: choose(safe, risky),
        safe_return,
        risky_return,
        return_preferred: choose(safe_return, risky_return),
        mce_safe_prob: p_safe,
        mce_preferred: choose(p_safe, pi.prob(0, 0, RISKY_SHORTCUT)),
    })
}

/// Reports on the grid `step, 2 step, ..., 1`.
pub fn risky_path_sweep(step: f64) -> Result<Vec<RiskyPathReport>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidConfig(format!("grid step must lie in (0, 1], got {step}")));
    }
    let n = (1.0 / step).round() as usize;
    (1..=n).map(|i| risky_path_report((i as f64 * step).min(1.0))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_random_mdp, RandomMdpConfig};
    use crate::features::TabularShape;
    use crate::mdp::Horizon;

    fn fork(gamma: f64) -> TabularMdp<f64> {
        // s0 -a-> s_{1+a}, both absorbing afterwards
        TabularMdp::deterministic(
            gamma,
            Horizon::Finite(1),
            vec![1.0, 0.0, 0.0],
            &[vec![1, 2], vec![1, 1], vec![2, 2]],
            vec![false, false, false],
        )
        .unwrap()
    }

    #[test]
    fn single_feasible_trajectory_has_density_one() {
        let mdp = TabularMdp::<f64>::deterministic(1.0, Horizon::Finite(3), vec![1.0], &[vec![0]], vec![false]).unwrap();
        let m = RewardModel::tabular(TabularShape::State, 1, 1, vec![2.0]).unwrap();
        let tr = Trajectory::new(vec![0; 4], vec![0; 3]).unwrap();
        assert!((me_trajectory_density(&mdp, &m, &tr).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(me_density_matches_policy(&mdp, &m).unwrap(), 0.0);
    }

    #[test]
    fn two_trajectories_give_softmax_of_returns() {
        let mdp = fork(1.0);
        let m = RewardModel::tabular(TabularShape::StateAction, 3, 2, vec![0.3, -1.1, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let t1 = Trajectory::new(vec![0, 1], vec![0]).unwrap();
        let t2 = Trajectory::new(vec![0, 2], vec![1]).unwrap();
        let z = 0.3f64.exp() + (-1.1f64).exp();
        assert!((me_trajectory_density(&mdp, &m, &t1).unwrap() - 0.3f64.exp() / z).abs() < 1e-15);
        assert!((me_trajectory_density(&mdp, &m, &t2).unwrap() - (-1.1f64).exp() / z).abs() < 1e-15);
        let infeasible = Trajectory::new(vec![0, 2], vec![0]).unwrap();
        assert_eq!(me_trajectory_density(&mdp, &m, &infeasible).unwrap(), 0.0);
    }

    #[test]
    fn partition_and_policy_agree_with_enumeration() {
        for (seed, gamma) in [(0, 1.0), (1, 1.0), (2, 0.5), (3, 0.5)] {
            let env = make_random_mdp::<f64>(&RandomMdpConfig {
                seed,
                deterministic: true,
                gamma,
                horizon: Horizon::Finite(3),
                ..Default::default()
            })
            .unwrap();
            let m = RewardModel::linear(vec![0.7, -0.3, 1.2], env.features.clone()).unwrap();
            let table = me_density_table(&env.mdp, &m).unwrap();
            let rel = (table.enumerated_log_partition().exp() / table.log_partition.exp() - 1.0).abs();
            if gamma == 1.0 {
                assert!(rel < 1e-9);
                assert!((table.total_mass() - 1.0).abs() < 1e-9);
            }
            assert!(me_density_matches_policy(&env.mdp, &m).unwrap() < 1e-9);
        }
    }

    #[test]
    fn stochastic_mdp_is_rejected() {
        let env = make_risky_path::<f64>();
        let tr = Trajectory::new(vec![0, 1, 2], vec![0, 0]).unwrap();
        assert!(matches!(
            me_trajectory_density(&env.mdp, env.reward.as_ref().unwrap(), &tr),
            Err(Error::WrongMode(_))
        ));
    }

    #[test]
    fn naive_density_reduces_to_me_on_deterministic_mdp() {
        let env = make_random_mdp::<f64>(&RandomMdpConfig {
            seed: 4,
            deterministic: true,
            gamma: 1.0,
            horizon: Horizon::Finite(3),
            ..Default::default()
        })
        .unwrap();
        let m = RewardModel::linear(vec![0.2, 0.9, -0.6], env.features.clone()).unwrap();
        let table = me_density_table(&env.mdp, &m).unwrap();
        let naive = naive_me_normalized(&env.mdp, &m).unwrap();
        let total: f64 = naive.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for ((tr, p), (tr2, l)) in naive.iter().zip(table.trajectories.iter().zip(&table.log_density)) {
            assert_eq!(tr, tr2);
            assert!((p - l.exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn shortcut_pays_log_half() {
        let env = make_risky_path::<f64>();
        let m = env.reward.unwrap();
        let tr = Trajectory::new(vec![0, 2, 2], vec![RISKY_SHORTCUT, 0]).unwrap();
        let l = naive_me_log_density(&env.mdp, &m, &tr).unwrap();
        let r = discounted_return(&tr, &m, 1.0);
        assert!((l - r - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn risky_path_closed_forms() {
        for g in [0.1, 0.3, 0.5, 1.0] {
            let rep = risky_path_report(g).unwrap();
            assert!((rep.safe_return - g).abs() < 1e-14);
            assert!((rep.risky_return + 49.5).abs() < 1e-12);
            assert_eq!(rep.return_preferred, RiskyChoice::Safe);
            assert_eq!(rep.mce_preferred, RiskyChoice::Safe);
            let threshold = 1.0 - 2f64.ln();
            let expected = if g < threshold { RiskyChoice::Risky } else { RiskyChoice::Safe };
            assert_eq!(rep.naive_preferred, expected, "gamma {g}");
        }
        assert!(risky_path_report(0.0).is_err());
        assert_eq!(risky_path_sweep(0.01).unwrap().len(), 100);
    }
}
