//! Maximum causal entropy IRL by dual ascent.
//!
//! Each iteration solves the soft-optimal policy for the current reward, then moves
//! the parameters along `E_D[sum gamma^t grad r] - E_pi[sum gamma^t grad r]`. The same
//! step is gradient ascent on the demonstration log-likelihood
//! `E_D[sum_t gamma^t r(S_t,A_t,S_{t+1})] - E_I[V_0(S_0)]`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::{policy_grad_expectations, DemonstrationSet, RewardModel};
use crate::mdp::{Policy, TabularMdp};
use crate::occupancy::expected_return;
use crate::scalar::{max_abs, Scalar};
use crate::soft_vi::{initial_value, plan, SoftValues};
use crate::trajectory::discounted_return;

/// Step size `alpha_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum LearningRate {
    Constant(f64),
    /// `initial / (1 + decay * k)`.
    Decay { initial: f64, decay: f64 },
}

impl LearningRate {
    pub fn at(&self, k: usize) -> f64 {
        match *self {
            LearningRate::Constant(a) => a,
            LearningRate::Decay { initial, decay } => initial / (1.0 + decay * k as f64),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            LearningRate::Constant(a) => a > 0.0 && a.is_finite(),
            LearningRate::Decay { initial, decay } => initial > 0.0 && initial.is_finite() && decay >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("learning rate {self:?} must be positive")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitConfig {
    pub learning_rate: LearningRate,
    /// Stop once the gradient's infinity norm falls to this value.
    pub stop_grad_norm: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Halve the step until the log-likelihood does not decrease.
    pub backtrack: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            learning_rate: LearningRate::Constant(0.1),
            stop_grad_norm: 1e-8,
            max_iters: 10_000,
            seed: 0,
            backtrack: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.learning_rate.validate()?;
        if !(self.stop_grad_norm > 0.0) {
            return Err(Error::InvalidConfig("stop_grad_norm must be positive".into()));
        }
        Ok(())
    }
}

/// One row of a fit trace, describing the iterate *before* its update.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub theta: Vec<f64>,
    pub grad_norm: f64,
    pub log_likelihood: f64,
    /// Euclidean norm of `E_pi[grad] - E_D[grad]`.
    pub gap_norm: f64,
    pub step_size: f64,
    /// Effective sample size, when the gradient is importance sampled.
    pub ess: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitTrace {
    pub records: Vec<TraceRecord>,
    pub converged: bool,
    /// Set when the fit stopped on a non-finite quantity; `records` hold the
    /// iterates up to that point.
    pub failure: Option<String>,
}

impl FitTrace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn final_grad_norm(&self) -> f64 {
        self.last().map_or(f64::NAN, |r| r.grad_norm)
    }
}

/// Output of a fitting routine.
#[derive(Debug, Clone)]
pub struct FitResult<S> {
    pub model: RewardModel<S>,
    pub policy: Policy<S>,
    pub trace: FitTrace,
}

impl<S: Scalar> FitResult<S> {
    pub fn theta(&self) -> &[S] {
        self.model.params()
    }
}

pub(crate) fn inf_norm<S: Scalar>(v: &[S]) -> S {
    max_abs(v.iter().copied())
}

pub(crate) fn l2_norm<S: Scalar>(v: &[S]) -> S {
    v.iter().fold(S::zero(), |m, &x| m + x * x).sqrt()
}

pub(crate) fn to_f64<S: Scalar>(v: &[S]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

/// `E_{pi_theta}[sum gamma^t grad r] - demo_grad`, with `pi_theta` the soft-optimal policy.
pub fn dual_gradient<S: Scalar>(
    mdp: &TabularMdp<S>,
    model: &RewardModel<S>,
    demo_grad: &[S],
) -> Result<Vec<S>> {
    let (_, policy) = plan(mdp, model)?;
    dual_gradient_for_policy(mdp, model, &policy, demo_grad)
}

fn dual_gradient_for_policy<S: Scalar>(
    mdp: &TabularMdp<S>,
    model: &RewardModel<S>,
    policy: &Policy<S>,
    demo_grad: &[S],
) -> Result<Vec<S>> {
    if demo_grad.len() != model.n_params() {
        return Err(Error::Dimension(format!(
            "demo expectations have {} entries, model has {} parameters",
            demo_grad.len(),
            model.n_params()
        )));
    }
    let pol = policy_grad_expectations(mdp, policy, model)?;
    Ok(pol.iter().zip(demo_grad).map(|(&p, &d)| p - d).collect())
}

/// `E_D[sum_t gamma^t r_theta]`.
pub fn demo_return<S: Scalar>(
    mdp: &TabularMdp<S>,
    model: &RewardModel<S>,
    demos: &DemonstrationSet<S>,
) -> Result<S> {
    match demos {
        DemonstrationSet::Trajectories(trajs) => {
            if trajs.is_empty() {
                return Err(Error::EmptyDemonstrations);
            }
            let mut total = S::zero();
            for tr in trajs {
                tr.validate(mdp)?;
                total = total + discounted_return(tr, model, mdp.gamma());
            }
            Ok(total / S::from_usize(trajs.len()).unwrap())
        }
        DemonstrationSet::ExactPolicy(p) => expected_return(mdp, p, model),
    }
}

fn log_likelihood_from_values<S: Scalar>(
    mdp: &TabularMdp<S>,
    model: &RewardModel<S>,
    demos: &DemonstrationSet<S>,
    values: &SoftValues<S>,
) -> Result<S> {
    Ok(demo_return(mdp, model, demos)? - initial_value(mdp, values))
}

/// Demonstration log-likelihood with the dynamics constant dropped.
pub fn log_likelihood<S: Scalar>(
    mdp: &TabularMdp<S>,
    model: &RewardModel<S>,
    demos: &DemonstrationSet<S>,
) -> Result<S> {
    if demos.is_empty() {
        return Err(Error::EmptyDemonstrations);
    }
    let (values, _) = plan(mdp, model)?;
    log_likelihood_from_values(mdp, model, demos, &values)
}

/// Dual ascent from `theta = 0`.
///
/// Returns an unconverged trace rather than an error when `max_iters` runs out.
pub fn mce_irl_fit<S: Scalar>(
    mdp: &TabularMdp<S>,
    demos: &DemonstrationSet<S>,
    model: &RewardModel<S>,
    cfg: &FitConfig,
) -> Result<FitResult<S>> {
    cfg.validate()?;
    if demos.is_empty() {
        return Err(Error::EmptyDemonstrations);
    }
    let demo_grad = demos.grad_expectations(mdp, model)?;
    let mut model = model.with_params(vec![S::zero(); model.n_params()])?;
    let mut records = Vec::new();
    let (values, mut policy) = plan(mdp, &model)?;
    let mut ll = log_likelihood_from_values(mdp, &model, demos, &values)?;
    let mut converged = false;
    let mut failure = None;
    for k in 0..=cfg.max_iters {
        let grad = dual_gradient_for_policy(mdp, &model, &policy, &demo_grad)?;
        let gn = inf_norm(&grad);
        if !gn.is_finite() || !ll.is_finite() {
            failure = Some(format!("non-finite gradient or likelihood at iteration {k}"));
            break;
        }
        let mut record = TraceRecord {
            iteration: k,
            theta: to_f64(model.params()),
            grad_norm: gn.as_f64(),
            log_likelihood: ll.as_f64(),
            gap_norm: l2_norm(&grad).as_f64(),
            step_size: 0.0,
            ess: None,
            note: None,
        };
        if gn.as_f64() <= cfg.stop_grad_norm {
            converged = true;
            records.push(record);
            break;
        }
        if k == cfg.max_iters {
            records.push(record);
            break;
        }
        let mut alpha = cfg.learning_rate.at(k);
        loop {
            let a = S::lit(alpha);
            let next: Vec<S> = model
                .params()
                .iter()
                .zip(&grad)
                .map(|(&t, &g)| t - a * g)
                .collect();
            let cand = model.with_params(next)?;
            let (v, p) = match plan(mdp, &cand) {
                Ok(vp) => vp,
                Err(Error::Numerical(m) | Error::InvalidDistribution(m)) => {
                    failure = Some(format!("iteration {k}: {m}"));
                    break;
                }
                Err(e) => return Err(e),
            };
            let cand_ll = log_likelihood_from_values(mdp, &cand, demos, &v)?;
            if cfg.backtrack && cand_ll < ll && alpha > 1e-12 {
                alpha *= 0.5;
                record.note = Some("backtracked".into());
                continue;
            }
            model = cand;
            policy = p;
            ll = cand_ll;
            break;
        }
        record.step_size = alpha;
        records.push(record);
        if failure.is_some() {
            break;
        }
    }
    Ok(FitResult {
        model,
        policy,
        trace: FitTrace {
            records,
            converged,
            failure,
        },
    })
}

/// Central differences of `f` at `x`.
pub fn finite_difference_gradient<S: Scalar>(
    x: &[S],
    h: S,
    mut f: impl FnMut(&[S]) -> Result<S>,
) -> Result<Vec<S>> {
    let mut p = x.to_vec();
    let two = S::lit(2.0);
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p)?;
            p[i] = x[i] - h;
            let down = f(&p)?;
            p[i] = x[i];
            Ok((up - down) / (two * h))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheck {
    /// `-dual_gradient`, i.e. the analytic log-likelihood gradient.
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// `|analytic - numeric|_2 / max(|analytic|_2, |numeric|_2)`.
    pub relative_error: f64,
}

/// Compares the analytic likelihood gradient with central differences.
pub fn gradcheck<S: Scalar>(
    mdp: &TabularMdp<S>,
    model: &RewardModel<S>,
    demos: &DemonstrationSet<S>,
    h: S,
) -> Result<GradCheck> {
    let demo_grad = demos.grad_expectations(mdp, model)?;
    let analytic: Vec<S> = dual_gradient(mdp, model, &demo_grad)?.into_iter().map(|g| -g).collect();
    let numeric = finite_difference_gradient(model.params(), h, |theta| {
        log_likelihood(mdp, &model.with_params(theta.to_vec())?, demos)
    })?;
    let diff: Vec<S> = analytic.iter().zip(&numeric).map(|(&a, &n)| a - n).collect();
    let scale = l2_norm(&analytic).max(l2_norm(&numeric));
    let relative_error = if scale == S::zero() {
        0.0
    } else {
        (l2_norm(&diff) / scale).as_f64()
    };
    Ok(GradCheck {
        analytic: to_f64(&analytic),
        numeric: to_f64(&numeric),
        relative_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_gridworld, make_random_mdp, GridworldConfig, RandomMdpConfig};
    use crate::features::{policy_feature_expectations, FeatureMap, TabularShape};
    use crate::mdp::{Horizon, Trajectory};
    use crate::occupancy::compute_occupancy;
    use crate::trajectory::{discounted_log_likelihood, dynamics_log_prob};

    fn linear(env: &crate::envs::EnvBundle<f64>, theta: Vec<f64>) -> RewardModel<f64> {
        RewardModel::linear(theta, env.features.clone()).unwrap()
    }

    #[test]
    fn matched_expectations_give_zero_gradient() {
        let env = make_random_mdp::<f64>(&RandomMdpConfig::default()).unwrap();
        let m = linear(&env, vec![0.3, -0.2, 0.5]);
        let (_, pi) = plan(&env.mdp, &m).unwrap();
        let fexp = policy_feature_expectations(&env.mdp, &pi, &env.features).unwrap();
        let g = dual_gradient(&env.mdp, &m, &fexp).unwrap();
        assert!(inf_norm(&g) < 1e-10);
    }

    #[test]
    fn one_hot_gradient_is_occupancy_difference() {
        let env = make_random_mdp::<f64>(&RandomMdpConfig {
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        let (n_s, n_a) = (4, 2);
        let feats = FeatureMap::one_hot_state_action(n_s, n_a);
        let m = RewardModel::linear(vec![0.1, 0.0, -0.4, 0.2, 0.0, 0.3, 0.0, -0.1], feats).unwrap();
        let demo_pi = Policy::uniform(n_s, n_a);
        let demo_occ = compute_occupancy(&env.mdp, &demo_pi).unwrap().total_state_action();
        let g = dual_gradient(&env.mdp, &m, &demo_occ).unwrap();
        let (_, pi) = plan(&env.mdp, &m).unwrap();
        let pol_occ = compute_occupancy(&env.mdp, &pi).unwrap().total_state_action();
        for i in 0..n_s * n_a {
            assert!((g[i] - (pol_occ[i] - demo_occ[i])).abs() < 1e-14);
        }
    }

    #[test]
    fn dual_gradient_is_negative_likelihood_gradient() {
        for seed in 0..3 {
            let env = make_random_mdp::<f64>(&RandomMdpConfig {
                seed,
                ..Default::default()
            })
            .unwrap();
            let m = linear(&env, vec![0.4, -0.7, 0.2]);
            let demos = DemonstrationSet::ExactPolicy(Policy::uniform(4, 2));
            let gc = gradcheck(&env.mdp, &m, &demos, 1e-5).unwrap();
            let abs = gc
                .analytic
                .iter()
                .zip(&gc.numeric)
                .fold(0f64, |m, (a, n)| m.max((a - n).abs()));
            assert!(abs < 1e-6, "seed {seed}: {abs}");
            assert!(gc.relative_error < 1e-5);
        }
    }

    #[test]
    fn one_action_single_trajectory_likelihood_is_zero() {
        let mdp = TabularMdp::<f64>::deterministic(
            0.9,
            Horizon::Finite(3),
            vec![1.0, 0.0],
            &[vec![1], vec![0]],
            vec![false, false],
        )
        .unwrap();
        let m = RewardModel::tabular(TabularShape::State, 2, 1, vec![1.5, -0.25]).unwrap();
        let demos = DemonstrationSet::Trajectories(vec![Trajectory::new(vec![0, 1, 0, 1], vec![0; 3]).unwrap()]);
        assert!(log_likelihood(&mdp, &m, &demos).unwrap().abs() < 1e-14);
    }

    #[test]
    fn likelihood_matches_discounted_log_likelihood_on_deterministic_mdp() {
        let env = make_random_mdp::<f64>(&RandomMdpConfig {
            seed: 5,
            deterministic: true,
            ..Default::default()
        })
        .unwrap();
        let m = linear(&env, vec![1.0, -0.5, 0.25]);
        let (_, pi) = plan(&env.mdp, &m).unwrap();
        let trajs = crate::trajectory::sample_trajectories(&env.mdp, &Policy::uniform(4, 2), 6, 1).unwrap();
        let oracle: f64 = trajs
            .iter()
            .map(|t| {
                discounted_log_likelihood(&env.mdp, &pi, t).unwrap() - dynamics_log_prob(&env.mdp, t).unwrap()
            })
            .sum::<f64>()
            / 6.0;
        let ll = log_likelihood(&env.mdp, &m, &DemonstrationSet::Trajectories(trajs)).unwrap();
        assert!((ll - oracle).abs() < 1e-12, "{ll} vs {oracle}");
    }

    #[test]
    fn fit_matches_feature_expectations_and_is_locally_optimal() {
        let env = make_random_mdp::<f64>(&RandomMdpConfig {
            seed: 9,
            ..Default::default()
        })
        .unwrap();
        let truth = linear(&env, vec![1.0, -1.0, 0.5]);
        let (_, expert) = plan(&env.mdp, &truth).unwrap();
        let demos = DemonstrationSet::ExactPolicy(expert);
        let cfg = FitConfig {
            learning_rate: LearningRate::Constant(0.5),
            ..Default::default()
        };
        let fit = mce_irl_fit(&env.mdp, &demos, &truth, &cfg).unwrap();
        assert!(fit.trace.converged);
        assert!(fit.trace.final_grad_norm() <= 1e-8);
        let a = policy_feature_expectations(&env.mdp, &fit.policy, &env.features).unwrap();
        let b = demo_feature_expectations_of(&env, &demos);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-6);
        }
        let best = log_likelihood(&env.mdp, &fit.model, &demos).unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        for _ in 0..100 {
            let d: Vec<f64> = (0..3).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
            let n = l2_norm(&d);
            let theta: Vec<f64> = fit.theta().iter().zip(&d).map(|(t, x)| t + 0.1 * x / n).collect();
            let ll = log_likelihood(&env.mdp, &fit.model.with_params(theta).unwrap(), &demos).unwrap();
            assert!(ll <= best + 1e-12);
        }
    }

    fn demo_feature_expectations_of(env: &crate::envs::EnvBundle<f64>, d: &DemonstrationSet<f64>) -> Vec<f64> {
        crate::features::demo_feature_expectations(&env.mdp, d, &env.features).unwrap()
    }

    #[test]
    fn symmetric_uniform_expert_keeps_theta_at_zero() {
        // one state, two identical actions with opposite features
        let mdp = TabularMdp::<f64>::deterministic(
            0.9,
            Horizon::Finite(4),
            vec![1.0],
            &[vec![0, 0]],
            vec![false],
        )
        .unwrap();
        let feats = FeatureMap::new(1, 2, 1, vec![1.0, -1.0]).unwrap();
        let m = RewardModel::linear(vec![0.0], feats).unwrap();
        let demos = DemonstrationSet::ExactPolicy(Policy::uniform(1, 2));
        let fit = mce_irl_fit(&mdp, &demos, &m, &FitConfig::default()).unwrap();
        assert!(fit.theta()[0].abs() < 1e-15);
        assert!(fit.trace.converged);
    }

    #[test]
    fn log_likelihood_is_monotone_with_backtracking() {
        let env = make_gridworld::<f64>(&GridworldConfig {
            horizon: Horizon::Finite(5),
            ..Default::default()
        })
        .unwrap();
        let truth = RewardModel::linear(
            (0..9).map(|i| if i == 8 { 2.0 } else { 0.0 }).collect(),
            env.features.clone(),
        )
        .unwrap();
        let (_, expert) = plan(&env.mdp, &truth).unwrap();
        let demos = DemonstrationSet::ExactPolicy(expert);
        let cfg = FitConfig {
            learning_rate: LearningRate::Constant(5.0),
            max_iters: 60,
            backtrack: true,
            ..Default::default()
        };
        let fit = mce_irl_fit(&env.mdp, &demos, &truth, &cfg).unwrap();
        for w in fit.trace.records.windows(2) {
            assert!(w[1].log_likelihood >= w[0].log_likelihood - 1e-12);
        }
    }

    #[test]
    fn bad_config_is_rejected() {
        let cfg = FitConfig {
            learning_rate: LearningRate::Constant(0.0),
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert_eq!(
            LearningRate::Decay {
                initial: 0.1,
                decay: 0.01
            }
            .at(100),
            0.05
        );
    }
}
