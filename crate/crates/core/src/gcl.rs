//! Importance-sampled ME IRL gradients with an adaptive proposal (guided cost learning).
//!
//! The policy expectation `E_{p_theta}[sum gamma^t grad r]` is estimated with
//! self-normalized weights `w(tau) = exp(R_theta(tau)) / q(tau)`. Both the numerator
//! and `q` leave out the dynamics factors, which cancel for deterministic MDPs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::{DemonstrationSet, RewardModel};
use crate::mce::{inf_norm, l2_norm, log_likelihood, to_f64, FitResult, FitTrace, TraceRecord};
use crate::mdp::{Policy, TabularMdp, Trajectory};
use crate::scalar::Scalar;
use crate::soft_vi::PartialSoftPlanner;
use crate::trajectory::{discounted_return, enumerate_trajectories, sample_trajectories};

/// Sampling policy, optionally mixed with an approximation of the expert:
/// `q = (1 - beta) policy + beta expert`.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal<S> {
    pub policy: Policy<S>,
    pub mixture: Option<(S, Policy<S>)>,
}

impl<S: Scalar> Proposal<S> {
    pub fn new(policy: Policy<S>) -> Self {
        Self { policy, mixture: None }
    }

    pub fn with_mixture(policy: Policy<S>, beta: S, expert: Policy<S>) -> Result<Self> {
        if !(beta >= S::zero() && beta <= S::one()) {
            return Err(Error::InvalidConfig(format!("mixture weight {beta} is outside [0, 1]")));
        }
        if (policy.n_states(), policy.n_actions()) != (expert.n_states(), expert.n_actions()) {
            return Err(Error::Dimension("mixture components have different shapes".into()));
        }
        Ok(Self {
            policy,
            mixture: Some((beta, expert)),
        })
    }

    /// The policy trajectories are actually drawn from.
    pub fn effective_policy(&self) -> Result<Policy<S>> {
        let Some((beta, expert)) = &self.mixture else {
            return Ok(self.policy.clone());
        };
        let (n_s, n_a) = (self.policy.n_states(), self.policy.n_actions());
        let one_minus = S::one() - *beta;
        let mix = |t: usize| -> Vec<S> {
            self.policy
                .table(t)
                .iter()
                .zip(expert.table(t))
                .map(|(&p, &e)| one_minus * p + *beta * e)
                .collect()
        };
        if self.policy.is_stationary() && expert.is_stationary() {
            Policy::stationary(n_s, n_a, mix(0))
        } else {
            let steps = self.policy.n_steps().max(expert.n_steps());
            Policy::time_indexed(n_s, n_a, (0..steps).map(mix).collect())
        }
    }
}

/// Smoothed empirical stationary policy of a set of trajectories; unvisited states are uniform.
pub fn empirical_policy<S: Scalar>(
    n_states: usize,
    n_actions: usize,
    trajs: &[Trajectory],
    smoothing: S,
) -> Result<Policy<S>> {
    let mut counts = vec![smoothing; n_states * n_actions];
    for tr in trajs {
        for (s, a, _) in tr.steps() {
            if s >= n_states || a >= n_actions {
                return Err(Error::IndexOutOfRange {
                    kind: "state/action",
                    index: s.max(a),
                    size: n_states.min(n_actions),
                });
            }
            counts[s * n_actions + a] = counts[s * n_actions + a] + S::one();
        }
    }
    for row in counts.chunks_mut(n_actions) {
        let total: S = row.iter().copied().sum();
        for x in row.iter_mut() {
            *x = if total > S::zero() {
                *x / total
            } else {
                S::one() / S::from_usize(n_actions).unwrap()
            };
        }
    }
    Policy::stationary(n_states, n_actions, counts)
}

/// `log q(tau) = sum_t log q_t(a_t | s_t)`.
fn proposal_log_prob<S: Scalar>(q: &Policy<S>, traj: &Trajectory) -> S {
    traj.steps()
        .enumerate()
        .fold(S::zero(), |acc, (t, (s, a, _))| acc + q.prob(t, s, a).ln())
}

fn log_weight_with<S: Scalar>(
    mdp: &TabularMdp<S>,
    model: &RewardModel<S>,
    q: &Policy<S>,
    traj: &Trajectory,
) -> Result<S> {
    let lq = proposal_log_prob(q, traj);
    if lq == S::neg_infinity() {
        return Err(Error::InvalidSupport(format!(
            "proposal gives zero probability to trajectory {:?}",
            traj.states
        )));
    }
    Ok(discounted_return(traj, model, mdp.gamma()) - lq)
}

/// `log w(tau) = R_theta(tau) - log q(tau)`.
pub fn importance_log_weight<S: Scalar>(
    mdp: &TabularMdp<S>,
    model: &RewardModel<S>,
    proposal: &Proposal<S>,
    traj: &Trajectory,
) -> Result<S> {
    traj.validate(mdp)?;
    let q = proposal.effective_policy()?;
    q.check_shape(mdp)?;
    log_weight_with(mdp, model, &q, traj)
}

pub fn importance_weight<S: Scalar>(
    mdp: &TabularMdp<S>,
    model: &RewardModel<S>,
    proposal: &Proposal<S>,
    traj: &Trajectory,
) -> Result<S> {
    Ok(importance_log_weight(mdp, model, proposal, traj)?.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightSummary {
    pub max: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Importance-sampled gradient `E_q[w g] / E_q[w] - E_D[g]`.
///
/// `weights` summarizes the self-normalized weights, which sum to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsEstimate<S> {
    pub gradient: Vec<S>,
    pub effective_sample_size: f64,
    pub weights: WeightSummary,
}

/// Per-trajectory log-weights, sampling masses and discounted gradient sums.
#[derive(Debug, Clone, PartialEq)]
pub struct IsSamples<S> {
    pub log_weights: Vec<S>,
    /// Multiplicity of each entry: 1 for samples, `q(tau) P(tau)` for an enumeration.
    pub mass: Vec<S>,
    pub grads: Vec<Vec<S>>,
}

fn grad_sum<S: Scalar>(model: &RewardModel<S>, traj: &Trajectory, gamma: S) -> Vec<S> {
    let mut g = vec![S::zero(); model.n_params()];
    let mut disc = S::one();
    for (s, a, s2) in traj.steps() {
        model.add_gradient(s, a, s2, disc, &mut g);
        disc = disc * gamma;
    }
    g
}

impl<S: Scalar> IsSamples<S> {
    /// Draws `n` trajectories from the proposal.
    pub fn sample(
        mdp: &TabularMdp<S>,
        model: &RewardModel<S>,
        proposal: &Proposal<S>,
        n: usize,
        seed: u64,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidConfig("importance sampling needs at least 2 samples".into()));
        }
        let q = proposal.effective_policy()?;
        let trajs = sample_trajectories(mdp, &q, n, seed)?;
        Self::build(mdp, model, &q, trajs.iter().map(|t| (t, S::one())))
    }

    /// Every feasible trajectory, weighted by its exact sampling probability.
    pub fn enumerate(mdp: &TabularMdp<S>, model: &RewardModel<S>, proposal: &Proposal<S>) -> Result<Self> {
        let horizon = mdp.require_finite_horizon("enumerated importance sampling")?;
        let q = proposal.effective_policy()?;
        let all = enumerate_trajectories(mdp, horizon)?;
        let masses: Vec<S> = all.iter().map(|(t, p)| *p * proposal_log_prob(&q, t).exp()).collect();
        Self::build(mdp, model, &q, all.iter().map(|(t, _)| t).zip(masses))
    }

    fn build<'a>(
        mdp: &TabularMdp<S>,
        model: &RewardModel<S>,
        q: &Policy<S>,
        items: impl Iterator<Item = (&'a Trajectory, S)>,
    ) -> Result<Self> {
        model.check_shape(mdp)?;
        q.check_shape(mdp)?;
        let mut out = IsSamples {
            log_weights: Vec::new(),
            mass: Vec::new(),
            grads: Vec::new(),
        };
        for (t, m) in items {
            out.log_weights.push(log_weight_with(mdp, model, q, t)?);
            out.mass.push(m);
            out.grads.push(grad_sum(model, t, mdp.gamma()));
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    /// Self-normalized estimate over the entries at `idx`.
    fn estimate_on(&self, idx: impl Iterator<Item = usize> + Clone, demo_grad: &[S]) -> Result<IsEstimate<S>> {
        let m = idx
            .clone()
            .map(|i| self.log_weights[i])
            .fold(S::neg_infinity(), S::max);
        if !m.is_finite() {
            return Err(Error::DegenerateEstimate("all importance weights are zero".into()));
        }
        let dim = demo_grad.len();
        let mut num = vec![S::zero(); dim];
        let (mut sw, mut sw2, mut count) = (S::zero(), S::zero(), S::zero());
        let mut w_all = Vec::new();
        for i in idx {
            let w = (self.log_weights[i] - m).exp() * self.mass[i];
            sw = sw + w;
            sw2 = sw2 + w * w / self.mass[i].max(S::min_positive_value());
            count = count + self.mass[i];
            for (n, &g) in num.iter_mut().zip(&self.grads[i]) {
                *n = *n + w * g;
            }
            w_all.push(w);
        }
        if !(sw > S::zero()) {
            return Err(Error::DegenerateEstimate("importance weights sum to zero".into()));
        }
        let gradient: Vec<S> = num.iter().zip(demo_grad).map(|(&n, &d)| n / sw - d).collect();
        let n = w_all.len() as f64;
        let normed: Vec<f64> = w_all.iter().map(|&w| (w / sw).as_f64()).collect();
        let mean = normed.iter().sum::<f64>() / n;
        let variance = normed.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        // (sum w)^2 / sum w^2, rescaled so an enumeration reports its number of entries
        let efficiency = (sw * sw / (sw2 * count)).as_f64();
        Ok(IsEstimate {
            gradient,
            effective_sample_size: efficiency * n,
            weights: WeightSummary {
                max: normed.iter().copied().fold(0.0, f64::max),
                mean,
                variance,
            },
        })
    }

    pub fn estimate(&self, demo_grad: &[S]) -> Result<IsEstimate<S>> {
        self.estimate_on(0..self.len(), demo_grad)
    }

    /// Per-coordinate bootstrap standard error of [`IsSamples::estimate`].
    pub fn bootstrap_standard_error(&self, demo_grad: &[S], n_boot: usize, seed: u64) -> Result<Vec<f64>> {
        if n_boot < 2 {
            return Err(Error::InvalidConfig("bootstrap needs at least 2 resamples".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.len();
        let mut draws: Vec<Vec<f64>> = Vec::with_capacity(n_boot);
        for _ in 0..n_boot {
            let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            draws.push(to_f64(&self.estimate_on(idx.into_iter(), demo_grad)?.gradient));
        }
        let dim = demo_grad.len();
        Ok((0..dim)
            .map(|k| {
                let mean = draws.iter().map(|d| d[k]).sum::<f64>() / n_boot as f64;
                let var = draws.iter().map(|d| (d[k] - mean).powi(2)).sum::<f64>() / (n_boot - 1) as f64;
                var.sqrt()
            })
            .collect())
    }
}

/// Sampled self-normalized IS gradient, in the same orientation as `dual_gradient`.
pub fn is_gradient<S: Scalar>(
    mdp: &TabularMdp<S>,
    model: &RewardModel<S>,
    proposal: &Proposal<S>,
    demos: &DemonstrationSet<S>,
    n_samples: usize,
    seed: u64,
) -> Result<IsEstimate<S>> {
    let demo_grad = demos.grad_expectations(mdp, model)?;
    IsSamples::sample(mdp, model, proposal, n_samples, seed)?.estimate(&demo_grad)
}

/// The same estimator with the sample average replaced by the exact sum over all
/// trajectories.
pub fn is_gradient_exact<S: Scalar>(
    mdp: &TabularMdp<S>,
    model: &RewardModel<S>,
    proposal: &Proposal<S>,
    demos: &DemonstrationSet<S>,
) -> Result<IsEstimate<S>> {
    let demo_grad = demos.grad_expectations(mdp, model)?;
    IsSamples::enumerate(mdp, model, proposal)?.estimate(&demo_grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GclMode {
    /// Weights summed over the full trajectory enumeration.
    Exact,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GclConfig {
    pub outer_iters: usize,
    /// Soft backup sweeps applied to the proposal after each reward update.
    pub rl_steps_per_iter: usize,
    pub n_samples: usize,
    pub lr: f64,
    pub seed: u64,
    pub mode: GclMode,
    /// Weight on the empirical expert policy in the proposal mixture.
    pub expert_mixture: f64,
    pub stop_grad_norm: f64,
}

impl Default for GclConfig {
    fn default() -> Self {
        Self {
            outer_iters: 200,
            rl_steps_per_iter: 5,
            n_samples: 1000,
            lr: 0.1,
            seed: 0,
            mode: GclMode::Sampled,
            expert_mixture: 0.0,
            stop_grad_norm: 1e-8,
        }
    }
}

impl GclConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig("lr must be positive".into()));
        }
        if self.mode == GclMode::Sampled && self.n_samples < 2 {
            return Err(Error::InvalidConfig("n_samples must be at least 2".into()));
        }
        if !(0.0..=1.0).contains(&self.expert_mixture) {
            return Err(Error::InvalidConfig("expert_mixture must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Output of [`gcl_fit`].
#[derive(Debug, Clone)]
pub struct GclResult<S> {
    pub fit: FitResult<S>,
    pub proposal: Proposal<S>,
}

/// Alternates proposal updates (partial soft VI on the current reward) with
/// importance-sampled reward steps, starting from `theta = 0`.
pub fn gcl_fit<S: Scalar>(
    mdp: &TabularMdp<S>,
    demos: &DemonstrationSet<S>,
    model: &RewardModel<S>,
    cfg: &GclConfig,
) -> Result<GclResult<S>> {
    cfg.validate()?;
    if demos.is_empty() {
        return Err(Error::EmptyDemonstrations);
    }
    let demo_grad = demos.grad_expectations(mdp, model)?;
    let expert = match (cfg.expert_mixture > 0.0, demos) {
        (false, _) => None,
        (true, DemonstrationSet::ExactPolicy(p)) => Some(p.clone()),
        (true, DemonstrationSet::Trajectories(t)) => {
            Some(empirical_policy(mdp.n_states(), mdp.n_actions(), t, S::lit(1e-3))?)
        }
    };
    let make_proposal = |policy: Policy<S>| -> Result<Proposal<S>> {
        match &expert {
            Some(e) => Proposal::with_mixture(policy, S::lit(cfg.expert_mixture), e.clone()),
            None => Ok(Proposal::new(policy)),
        }
    };
    let mut model = model.with_params(vec![S::zero(); model.n_params()])?;
    let mut planner = PartialSoftPlanner::for_mdp(mdp);
    let mut proposal = make_proposal(planner.policy(mdp, &model)?)?;
    let mut records = Vec::new();
    let mut converged = false;
    let mut failure = None;
    let alpha = S::lit(cfg.lr);
    for k in 0..cfg.outer_iters {
        let previous = (planner.clone(), proposal.clone());
        planner.sweep(mdp, &model, cfg.rl_steps_per_iter);
        proposal = make_proposal(planner.policy(mdp, &model)?)?;
        let est = match cfg.mode {
            GclMode::Exact => IsSamples::enumerate(mdp, &model, &proposal),
            GclMode::Sampled => {
                IsSamples::sample(mdp, &model, &proposal, cfg.n_samples, cfg.seed.wrapping_add(k as u64))
            }
        }
        .and_then(|s| s.estimate(&demo_grad));
        let ll = match log_likelihood(mdp, &model, demos) {
            Ok(ll) => ll.as_f64(),
            Err(Error::Numerical(m) | Error::InvalidDistribution(m)) => {
                failure = Some(format!("iteration {k}: {m}"));
                break;
            }
            Err(e) => return Err(e),
        };
        let est = match est {
            Ok(e) => e,
            Err(e @ (Error::DegenerateEstimate(_) | Error::InvalidSupport(_))) => {
                (planner, proposal) = previous;
                records.push(TraceRecord {
                    iteration: k,
                    theta: to_f64(model.params()),
                    grad_norm: f64::NAN,
                    log_likelihood: ll,
                    gap_norm: f64::NAN,
                    step_size: 0.0,
                    ess: None,
                    note: Some(format!("degenerate: {e}")),
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        let gn = inf_norm(&est.gradient);
        if !gn.is_finite() {
            failure = Some(format!("non-finite gradient at iteration {k}"));
            break;
        }
        let mut record = TraceRecord {
            iteration: k,
            theta: to_f64(model.params()),
            grad_norm: gn.as_f64(),
            log_likelihood: ll,
            gap_norm: l2_norm(&est.gradient).as_f64(),
            step_size: 0.0,
            ess: Some(est.effective_sample_size),
            note: None,
        };
        if gn.as_f64() <= cfg.stop_grad_norm {
            converged = true;
            records.push(record);
            break;
        }
        let next: Vec<S> = model
            .params()
            .iter()
            .zip(&est.gradient)
            .map(|(&t, &g)| t - alpha * g)
            .collect();
        model = model.with_params(next)?;
        record.step_size = cfg.lr;
        records.push(record);
    }
    let policy = match planner.policy(mdp, &model) {
        Err(_) if failure.is_some() => proposal.policy.clone(),
        p => p?,
    };
    Ok(GclResult {
        fit: FitResult {
            model,
            policy,
            trace: FitTrace {
                records,
                converged,
                failure,
            },
        },
        proposal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_random_mdp, RandomMdpConfig};
    use crate::features::{FeatureMap, TabularShape};
    use crate::mce::{dual_gradient, mce_irl_fit, FitConfig, LearningRate};
    use crate::mdp::Horizon;
    use crate::me::me_density_table;
    use crate::soft_vi::plan;

    fn det_env(seed: u64) -> crate::envs::EnvBundle<f64> {
        make_random_mdp(&RandomMdpConfig {
            seed,
            deterministic: true,
            gamma: 1.0,
            horizon: Horizon::Finite(3),
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn zero_reward_uniform_proposal_weight_is_eight() {
        let mdp = TabularMdp::<f64>::deterministic(1.0, Horizon::Finite(3), vec![1.0, 0.0], &[vec![0, 1], vec![1, 0]], vec![false; 2])
            .unwrap();
        let m = RewardModel::zeros(TabularShape::State, 2, 2);
        let prop = Proposal::new(Policy::uniform(2, 2));
        for (tr, _) in enumerate_trajectories(&mdp, 3).unwrap() {
            assert!((importance_weight(&mdp, &m, &prop, &tr).unwrap() - 8.0).abs() < 1e-12);
        }
    }

    #[test]
    fn soft_optimal_proposal_gives_constant_weight_z() {
        let env = det_env(1);
        let m = RewardModel::linear(vec![0.5, -1.0, 0.8], env.features.clone()).unwrap();
        let (values, pi) = plan(&env.mdp, &m).unwrap();
        let z = values.v[0][0].exp();
        let prop = Proposal::new(pi);
        for (tr, _) in enumerate_trajectories(&env.mdp, 3).unwrap() {
            let w = importance_weight(&env.mdp, &m, &prop, &tr).unwrap();
            assert!((w / z - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn self_normalized_enumeration_reproduces_me_density() {
        let env = det_env(2);
        let m = RewardModel::linear(vec![-0.4, 1.3, 0.1], env.features.clone()).unwrap();
        let s = IsSamples::enumerate(&env.mdp, &m, &Proposal::new(Policy::uniform(4, 2))).unwrap();
        let lw: Vec<f64> = s.log_weights.iter().zip(&s.mass).map(|(l, m)| l + m.ln()).collect();
        let z = crate::scalar::log_sum_exp(&lw);
        let table = me_density_table(&env.mdp, &m).unwrap();
        for (l, d) in lw.iter().zip(&table.log_density) {
            assert!(((l - z).exp() - d.exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_is_gradient_equals_dual_gradient() {
        for seed in 0..3 {
            let env = det_env(seed);
            let m = RewardModel::linear(vec![0.3, 0.6, -0.9], env.features.clone()).unwrap();
            let demos = DemonstrationSet::ExactPolicy(Policy::uniform(4, 2));
            let demo_grad = demos.grad_expectations(&env.mdp, &m).unwrap();
            let exact = dual_gradient(&env.mdp, &m, &demo_grad).unwrap();
            let (_, pi) = plan(&env.mdp, &m).unwrap();
            for prop in [Proposal::new(pi.clone()), Proposal::new(Policy::uniform(4, 2))] {
                let est = is_gradient_exact(&env.mdp, &m, &prop, &demos).unwrap();
                for (a, b) in est.gradient.iter().zip(&exact) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
            let matched = DemonstrationSet::ExactPolicy(pi.clone());
            let est = is_gradient_exact(&env.mdp, &m, &Proposal::new(pi), &matched).unwrap();
            assert!(inf_norm(&est.gradient) < 1e-12);
        }
    }

    #[test]
    fn effective_sample_size_falls_as_proposal_drifts() {
        let env = det_env(4);
        let m = RewardModel::linear(vec![1.5, -1.0, 2.0], env.features.clone()).unwrap();
        let (_, pi) = plan(&env.mdp, &m).unwrap();
        let demos = DemonstrationSet::ExactPolicy(pi.clone());
        let other = Policy::deterministic(2, &[0, 1, 1, 0]).unwrap();
        let mut last = f64::INFINITY;
        for i in 0..10 {
            let beta = i as f64 / 10.0;
            let prop = Proposal::with_mixture(pi.clone(), beta, other.clone()).unwrap();
            let ess = is_gradient_exact(&env.mdp, &m, &prop, &demos).unwrap().effective_sample_size;
            assert!(ess <= last + 1e-9, "beta {beta}: {ess} > {last}");
            last = ess;
        }
    }

    #[test]
    fn expert_mixture_covers_demonstrations() {
        let env = det_env(5);
        let m = RewardModel::linear(vec![0.0; 3], env.features.clone()).unwrap();
        let demos = sample_trajectories(&env.mdp, &Policy::deterministic(2, &[1, 0, 1, 1]).unwrap(), 10, 3).unwrap();
        let narrow = Policy::deterministic(2, &[0, 1, 0, 0]).unwrap();
        let expert = empirical_policy(4, 2, &demos, 0.0).unwrap();
        assert!(importance_weight(&env.mdp, &m, &Proposal::new(narrow.clone()), &demos[0]).is_err());
        let prop = Proposal::with_mixture(narrow, 0.2, expert).unwrap();
        for d in &demos {
            assert!(importance_weight(&env.mdp, &m, &prop, d).unwrap().is_finite());
        }
        assert!(Proposal::with_mixture(Policy::<f64>::uniform(4, 2), 1.5, Policy::uniform(4, 2)).is_err());
    }

    #[test]
    fn sampled_estimate_is_within_bootstrap_error() {
        let env = det_env(6);
        let m = RewardModel::linear(vec![0.2, -0.5, 0.7], env.features.clone()).unwrap();
        let demos = DemonstrationSet::ExactPolicy(Policy::uniform(4, 2));
        let demo_grad = demos.grad_expectations(&env.mdp, &m).unwrap();
        let exact = dual_gradient(&env.mdp, &m, &demo_grad).unwrap();
        let samples = IsSamples::sample(&env.mdp, &m, &Proposal::new(Policy::uniform(4, 2)), 4000, 1).unwrap();
        let est = samples.estimate(&demo_grad).unwrap();
        let se = samples.bootstrap_standard_error(&demo_grad, 100, 2).unwrap();
        for k in 0..3 {
            assert!((est.gradient[k] - exact[k]).abs() <= 3.0 * se[k] + 1e-12);
        }
        assert!(est.effective_sample_size > 0.0 && est.effective_sample_size <= 4000.0);
        assert!(matches!(
            IsSamples::sample(&env.mdp, &m, &Proposal::new(Policy::uniform(4, 2)), 1, 0),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn exact_mode_with_full_planning_tracks_mce() {
        let env = det_env(7);
        let truth = RewardModel::linear(vec![1.0, 0.5, -1.0], env.features.clone()).unwrap();
        let (_, expert) = plan(&env.mdp, &truth).unwrap();
        let demos = DemonstrationSet::ExactPolicy(expert);
        let iters = 30;
        let gcl = gcl_fit(
            &env.mdp,
            &demos,
            &truth,
            &GclConfig {
                outer_iters: iters,
                rl_steps_per_iter: 3,
                mode: GclMode::Exact,
                lr: 0.2,
                ..Default::default()
            },
        )
        .unwrap();
        let mce = mce_irl_fit(
            &env.mdp,
            &demos,
            &truth,
            &FitConfig {
                learning_rate: LearningRate::Constant(0.2),
                max_iters: iters,
                ..Default::default()
            },
        )
        .unwrap();
        for (a, b) in gcl.fit.trace.records.iter().zip(&mce.trace.records) {
            for (x, y) in a.theta.iter().zip(&b.theta) {
                assert!((x - y).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn zero_features_keep_theta_at_zero() {
        let env = det_env(8);
        let m = RewardModel::linear(vec![0.0], FeatureMap::new(4, 2, 1, vec![0.0; 8]).unwrap()).unwrap();
        let demos = DemonstrationSet::Trajectories(sample_trajectories(&env.mdp, &Policy::uniform(4, 2), 5, 0).unwrap());
        let out = gcl_fit(&env.mdp, &demos, &m, &GclConfig { outer_iters: 5, n_samples: 50, ..Default::default() }).unwrap();
        assert_eq!(out.fit.theta(), &[0.0]);
    }
}
