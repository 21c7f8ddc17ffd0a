//! Trajectory likelihoods, seeded sampling and exhaustive enumeration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::{Horizon, Policy, TabularMdp, Trajectory};
use crate::scalar::Scalar;

/// Default step cap for infinite-horizon rollouts.
pub const DEFAULT_TRUNCATION_CAP: usize = 1000;

/// Default limit on `|S|^(T+1) |A|^T` for [`enumerate_trajectories`].
pub const DEFAULT_ENUMERATION_CAP: f64 = 1e7;

fn weighted_log_likelihood<S: Scalar>(
    mdp: &TabularMdp<S>,
    policy: &Policy<S>,
    traj: &Trajectory,
    gamma: S,
) -> Result<S> {
    traj.validate(mdp)?;
    policy.check_shape(mdp)?;
    let mut total = mdp.initial()[traj.states[0]].ln();
    let mut disc = S::one();
    for (t, (s, a, s2)) in traj.steps().enumerate() {
        total = total + mdp.p(s, a, s2).ln();
        if disc != S::zero() {
            total = total + disc * policy.prob(t, s, a).ln();
        }
        disc = disc * gamma;
    }
    Ok(total)
}

/// `log I(s_0) + sum_t [log P(s_{t+1}|s_t,a_t) + log pi_t(a_t|s_t)]`; `-inf` if any factor is 0.
pub fn trajectory_log_prob<S: Scalar>(
    mdp: &TabularMdp<S>,
    policy: &Policy<S>,
    traj: &Trajectory,
) -> Result<S> {
    weighted_log_likelihood(mdp, policy, traj, S::one())
}

/// Log discounted likelihood: the policy factor at step `t` is raised to `gamma^t`.
pub fn discounted_log_likelihood<S: Scalar>(
    mdp: &TabularMdp<S>,
    policy: &Policy<S>,
    traj: &Trajectory,
) -> Result<S> {
    weighted_log_likelihood(mdp, policy, traj, mdp.gamma())
}

/// `log I(s_0) + sum_t log P(s_{t+1}|s_t,a_t)`, the policy-independent part.
pub fn dynamics_log_prob<S: Scalar>(mdp: &TabularMdp<S>, traj: &Trajectory) -> Result<S> {
    traj.validate(mdp)?;
    Ok(traj
        .steps()
        .fold(mdp.initial()[traj.states[0]].ln(), |acc, (s, a, s2)| {
            acc + mdp.p(s, a, s2).ln()
        }))
}

/// Discounted return `sum_t gamma^t r(s_t, a_t, s_{t+1})`.
pub fn discounted_return<S: Scalar>(
    traj: &Trajectory,
    reward: &crate::features::RewardModel<S>,
    gamma: S,
) -> S {
    let mut disc = S::one();
    let mut total = S::zero();
    for (s, a, s2) in traj.steps() {
        total = total + disc * reward.value(s, a, s2);
        disc = disc * gamma;
    }
    total
}

fn sample_index<S: Scalar, R: Rng>(rng: &mut R, probs: impl Iterator<Item = (usize, S)>) -> usize {
    let u = S::lit(rng.gen::<f64>());
    let mut acc = S::zero();
    let mut last = 0;
    for (i, p) in probs {
        if p <= S::zero() {
            continue;
        }
        acc = acc + p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Seeded rollouts with the default infinite-horizon cap.
pub fn sample_trajectories<S: Scalar>(
    mdp: &TabularMdp<S>,
    policy: &Policy<S>,
    count: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    sample_trajectories_with(mdp, policy, count, seed, Some(DEFAULT_TRUNCATION_CAP))
}

/// Seeded rollouts.
///
/// Finite horizons produce length-`T` trajectories. Infinite horizons stop on
/// entering an absorbing state or after `truncation_cap` steps; the truncation
/// biases a return by at most `gamma^cap * r_max / (1 - gamma)`.
pub fn sample_trajectories_with<S: Scalar>(
    mdp: &TabularMdp<S>,
    policy: &Policy<S>,
    count: usize,
    seed: u64,
    truncation_cap: Option<usize>,
) -> Result<Vec<Trajectory>> {
    if count == 0 {
        return Err(Error::InvalidConfig("sample count must be at least 1".into()));
    }
    policy.check_shape(mdp)?;
    let (limit, stop_on_absorb) = match mdp.horizon() {
        Horizon::Finite(t) => (t, false),
        Horizon::Infinite => match truncation_cap {
            Some(cap) => (cap, true),
            None if mdp.has_absorbing_states() => (usize::MAX, true),
            None => {
                return Err(Error::Unsupported(
                    "infinite-horizon sampling without absorbing states needs a truncation cap"
                        .into(),
                ))
            }
        },
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_a = mdp.n_actions();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut s = sample_index(&mut rng, mdp.initial().iter().copied().enumerate());
        let mut states = vec![s];
        let mut actions = Vec::new();
        let mut t = 0;
        while t < limit && !(stop_on_absorb && mdp.is_terminal(s)) {
            let a = sample_index(&mut rng, policy.row(t, s).iter().copied().enumerate());
            debug_assert!(a < n_a);
            s = sample_index(&mut rng, mdp.successors(s, a).iter().copied());
            actions.push(a);
            states.push(s);
            t += 1;
        }
        out.push(Trajectory { states, actions });
    }
    Ok(out)
}

/// All trajectories of exactly `horizon` steps with nonzero dynamics probability,
/// paired with `I(s_0) prod_t P(s_{t+1}|s_t,a_t)`.
pub fn enumerate_trajectories<S: Scalar>(
    mdp: &TabularMdp<S>,
    horizon: usize,
) -> Result<Vec<(Trajectory, S)>> {
    enumerate_trajectories_with(mdp, horizon, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_trajectories_with<S: Scalar>(
    mdp: &TabularMdp<S>,
    horizon: usize,
    cap: f64,
) -> Result<Vec<(Trajectory, S)>> {
    let n_s = mdp.n_states() as f64;
    let n_a = mdp.n_actions() as f64;
    let estimate = n_s.powi(horizon as i32 + 1) * n_a.powi(horizon as i32);
    if estimate > cap {
        return Err(Error::EnumerationCap { estimate, cap });
    }
    let mut out = Vec::new();
    let mut states = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon);
    for (s0, &p0) in mdp.initial().iter().enumerate() {
        if p0 > S::zero() {
            states.push(s0);
            extend(mdp, horizon, p0, &mut states, &mut actions, &mut out);
            states.pop();
        }
    }
    Ok(out)
}

fn extend<S: Scalar>(
    mdp: &TabularMdp<S>,
    horizon: usize,
    prob: S,
    states: &mut Vec<usize>,
    actions: &mut Vec<usize>,
    out: &mut Vec<(Trajectory, S)>,
) {
    if actions.len() == horizon {
        out.push((
            Trajectory {
                states: states.clone(),
                actions: actions.clone(),
            },
            prob,
        ));
        return;
    }
    let s = *states.last().unwrap();
    for a in 0..mdp.n_actions() {
        for &(s2, p) in mdp.successors(s, a) {
            actions.push(a);
            states.push(s2);
            extend(mdp, horizon, prob * p, states, actions, out);
            states.pop();
            actions.pop();
        }
    }
}
