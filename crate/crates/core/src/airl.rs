//! Tabular adversarial IRL.
//!
//! The discriminator `D = exp f / (exp f + pi)` is trained by cross-entropy on
//! undiscounted visit counts; the generator is a stationary soft-optimal policy for
//! reward `f`, advanced a few soft backups per round.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::{DemonstrationSet, RewardModel, TabularShape};
use crate::mdp::{Policy, TabularMdp, Trajectory};
use crate::occupancy::{compute_occupancy, undiscounted_visits};
use crate::scalar::{log_add_exp, xlogx, Scalar};
use crate::soft_vi::{soft_advantage, soft_vi_infinite, PartialSoftPlanner, SoftViOptions};

/// Tolerance and step cap for rolling visit counts forward to absorption.
pub const VISIT_TOL: f64 = 1e-12;
pub const VISIT_MAX_STEPS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscriminatorForm {
    Free,
    Decomposed,
}

/// `f(s, a)` as a free table, or `f(s, a, s') = g(s) + gamma h(s') - h(s)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum AirlDiscriminator<S> {
    Free {
        n_states: usize,
        n_actions: usize,
        f: Vec<S>,
    },
    Decomposed {
        n_states: usize,
        n_actions: usize,
        g: Vec<S>,
        h: Vec<S>,
        gamma: S,
    },
}

impl<S: Scalar> AirlDiscriminator<S> {
    pub fn zeros(form: DiscriminatorForm, n_states: usize, n_actions: usize, gamma: S) -> Self {
        match form {
            DiscriminatorForm::Free => Self::Free {
                n_states,
                n_actions,
                f: vec![S::zero(); n_states * n_actions],
            },
            DiscriminatorForm::Decomposed => Self::Decomposed {
                n_states,
                n_actions,
                g: vec![S::zero(); n_states],
                h: vec![S::zero(); n_states],
                gamma,
            },
        }
    }

    pub fn free(n_states: usize, n_actions: usize, f: Vec<S>) -> Result<Self> {
        if f.len() != n_states * n_actions {
            return Err(Error::Dimension(format!("f table needs {} entries", n_states * n_actions)));
        }
        Self::Free {
            n_states,
            n_actions,
            f,
        }
        .checked()
    }

    pub fn decomposed(n_actions: usize, g: Vec<S>, h: Vec<S>, gamma: S) -> Result<Self> {
        if g.len() != h.len() {
            return Err(Error::Dimension("g and h must have one entry per state".into()));
        }
        Self::Decomposed {
            n_states: g.len(),
            n_actions,
            g,
            h,
            gamma,
        }
        .checked()
    }

    fn checked(self) -> Result<Self> {
        if self.params().iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("discriminator entries must be finite".into()));
        }
        Ok(self)
    }

    pub fn form(&self) -> DiscriminatorForm {
        match self {
            Self::Free { .. } => DiscriminatorForm::Free,
            Self::Decomposed { .. } => DiscriminatorForm::Decomposed,
        }
    }

    pub fn n_states(&self) -> usize {
        match self {
            Self::Free { n_states, .. } | Self::Decomposed { n_states, .. } => *n_states,
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            Self::Free { n_actions, .. } | Self::Decomposed { n_actions, .. } => *n_actions,
        }
    }

    /// Free: `f`. Decomposed: `g` followed by `h`.
    pub fn params(&self) -> Vec<S> {
        match self {
            Self::Free { f, .. } => f.clone(),
            Self::Decomposed { g, h, .. } => g.iter().chain(h).copied().collect(),
        }
    }

    pub fn with_params(&self, p: &[S]) -> Result<Self> {
        let mut out = self.clone();
        match &mut out {
            Self::Free { f, .. } => {
                if p.len() != f.len() {
                    return Err(Error::Dimension(format!("expected {} parameters", f.len())));
                }
                f.copy_from_slice(p);
            }
            Self::Decomposed { g, h, .. } => {
                let n = g.len();
                if p.len() != 2 * n {
                    return Err(Error::Dimension(format!("expected {} parameters", 2 * n)));
                }
                g.copy_from_slice(&p[..n]);
                h.copy_from_slice(&p[n..]);
            }
        }
        out.checked()
    }

    #[inline]
    pub fn value(&self, s: usize, a: usize, s2: usize) -> S {
        match self {
            Self::Free { n_actions, f, .. } => f[s * n_actions + a],
            Self::Decomposed { g, h, gamma, .. } => g[s] + *gamma * h[s2] - h[s],
        }
    }

    fn add_gradient(&self, s: usize, a: usize, s2: usize, w: S, out: &mut [S]) {
        match self {
            Self::Free { n_actions, .. } => out[s * n_actions + a] = out[s * n_actions + a] + w,
            Self::Decomposed { n_states, gamma, .. } => {
                out[s] = out[s] + w;
                out[n_states + s2] = out[n_states + s2] + *gamma * w;
                out[n_states + s] = out[n_states + s] - w;
            }
        }
    }

    /// `f` as a reward model, for planning the generator.
    pub fn to_reward_model(&self) -> RewardModel<S> {
        let (n_s, n_a) = (self.n_states(), self.n_actions());
        match self {
            Self::Free { f, .. } => RewardModel::Tabular {
                shape: TabularShape::StateAction,
                n_states: n_s,
                n_actions: n_a,
                params: f.clone(),
            },
            Self::Decomposed { .. } => {
                let mut params = Vec::with_capacity(n_s * n_a * n_s);
                for s in 0..n_s {
                    for a in 0..n_a {
                        params.extend((0..n_s).map(|s2| self.value(s, a, s2)));
                    }
                }
                RewardModel::Tabular {
                    shape: TabularShape::Transition,
                    n_states: n_s,
                    n_actions: n_a,
                    params,
                }
            }
        }
    }

    fn check_shape(&self, mdp: &TabularMdp<S>) -> Result<()> {
        if (self.n_states(), self.n_actions()) != (mdp.n_states(), mdp.n_actions()) {
            return Err(Error::Dimension("discriminator and MDP shapes differ".into()));
        }
        Ok(())
    }
}

/// `(log D, log(1 - D))` for `f` and `log pi`.
#[inline]
pub fn log_discriminator<S: Scalar>(f: S, log_pi: S) -> (S, S) {
    let z = log_add_exp(f, log_pi);
    (f - z, log_pi - z)
}

pub fn discriminator_prob<S: Scalar>(
    disc: &AirlDiscriminator<S>,
    generator: &Policy<S>,
    s: usize,
    a: usize,
    s2: usize,
) -> S {
    log_discriminator(disc.value(s, a, s2), generator.prob(0, s, a).ln()).0.exp()
}

/// `log D - log(1 - D)`, which is `f - log pi`.
pub fn generator_reward<S: Scalar>(
    disc: &AirlDiscriminator<S>,
    generator: &Policy<S>,
    s: usize,
    a: usize,
    s2: usize,
) -> S {
    let (ld, l1d) = log_discriminator(disc.value(s, a, s2), generator.prob(0, s, a).ln());
    ld - l1d
}

/// Mean visit counts per `(s, a)` over non-absorbing states.
pub fn trajectory_visits<S: Scalar>(mdp: &TabularMdp<S>, trajs: &[Trajectory]) -> Result<Vec<S>> {
    if trajs.is_empty() {
        return Err(Error::EmptyDemonstrations);
    }
    let n_a = mdp.n_actions();
    let mut out = vec![S::zero(); mdp.n_states() * n_a];
    for tr in trajs {
        tr.validate(mdp)?;
        for (s, a, _) in tr.steps() {
            if !mdp.is_terminal(s) {
                out[s * n_a + a] = out[s * n_a + a] + S::one();
            }
        }
    }
    let n = S::from_usize(trajs.len()).unwrap();
    Ok(out.into_iter().map(|x| x / n).collect())
}

/// Expected undiscounted visits of the demonstrator.
pub fn demo_visits<S: Scalar>(mdp: &TabularMdp<S>, demos: &DemonstrationSet<S>) -> Result<Vec<S>> {
    match demos {
        DemonstrationSet::Trajectories(t) => trajectory_visits(mdp, t),
        DemonstrationSet::ExactPolicy(p) => undiscounted_visits(mdp, p, VISIT_TOL, VISIT_MAX_STEPS),
    }
}

/// `L = -E_pi[sum log(1 - D)] - E_D[sum log D]` and its gradient in the
/// discriminator parameters. Visits are `[s][a]` tables.
pub fn discriminator_loss_and_grad<S: Scalar>(
    mdp: &TabularMdp<S>,
    disc: &AirlDiscriminator<S>,
    generator: &Policy<S>,
    demo_visits: &[S],
    gen_visits: &[S],
) -> Result<(S, Vec<S>)> {
    disc.check_shape(mdp)?;
    generator.check_shape(mdp)?;
    let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
    if demo_visits.len() != n_s * n_a || gen_visits.len() != n_s * n_a {
        return Err(Error::Dimension("visit tables must be [s][a]".into()));
    }
    let mut loss = S::zero();
    let mut grad = vec![S::zero(); disc.params().len()];
    for s in 0..n_s {
        for a in 0..n_a {
            let (nd, ng) = (demo_visits[s * n_a + a], gen_visits[s * n_a + a]);
            if nd == S::zero() && ng == S::zero() {
                continue;
            }
            let log_pi = generator.prob(0, s, a).ln();
            for &(s2, p) in mdp.successors(s, a) {
                let (ld, l1d) = log_discriminator(disc.value(s, a, s2), log_pi);
                if nd != S::zero() {
                    loss = loss - nd * p * ld;
                }
                if ng != S::zero() {
                    loss = loss - ng * p * l1d;
                }
                let d = ld.exp();
                disc.add_gradient(s, a, s2, p * (ng * d - nd * (S::one() - d)), &mut grad);
            }
        }
    }
    Ok((loss, grad))
}

/// Stationary soft advantage of `reward` at the MDP's discount.
pub fn stationary_soft_advantage<S: Scalar>(mdp: &TabularMdp<S>, reward: &RewardModel<S>) -> Result<Vec<S>> {
    let o = SoftViOptions::<S>::default();
    let (values, _) = soft_vi_infinite(mdp, reward, o.tol, o.max_iter)?;
    Ok(soft_advantage(&values).swap_remove(0))
}

/// `max |A_f - f|` for `f = A_r`, stationary soft advantages at the MDP's discount.
pub fn verify_advantage_fixed_point<S: Scalar>(mdp: &TabularMdp<S>, reward: &RewardModel<S>) -> Result<S> {
    let f = stationary_soft_advantage(mdp, reward)?;
    let f_model = RewardModel::tabular(TabularShape::StateAction, mdp.n_states(), mdp.n_actions(), f.clone())?;
    let af = stationary_soft_advantage(mdp, &f_model)?;
    Ok(af
        .iter()
        .zip(&f)
        .fold(S::zero(), |m, (&x, &y)| m.max((x - y).abs())))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AirlConfig {
    pub outer_iters: usize,
    pub disc_lr: f64,
    /// Discriminator gradient steps per round.
    pub disc_steps: usize,
    /// Soft backup sweeps applied to the generator per round.
    pub gen_soft_vi_sweeps: usize,
    pub seed: u64,
    pub form: DiscriminatorForm,
}

impl Default for AirlConfig {
    fn default() -> Self {
        Self {
            outer_iters: 2000,
            disc_lr: 0.05,
            disc_steps: 1,
            gen_soft_vi_sweeps: 5,
            seed: 0,
            form: DiscriminatorForm::Free,
        }
    }
}

impl AirlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.disc_lr > 0.0 && self.disc_lr.is_finite()) {
            return Err(Error::InvalidConfig("disc_lr must be positive".into()));
        }
        if self.disc_steps == 0 {
            return Err(Error::InvalidConfig("disc_steps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AirlTraceRecord {
    pub iteration: usize,
    pub loss: f64,
    pub disc_grad_norm: f64,
    /// `E_pi[sum gamma^t (f - log pi)]` under the generator.
    pub generator_soft_return: f64,
    /// Visit-weighted mean of `D` on demonstrator and generator pairs.
    pub mean_d_demo: f64,
    pub mean_d_gen: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AirlState<S> {
    pub discriminator: AirlDiscriminator<S>,
    pub generator: Policy<S>,
    pub trace: Vec<AirlTraceRecord>,
    /// Set when the loss became non-finite and the loop stopped early.
    pub diverged: bool,
}

fn mean_d<S: Scalar>(mdp: &TabularMdp<S>, disc: &AirlDiscriminator<S>, gen: &Policy<S>, visits: &[S]) -> f64 {
    let n_a = mdp.n_actions();
    let (mut num, mut den) = (S::zero(), S::zero());
    for (i, &v) in visits.iter().enumerate() {
        if v == S::zero() {
            continue;
        }
        let (s, a) = (i / n_a, i % n_a);
        for &(s2, p) in mdp.successors(s, a) {
            num = num + v * p * discriminator_prob(disc, gen, s, a, s2);
        }
        den = den + v;
    }
    (num / den).as_f64()
}

fn generator_soft_return<S: Scalar>(mdp: &TabularMdp<S>, disc: &AirlDiscriminator<S>, gen: &Policy<S>) -> Result<f64> {
    let occ = compute_occupancy(mdp, gen)?;
    let sa = occ.total_state_action();
    let n_a = mdp.n_actions();
    let mut total = S::zero();
    for (i, &w) in sa.iter().enumerate() {
        if w == S::zero() {
            continue;
        }
        let (s, a) = (i / n_a, i % n_a);
        let pi = gen.prob(0, s, a);
        let f = mdp.expect_next(s, a, |s2| disc.value(s, a, s2));
        total = total + w * f - w * xlogx(pi) / pi;
    }
    Ok(total.as_f64())
}

/// AIRL from `f = 0` and a uniform generator.
pub fn airl_fit<S: Scalar>(mdp: &TabularMdp<S>, demos: &DemonstrationSet<S>, cfg: &AirlConfig) -> Result<AirlState<S>> {
    let disc = AirlDiscriminator::zeros(cfg.form, mdp.n_states(), mdp.n_actions(), mdp.gamma());
    airl_fit_from(mdp, demos, cfg, disc, PartialSoftPlanner::stationary(mdp.n_states()))
}

/// AIRL from a given discriminator and generator value table.
///
/// Each round applies `gen_soft_vi_sweeps` soft backups against reward `f`, takes the
/// softmax generator, then `disc_steps` gradient steps on the discriminator loss.
pub fn airl_fit_from<S: Scalar>(
    mdp: &TabularMdp<S>,
    demos: &DemonstrationSet<S>,
    cfg: &AirlConfig,
    mut disc: AirlDiscriminator<S>,
    mut planner: PartialSoftPlanner<S>,
) -> Result<AirlState<S>> {
    cfg.validate()?;
    if !mdp.is_deterministic() {
        return Err(Error::Unsupported("AIRL is implemented for deterministic MDPs".into()));
    }
    if planner.mode() != crate::soft_vi::SoftMode::Stationary {
        return Err(Error::InvalidConfig("the AIRL generator is stationary".into()));
    }
    disc.check_shape(mdp)?;
    let demo_v = demo_visits(mdp, demos)?;
    let lr = S::lit(cfg.disc_lr);
    let mut trace = Vec::with_capacity(cfg.outer_iters);
    let mut generator = planner.policy(mdp, &disc.to_reward_model())?;
    let mut diverged = false;
    for k in 0..cfg.outer_iters {
        let reward = disc.to_reward_model();
        planner.sweep(mdp, &reward, cfg.gen_soft_vi_sweeps);
        generator = planner.policy(mdp, &reward)?;
        let gen_v = undiscounted_visits(mdp, &generator, VISIT_TOL, VISIT_MAX_STEPS)?;
        let mut record = None;
        for _ in 0..cfg.disc_steps {
            let (loss, grad) = discriminator_loss_and_grad(mdp, &disc, &generator, &demo_v, &gen_v)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                diverged = true;
                break;
            }
            if record.is_none() {
                record = Some(AirlTraceRecord {
                    iteration: k,
                    loss: loss.as_f64(),
                    disc_grad_norm: crate::mce::inf_norm(&grad).as_f64(),
                    generator_soft_return: generator_soft_return(mdp, &disc, &generator)?,
                    mean_d_demo: mean_d(mdp, &disc, &generator, &demo_v),
                    mean_d_gen: mean_d(mdp, &disc, &generator, &gen_v),
                });
            }
            let p: Vec<S> = disc.params().iter().zip(&grad).map(|(&x, &g)| x - lr * g).collect();
            disc = match disc.with_params(&p) {
                Ok(d) => d,
                Err(_) => {
                    diverged = true;
                    break;
                }
            };
        }
        trace.extend(record);
        if diverged {
            break;
        }
    }
    Ok(AirlState {
        discriminator: disc,
        generator,
        trace,
        diverged,
    })
}
