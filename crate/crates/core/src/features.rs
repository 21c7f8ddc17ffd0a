//! Feature maps, parameterised rewards, demonstrations and feature expectations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Policy, TabularMdp, Trajectory};
use crate::occupancy::{compute_occupancy, OccupancyMeasure};
use crate::scalar::Scalar;

/// Dense feature table `phi[s][a] in R^dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap<S> {
    n_states: usize,
    n_actions: usize,
    dim: usize,
    table: Vec<S>,
}

impl<S: Scalar> FeatureMap<S> {
    /// `table` is laid out `[s][a][k]`.
    pub fn new(n_states: usize, n_actions: usize, dim: usize, table: Vec<S>) -> Result<Self> {
        if table.len() != n_states * n_actions * dim {
            return Err(Error::Dimension(format!(
                "feature table has {} entries, expected {n_states}*{n_actions}*{dim}",
                table.len()
            )));
        }
        if let Some(i) = table.iter().position(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!("feature entry {i} is not finite")));
        }
        Ok(Self {
            n_states,
            n_actions,
            dim,
            table,
        })
    }

    /// Indicator of the state: `dim = n_states`.
    pub fn one_hot_state(n_states: usize, n_actions: usize) -> Self {
        let mut table = vec![S::zero(); n_states * n_actions * n_states];
        for s in 0..n_states {
            for a in 0..n_actions {
                table[(s * n_actions + a) * n_states + s] = S::one();
            }
        }
        Self {
            n_states,
            n_actions,
            dim: n_states,
            table,
        }
    }

    /// Indicator of the state-action pair: `dim = n_states * n_actions`.
    pub fn one_hot_state_action(n_states: usize, n_actions: usize) -> Self {
        let dim = n_states * n_actions;
        let mut table = vec![S::zero(); dim * dim];
        for sa in 0..dim {
            table[sa * dim + sa] = S::one();
        }
        Self {
            n_states,
            n_actions,
            dim,
            table,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn table(&self) -> &[S] {
        &self.table
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> &[S] {
        let start = (s * self.n_actions + a) * self.dim;
        &self.table[start..start + self.dim]
    }
}

/// Which arguments a tabular reward depends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TabularShape {
    /// `r(s)`.
    State,
    /// `r(s, a)`.
    StateAction,
    /// `r(s, a, s')`.
    Transition,
}

/// Parameterised reward `r_theta(s, a, s')`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RewardModel<S> {
    /// `theta^T phi(s, a)`, constant in `s'`.
    Linear { theta: Vec<S>, features: FeatureMap<S> },
    /// One free parameter per state, state-action pair, or transition.
    Tabular {
        shape: TabularShape,
        n_states: usize,
        n_actions: usize,
        params: Vec<S>,
    },
}

impl<S: Scalar> RewardModel<S> {
    pub fn linear(theta: Vec<S>, features: FeatureMap<S>) -> Result<Self> {
        if theta.len() != features.dim() {
            return Err(Error::Dimension(format!(
                "theta has {} entries, features have dimension {}",
                theta.len(),
                features.dim()
            )));
        }
        Ok(RewardModel::Linear { theta, features })
    }

    pub fn tabular(
        shape: TabularShape,
        n_states: usize,
        n_actions: usize,
        params: Vec<S>,
    ) -> Result<Self> {
        let expected = Self::tabular_len(shape, n_states, n_actions);
        if params.len() != expected {
            return Err(Error::Dimension(format!(
                "{shape:?} reward needs {expected} parameters, got {}",
                params.len()
            )));
        }
        Ok(RewardModel::Tabular {
            shape,
            n_states,
            n_actions,
            params,
        })
    }

    pub fn zeros(shape: TabularShape, n_states: usize, n_actions: usize) -> Self {
        RewardModel::Tabular {
            shape,
            n_states,
            n_actions,
            params: vec![S::zero(); Self::tabular_len(shape, n_states, n_actions)],
        }
    }

    fn tabular_len(shape: TabularShape, n_states: usize, n_actions: usize) -> usize {
        match shape {
            TabularShape::State => n_states,
            TabularShape::StateAction => n_states * n_actions,
            TabularShape::Transition => n_states * n_actions * n_states,
        }
    }

    pub fn n_states(&self) -> usize {
        match self {
            RewardModel::Linear { features, .. } => features.n_states(),
            RewardModel::Tabular { n_states, .. } => *n_states,
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            RewardModel::Linear { features, .. } => features.n_actions(),
            RewardModel::Tabular { n_actions, .. } => *n_actions,
        }
    }

    pub fn params(&self) -> &[S] {
        match self {
            RewardModel::Linear { theta, .. } => theta,
            RewardModel::Tabular { params, .. } => params,
        }
    }

    pub fn n_params(&self) -> usize {
        self.params().len()
    }

    /// Copy of the model with parameters replaced.
    pub fn with_params(&self, new_params: Vec<S>) -> Result<Self> {
        if new_params.len() != self.n_params() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                new_params.len()
            )));
        }
        let mut out = self.clone();
        match &mut out {
            RewardModel::Linear { theta, .. } => *theta = new_params,
            RewardModel::Tabular { params, .. } => *params = new_params,
        }
        Ok(out)
    }

    /// Index of the single parameter a tabular reward reads at `(s, a, s')`.
    #[inline]
    fn tabular_index(shape: TabularShape, n_s: usize, n_a: usize, s: usize, a: usize, s2: usize) -> usize {
        match shape {
            TabularShape::State => s,
            TabularShape::StateAction => s * n_a + a,
            TabularShape::Transition => (s * n_a + a) * n_s + s2,
        }
    }

    /// `r_theta(s, a, s')` without bounds checks beyond slice indexing.
    #[inline]
    pub fn value(&self, s: usize, a: usize, s2: usize) -> S {
        match self {
            RewardModel::Linear { theta, features } => {
                crate::scalar::dot(theta, features.get(s, a))
            }
            RewardModel::Tabular {
                shape,
                n_states,
                n_actions,
                params,
            } => params[Self::tabular_index(*shape, *n_states, *n_actions, s, a, s2)],
        }
    }

    /// Checked variant of [`RewardModel::value`].
    pub fn reward_value(&self, s: usize, a: usize, s2: usize) -> Result<S> {
        self.check_indices(s, a, s2)?;
        Ok(self.value(s, a, s2))
    }

    fn check_indices(&self, s: usize, a: usize, s2: usize) -> Result<()> {
        let (n_s, n_a) = (self.n_states(), self.n_actions());
        for (kind, index, size) in [("state", s, n_s), ("action", a, n_a), ("state", s2, n_s)] {
            if index >= size {
                return Err(Error::IndexOutOfRange { kind, index, size });
            }
        }
        Ok(())
    }

    /// `d r_theta(s, a, s') / d theta`.
    pub fn param_gradient(&self, s: usize, a: usize, s2: usize) -> Result<Vec<S>> {
        self.check_indices(s, a, s2)?;
        let mut g = vec![S::zero(); self.n_params()];
        self.add_gradient(s, a, s2, S::one(), &mut g);
        Ok(g)
    }

    /// `out += weight * d r(s, a, s') / d theta`.
    #[inline]
    pub fn add_gradient(&self, s: usize, a: usize, s2: usize, weight: S, out: &mut [S]) {
        match self {
            RewardModel::Linear { features, .. } => {
                for (o, &f) in out.iter_mut().zip(features.get(s, a)) {
                    *o = *o + weight * f;
                }
            }
            RewardModel::Tabular {
                shape,
                n_states,
                n_actions,
                ..
            } => {
                let i = Self::tabular_index(*shape, *n_states, *n_actions, s, a, s2);
                out[i] = out[i] + weight;
            }
        }
    }

    /// `E_{s' ~ P(.|s,a)} r(s, a, s')`.
    #[inline]
    pub fn expected_value(&self, mdp: &TabularMdp<S>, s: usize, a: usize) -> S {
        match self {
            RewardModel::Linear { .. }
            | RewardModel::Tabular {
                shape: TabularShape::State | TabularShape::StateAction,
                ..
            } => self.value(s, a, s),
            _ => mdp.expect_next(s, a, |s2| self.value(s, a, s2)),
        }
    }

    /// Dense `[s][a][s']` table of the reward.
    pub fn transition_table(&self) -> Vec<S> {
        let (n_s, n_a) = (self.n_states(), self.n_actions());
        let mut out = Vec::with_capacity(n_s * n_a * n_s);
        for s in 0..n_s {
            for a in 0..n_a {
                for s2 in 0..n_s {
                    out.push(self.value(s, a, s2));
                }
            }
        }
        out
    }

    /// Same reward as an `(s, a, s')` tabular model.
    pub fn to_transition_model(&self) -> Self {
        RewardModel::Tabular {
            shape: TabularShape::Transition,
            n_states: self.n_states(),
            n_actions: self.n_actions(),
            params: self.transition_table(),
        }
    }

    pub(crate) fn check_shape(&self, mdp: &TabularMdp<S>) -> Result<()> {
        if self.n_states() != mdp.n_states() || self.n_actions() != mdp.n_actions() {
            return Err(Error::Dimension(format!(
                "reward is defined over {} states / {} actions, MDP has {} / {}",
                self.n_states(),
                self.n_actions(),
                mdp.n_states(),
                mdp.n_actions()
            )));
        }
        Ok(())
    }
}

/// Expert behaviour: sampled trajectories or the exact expert policy.
#[derive(Debug, Clone, PartialEq)]
pub enum DemonstrationSet<S> {
    Trajectories(Vec<Trajectory>),
    ExactPolicy(Policy<S>),
}

impl<S: Scalar> DemonstrationSet<S> {
    pub fn is_empty(&self) -> bool {
        matches!(self, DemonstrationSet::Trajectories(t) if t.is_empty())
    }

    /// `E_D[sum_t gamma^t grad r(s_t, a_t, s_{t+1})]`.
    ///
    /// Sampled trajectories use the MDP's discount; an exact policy delegates to
    /// occupancy weighting.
    pub fn grad_expectations(&self, mdp: &TabularMdp<S>, model: &RewardModel<S>) -> Result<Vec<S>> {
        match self {
            DemonstrationSet::Trajectories(trajs) => {
                trajectory_grad_mean(trajs, model, mdp.gamma())
            }
            DemonstrationSet::ExactPolicy(policy) => {
                let occ = compute_occupancy(mdp, policy)?;
                Ok(occupancy_grad_expectations(mdp, &occ, model))
            }
        }
    }
}

/// Empirical mean of discounted gradient sums over trajectories.
pub(crate) fn trajectory_grad_mean<S: Scalar>(
    trajs: &[Trajectory],
    model: &RewardModel<S>,
    gamma: S,
) -> Result<Vec<S>> {
    if trajs.is_empty() {
        return Err(Error::EmptyDemonstrations);
    }
    let mut acc = vec![S::zero(); model.n_params()];
    for tr in trajs {
        let mut disc = S::one();
        for (s, a, s2) in tr.steps() {
            model.check_indices(s, a, s2)?;
            model.add_gradient(s, a, s2, disc, &mut acc);
            disc = disc * gamma;
        }
    }
    let n = S::from_usize(trajs.len()).unwrap();
    Ok(acc.into_iter().map(|x| x / n).collect())
}

/// `sum_t sum_{s,a,s'} rho_t(s) pi_t(a|s) P(s'|s,a) grad r(s,a,s')`.
pub fn occupancy_grad_expectations<S: Scalar>(
    mdp: &TabularMdp<S>,
    occ: &OccupancyMeasure<S>,
    model: &RewardModel<S>,
) -> Vec<S> {
    let mut out = vec![S::zero(); model.n_params()];
    let sa = occ.total_state_action();
    let n_a = mdp.n_actions();
    for s in 0..mdp.n_states() {
        for a in 0..n_a {
            let w = sa[s * n_a + a];
            if w == S::zero() {
                continue;
            }
            for &(s2, p) in mdp.successors(s, a) {
                model.add_gradient(s, a, s2, w * p, &mut out);
            }
        }
    }
    out
}

/// Expected discounted reward-gradient sum under `policy`.
pub fn policy_grad_expectations<S: Scalar>(
    mdp: &TabularMdp<S>,
    policy: &Policy<S>,
    model: &RewardModel<S>,
) -> Result<Vec<S>> {
    model.check_shape(mdp)?;
    let occ = compute_occupancy(mdp, policy)?;
    Ok(occupancy_grad_expectations(mdp, &occ, model))
}

/// `E_pi[sum_t gamma^t phi(S_t, A_t)]`.
pub fn policy_feature_expectations<S: Scalar>(
    mdp: &TabularMdp<S>,
    policy: &Policy<S>,
    features: &FeatureMap<S>,
) -> Result<Vec<S>> {
    let occ = compute_occupancy(mdp, policy)?;
    let sa = occ.total_state_action();
    let n_a = mdp.n_actions();
    let mut out = vec![S::zero(); features.dim()];
    for s in 0..mdp.n_states() {
        for a in 0..n_a {
            let w = sa[s * n_a + a];
            for (o, &f) in out.iter_mut().zip(features.get(s, a)) {
                *o = *o + w * f;
            }
        }
    }
    Ok(out)
}

/// Empirical (or exact, for a policy) discounted feature expectations of the demonstrator.
pub fn demo_feature_expectations<S: Scalar>(
    mdp: &TabularMdp<S>,
    demos: &DemonstrationSet<S>,
    features: &FeatureMap<S>,
) -> Result<Vec<S>> {
    match demos {
        DemonstrationSet::Trajectories(trajs) => {
            trajectory_feature_mean(trajs, features, mdp.gamma())
        }
        DemonstrationSet::ExactPolicy(p) => policy_feature_expectations(mdp, p, features),
    }
}

/// Mean over trajectories of `sum_t gamma^t phi(s_t, a_t)`.
pub fn trajectory_feature_mean<S: Scalar>(
    trajs: &[Trajectory],
    features: &FeatureMap<S>,
    gamma: S,
) -> Result<Vec<S>> {
    if trajs.is_empty() {
        return Err(Error::EmptyDemonstrations);
    }
    let mut acc = vec![S::zero(); features.dim()];
    for tr in trajs {
        let mut disc = S::one();
        for (s, a, _) in tr.steps() {
            if s >= features.n_states() || a >= features.n_actions() {
                return Err(Error::IndexOutOfRange {
                    kind: "state/action",
                    index: s.max(a),
                    size: features.n_states().min(features.n_actions()),
                });
            }
            for (o, &f) in acc.iter_mut().zip(features.get(s, a)) {
                *o = *o + disc * f;
            }
            disc = disc * gamma;
        }
    }
    let n = S::from_usize(trajs.len()).unwrap();
    Ok(acc.into_iter().map(|x| x / n).collect())
}
