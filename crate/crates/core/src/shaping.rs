//! Potential shaping, policy-equivalence checks and the decomposability condition.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::{RewardModel, TabularShape};
use crate::mdp::TabularMdp;
use crate::scalar::Scalar;
use crate::soft_vi::{argmax_set, hard_q_values, plan, soft_advantage};

/// State potential `phi(s)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Potential<S> {
    phi: Vec<S>,
}

impl<S: Scalar> Potential<S> {
    pub fn new(phi: Vec<S>) -> Result<Self> {
        if phi.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("potential must be finite".into()));
        }
        Ok(Self { phi })
    }

    pub fn zeros(n_states: usize) -> Self {
        Self {
            phi: vec![S::zero(); n_states],
        }
    }

    pub fn values(&self) -> &[S] {
        &self.phi
    }

    pub fn negated(&self) -> Self {
        Self {
            phi: self.phi.iter().map(|&x| -x).collect(),
        }
    }
}

/// `lambda * (r(s,a,s') + gamma phi(s') - phi(s))` as an `(s, a, s')` table.
pub fn scaled_potential_shape<S: Scalar>(
    reward: &RewardModel<S>,
    phi: &Potential<S>,
    gamma: S,
    lambda: S,
) -> Result<RewardModel<S>> {
    let (n_s, n_a) = (reward.n_states(), reward.n_actions());
    if phi.phi.len() != n_s {
        return Err(Error::Dimension(format!(
            "potential has {} entries, reward has {n_s} states",
            phi.phi.len()
        )));
    }
    let mut table = reward.transition_table();
    for s in 0..n_s {
        for a in 0..n_a {
            for s2 in 0..n_s {
                let x = &mut table[(s * n_a + a) * n_s + s2];
                *x = lambda * (*x + (gamma * phi.phi[s2] - phi.phi[s]));
            }
        }
    }
    RewardModel::tabular(TabularShape::Transition, n_s, n_a, table)
}

/// `r(s,a,s') + gamma phi(s') - phi(s)`.
pub fn potential_shape<S: Scalar>(reward: &RewardModel<S>, phi: &Potential<S>, gamma: S) -> Result<RewardModel<S>> {
    scaled_potential_shape(reward, phi, gamma, S::one())
}

/// `max |A_r - A_r'|` over every step, state and action.
pub fn check_soft_policy_equiv<S: Scalar>(
    mdp: &TabularMdp<S>,
    r: &RewardModel<S>,
    r2: &RewardModel<S>,
) -> Result<S> {
    let (a, _) = plan(mdp, r)?;
    let (b, _) = plan(mdp, r2)?;
    Ok(soft_advantage(&a)
        .iter()
        .flatten()
        .zip(soft_advantage(&b).iter().flatten())
        .fold(S::zero(), |m, (&x, &y)| m.max((x - y).abs())))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HardEquivalence {
    pub equal: bool,
    /// `(step, state)` pairs whose optimal action sets differ.
    pub mismatches: Vec<(usize, usize)>,
}

/// Relative slack when comparing hard `Q` values for ties.
pub const ARGMAX_TOL: f64 = 1e-9;

/// Compares the optimal action sets of hard value iteration under `r` and `r'`.
pub fn check_hard_policy_equiv<S: Scalar>(
    mdp: &TabularMdp<S>,
    r: &RewardModel<S>,
    r2: &RewardModel<S>,
) -> Result<HardEquivalence> {
    let tol = 1e-12;
    let max_iter = 1_000_000;
    let qa = hard_q_values(mdp, r, tol, max_iter)?;
    let qb = hard_q_values(mdp, r2, tol, max_iter)?;
    let n_a = mdp.n_actions();
    let mut mismatches = Vec::new();
    for (t, (x, y)) in qa.iter().zip(&qb).enumerate() {
        for (s, (rx, ry)) in x.chunks(n_a).zip(y.chunks(n_a)).enumerate() {
            if argmax_set(rx, ARGMAX_TOL) != argmax_set(ry, ARGMAX_TOL) {
                mismatches.push((t, s));
            }
        }
    }
    Ok(HardEquivalence {
        equal: mismatches.is_empty(),
        mismatches,
    })
}

/// Equivalence classes of the co-successor relation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LinkagePartition {
    /// Sorted classes over states that are the successor of some state.
    pub classes: Vec<Vec<usize>>,
    /// States that are no state's successor.
    pub orphans: Vec<usize>,
    pub decomposable: bool,
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Links every pair of states reachable in one step from a common state (under any
/// actions with positive probability) and closes the relation transitively.
pub fn linked_states<S: Scalar>(mdp: &TabularMdp<S>) -> LinkagePartition {
    let n = mdp.n_states();
    let mut sets = DisjointSets::new(n);
    let mut is_successor = vec![false; n];
    for s in 0..n {
        let mut first = None;
        for a in 0..mdp.n_actions() {
            for &(s2, _) in mdp.successors(s, a) {
                is_successor[s2] = true;
                match first {
                    None => first = Some(s2),
                    Some(f) => sets.union(f, s2),
                }
            }
        }
    }
    let mut by_root: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    let mut orphans = Vec::new();
    for s in 0..n {
        if is_successor[s] {
            by_root.entry(sets.find(s)).or_default().push(s);
        } else {
            orphans.push(s);
        }
    }
    let mut classes: Vec<Vec<usize>> = by_root.into_values().collect();
    classes.sort();
    LinkagePartition {
        decomposable: orphans.is_empty() && classes.len() == 1,
        classes,
        orphans,
    }
}

/// `k = mean(r' - r)` and whether `max |r' - r - k| <= tol`.
pub fn constant_offset_check<S: Scalar>(r: &[S], r2: &[S], tol: S) -> Result<(bool, S)> {
    if r.len() != r2.len() || r.is_empty() {
        return Err(Error::Dimension(format!(
            "reward tables have {} and {} states",
            r.len(),
            r2.len()
        )));
    }
    let n = S::from_usize(r.len()).unwrap();
    let k = r.iter().zip(r2).map(|(&a, &b)| b - a).sum::<S>() / n;
    let worst = r
        .iter()
        .zip(r2)
        .fold(S::zero(), |m, (&a, &b)| m.max((b - a - k).abs()));
    Ok((worst <= tol, k))
}
