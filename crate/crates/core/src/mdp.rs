//! Finite MDPs, trajectories and policies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Episode length of an MDP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Horizon {
    Finite(usize),
    Infinite,
}

impl Horizon {
    pub fn finite(self) -> Option<usize> {
        match self {
            Horizon::Finite(t) => Some(t),
            Horizon::Infinite => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Horizon::Finite(_))
    }
}

/// Row-sum tolerance used when validating distributions.
pub(crate) fn distribution_tol<S: Scalar>() -> S {
    S::lit(1e-9).max(S::epsilon() * S::lit(64.0))
}

/// Checks that `row` is a probability vector, describing the first problem found.
pub(crate) fn check_distribution<S: Scalar>(row: &[S]) -> std::result::Result<(), String> {
    let mut sum = S::zero();
    for (i, &p) in row.iter().enumerate() {
        if !p.is_finite() || p < S::zero() {
            return Err(format!("entry {i} = {p} is negative or not finite"));
        }
        sum = sum + p;
    }
    if (sum - S::one()).abs() > distribution_tol::<S>() {
        return Err(format!("sums to {sum}"));
    }
    Ok(())
}

/// A finite MDP with dense transition tensor `P[s][a][s']`.
///
/// Construction validates every invariant; the value is immutable afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp<S> {
    n_states: usize,
    n_actions: usize,
    gamma: S,
    horizon: Horizon,
    initial: Vec<S>,
    transitions: Vec<S>,
    terminal: Vec<bool>,
    successors: Vec<Vec<(usize, S)>>,
}

impl<S: Scalar> TabularMdp<S> {
    /// Builds an MDP. `transitions` is laid out as `[s][a][s']` in row-major order.
    ///
    /// All invariant violations are collected into a single [`Error::InvalidMdp`].
    pub fn new(
        n_states: usize,
        n_actions: usize,
        gamma: S,
        horizon: Horizon,
        initial: Vec<S>,
        transitions: Vec<S>,
        terminal: Vec<bool>,
    ) -> Result<Self> {
        let mut problems = Vec::new();
        if n_states == 0 || n_actions == 0 {
            problems.push(format!(
                "need at least one state and one action (got {n_states} states, {n_actions} actions)"
            ));
            return Err(Error::InvalidMdp(problems));
        }
        if initial.len() != n_states {
            problems.push(format!(
                "initial_dist has {} entries, expected {n_states}",
                initial.len()
            ));
        } else if let Err(e) = check_distribution(&initial) {
            problems.push(format!("initial_dist {e}"));
        }
        if transitions.len() != n_states * n_actions * n_states {
            problems.push(format!(
                "transition tensor has {} entries, expected {}",
                transitions.len(),
                n_states * n_actions * n_states
            ));
            return Err(Error::InvalidMdp(problems));
        }
        if terminal.len() != n_states {
            problems.push(format!(
                "terminal mask has {} entries, expected {n_states}",
                terminal.len()
            ));
        }
        if !(gamma >= S::zero() && gamma <= S::one()) {
            problems.push(format!("gamma {gamma} outside [0, 1]"));
        }
        match horizon {
            Horizon::Finite(0) => problems.push("finite horizon must be positive".into()),
            Horizon::Infinite if gamma >= S::one() => {
                problems.push("infinite horizon requires gamma < 1".into())
            }
            _ => {}
        }
        for s in 0..n_states {
            for a in 0..n_actions {
                let start = (s * n_actions + a) * n_states;
                let row = &transitions[start..start + n_states];
                if let Err(e) = check_distribution(row) {
                    problems.push(format!("transition row (s={s}, a={a}) {e}"));
                }
                if terminal.get(s).copied().unwrap_or(false) && row[s] != S::one() {
                    problems.push(format!(
                        "absorbing state {s} does not self-loop with probability 1 under action {a}"
                    ));
                }
            }
        }
        if !problems.is_empty() {
            return Err(Error::InvalidMdp(problems));
        }
        let successors = (0..n_states * n_actions)
            .map(|sa| {
                let row = &transitions[sa * n_states..(sa + 1) * n_states];
                row.iter()
                    .enumerate()
                    .filter(|(_, &p)| p > S::zero())
                    .map(|(s2, &p)| (s2, p))
                    .collect()
            })
            .collect();
        Ok(Self {
            n_states,
            n_actions,
            gamma,
            horizon,
            initial,
            transitions,
            terminal,
            successors,
        })
    }

    /// Deterministic MDP from a successor table `next[s][a]`.
    pub fn deterministic(
        gamma: S,
        horizon: Horizon,
        initial: Vec<S>,
        next: &[Vec<usize>],
        terminal: Vec<bool>,
    ) -> Result<Self> {
        let n_states = next.len();
        let n_actions = next.first().map_or(0, Vec::len);
        let mut transitions = vec![S::zero(); n_states * n_actions * n_states];
        for (s, row) in next.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::Dimension(format!(
                    "state {s} lists {} successors, expected {n_actions}",
                    row.len()
                )));
            }
            for (a, &s2) in row.iter().enumerate() {
                if s2 >= n_states {
                    return Err(Error::IndexOutOfRange {
                        kind: "state",
                        index: s2,
                        size: n_states,
                    });
                }
                transitions[(s * n_actions + a) * n_states + s2] = S::one();
            }
        }
        Self::new(
            n_states,
            n_actions,
            gamma,
            horizon,
            initial,
            transitions,
            terminal,
        )
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> S {
        self.gamma
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    pub fn initial(&self) -> &[S] {
        &self.initial
    }

    pub fn terminal(&self) -> &[bool] {
        &self.terminal
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    /// Dense transition tensor in `[s][a][s']` order.
    pub fn transitions(&self) -> &[S] {
        &self.transitions
    }

    #[inline]
    pub fn p(&self, s: usize, a: usize, s2: usize) -> S {
        self.transitions[(s * self.n_actions + a) * self.n_states + s2]
    }

    /// Successors of `(s, a)` with positive probability, in increasing state order.
    #[inline]
    pub fn successors(&self, s: usize, a: usize) -> &[(usize, S)] {
        &self.successors[s * self.n_actions + a]
    }

    /// Expectation of `f(s')` under `P(. | s, a)`.
    #[inline]
    pub fn expect_next(&self, s: usize, a: usize, mut f: impl FnMut(usize) -> S) -> S {
        self.successors(s, a)
            .iter()
            .fold(S::zero(), |acc, &(s2, p)| acc + p * f(s2))
    }

    /// Every `(s, a)` leads to exactly one successor.
    pub fn is_deterministic(&self) -> bool {
        self.successors.iter().all(|succ| succ.len() == 1)
    }

    /// The initial distribution is a point mass; returns the start state.
    pub fn deterministic_start(&self) -> Option<usize> {
        let support: Vec<usize> = (0..self.n_states)
            .filter(|&s| self.initial[s] > S::zero())
            .collect();
        match support.as_slice() {
            [s] => Some(*s),
            _ => None,
        }
    }

    pub fn has_absorbing_states(&self) -> bool {
        self.terminal.iter().any(|&t| t)
    }

    /// Copy with a different discount factor (re-validated).
    pub fn with_gamma(&self, gamma: S) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            gamma,
            self.horizon,
            self.initial.clone(),
            self.transitions.clone(),
            self.terminal.clone(),
        )
    }

    /// Copy with a different horizon (re-validated).
    pub fn with_horizon(&self, horizon: Horizon) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.gamma,
            horizon,
            self.initial.clone(),
            self.transitions.clone(),
            self.terminal.clone(),
        )
    }

    /// Copy with a different initial distribution (re-validated).
    pub fn with_initial(&self, initial: Vec<S>) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.gamma,
            self.horizon,
            initial,
            self.transitions.clone(),
            self.terminal.clone(),
        )
    }

    pub(crate) fn check_state(&self, s: usize) -> Result<()> {
        if s < self.n_states {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                kind: "state",
                index: s,
                size: self.n_states,
            })
        }
    }

    pub(crate) fn check_action(&self, a: usize) -> Result<()> {
        if a < self.n_actions {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                kind: "action",
                index: a,
                size: self.n_actions,
            })
        }
    }

    pub(crate) fn require_finite_horizon(&self, what: &str) -> Result<usize> {
        self.horizon
            .finite()
            .ok_or_else(|| Error::WrongMode(format!("{what} requires a finite horizon")))
    }
}

/// A state/action sequence `s_0, a_0, s_1, ..., a_{k-1}, s_k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
}

impl Trajectory {
    pub fn new(states: Vec<usize>, actions: Vec<usize>) -> Result<Self> {
        if states.len() != actions.len() + 1 {
            return Err(Error::Dimension(format!(
                "trajectory has {} states and {} actions; expected states = actions + 1",
                states.len(),
                actions.len()
            )));
        }
        Ok(Self { states, actions })
    }

    /// Number of transitions.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// `(s_t, a_t, s_{t+1})` triples.
    pub fn steps(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.actions
            .iter()
            .enumerate()
            .map(|(t, &a)| (self.states[t], a, self.states[t + 1]))
    }

    /// Validates indices and, for finite horizons, the length bound.
    pub fn validate<S: Scalar>(&self, mdp: &TabularMdp<S>) -> Result<()> {
        if self.states.len() != self.actions.len() + 1 {
            return Err(Error::Dimension("states.len() != actions.len() + 1".into()));
        }
        for &s in &self.states {
            mdp.check_state(s)?;
        }
        for &a in &self.actions {
            mdp.check_action(a)?;
        }
        if let Horizon::Finite(t) = mdp.horizon() {
            if self.len() > t {
                return Err(Error::Dimension(format!(
                    "trajectory has {} steps but the horizon is {t}",
                    self.len()
                )));
            }
        }
        Ok(())
    }
}

/// Stationary or time-indexed stochastic policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy<S> {
    n_states: usize,
    n_actions: usize,
    stationary: bool,
    /// One `[s][a]` table per time step (a single table if stationary).
    tables: Vec<Vec<S>>,
}

impl<S: Scalar> Policy<S> {
    pub fn stationary(n_states: usize, n_actions: usize, table: Vec<S>) -> Result<Self> {
        let p = Self {
            n_states,
            n_actions,
            stationary: true,
            tables: vec![table],
        };
        p.validate()?;
        Ok(p)
    }

    pub fn time_indexed(n_states: usize, n_actions: usize, tables: Vec<Vec<S>>) -> Result<Self> {
        if tables.is_empty() {
            return Err(Error::Dimension("time-indexed policy needs at least one step".into()));
        }
        let p = Self {
            n_states,
            n_actions,
            stationary: false,
            tables,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let u = S::one() / S::from_usize(n_actions).unwrap();
        Self {
            n_states,
            n_actions,
            stationary: true,
            tables: vec![vec![u; n_states * n_actions]],
        }
    }

    /// Stationary deterministic policy choosing `actions[s]` in state `s`.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        let n_states = actions.len();
        let mut table = vec![S::zero(); n_states * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::IndexOutOfRange {
                    kind: "action",
                    index: a,
                    size: n_actions,
                });
            }
            table[s * n_actions + a] = S::one();
        }
        Self::stationary(n_states, n_actions, table)
    }

    fn validate(&self) -> Result<()> {
        for (t, table) in self.tables.iter().enumerate() {
            if table.len() != self.n_states * self.n_actions {
                return Err(Error::Dimension(format!(
                    "policy table {t} has {} entries, expected {}",
                    table.len(),
                    self.n_states * self.n_actions
                )));
            }
            for s in 0..self.n_states {
                check_distribution(&table[s * self.n_actions..(s + 1) * self.n_actions])
                    .map_err(|e| Error::InvalidDistribution(format!("policy row t={t} s={s} {e}")))?;
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn is_stationary(&self) -> bool {
        self.stationary
    }

    /// Number of stored tables (1 if stationary).
    pub fn n_steps(&self) -> usize {
        self.tables.len()
    }

    pub fn tables(&self) -> &[Vec<S>] {
        &self.tables
    }

    /// Table used at step `t`. Time-indexed policies reuse their last table past the end.
    #[inline]
    pub fn table(&self, t: usize) -> &[S] {
        if self.stationary {
            &self.tables[0]
        } else {
            &self.tables[t.min(self.tables.len() - 1)]
        }
    }

    #[inline]
    pub fn row(&self, t: usize, s: usize) -> &[S] {
        &self.table(t)[s * self.n_actions..(s + 1) * self.n_actions]
    }

    #[inline]
    pub fn prob(&self, t: usize, s: usize, a: usize) -> S {
        self.table(t)[s * self.n_actions + a]
    }

    /// Every row selected by `relevant(t, s)` puts all its mass on a single action.
    pub fn is_deterministic_on(&self, mut relevant: impl FnMut(usize, usize) -> bool) -> bool {
        (0..self.tables.len()).all(|t| {
            (0..self.n_states).all(|s| {
                !relevant(t, s)
                    || self
                        .row(t, s)
                        .iter()
                        .filter(|&&p| p > S::zero())
                        .count()
                        <= 1
            })
        })
    }

    pub(crate) fn check_shape<T: Scalar>(&self, mdp: &TabularMdp<T>) -> Result<()> {
        if self.n_states != mdp.n_states() || self.n_actions != mdp.n_actions() {
            return Err(Error::Dimension(format!(
                "policy is {}x{} but the MDP has {} states and {} actions",
                self.n_states,
                self.n_actions,
                mdp.n_states(),
                mdp.n_actions()
            )));
        }
        if !self.stationary {
            if let Horizon::Finite(t) = mdp.horizon() {
                if self.tables.len() < t {
                    return Err(Error::Dimension(format!(
                        "time-indexed policy has {} steps, horizon is {t}",
                        self.tables.len()
                    )));
                }
            }
        }
        Ok(())
    }
}
