//! Finite tabular episodic CMDPs and their exact evaluation.
//!
//! Steps are zero-based in code: step `h` in `0..H` is the one-based step
//! `h + 1`, and value tables carry a terminal slice at index `H` that is
//! identically zero.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, sample_categorical};

const ROW_TOL: f64 = 1e-12;
const POLICY_TOL: f64 = 1e-10;

/// Which scalar signal of a transition to accumulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signal {
    Reward,
    Cost(usize),
}

/// A finite-horizon CMDP with dense tensors over `(s, a, s')`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodicCmdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    costs: Vec<Vec<f64>>,
    thresholds: Vec<f64>,
    initial_dist: Vec<f64>,
}

impl EpisodicCmdp {
    /// Builds and validates a CMDP. Tensors are flat, indexed
    /// `[(s * A + a) * S + s']`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        costs: Vec<Vec<f64>>,
        thresholds: Vec<f64>,
        initial_dist: Vec<f64>,
    ) -> Result<Self> {
        let bad = |msg: &str| Err(Error::InvalidModel(msg.into()));
        if num_states == 0 || num_actions == 0 {
            return bad("state and action sets must be non-empty");
        }
        if horizon == 0 {
            return bad("horizon must be at least 1");
        }
        let n = num_states * num_actions * num_states;
        if transition.len() != n || reward.len() != n {
            return bad("transition/reward tensor has the wrong size");
        }
        if costs.iter().any(|c| c.len() != n) {
            return bad("cost tensor has the wrong size");
        }
        if costs.len() != thresholds.len() {
            return bad("number of cost functions differs from number of thresholds");
        }
        if initial_dist.len() != num_states {
            return bad("initial distribution has the wrong size");
        }
        for row in transition.chunks(num_states) {
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return bad("transition probabilities must be finite and non-negative");
            }
            if (row.iter().sum::<f64>() - 1.0).abs() > ROW_TOL {
                return bad("transition row does not sum to one");
            }
        }
        if initial_dist.iter().any(|&p| !(p >= 0.0) || !p.is_finite())
            || (initial_dist.iter().sum::<f64>() - 1.0).abs() > ROW_TOL
        {
            return bad("initial distribution is not a probability vector");
        }
        if reward.iter().chain(costs.iter().flatten()).any(|v| !v.is_finite()) {
            return bad("rewards and costs must be finite");
        }
        if thresholds.iter().any(|d| d.is_nan() || *d == f64::NEG_INFINITY) {
            return bad("thresholds must be real or +inf");
        }
        Ok(Self {
            num_states,
            num_actions,
            horizon,
            transition,
            reward,
            costs,
            thresholds,
            initial_dist,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_constraints(&self) -> usize {
        self.costs.len()
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn transition_tensor(&self) -> &[f64] {
        &self.transition
    }

    pub fn reward_tensor(&self) -> &[f64] {
        &self.reward
    }

    pub fn cost_tensors(&self) -> &[Vec<f64>] {
        &self.costs
    }

    #[inline]
    fn idx(&self, s: usize, a: usize, s2: usize) -> usize {
        (s * self.num_actions + a) * self.num_states + s2
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.transition[self.idx(s, a, s2)]
    }

    /// Next-state distribution `P(·|s,a)`.
    pub fn next_dist(&self, s: usize, a: usize) -> &[f64] {
        let start = self.idx(s, a, 0);
        &self.transition[start..start + self.num_states]
    }

    /// Copy of this CMDP with different thresholds.
    pub fn with_thresholds(&self, thresholds: Vec<f64>) -> Result<Self> {
        if thresholds.len() != self.costs.len() {
            return Err(Error::InvalidModel("threshold count mismatch".into()));
        }
        let mut out = self.clone();
        out.thresholds = thresholds;
        Ok(out)
    }

    /// Copy of this CMDP with a different horizon.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidModel("horizon must be at least 1".into()));
        }
        let mut out = self.clone();
        out.horizon = horizon;
        Ok(out)
    }

    fn signal_tensor(&self, signal: Signal) -> Result<&[f64]> {
        match signal {
            Signal::Reward => Ok(&self.reward),
            Signal::Cost(i) => self
                .costs
                .get(i)
                .map(|c| c.as_slice())
                .ok_or(Error::ConstraintIndex { index: i, count: self.costs.len() }),
        }
    }

    #[inline]
    pub fn signal_value(&self, signal: Signal, s: usize, a: usize, s2: usize) -> Result<f64> {
        Ok(self.signal_tensor(signal)?[self.idx(s, a, s2)])
    }

    /// Expected one-step signal `Σ_{s'} P(s'|s,a) g(s,a,s')`, indexed `[s * A + a]`.
    pub fn expected_signal(&self, signal: Signal) -> Result<Vec<f64>> {
        let g = self.signal_tensor(signal)?;
        let s_n = self.num_states;
        Ok(self
            .transition
            .chunks(s_n)
            .zip(g.chunks(s_n))
            .map(|(p, g)| p.iter().zip(g).map(|(p, g)| p * g).sum())
            .collect())
    }

    fn check_policy(&self, policy: &PolicySequence) -> Result<()> {
        if policy.horizon != self.horizon
            || policy.num_states != self.num_states
            || policy.num_actions != self.num_actions
        {
            return Err(Error::InvalidModel("policy dimensions do not match the CMDP".into()));
        }
        Ok(())
    }
}

/// A non-stationary tabular policy `π_h(a|s)`, indexed `[(h * S + s) * A + a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySequence {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl PolicySequence {
    pub fn new(horizon: usize, num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != horizon * num_states * num_actions || num_actions == 0 {
            return Err(Error::InvalidModel("policy table has the wrong size".into()));
        }
        for row in probs.chunks(num_actions) {
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite())
                || (row.iter().sum::<f64>() - 1.0).abs() > POLICY_TOL
            {
                return Err(Error::InvalidModel("policy row is not a probability vector".into()));
            }
        }
        Ok(Self { horizon, num_states, num_actions, probs })
    }

    pub fn uniform(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        let p = 1.0 / num_actions as f64;
        Self {
            horizon,
            num_states,
            num_actions,
            probs: vec![p; horizon * num_states * num_actions],
        }
    }

    /// Deterministic policy from `actions[h * S + s]`.
    pub fn deterministic(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        actions: &[usize],
    ) -> Result<Self> {
        if actions.len() != horizon * num_states || actions.iter().any(|&a| a >= num_actions) {
            return Err(Error::InvalidModel("bad deterministic action table".into()));
        }
        let mut probs = vec![0.0; horizon * num_states * num_actions];
        for (slot, &a) in actions.iter().enumerate() {
            probs[slot * num_actions + a] = 1.0;
        }
        Ok(Self { horizon, num_states, num_actions, probs })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn table(&self) -> &[f64] {
        &self.probs
    }

    #[inline]
    pub fn prob(&self, h: usize, s: usize, a: usize) -> f64 {
        self.probs[(h * self.num_states + s) * self.num_actions + a]
    }

    pub fn row(&self, h: usize, s: usize) -> &[f64] {
        let start = (h * self.num_states + s) * self.num_actions;
        &self.probs[start..start + self.num_actions]
    }

    /// Replaces the distribution at `(h, s)`.
    pub fn set_row(&mut self, h: usize, s: usize, row: &[f64]) -> Result<()> {
        if row.len() != self.num_actions
            || row.iter().any(|&p| !(p >= 0.0))
            || (row.iter().sum::<f64>() - 1.0).abs() > POLICY_TOL
        {
            return Err(Error::InvalidModel("policy row is not a probability vector".into()));
        }
        let start = (h * self.num_states + s) * self.num_actions;
        self.probs[start..start + self.num_actions].copy_from_slice(row);
        Ok(())
    }
}

/// `V_h(s)` for `h ∈ 0..=H` (terminal slice zero) and `Q_h(s,a)` for `h ∈ 0..H`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTables {
    pub signal: Signal,
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    v: Vec<f64>,
    q: Vec<f64>,
    policy: PolicySequence,
}

impl ValueTables {
    #[inline]
    pub fn v(&self, h: usize, s: usize) -> f64 {
        self.v[h * self.num_states + s]
    }

    #[inline]
    pub fn q(&self, h: usize, s: usize, a: usize) -> f64 {
        self.q[(h * self.num_states + s) * self.num_actions + a]
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// The policy these values were computed for.
    pub fn policy(&self) -> &PolicySequence {
        &self.policy
    }
}

/// Reach probabilities `P^π_h(s, a)` indexed `[(h * S + s) * A + a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyTable {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl OccupancyTable {
    #[inline]
    pub fn prob(&self, h: usize, s: usize, a: usize) -> f64 {
        self.probs[(h * self.num_states + s) * self.num_actions + a]
    }

    /// State marginal `P^π_h(s)`.
    pub fn state_prob(&self, h: usize, s: usize) -> f64 {
        let start = (h * self.num_states + s) * self.num_actions;
        self.probs[start..start + self.num_actions].iter().sum()
    }

    pub fn slice(&self, h: usize) -> &[f64] {
        let n = self.num_states * self.num_actions;
        &self.probs[h * n..(h + 1) * n]
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

/// Advantage tables `A_h(s,a) = Q_h(s,a) − V_h(s)` indexed `[(h * S + s) * A + a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageTable {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl AdvantageTable {
    #[inline]
    pub fn get(&self, h: usize, s: usize, a: usize) -> f64 {
        self.values[(h * self.num_states + s) * self.num_actions + a]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Exact backward recursion for `V` and `Q` of one signal.
pub fn exact_value_functions(
    cmdp: &EpisodicCmdp,
    policy: &PolicySequence,
    signal: Signal,
) -> Result<ValueTables> {
    cmdp.check_policy(policy)?;
    let g = cmdp.signal_tensor(signal)?;
    let (s_n, a_n, h_n) = (cmdp.num_states, cmdp.num_actions, cmdp.horizon);
    let mut v = vec![0.0; (h_n + 1) * s_n];
    let mut q = vec![0.0; h_n * s_n * a_n];
    for h in (0..h_n).rev() {
        let (head, tail) = v.split_at_mut((h + 1) * s_n);
        let v_next = &tail[..s_n];
        let v_here = &mut head[h * s_n..];
        for s in 0..s_n {
            let mut vs = 0.0;
            for a in 0..a_n {
                let base = cmdp.idx(s, a, 0);
                let mut qa = 0.0;
                for s2 in 0..s_n {
                    let p = cmdp.transition[base + s2];
                    if p != 0.0 {
                        qa += p * (g[base + s2] + v_next[s2]);
                    }
                }
                q[(h * s_n + s) * a_n + a] = qa;
                vs += policy.prob(h, s, a) * qa;
            }
            v_here[s] = vs;
        }
    }
    Ok(ValueTables {
        signal,
        horizon: h_n,
        num_states: s_n,
        num_actions: a_n,
        v,
        q,
        policy: policy.clone(),
    })
}

/// `J(π) = Σ_s μ(s) V_1(s)` for the chosen signal.
pub fn exact_objective(cmdp: &EpisodicCmdp, policy: &PolicySequence, signal: Signal) -> Result<f64> {
    let vt = exact_value_functions(cmdp, policy, signal)?;
    Ok(cmdp.initial_dist.iter().enumerate().map(|(s, mu)| mu * vt.v(0, s)).sum())
}

/// Forward recursion for the probability of reaching `(s, a)` at each step.
pub fn reach_probabilities(cmdp: &EpisodicCmdp, policy: &PolicySequence) -> Result<OccupancyTable> {
    cmdp.check_policy(policy)?;
    let (s_n, a_n, h_n) = (cmdp.num_states, cmdp.num_actions, cmdp.horizon);
    let mut probs = vec![0.0; h_n * s_n * a_n];
    let mut state_mass = cmdp.initial_dist.clone();
    for h in 0..h_n {
        for s in 0..s_n {
            for a in 0..a_n {
                probs[(h * s_n + s) * a_n + a] = state_mass[s] * policy.prob(h, s, a);
            }
        }
        if h + 1 < h_n {
            let mut next = vec![0.0; s_n];
            for s in 0..s_n {
                for a in 0..a_n {
                    let w = probs[(h * s_n + s) * a_n + a];
                    if w == 0.0 {
                        continue;
                    }
                    for (s2, p) in cmdp.next_dist(s, a).iter().enumerate() {
                        next[s2] += w * p;
                    }
                }
            }
            state_mass = next;
        }
    }
    Ok(OccupancyTable { horizon: h_n, num_states: s_n, num_actions: a_n, probs })
}

/// Objective computed from reach probabilities:
/// `Σ_h Σ_{s,a,s'} P_h(s,a) P(s'|s,a) g(s,a,s')`.
pub fn occupancy_objective(cmdp: &EpisodicCmdp, occ: &OccupancyTable, signal: Signal) -> Result<f64> {
    let expected = cmdp.expected_signal(signal)?;
    Ok((0..occ.horizon)
        .map(|h| occ.slice(h).iter().zip(&expected).map(|(w, g)| w * g).sum::<f64>())
        .sum())
}

pub fn advantage_tables(vt: &ValueTables) -> AdvantageTable {
    let (s_n, a_n) = (vt.num_states, vt.num_actions);
    let mut values = vec![0.0; vt.horizon * s_n * a_n];
    for h in 0..vt.horizon {
        for s in 0..s_n {
            let v = vt.v(h, s);
            for a in 0..a_n {
                values[(h * s_n + s) * a_n + a] = vt.q(h, s, a) - v;
            }
        }
    }
    AdvantageTable { horizon: vt.horizon, num_states: s_n, num_actions: a_n, values }
}

/// One transition of a sampled CMDP trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    pub reward: f64,
    pub costs: Vec<f64>,
}

/// A full-length trajectory; episodes never terminate early.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub seed: u64,
}

impl Trajectory {
    pub fn total(&self, signal: Signal) -> f64 {
        self.steps
            .iter()
            .map(|st| match signal {
                Signal::Reward => st.reward,
                Signal::Cost(i) => st.costs[i],
            })
            .sum()
    }
}

/// Samples `s_1 ~ μ`, `a_h ~ π_h(·|s_h)`, `s_{h+1} ~ P(·|s_h, a_h)` for `H` steps.
pub fn sample_trajectory(cmdp: &EpisodicCmdp, policy: &PolicySequence, seed: u64) -> Result<Trajectory> {
    cmdp.check_policy(policy)?;
    let mut rng = rng_from_seed(seed);
    let mut s = sample_categorical(&cmdp.initial_dist, &mut rng);
    let mut steps = Vec::with_capacity(cmdp.horizon);
    for h in 0..cmdp.horizon {
        let a = sample_categorical(policy.row(h, s), &mut rng);
        let s2 = sample_categorical(cmdp.next_dist(s, a), &mut rng);
        let i = cmdp.idx(s, a, s2);
        steps.push(TrajectoryStep {
            state: s,
            action: a,
            next_state: s2,
            reward: cmdp.reward[i],
            costs: cmdp.costs.iter().map(|c| c[i]).collect(),
        });
        s = s2;
    }
    Ok(Trajectory { steps, seed })
}

/// Backward induction for the scalarized signal `r − Σ_i w_i C_i`.
/// Returns a deterministic optimal policy (lowest action index on ties) and
/// its scalarized value `Σ_s μ(s) V_1(s)`.
pub fn optimal_deterministic_policy(
    cmdp: &EpisodicCmdp,
    cost_weights: &[f64],
) -> Result<(PolicySequence, f64)> {
    if cost_weights.len() != cmdp.num_constraints() {
        return Err(Error::ConstraintIndex { index: cost_weights.len(), count: cmdp.num_constraints() });
    }
    let (s_n, a_n, h_n) = (cmdp.num_states, cmdp.num_actions, cmdp.horizon);
    let mut scalar = cmdp.reward.clone();
    for (w, c) in cost_weights.iter().zip(&cmdp.costs) {
        if *w != 0.0 {
            for (x, ci) in scalar.iter_mut().zip(c) {
                *x -= w * ci;
            }
        }
    }
    let mut v_next = vec![0.0; s_n];
    let mut actions = vec![0usize; h_n * s_n];
    for h in (0..h_n).rev() {
        let mut v_here = vec![0.0; s_n];
        for s in 0..s_n {
            let mut best = f64::NEG_INFINITY;
            for a in 0..a_n {
                let base = cmdp.idx(s, a, 0);
                let qa: f64 = (0..s_n)
                    .map(|s2| cmdp.transition[base + s2] * (scalar[base + s2] + v_next[s2]))
                    .sum();
                if qa > best + 1e-12 {
                    best = qa;
                    actions[h * s_n + s] = a;
                }
            }
            v_here[s] = best;
        }
        v_next = v_here;
    }
    let value = cmdp.initial_dist.iter().zip(&v_next).map(|(m, v)| m * v).sum();
    Ok((PolicySequence::deterministic(h_n, s_n, a_n, &actions)?, value))
}
