//! Exhaustive and exact reference solvers for small CMDPs.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::cmdp::{
    advantage_tables, exact_objective, exact_value_functions, optimal_deterministic_policy, reach_probabilities,
    AdvantageTable, EpisodicCmdp, OccupancyTable, PolicySequence, Signal,
};
use crate::ecop::damped_penalty;
use crate::rng::{rng_from_seed, SeededRng};
use crate::{Error, Result};

pub const DEFAULT_BUDGET: u64 = 10_000_000;
/// Slack allowed when testing `J_C ≤ d` on exactly evaluated policies.
pub const FEASIBILITY_TOL: f64 = 1e-12;
const ARGMIN_TOL: f64 = 1e-9;

/// All action distributions whose entries are multiples of `1/resolution`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGrid {
    resolution: usize,
    num_actions: usize,
    points: Vec<Vec<f64>>,
}

impl PolicyGrid {
    pub fn new(resolution: usize, num_actions: usize) -> Result<Self> {
        if resolution == 0 || num_actions == 0 {
            return Err(Error::InvalidConfig("grid resolution and action count must be positive".into()));
        }
        let mut points = Vec::new();
        let mut counts = vec![0usize; num_actions];
        fill(&mut points, &mut counts, 0, resolution, resolution);
        Ok(Self { resolution, num_actions, points })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Number of full policy sequences on `cmdp`, saturating.
    pub fn sequence_count(&self, horizon: usize, num_states: usize) -> u128 {
        let base = self.points.len() as u128;
        let mut total: u128 = 1;
        for _ in 0..horizon * num_states {
            total = total.saturating_mul(base);
        }
        total
    }

    /// The policy with mixed-radix id `id`; slot `h * S + s` is the digit of
    /// weight `|points|^(h * S + s)`.
    pub fn policy(&self, id: u128, horizon: usize, num_states: usize) -> Result<PolicySequence> {
        let base = self.points.len() as u128;
        let mut rest = id;
        let mut probs = Vec::with_capacity(horizon * num_states * self.num_actions);
        for _ in 0..horizon * num_states {
            probs.extend_from_slice(&self.points[(rest % base) as usize]);
            rest /= base;
        }
        PolicySequence::new(horizon, num_states, self.num_actions, probs)
    }
}

fn fill(out: &mut Vec<Vec<f64>>, counts: &mut [usize], i: usize, left: usize, g: usize) {
    if i + 1 == counts.len() {
        counts[i] = left;
        out.push(counts.iter().map(|c| *c as f64 / g as f64).collect());
        return;
    }
    for c in (0..=left).rev() {
        counts[i] = c;
        fill(out, counts, i + 1, left - c, g);
    }
}

/// Order in which grid policies are visited.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Enumeration {
    Sequential,
    /// A seeded affine permutation of the ids.
    Shuffled(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BruteForceOptions {
    pub budget: u64,
    pub order: Enumeration,
    pub keep_evaluations: bool,
}

impl Default for BruteForceOptions {
    fn default() -> Self {
        Self { budget: DEFAULT_BUDGET, order: Enumeration::Sequential, keep_evaluations: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub id: u128,
    pub reward: f64,
    pub costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    pub best_policy: Option<PolicySequence>,
    pub best_id: Option<u128>,
    pub best_j: f64,
    pub best_costs: Vec<f64>,
    /// False when no grid policy satisfies every constraint.
    pub feasible: bool,
    pub evaluated: u128,
    pub all_evaluations: Vec<Evaluation>,
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn permutation(n: u128, seed: u64) -> (u128, u128) {
    if n <= 1 {
        return (1, 0);
    }
    let mut rng = rng_from_seed(seed);
    let mut a = (rng.random::<u64>() as u128 % n).max(1);
    while gcd(a, n) != 1 {
        a = a % (n - 1) + 1;
    }
    let b = rng.random::<u64>() as u128 % n;
    (a, b)
}

/// Evaluates `J` and every `J_{C_i}` through the reach probabilities.
pub fn evaluate_policy(cmdp: &EpisodicCmdp, expected: &[Vec<f64>], policy: &PolicySequence) -> Result<(f64, Vec<f64>)> {
    let occ = reach_probabilities(cmdp, policy)?;
    let value = |g: &[f64]| -> f64 {
        (0..occ.horizon()).map(|h| occ.slice(h).iter().zip(g).map(|(w, x)| w * x).sum::<f64>()).sum()
    };
    Ok((value(&expected[0]), expected[1..].iter().map(|g| value(g)).collect()))
}

fn expected_signals(cmdp: &EpisodicCmdp) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![cmdp.expected_signal(Signal::Reward)?];
    for i in 0..cmdp.num_constraints() {
        out.push(cmdp.expected_signal(Signal::Cost(i))?);
    }
    Ok(out)
}

fn check_budget(count: u128, budget: u64) -> Result<()> {
    if count > budget as u128 {
        return Err(Error::BudgetExceeded { required: count, budget });
    }
    Ok(())
}

fn is_feasible(costs: &[f64], thresholds: &[f64]) -> bool {
    costs.iter().zip(thresholds).all(|(c, d)| *c <= d + FEASIBILITY_TOL)
}

/// Feasible maximizer of `J` over every grid policy sequence. Ties go to the
/// lowest policy id, whatever the visiting order.
pub fn brute_force_constrained_optimum(
    cmdp: &EpisodicCmdp,
    grid: &PolicyGrid,
    options: BruteForceOptions,
) -> Result<BruteForceResult> {
    if grid.num_actions() != cmdp.num_actions() {
        return Err(Error::InvalidConfig("grid and CMDP disagree on the action count".into()));
    }
    let (h, s) = (cmdp.horizon(), cmdp.num_states());
    let n = grid.sequence_count(h, s);
    check_budget(n, options.budget)?;
    let expected = expected_signals(cmdp)?;
    let (mul, add) = match options.order {
        Enumeration::Sequential => (1, 0),
        Enumeration::Shuffled(seed) => permutation(n, seed),
    };
    let mut best: Option<(f64, u128, Vec<f64>)> = None;
    let mut all = Vec::new();
    for i in 0..n {
        let id = (mul * i + add) % n;
        let policy = grid.policy(id, h, s)?;
        let (j, costs) = evaluate_policy(cmdp, &expected, &policy)?;
        if is_feasible(&costs, cmdp.thresholds()) {
            let better = match &best {
                None => true,
                Some((bj, bid, _)) => j > *bj || (j == *bj && id < *bid),
            };
            if better {
                best = Some((j, id, costs.clone()));
            }
        }
        if options.keep_evaluations {
            all.push(Evaluation { id, reward: j, costs });
        }
    }
    if options.keep_evaluations {
        all.sort_by_key(|e| e.id);
    }
    Ok(match best {
        Some((j, id, costs)) => BruteForceResult {
            best_policy: Some(grid.policy(id, h, s)?),
            best_id: Some(id),
            best_j: j,
            best_costs: costs,
            feasible: true,
            evaluated: n,
            all_evaluations: all,
        },
        None => BruteForceResult {
            best_policy: None,
            best_id: None,
            best_j: f64::NEG_INFINITY,
            best_costs: Vec::new(),
            feasible: false,
            evaluated: n,
            all_evaluations: all,
        },
    })
}

/// `Σ_h Σ_{s,a} P^π_h(s,a) A_h(s,a)`.
pub fn expected_advantage(occ: &OccupancyTable, adv: &AdvantageTable, from_step: usize) -> f64 {
    (from_step..occ.horizon())
        .map(|h| occ.slice(h).iter().zip(&adv.values()[h * occ.slice(h).len()..(h + 1) * occ.slice(h).len()]).map(|(w, a)| w * a).sum::<f64>())
        .sum()
}

/// Both sides of the episodic policy difference identity for the reward:
/// `J(π) − J(π′)` and `Σ_h E_{(s,a) ∼ P^π_h}[A^{π′}_h(s,a)]`.
pub fn lemma1_check(cmdp: &EpisodicCmdp, policy: &PolicySequence, other: &PolicySequence) -> Result<(f64, f64)> {
    lemma1_check_signal(cmdp, policy, other, Signal::Reward)
}

pub fn lemma1_check_signal(
    cmdp: &EpisodicCmdp,
    policy: &PolicySequence,
    other: &PolicySequence,
    signal: Signal,
) -> Result<(f64, f64)> {
    let lhs = exact_objective(cmdp, policy, signal)? - exact_objective(cmdp, other, signal)?;
    let occ = reach_probabilities(cmdp, policy)?;
    let adv = advantage_tables(&exact_value_functions(cmdp, other, signal)?);
    Ok((lhs, expected_advantage(&occ, &adv, 0)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepSolution {
    pub policy: PolicySequence,
    /// False when no candidate met the step constraint and the previous
    /// step-`t` rows were kept.
    pub feasible: bool,
    pub objective: f64,
}

/// Solves the step-`t` problem by grid search over the rows of step `t`.
/// `current` holds the already updated rows for steps after `t`; rows before
/// `t` come from `prev`. Minimizes `Σ_{h ≥ t} E[−A^{prev}_h]` subject to
/// `J_{C_i}(prev) + Σ_{h ≥ t} E[A^{prev}_{C_i,h}] ≤ d_i`, with expectations
/// under the candidate's reach probabilities.
pub fn ipoce_exact_step(
    cmdp: &EpisodicCmdp,
    prev: &PolicySequence,
    current: &PolicySequence,
    t: usize,
    grid: &PolicyGrid,
    budget: u64,
) -> Result<StepSolution> {
    let (h_n, s_n) = (cmdp.horizon(), cmdp.num_states());
    if t >= h_n {
        return Err(Error::StepOutOfRange { step: t, horizon: h_n });
    }
    let base = grid.points().len() as u128;
    let mut count: u128 = 1;
    for _ in 0..s_n {
        count = count.saturating_mul(base);
    }
    check_budget(count, budget)?;
    let reward_adv = advantage_tables(&exact_value_functions(cmdp, prev, Signal::Reward)?);
    let cost_adv = (0..cmdp.num_constraints())
        .map(|i| Ok(advantage_tables(&exact_value_functions(cmdp, prev, Signal::Cost(i))?)))
        .collect::<Result<Vec<_>>>()?;
    let prev_costs = (0..cmdp.num_constraints())
        .map(|i| exact_objective(cmdp, prev, Signal::Cost(i)))
        .collect::<Result<Vec<_>>>()?;

    let mut candidate = current.clone();
    for h in 0..t {
        for s in 0..s_n {
            candidate.set_row(h, s, prev.row(h, s))?;
        }
    }
    let mut best: Option<(f64, u128)> = None;
    for id in 0..count {
        let mut rest = id;
        for s in 0..s_n {
            candidate.set_row(t, s, &grid.points()[(rest % base) as usize])?;
            rest /= base;
        }
        let occ = reach_probabilities(cmdp, &candidate)?;
        let ok = cost_adv
            .iter()
            .zip(&prev_costs)
            .zip(cmdp.thresholds())
            .all(|((adv, jc), d)| jc + expected_advantage(&occ, adv, t) <= d + FEASIBILITY_TOL);
        if ok {
            let objective = -expected_advantage(&occ, &reward_adv, t);
            if best.is_none_or(|(b, _)| objective < b) {
                best = Some((objective, id));
            }
        }
    }
    match best {
        Some((objective, id)) => {
            let mut rest = id;
            for s in 0..s_n {
                candidate.set_row(t, s, &grid.points()[(rest % base) as usize])?;
                rest /= base;
            }
            Ok(StepSolution { policy: candidate, feasible: true, objective })
        }
        None => {
            for s in 0..s_n {
                candidate.set_row(t, s, prev.row(t, s))?;
            }
            let occ = reach_probabilities(cmdp, &candidate)?;
            let objective = -expected_advantage(&occ, &reward_adv, t);
            Ok(StepSolution { policy: candidate, feasible: false, objective })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpoceResult {
    pub policy: PolicySequence,
    /// `(J, J_C)` after every iteration.
    pub history: Vec<(f64, Vec<f64>)>,
    pub infeasible_steps: usize,
}

/// Backward-in-time constrained policy iteration with exact step solutions.
/// Stops early once an iteration leaves the policy unchanged.
pub fn ipoce(cmdp: &EpisodicCmdp, init: &PolicySequence, grid: &PolicyGrid, iterations: usize, budget: u64) -> Result<IpoceResult> {
    let expected = expected_signals(cmdp)?;
    let mut prev = init.clone();
    let mut history = Vec::new();
    let mut infeasible_steps = 0;
    for _ in 0..iterations {
        let mut current = prev.clone();
        for t in (0..cmdp.horizon()).rev() {
            let sol = ipoce_exact_step(cmdp, &prev, &current, t, grid, budget)?;
            if !sol.feasible {
                infeasible_steps += 1;
            }
            current = sol.policy;
        }
        history.push(evaluate_policy(cmdp, &expected, &current)?);
        let done = current == prev;
        prev = current;
        if done {
            break;
        }
    }
    Ok(IpoceResult { policy: prev, history, infeasible_steps })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theorem1Row {
    pub beta: f64,
    pub lambdas: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Ids of grid minimizers of the damped objective.
    pub damped_argmin: Vec<u128>,
    pub coincident: bool,
    /// Whether the lowest-id damped minimizer satisfies every constraint.
    pub minimizer_feasible: bool,
    pub minimizer_costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theorem1Report {
    /// Ids of grid maximizers of `J` subject to the constraints.
    pub constrained_argmin: Vec<u128>,
    pub rows: Vec<Theorem1Row>,
    pub smallest_coincident_beta: Option<f64>,
    /// Once coincident at a tested β, coincident for every larger tested β.
    pub monotone: bool,
}

pub const MULTIPLIER_TOL: f64 = 1e-8;
pub const MULTIPLIER_ITERATIONS: usize = 1000;

/// Compares, per β, the grid minimizers of the damped objective
/// `−Σ_h E[A^{ref}_h] + (β/2) Σ_i (max{0, Ψ_i + λ_i/β}² − λ_i²/β²)` at
/// multipliers iterated with `λ ← max(0, λ + βΨ(π_λ))`, against the grid
/// solutions of the constrained problem. The reference policy is uniform and
/// the whole sequence is optimized.
pub fn theorem1_equivalence_check(cmdp: &EpisodicCmdp, grid: &PolicyGrid, betas: &[f64], budget: u64) -> Result<Theorem1Report> {
    let (h_n, s_n, a_n) = (cmdp.horizon(), cmdp.num_states(), cmdp.num_actions());
    let n = grid.sequence_count(h_n, s_n);
    check_budget(n, budget)?;
    let reference = PolicySequence::uniform(h_n, s_n, a_n);
    let reward_adv = advantage_tables(&exact_value_functions(cmdp, &reference, Signal::Reward)?);
    let cost_adv = (0..cmdp.num_constraints())
        .map(|i| Ok(advantage_tables(&exact_value_functions(cmdp, &reference, Signal::Cost(i))?)))
        .collect::<Result<Vec<_>>>()?;
    let ref_costs = (0..cmdp.num_constraints())
        .map(|i| exact_objective(cmdp, &reference, Signal::Cost(i)))
        .collect::<Result<Vec<_>>>()?;

    // Surrogate objective and Ψ per grid policy.
    let mut objective = Vec::with_capacity(n as usize);
    let mut psi = Vec::with_capacity(n as usize);
    for id in 0..n {
        let occ = reach_probabilities(cmdp, &grid.policy(id, h_n, s_n)?)?;
        objective.push(-expected_advantage(&occ, &reward_adv, 0));
        psi.push(
            cost_adv
                .iter()
                .zip(&ref_costs)
                .zip(cmdp.thresholds())
                .map(|((adv, jc), d)| expected_advantage(&occ, adv, 0) + (jc - d))
                .collect::<Vec<f64>>(),
        );
    }
    let feasible = |p: &[f64]| p.iter().all(|x| *x <= FEASIBILITY_TOL);
    let best_constrained =
        (0..n as usize).filter(|&i| feasible(&psi[i])).map(|i| objective[i]).fold(f64::INFINITY, f64::min);
    let constrained_argmin: Vec<u128> = (0..n as usize)
        .filter(|&i| feasible(&psi[i]) && objective[i] <= best_constrained + ARGMIN_TOL)
        .map(|i| i as u128)
        .collect();

    let damped = |i: usize, lambdas: &[f64], beta: f64| -> f64 {
        objective[i] + psi[i].iter().zip(lambdas).map(|(p, l)| damped_penalty(*p, *l, beta)).sum::<f64>()
    };
    let argmin = |lambdas: &[f64], beta: f64| -> (Vec<u128>, usize) {
        let values: Vec<f64> = (0..n as usize).map(|i| damped(i, lambdas, beta)).collect();
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let set: Vec<u128> = (0..n as usize).filter(|&i| values[i] <= min + ARGMIN_TOL).map(|i| i as u128).collect();
        let first = set[0] as usize;
        (set, first)
    };

    let mut rows = Vec::with_capacity(betas.len());
    for &beta in betas {
        if !(beta > 0.0) {
            return Err(Error::InvalidConfig(alloc::format!("damping factor must be positive, got {beta}")));
        }
        let mut lambdas = vec![0.0; cmdp.num_constraints()];
        let mut converged = false;
        let mut iterations = 0;
        while iterations < MULTIPLIER_ITERATIONS {
            iterations += 1;
            let (_, first) = argmin(&lambdas, beta);
            let next: Vec<f64> = lambdas.iter().zip(&psi[first]).map(|(l, p)| crate::ecop::lambda_step(*l, *p, beta)).collect();
            let delta = next.iter().zip(&lambdas).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            lambdas = next;
            if delta <= MULTIPLIER_TOL {
                converged = true;
                break;
            }
        }
        let (set, first) = argmin(&lambdas, beta);
        let minimizer_costs: Vec<f64> = psi[first].iter().zip(cmdp.thresholds()).map(|(p, d)| p + d).collect();
        rows.push(Theorem1Row {
            beta,
            coincident: set == constrained_argmin,
            minimizer_feasible: feasible(&psi[first]),
            lambdas,
            converged,
            iterations,
            damped_argmin: set,
            minimizer_costs,
        });
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|a, b| rows[*a].beta.total_cmp(&rows[*b].beta));
    let smallest_coincident_beta = order.iter().find(|i| rows[**i].coincident).map(|i| rows[*i].beta);
    let monotone = match order.iter().position(|i| rows[*i].coincident) {
        Some(p) => order[p..].iter().all(|i| rows[*i].coincident),
        None => true,
    };
    Ok(Theorem1Report { constrained_argmin, rows, smallest_coincident_beta, monotone })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualOptimum {
    /// Optimal constrained value `max_π J(π)` s.t. `J_C(π) ≤ d`.
    pub value: f64,
    pub multiplier: f64,
    /// Deterministic optima of `r − νC` just below and above the optimal
    /// multiplier; the constrained optimum mixes them.
    pub policies: [PolicySequence; 2],
}

/// Exact single-constraint optimum via the Lagrangian dual
/// `min_{ν ≥ 0} [max_π (J(π) − ν J_C(π)) + ν d]`, which has no duality gap
/// over randomized policies. Returns `None` when the constraint cannot be met.
pub fn lagrangian_dual_optimum(cmdp: &EpisodicCmdp) -> Result<Option<DualOptimum>> {
    if cmdp.num_constraints() != 1 {
        return Err(Error::InvalidConfig("the dual oracle handles exactly one constraint".into()));
    }
    let d = cmdp.thresholds()[0];
    let dual = |nu: f64| -> Result<(f64, f64, PolicySequence)> {
        let (policy, value) = optimal_deterministic_policy(cmdp, &[nu])?;
        let cost = exact_objective(cmdp, &policy, Signal::Cost(0))?;
        Ok((value + nu * d, cost, policy))
    };
    let (g0, c0, p0) = dual(0.0)?;
    if c0 <= d + FEASIBILITY_TOL {
        return Ok(Some(DualOptimum { value: g0 - 0.0, multiplier: 0.0, policies: [p0.clone(), p0] }));
    }
    let mut hi = 1.0;
    loop {
        let (_, c, _) = dual(hi)?;
        if c <= d + FEASIBILITY_TOL {
            break;
        }
        hi *= 2.0;
        if hi > 1e12 {
            return Ok(None);
        }
    }
    // Bisection on the sign of the subgradient d − J_C(π_ν).
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (_, c, _) = dual(mid)?;
        if c > d + FEASIBILITY_TOL {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (g_lo, _, p_lo) = dual(lo)?;
    let (g_hi, _, p_hi) = dual(hi)?;
    let (value, multiplier) = if g_lo <= g_hi { (g_lo, lo) } else { (g_hi, hi) };
    Ok(Some(DualOptimum { value, multiplier, policies: [p_lo, p_hi] }))
}

/// Random CMDP with Dirichlet-like rows, rewards and costs in `[0, 1)`, and
/// thresholds in `[0, H)`.
pub fn random_cmdp(rng: &mut SeededRng, num_states: usize, num_actions: usize, horizon: usize, num_constraints: usize) -> EpisodicCmdp {
    let n = num_states * num_actions * num_states;
    let mut transition = vec![0.0; n];
    for row in transition.chunks_mut(num_states) {
        let mut total = 0.0;
        for p in row.iter_mut() {
            *p = -libm::log(1.0 - rng.random::<f64>());
            total += *p;
        }
        for p in row.iter_mut() {
            *p /= total;
        }
    }
    let reward = (0..n).map(|_| rng.random::<f64>()).collect();
    let costs = (0..num_constraints).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
    let thresholds = (0..num_constraints).map(|_| rng.random::<f64>() * horizon as f64).collect();
    let mut initial: Vec<f64> = (0..num_states).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = initial.iter().sum();
    for p in &mut initial {
        *p /= total;
    }
    EpisodicCmdp::new(num_states, num_actions, horizon, transition, reward, costs, thresholds, initial)
        .expect("generated rows are normalized")
}

/// Random stochastic policy sequence.
pub fn random_policy(rng: &mut SeededRng, horizon: usize, num_states: usize, num_actions: usize) -> PolicySequence {
    let mut probs = Vec::with_capacity(horizon * num_states * num_actions);
    for _ in 0..horizon * num_states {
        let row: Vec<f64> = (0..num_actions).map(|_| rng.random::<f64>() + 1e-3).collect();
        let total: f64 = row.iter().sum();
        probs.extend(row.iter().map(|p| p / total));
    }
    PolicySequence::new(horizon, num_states, num_actions, probs).expect("rows are normalized")
}
