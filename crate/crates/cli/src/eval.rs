//! Evaluation of a saved policy on an environment.

use anyhow::{ensure, Result};
use ecop_core::approx::{PolicyApproximator, PolicyKind};
use ecop_core::cmdp::{exact_objective, Signal};
use ecop_core::envs::{collect_rollout, Environment};
use ecop_core::rng::derive_seed;

use crate::io::{mean_and_sample_std, Table};

/// Exact `J` and `J_{C_i}` when the environment has a model and the policy a
/// table form, plus Monte-Carlo means with standard errors over `episodes`.
pub fn evaluate(policy: &PolicyApproximator, env: &dyn Environment, episodes: usize, seed: u64) -> Result<Table> {
    let spec = env.spec();
    ensure!(
        policy.horizon() == spec.horizon,
        "policy horizon {} does not match environment horizon {}",
        policy.horizon(),
        spec.horizon
    );
    if let PolicyKind::TabularSoftmax { num_states, .. } = *policy.kind() {
        ensure!(spec.num_states() == Some(num_states), "tabular policy over {num_states} states does not fit {}", spec.name);
    }
    let m = spec.num_constraints();
    let mut header = vec!["method".to_string(), "episodes".to_string(), "J".to_string(), "J_se".to_string()];
    for i in 1..=m {
        header.push(format!("J_C{i}"));
        header.push(format!("J_C{i}_se"));
    }
    let mut table = Table::new(header);

    if let (Some(cmdp), Some(s_n)) = (env.to_cmdp(), spec.num_states()) {
        if let Ok(seq) = policy.to_policy_sequence(s_n) {
            let mut row = vec!["exact".to_string(), String::new(), exact_objective(&cmdp, &seq, Signal::Reward)?.to_string(), "0".into()];
            for i in 0..m {
                row.push(exact_objective(&cmdp, &seq, Signal::Cost(i))?.to_string());
                row.push("0".into());
            }
            table.rows.push(row);
        }
    }

    if episodes > 0 {
        let mut rewards = Vec::with_capacity(episodes);
        let mut costs = vec![Vec::with_capacity(episodes); m];
        for e in 0..episodes {
            let roll = collect_rollout(env, policy, derive_seed(seed, &[e as u64]))?;
            rewards.push(roll.total_reward());
            for (i, c) in costs.iter_mut().enumerate() {
                c.push(roll.total_cost(i));
            }
        }
        let se = |v: &[f64]| {
            let (mean, std) = mean_and_sample_std(v);
            (mean, std / (v.len() as f64).sqrt())
        };
        let (j, j_se) = se(&rewards);
        let mut row = vec!["monte_carlo".to_string(), episodes.to_string(), j.to_string(), j_se.to_string()];
        for c in &costs {
            let (mean, err) = se(c);
            row.push(mean.to_string());
            row.push(err.to_string());
        }
        table.rows.push(row);
    }
    Ok(table)
}
