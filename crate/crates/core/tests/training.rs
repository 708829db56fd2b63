use ecop_core::approx::{finite_diff_gradient, relative_error, Action, Observation, PolicyApproximator};
use ecop_core::baselines::{p3o_penalty_train, ppo_lagrangian_train};
use ecop_core::cmdp::{optimal_deterministic_policy, EpisodicCmdp};
use ecop_core::ecop::{
    ecop_train, final_loss, final_loss_and_gradient, CostSurrogate, PenaltyState, SurrogateBatch, SurrogateRecord,
    TrainConfig, TrainingRecord,
};
use ecop_core::envs::{CmdpEnv, Environment, GridWorld, GridWorldParams, HAZARD_LAYOUT};
use ecop_core::rng::rng_from_seed;
use rand::Rng;

fn hazard(threshold: f64) -> GridWorld {
    GridWorld::hazard(GridWorldParams {
        layout: HAZARD_LAYOUT.into(),
        horizon: 30,
        slip: 0.1,
        thresholds: vec![threshold],
        corner_start: false,
    })
    .unwrap()
}

fn quick(seed: u64, episodes: usize) -> TrainConfig {
    TrainConfig { episodes, batch_episodes: 8, policy_lr: 0.05, seed, ..Default::default() }
}

/// Two states, two actions; the greedy action pays 1 and usually lands in
/// the costly state, the cautious one pays 0.3.
fn two_state(threshold: f64) -> EpisodicCmdp {
    let mut transition = vec![0.0; 8];
    let mut reward = vec![0.0; 8];
    let mut cost = vec![0.0; 8];
    for s in 0..2 {
        for a in 0..2 {
            let p = if a == 1 { 0.8 } else { 0.1 };
            for s2 in 0..2 {
                let i = (s * 2 + a) * 2 + s2;
                transition[i] = if s2 == 1 { p } else { 1.0 - p };
                reward[i] = if a == 1 { 1.0 } else { 0.3 };
                cost[i] = s2 as f64;
            }
        }
    }
    EpisodicCmdp::new(2, 2, 4, transition, reward, vec![cost], vec![threshold], vec![1.0, 0.0]).unwrap()
}

fn tail_mean(records: &[TrainingRecord], n: usize, f: impl Fn(&TrainingRecord) -> f64) -> f64 {
    let tail = &records[records.len() - n..];
    tail.iter().map(f).sum::<f64>() / n as f64
}

#[test]
fn unconstrained_gridworld_reaches_ninety_percent_of_dp_optimum() {
    let env = hazard(f64::INFINITY);
    let (_, optimum) = optimal_deterministic_policy(&env.to_cmdp().unwrap(), &[0.0]).unwrap();
    let config = TrainConfig { episodes: 300, batch_episodes: 256, policy_lr: 0.05, seed: 1, ..Default::default() };
    let records = ecop_train(&env, config).unwrap();
    let final_j = tail_mean(&records, 20, |r| r.reward);
    assert!(final_j >= 0.9 * optimum, "final J {final_j} vs optimum {optimum}");
}

#[test]
fn fixed_seed_gives_identical_record_streams() {
    let env = hazard(2.0);
    let a = ecop_train(&env, quick(4, 15)).unwrap();
    let b = ecop_train(&env, quick(4, 15)).unwrap();
    assert_eq!(a, b);
    let c = ecop_train(&env, quick(5, 15)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn multipliers_stay_nonnegative_and_damping_monotone() {
    let env = hazard(2.0);
    let records = ecop_train(&env, quick(2, 60)).unwrap();
    let beta_max = TrainConfig::default().beta_max;
    for pair in records.windows(2) {
        assert!(pair[1].beta >= pair[0].beta);
    }
    for r in &records {
        assert!(r.lambda_max.iter().all(|l| *l >= 0.0));
        assert!(r.beta <= beta_max);
        assert_eq!(r.seconds, 0.0);
    }
}

#[test]
fn without_constraints_ecop_equals_zero_penalty_p3o_bit_for_bit() {
    let env = hazard(2.0);
    let ecop = ecop_train(&env, TrainConfig { active_constraints: Some(vec![]), ..quick(9, 20) }).unwrap();
    let p3o = p3o_penalty_train(&env, quick(9, 20), 0.0).unwrap();
    let strip = |rs: &[TrainingRecord]| rs.iter().map(|r| (r.reward, r.costs.clone(), r.loss)).collect::<Vec<_>>();
    assert_eq!(strip(&ecop), strip(&p3o));
}

#[test]
fn infinite_budget_lagrangian_matches_unconstrained_ecop() {
    let env = hazard(f64::INFINITY);
    let ecop = ecop_train(&env, TrainConfig { active_constraints: Some(vec![]), ..quick(3, 20) }).unwrap();
    let ppo = ppo_lagrangian_train(&env, quick(3, 20), 0.05).unwrap();
    for (a, b) in ecop.iter().zip(&ppo) {
        assert!((a.reward - b.reward).abs() <= 1e-9);
        assert!((a.loss - b.loss).abs() <= 1e-9);
        assert!(b.lambda_max.iter().all(|nu| *nu == 0.0));
    }
}

#[test]
fn huge_penalty_keeps_a_feasible_start_feasible() {
    let env = CmdpEnv::new("two_state", two_state(2.0));
    let config = TrainConfig { episodes: 200, batch_episodes: 64, policy_lr: 0.05, seed: 0, ..Default::default() };
    let records = p3o_penalty_train(&env, config, 1e6).unwrap();
    assert!(records[0].costs[0] <= 2.0, "start is not feasible: {}", records[0].costs[0]);
    let final_cost = tail_mean(&records, 20, |r| r.costs[0]);
    assert!(final_cost <= 2.0 * 1.05, "final J_C {final_cost}");
}

#[test]
fn constrained_training_on_small_cmdp_respects_budget() {
    let env = CmdpEnv::new("two_state", two_state(1.5));
    let config = TrainConfig { episodes: 300, batch_episodes: 64, policy_lr: 0.05, seed: 0, ..Default::default() };
    let records = ecop_train(&env, config).unwrap();
    let final_cost = tail_mean(&records, 50, |r| r.costs[0]);
    assert!(final_cost <= 1.5 * 1.05, "final J_C {final_cost}");
    let unconstrained = ecop_train(&CmdpEnv::new("two_state", two_state(f64::INFINITY)), TrainConfig { episodes: 300, batch_episodes: 64, policy_lr: 0.05, seed: 0, ..Default::default() }).unwrap();
    assert!(tail_mean(&unconstrained, 50, |r| r.costs[0]) > 1.5 * 1.05);
}

#[test]
fn final_loss_gradient_matches_finite_differences() {
    let mut rng = rng_from_seed(21);
    let (h_n, s_n, a_n) = (3, 3, 2);
    let behaviour = PolicyApproximator::tabular(h_n, s_n, a_n);
    let mut records = Vec::new();
    for _ in 0..12 {
        for h in 0..h_n {
            let s = rng.random_range(0..s_n);
            let a = rng.random_range(0..a_n);
            let obs = Observation::Discrete(s);
            let action = Action::Discrete(a);
            records.push(SurrogateRecord {
                step: h,
                log_prob_old: behaviour.log_prob(h, &obs, &action).unwrap(),
                obs,
                action,
                reward_adv: rng.random_range(-2.0..2.0),
                cost_adv: vec![rng.random_range(-2.0..2.0)],
            });
        }
    }
    let batch = SurrogateBatch::new(h_n, records, vec![1.2], vec![1.0]).unwrap();
    let penalty = PenaltyState::new(h_n, 1, 0.7, 3.0, 20.0, 1.5, 0.2).unwrap();
    let mut checked = 0;
    for trial in 0..10 {
        let theta: Vec<f64> = behaviour.params().values().iter().map(|_| rng.random_range(-0.1..0.1)).collect();
        let policy = behaviour.with_params(theta.clone()).unwrap();
        let t = trial % h_n;
        let eval = final_loss_and_gradient(&batch, &policy, &penalty, t, CostSurrogate::Pessimistic).unwrap();
        let fd = finite_diff_gradient(
            |th| final_loss(&batch, &behaviour.with_params(th.to_vec()).unwrap(), &penalty, t, CostSurrogate::Pessimistic).unwrap(),
            &theta,
            1e-6,
        )
        .unwrap();
        let probe = |th: &[f64]| final_loss_and_gradient(&batch, &behaviour.with_params(th.to_vec()).unwrap(), &penalty, t, CostSurrogate::Pessimistic).unwrap().signature;
        let smooth = theta.iter().enumerate().all(|(i, _)| {
            let mut up = theta.clone();
            let mut down = theta.clone();
            up[i] += 1e-6;
            down[i] -= 1e-6;
            probe(&up) == eval.signature && probe(&down) == eval.signature
        });
        if smooth {
            checked += 1;
            let err = relative_error(eval.gradient.as_ref().unwrap(), &fd, 1e-8);
            assert!(err <= 1e-4, "trial {trial}: relative error {err}");
        }
    }
    assert!(checked >= 5, "only {checked} smooth probes");
}

#[test]
fn environments_report_their_exact_models() {
    let env = hazard(2.0);
    let cmdp = env.to_cmdp().unwrap();
    assert_eq!(cmdp.num_states(), 36);
    assert_eq!(cmdp.num_actions(), 4);
    assert_eq!(cmdp.horizon(), 30);
    assert_eq!(cmdp.thresholds(), &[2.0]);
    let nav = GridWorld::navigation_default();
    assert_eq!(nav.spec().num_constraints(), 2);
    assert_eq!(nav.to_cmdp().unwrap().num_states(), 64);
}
