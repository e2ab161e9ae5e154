//! Small-instance training oracle: on a cell where demand comfortably fits
//! capacity, a short constrained run must learn to allocate fast enough to
//! beat the pure denial-avoidance baseline on latency, while both keep the
//! denial rate inside the budget.

use slicesim_core::agent::{evaluate, train, Mode};
use slicesim_core::config::ExperimentConfig;

/// Tiny uncongested cell: ~4 requests of 1 KB per slot against 4e6
/// cycles/slot, so full-rate service finishes within a slot and the policy
/// alone decides the latency/denial trade-off.
fn toy_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.env.capacity = 4e6;
    cfg.env.min_alloc = 0.5e6;
    cfg.env.arrival_rate = 4.0;
    cfg.env.size_min_bytes = 1000.0;
    cfg.env.size_max_bytes = 1000.0;
    cfg.agent.episodes = 10;
    cfg.agent.slots_per_episode = 200;
    cfg.agent.batch_size = 32;
    cfg.agent.warmup_transitions = Some(64);
    cfg.agent.replay_capacity = 4000;
    cfg.agent.lr_critic_reward = 1e-3;
    cfg.agent.lr_critic_cost = 1e-3;
    cfg.agent.lr_actor = 1e-3;
    cfg
}

#[test]
fn constrained_policy_outruns_the_denial_avoidance_baseline() {
    let cfg = toy_config();
    let constrained = train(&cfg, Mode::Constrained, false, 17).unwrap();
    let min_dos = train(&cfg, Mode::MinDos, false, 17).unwrap();

    let (con, _) = evaluate(&cfg, &constrained.agent, false, 91, 3, false).unwrap();
    let (md, _) = evaluate(&cfg, &min_dos.agent, false, 91, 3, false).unwrap();

    assert!(
        con.dos_rate <= cfg.agent.eps_max + 0.01,
        "constrained denial rate {} blew the budget",
        con.dos_rate
    );
    assert!(md.dos_rate < 0.005, "denial-avoidance baseline denied {}", md.dos_rate);
    assert!(
        con.mean_latency_norm <= md.mean_latency_norm,
        "constrained latency {} did not beat baseline {}",
        con.mean_latency_norm,
        md.mean_latency_norm
    );
}
