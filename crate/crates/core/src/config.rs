//! Experiment configuration: schema, defaults, validation and TOML I/O.
//!
//! An empty config file yields the built-in defaults, which match the
//! reference cell parameterization exactly (10 base stations, 1.6e9
//! cycles/slot capacity, 1e7 cycles/slot allocation granularity, Poisson(1000)
//! arrivals of 1-10 KB requests, 330 cycles/byte service coefficient,
//! epsilon_max = 0.02, twin discounts 0.95, critic/actor/dual step sizes
//! 5e-4 / 2e-4 / 0.1, minibatch 512). Every key is optional; unknown keys
//! are rejected with an error naming the key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Run-level settings shared by all subcommands.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed used when the CLI does not pass `--seed`.
    pub seed: Option<u64>,
    /// Output directory used when the CLI does not pass `--out`.
    pub out_dir: Option<PathBuf>,
    /// When true, `evaluate` writes one JSONL record per slot.
    pub dump_trajectory: bool,
}

/// Cell and workload parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Miner CPU capacity F, cycles per slot.
    pub capacity: f64,
    /// Allocation granularity delta_f, cycles per slot. Also the smallest
    /// nonzero rate the action mapping can emit.
    pub min_alloc: f64,
    /// Mean request count per slot (Poisson).
    pub arrival_rate: f64,
    /// Arrival truncation cap as a multiple of `arrival_rate`. Bounds the
    /// worst-case demand so latency normalization is finite.
    pub arrival_cap_factor: f64,
    /// Smallest request payload, bytes.
    pub size_min_bytes: f64,
    /// Largest request payload, bytes.
    pub size_max_bytes: f64,
    /// Service CPU cost, cycles per byte.
    pub kappa_sp: f64,
    /// Blockchain bookkeeping CPU cost, cycles per byte.
    pub kappa_bc: f64,
    /// Fixed per-block header size, bytes.
    pub block_header_bytes: f64,
    /// Per-request transaction record size, bytes.
    pub block_bytes_per_request: f64,
    /// Radio bandwidth of the cell, Gbit/s. Recorded alongside the compute
    /// parameters for completeness; the simulator allocates CPU only and
    /// never reads it.
    pub bandwidth_gbps: f64,
    /// Multiply the service demand by the request count, on top of the sum
    /// of request sizes. Off by default: the default demand is
    /// `kappa_sp * sum(sizes)`, which matches the stated meaning of "total
    /// cycles to satisfy all requests".
    pub scale_service_demand_by_count: bool,
    /// Compute the backlog feature as the plain sum of remaining slots over
    /// capacity instead of weighting each lease by its held rate. Off by
    /// default; the weighted form keeps the feature in [0, 1].
    pub unweighted_backlog: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            capacity: 1.6e9,
            min_alloc: 0.01e9,
            arrival_rate: 1000.0,
            arrival_cap_factor: 2.0,
            size_min_bytes: 1000.0,
            size_max_bytes: 10_000.0,
            kappa_sp: 330.0,
            kappa_bc: 330.0,
            block_header_bytes: 500.0,
            block_bytes_per_request: 50.0,
            bandwidth_gbps: 10.0,
            scale_service_demand_by_count: false,
            unweighted_backlog: false,
        }
    }
}

impl EnvConfig {
    /// Truncation cap for the per-slot request count.
    pub fn lambda_cap(&self) -> u64 {
        (self.arrival_rate * self.arrival_cap_factor).round() as u64
    }

    /// Worst-case total demand in cycles, reached at the arrival cap with
    /// every request at the maximum size.
    pub fn max_total_demand(&self) -> f64 {
        let cap = self.lambda_cap() as f64;
        let max_payload = cap * self.size_max_bytes;
        let service = if self.scale_service_demand_by_count {
            self.kappa_sp * cap * max_payload
        } else {
            self.kappa_sp * max_payload
        };
        let chain = self.kappa_bc * (self.block_header_bytes + self.block_bytes_per_request * cap);
        service + chain
    }

    /// Latency normalizer: slots needed for the worst-case demand at the
    /// minimum allocation rate.
    pub fn tau_max(&self) -> f64 {
        self.max_total_demand() / self.min_alloc
    }

    /// Lease-window horizon in whole slots.
    pub fn horizon(&self) -> u64 {
        self.tau_max().ceil() as u64
    }
}

/// Optimizer choice for all three networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam,
    Sgd,
}

/// Training-stack parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    /// Reward discount gamma_r.
    pub gamma_reward: f64,
    /// Cost discount gamma_c.
    pub gamma_cost: f64,
    /// Per-slot denial budget epsilon_max. The dual budget is
    /// `eps_max / (1 - gamma_cost)`.
    pub eps_max: f64,
    /// Reward-critic step size.
    pub lr_critic_reward: f64,
    /// Cost-critic step size.
    pub lr_critic_cost: f64,
    /// Actor step size.
    pub lr_actor: f64,
    /// Dual-variable step size.
    pub lr_dual: f64,
    /// Minibatch size M.
    pub batch_size: usize,
    /// Target-network blend factor per training step.
    pub polyak: f64,
    /// Exploration noise mean-reversion rate.
    pub ou_theta: f64,
    /// Exploration noise scale at the start of training.
    pub ou_sigma: f64,
    /// Exploration noise scale at the end of training (linear decay).
    pub ou_sigma_final: f64,
    /// Training episodes.
    pub episodes: u32,
    /// Slots per episode.
    pub slots_per_episode: u32,
    /// Replay buffer capacity.
    pub replay_capacity: usize,
    /// Transitions required before updates begin. Defaults to twice the
    /// minibatch size when absent.
    pub warmup_transitions: Option<usize>,
    /// Global L2 gradient clip applied before each optimizer step.
    pub grad_clip: f64,
    pub optimizer: Optimizer,
    /// Episodes used by `evaluate` (greedy rollouts, no learning).
    pub eval_episodes: u32,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma_reward: 0.95,
            gamma_cost: 0.95,
            eps_max: 0.02,
            lr_critic_reward: 5e-4,
            lr_critic_cost: 5e-4,
            lr_actor: 2e-4,
            lr_dual: 0.1,
            batch_size: 512,
            polyak: 0.005,
            ou_theta: 0.15,
            ou_sigma: 0.2,
            ou_sigma_final: 0.01,
            episodes: 60,
            slots_per_episode: 1000,
            replay_capacity: 100_000,
            warmup_transitions: None,
            grad_clip: 1.0,
            optimizer: Optimizer::Adam,
            eval_episodes: 5,
        }
    }
}

impl AgentConfig {
    pub fn warmup(&self) -> usize {
        self.warmup_transitions.unwrap_or(2 * self.batch_size)
    }

    /// Discounted-cost budget the dual variable enforces.
    pub fn dual_budget(&self) -> f64 {
        self.eps_max / (1.0 - self.gamma_cost)
    }
}

/// Reputation protocol parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReputationConfig {
    /// Number of base stations in the cell.
    pub num_bs: usize,
    /// Weight of fresh feedback against the historical component.
    pub feedback_weight: f64,
    /// History ring length in slots.
    pub history_len: usize,
    /// Geometric decay of history weights: weight(k) ~ (1 - decay)^(k-1),
    /// renormalized so a constant history is a fixed point.
    pub history_decay: f64,
    /// Minimum reputation for committee membership.
    pub committee_threshold: f64,
    /// Committee size (top reputations among qualifiers).
    pub committee_size: usize,
    /// Users polled for feedback each served slot.
    pub feedback_users: usize,
    /// Probability that a denial complaint is actually recorded. Service
    /// receipts are always recorded; complaints are lossier, so a persistent
    /// 50% denial attacker settles near reputation 0.6 rather than 0.5.
    pub complaint_report_prob: f64,
}

impl Default for ReputationConfig {
    fn default() -> Self {
        ReputationConfig {
            num_bs: 10,
            feedback_weight: 0.2,
            history_len: 10,
            history_decay: 0.1,
            committee_threshold: 0.8,
            committee_size: 4,
            feedback_users: 32,
            complaint_report_prob: 0.65,
        }
    }
}

/// One step of a denial schedule: `prob` applies from `from_slot` onward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleStep {
    pub from_slot: u64,
    pub prob: f64,
}

/// Denial behavior of one tracked or malicious base station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackProfile {
    pub bs_id: usize,
    pub schedule: Vec<ScheduleStep>,
}

impl AttackProfile {
    pub fn constant(bs_id: usize, prob: f64) -> Self {
        AttackProfile { bs_id, schedule: vec![ScheduleStep { from_slot: 0, prob }] }
    }

    /// Denial probability in effect at `slot`.
    pub fn prob_at(&self, slot: u64) -> f64 {
        let mut p = 0.0;
        for step in &self.schedule {
            if slot >= step.from_slot {
                p = step.prob;
            } else {
                break;
            }
        }
        p
    }
}

/// Attack scenario used by training and evaluation under `--attacks`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    /// Base stations that deny slots on purpose while mining.
    pub malicious_ids: Vec<usize>,
    /// Bernoulli denial probability for malicious miners.
    pub deny_prob: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig { malicious_ids: vec![0, 1, 2], deny_prob: 0.5 }
    }
}

/// Profiles traced by the standalone reputation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReputationExperimentConfig {
    /// Slots simulated per trace.
    pub slots: u64,
    /// Traced profiles. Empty means the standard set: steady denial rates
    /// 0, 0.25 and 0.5 plus one piecewise schedule.
    pub profiles: Vec<AttackProfile>,
}

impl Default for ReputationExperimentConfig {
    fn default() -> Self {
        ReputationExperimentConfig { slots: 1000, profiles: Vec::new() }
    }
}

impl ReputationExperimentConfig {
    /// Profiles to trace, falling back to the standard set.
    pub fn effective_profiles(&self) -> Vec<AttackProfile> {
        if !self.profiles.is_empty() {
            return self.profiles.clone();
        }
        vec![
            AttackProfile::constant(0, 0.0),
            AttackProfile::constant(1, 0.25),
            AttackProfile::constant(2, 0.5),
            // The piecewise profile reverses direction at every breakpoint
            // so the trace shows both collapse and recovery twice.
            AttackProfile {
                bs_id: 3,
                schedule: vec![
                    ScheduleStep { from_slot: 0, prob: 0.0 },
                    ScheduleStep { from_slot: 250, prob: 0.5 },
                    ScheduleStep { from_slot: 500, prob: 0.1 },
                    ScheduleStep { from_slot: 750, prob: 0.6 },
                ],
            },
        ]
    }
}

/// Top-level experiment configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run: RunConfig,
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub reputation: ReputationConfig,
    pub attack: AttackConfig,
    pub reputation_experiment: ReputationExperimentConfig,
}

fn check(ok: bool, key: &str, reason: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(SimError::config(key, reason))
    }
}

impl ExperimentConfig {
    /// Parses and validates a TOML config. An empty file is valid and means
    /// all defaults.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::io(path.display().to_string(), e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)
            .map_err(|e| SimError::config("<toml>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml())
            .map_err(|e| SimError::io(path.display().to_string(), e))
    }

    /// Range-checks every field, naming the offending key on failure.
    pub fn validate(&self) -> Result<()> {
        let e = &self.env;
        check(e.capacity > 0.0 && e.capacity.is_finite(), "env.capacity", "must be positive and finite")?;
        check(e.min_alloc > 0.0 && e.min_alloc <= e.capacity, "env.min_alloc", "must be in (0, capacity]")?;
        check(e.arrival_rate > 0.0 && e.arrival_rate.is_finite(), "env.arrival_rate", "must be positive")?;
        check(e.arrival_cap_factor >= 1.0, "env.arrival_cap_factor", "must be >= 1")?;
        check(e.size_min_bytes > 0.0, "env.size_min_bytes", "must be positive")?;
        check(e.size_max_bytes >= e.size_min_bytes, "env.size_max_bytes", "must be >= size_min_bytes")?;
        check(e.kappa_sp > 0.0, "env.kappa_sp", "must be positive")?;
        check(e.kappa_bc >= 0.0, "env.kappa_bc", "must be nonnegative")?;
        check(e.block_header_bytes >= 0.0, "env.block_header_bytes", "must be nonnegative")?;
        check(e.block_bytes_per_request >= 0.0, "env.block_bytes_per_request", "must be nonnegative")?;
        check(e.bandwidth_gbps >= 0.0, "env.bandwidth_gbps", "must be nonnegative")?;

        let a = &self.agent;
        check((0.0..1.0).contains(&a.gamma_reward), "agent.gamma_reward", "must be in [0, 1)")?;
        check((0.0..1.0).contains(&a.gamma_cost), "agent.gamma_cost", "must be in [0, 1)")?;
        check(a.eps_max > 0.0 && a.eps_max < 1.0, "agent.eps_max", "must be in (0, 1)")?;
        check(a.lr_critic_reward > 0.0, "agent.lr_critic_reward", "must be positive")?;
        check(a.lr_critic_cost > 0.0, "agent.lr_critic_cost", "must be positive")?;
        check(a.lr_actor > 0.0, "agent.lr_actor", "must be positive")?;
        check(a.lr_dual > 0.0, "agent.lr_dual", "must be positive")?;
        check(a.batch_size >= 1, "agent.batch_size", "must be at least 1")?;
        check(a.polyak > 0.0 && a.polyak <= 1.0, "agent.polyak", "must be in (0, 1]")?;
        check(a.ou_theta >= 0.0 && a.ou_theta <= 1.0, "agent.ou_theta", "must be in [0, 1]")?;
        check(a.ou_sigma >= 0.0, "agent.ou_sigma", "must be nonnegative")?;
        check(a.ou_sigma_final >= 0.0, "agent.ou_sigma_final", "must be nonnegative")?;
        check(a.slots_per_episode >= 1, "agent.slots_per_episode", "must be at least 1")?;
        check(a.replay_capacity >= a.batch_size, "agent.replay_capacity", "must hold at least one minibatch")?;
        if let Some(w) = a.warmup_transitions {
            check(w >= a.batch_size, "agent.warmup_transitions", "must be >= batch_size")?;
        }
        check(a.grad_clip > 0.0, "agent.grad_clip", "must be positive")?;

        let r = &self.reputation;
        check(r.num_bs >= 1, "reputation.num_bs", "must be at least 1")?;
        check((0.0..=1.0).contains(&r.feedback_weight), "reputation.feedback_weight", "must be in [0, 1]")?;
        check(r.history_len >= 1, "reputation.history_len", "must be at least 1")?;
        check((0.0..1.0).contains(&r.history_decay), "reputation.history_decay", "must be in [0, 1)")?;
        check(
            (0.0..=1.0).contains(&r.committee_threshold),
            "reputation.committee_threshold",
            "must be in [0, 1]",
        )?;
        check(
            r.committee_size >= 1 && r.committee_size <= r.num_bs,
            "reputation.committee_size",
            "must be in [1, num_bs]",
        )?;
        check(r.feedback_users >= 1, "reputation.feedback_users", "must be at least 1")?;
        check(
            r.complaint_report_prob > 0.0 && r.complaint_report_prob <= 1.0,
            "reputation.complaint_report_prob",
            "must be in (0, 1]",
        )?;

        for id in &self.attack.malicious_ids {
            check(*id < r.num_bs, "attack.malicious_ids", "ids must be < reputation.num_bs")?;
        }
        check(
            (0.0..=1.0).contains(&self.attack.deny_prob),
            "attack.deny_prob",
            "must be in [0, 1]",
        )?;

        check(self.reputation_experiment.slots >= 1, "reputation_experiment.slots", "must be at least 1")?;
        let mut seen_ids = Vec::new();
        for profile in &self.reputation_experiment.effective_profiles() {
            check(
                profile.bs_id < r.num_bs,
                "reputation_experiment.profiles.bs_id",
                "must be < reputation.num_bs",
            )?;
            check(
                !seen_ids.contains(&profile.bs_id),
                "reputation_experiment.profiles.bs_id",
                "each profile needs its own station",
            )?;
            seen_ids.push(profile.bs_id);
            check(
                !profile.schedule.is_empty(),
                "reputation_experiment.profiles.schedule",
                "must not be empty",
            )?;
            let ascending =
                profile.schedule.windows(2).all(|w| w[0].from_slot < w[1].from_slot);
            check(
                ascending,
                "reputation_experiment.profiles.schedule",
                "breakpoints must be strictly ascending",
            )?;
            for step in &profile.schedule {
                check(
                    (0.0..=1.0).contains(&step.prob),
                    "reputation_experiment.profiles.schedule.prob",
                    "must be in [0, 1]",
                )?;
            }
        }
        Ok(())
    }
}
