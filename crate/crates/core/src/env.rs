//! Slot-based simulation of the serving base station: request arrivals,
//! CPU-cycle demand, multi-slot resource leases, processing latency, denial
//! cost and both full and reduced state construction.
//!
//! Time advances in unit slots. Each slot the station sees one batch of user
//! requests, chooses a CPU rate (or denies), and the chosen rate is held for
//! the ceiling of the resulting latency. Capacity held by past leases is
//! unavailable to new allocations, which is what couples slots together.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson, Uniform};

use crate::config::EnvConfig;
use crate::error::{Result, SimError};

/// One slot's arrived user requests with their derived CPU demands.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestBatch {
    pub slot: u64,
    pub count: u64,
    /// Per-request payloads in bytes, all in [size_min, size_max].
    pub sizes: Vec<f64>,
    /// Service CPU demand in cycles.
    pub cpu_demand_sp: f64,
    /// Blockchain bookkeeping CPU demand in cycles.
    pub cpu_demand_bc: f64,
}

impl RequestBatch {
    /// Builds a batch from explicit sizes, deriving both demand terms.
    pub fn from_sizes(slot: u64, sizes: Vec<f64>, cfg: &EnvConfig) -> Self {
        let count = sizes.len() as u64;
        let cpu_demand_sp = service_demand(&sizes, cfg.kappa_sp, cfg.scale_service_demand_by_count);
        let cpu_demand_bc = blockchain_demand(
            count,
            cfg.kappa_bc,
            cfg.block_header_bytes,
            cfg.block_bytes_per_request,
        );
        RequestBatch { slot, count, sizes, cpu_demand_sp, cpu_demand_bc }
    }

    /// Draws a batch: Poisson request count truncated at the configured cap,
    /// i.i.d. uniform payload sizes.
    pub fn sample(slot: u64, rng: &mut ChaCha12Rng, cfg: &EnvConfig) -> Self {
        let poisson = Poisson::new(cfg.arrival_rate).expect("validated arrival rate");
        let draw = poisson.sample(rng);
        let count = (draw as u64).min(cfg.lambda_cap());
        let size_dist = Uniform::new_inclusive(cfg.size_min_bytes, cfg.size_max_bytes);
        let sizes: Vec<f64> = (0..count).map(|_| rng.sample(size_dist)).collect();
        Self::from_sizes(slot, sizes, cfg)
    }

    /// Total CPU cycles the slot asks of the miner.
    pub fn total_demand(&self) -> f64 {
        self.cpu_demand_sp + self.cpu_demand_bc
    }
}

/// Service CPU demand. The default is `kappa_sp` times the summed payload;
/// the scaled variant multiplies by the request count as well.
pub fn service_demand(sizes: &[f64], kappa_sp: f64, scale_by_count: bool) -> f64 {
    let total_bytes: f64 = sizes.iter().sum();
    if scale_by_count {
        kappa_sp * sizes.len() as f64 * total_bytes
    } else {
        kappa_sp * total_bytes
    }
}

/// Blockchain bookkeeping demand: one header plus one record per request.
pub fn blockchain_demand(count: u64, kappa_bc: f64, header_bytes: f64, bytes_per_request: f64) -> f64 {
    kappa_bc * (header_bytes + bytes_per_request * count as f64)
}

/// Slots needed to clear `demand` at `rate`. Denied slots have no latency;
/// callers must branch on denial before asking.
pub fn processing_latency(demand: f64, rate: f64) -> Result<f64> {
    if rate <= 0.0 {
        return Err(SimError::UndefinedLatency(rate));
    }
    Ok(demand / rate)
}

/// One past allocation and how long it still holds its rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResourceLease {
    pub alloc_slot: u64,
    /// Allocated rate in cycles/slot, always >= the allocation granularity.
    pub rate: f64,
    /// Ceiling-quantized latency in whole slots.
    pub total_slots: u64,
    pub remaining_slots: u64,
}

impl ResourceLease {
    /// Rate the lease currently holds: the full rate until it expires.
    pub fn held_rate(&self) -> f64 {
        if self.remaining_slots > 0 {
            self.rate
        } else {
            0.0
        }
    }
}

/// Normalized two-feature state fed to the networks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedState {
    /// Available capacity over total capacity, in [0, 1].
    pub avail_frac: f64,
    /// Remaining leased work over the worst case, in [0, 1].
    pub backlog_frac: f64,
}

impl ReducedState {
    pub fn as_array(&self) -> [f64; 2] {
        [self.avail_frac, self.backlog_frac]
    }
}

/// Sliding window of active leases over the last `horizon` slots.
#[derive(Debug, Clone)]
pub struct LeaseQueue {
    window: VecDeque<ResourceLease>,
    capacity: f64,
    min_alloc: f64,
    horizon: u64,
    now: u64,
}

impl LeaseQueue {
    pub fn new(capacity: f64, min_alloc: f64, horizon: u64) -> Self {
        LeaseQueue { window: VecDeque::new(), capacity, min_alloc, horizon, now: 0 }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn min_alloc(&self) -> f64 {
        self.min_alloc
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn clear(&mut self) {
        self.window.clear();
        self.now = 0;
    }

    /// Opens a lease at the current slot. Caller guarantees the rate fits in
    /// the available capacity.
    pub fn push(&mut self, rate: f64, total_slots: u64) {
        self.window.push_back(ResourceLease {
            alloc_slot: self.now,
            rate,
            total_slots,
            remaining_slots: total_slots,
        });
    }

    /// Advances one slot: each lease ages by one, expired holds drop to zero
    /// and leases older than the horizon leave the window.
    pub fn tick(&mut self) {
        self.now += 1;
        for lease in &mut self.window {
            let age = self.now - lease.alloc_slot;
            lease.remaining_slots = lease.total_slots.saturating_sub(age);
        }
        let oldest_kept = self.now.saturating_sub(self.horizon);
        while matches!(self.window.front(), Some(l) if l.alloc_slot < oldest_kept) {
            self.window.pop_front();
        }
    }

    pub fn held_sum(&self) -> f64 {
        self.window.iter().map(ResourceLease::held_rate).sum()
    }

    /// Capacity not held by any active lease. Clamped at zero against
    /// floating-point round-off from the running sum.
    pub fn available(&self) -> f64 {
        (self.capacity - self.held_sum()).max(0.0)
    }

    /// Per-slot (remaining, held rate) pairs over the window, oldest first,
    /// zero-padded where nothing was allocated. Fixed length horizon + 1.
    pub fn full_state(&self) -> Vec<(f64, f64)> {
        let len = self.horizon as usize + 1;
        let mut out = vec![(0.0, 0.0); len];
        for lease in &self.window {
            // Pruning keeps alloc_slot within [now - horizon, now], so the
            // index is always in range.
            let idx = (lease.alloc_slot + self.horizon - self.now) as usize;
            out[idx] = (lease.remaining_slots as f64, lease.held_rate());
        }
        out
    }

    /// Two-feature normalized state. The backlog weights each lease's
    /// remaining slots by its held rate (remaining work over capacity); the
    /// unweighted variant sums bare slot counts instead.
    pub fn reduced_state(&self, tau_max: f64, unweighted: bool) -> ReducedState {
        let backlog_raw: f64 = if unweighted {
            self.window.iter().map(|l| l.remaining_slots as f64).sum()
        } else {
            self.window.iter().map(|l| l.remaining_slots as f64 * l.held_rate()).sum()
        };
        let backlog_frac = (backlog_raw / self.capacity / tau_max).clamp(0.0, 1.0);
        let avail_frac = (self.available() / self.capacity).clamp(0.0, 1.0);
        ReducedState { avail_frac, backlog_frac }
    }
}

/// Result of serving (or denying) one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// Rate actually applied, 0 on denial.
    pub rate: f64,
    /// 0 on denial, else -latency/tau_max in [-1, 0).
    pub reward: f64,
    /// Denial indicator: exactly 1.0 or 0.0.
    pub cost: f64,
    /// Unquantized latency in slots, 0 on denial.
    pub latency_slots: f64,
    /// State observed after the slot completes.
    pub next_state: ReducedState,
}

/// The serving station's world: arrival stream plus lease bookkeeping.
#[derive(Debug, Clone)]
pub struct Env {
    cfg: EnvConfig,
    queue: LeaseQueue,
    arrivals_rng: ChaCha12Rng,
    tau_max: f64,
}

impl Env {
    pub fn new(cfg: EnvConfig, arrivals_rng: ChaCha12Rng) -> Self {
        let tau_max = cfg.tau_max();
        let queue = LeaseQueue::new(cfg.capacity, cfg.min_alloc, cfg.horizon());
        Env { cfg, queue, arrivals_rng, tau_max }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn tau_max(&self) -> f64 {
        self.tau_max
    }

    pub fn slot(&self) -> u64 {
        self.queue.now()
    }

    pub fn available(&self) -> f64 {
        self.queue.available()
    }

    pub fn queue(&self) -> &LeaseQueue {
        &self.queue
    }

    /// Drops all leases and restarts the slot clock. The arrival stream
    /// continues, so consecutive episodes see fresh workloads.
    pub fn reset(&mut self) {
        self.queue.clear();
    }

    pub fn observe(&self) -> ReducedState {
        self.queue.reduced_state(self.tau_max, self.cfg.unweighted_backlog)
    }

    /// Draws the current slot's arrivals.
    pub fn sample_arrivals(&mut self) -> RequestBatch {
        RequestBatch::sample(self.queue.now(), &mut self.arrivals_rng, &self.cfg)
    }

    /// Serves one slot at `rate` (0 denies). The rate must be 0 or lie in
    /// [min_alloc, available]; the action mapping guarantees this, anything
    /// else is a caller bug surfaced as a contract error.
    pub fn step(&mut self, batch: &RequestBatch, rate: f64) -> Result<StepOutcome> {
        if batch.slot != self.queue.now() {
            return Err(SimError::Contract(format!(
                "batch for slot {} applied at slot {}",
                batch.slot,
                self.queue.now()
            )));
        }
        let avail = self.queue.available();
        if rate != 0.0 && (rate < self.cfg.min_alloc || rate > avail) {
            return Err(SimError::Contract(format!(
                "rate {rate} outside {{0}} U [{}, {avail}]",
                self.cfg.min_alloc
            )));
        }

        let outcome = if rate == 0.0 {
            self.queue.tick();
            StepOutcome {
                rate: 0.0,
                reward: 0.0,
                cost: 1.0,
                latency_slots: 0.0,
                next_state: self.observe(),
            }
        } else {
            let latency = processing_latency(batch.total_demand(), rate)?;
            let total_slots = latency.ceil() as u64;
            if total_slots > 0 {
                self.queue.push(rate, total_slots);
            }
            self.queue.tick();
            StepOutcome {
                rate,
                reward: -(latency / self.tau_max),
                cost: 0.0,
                latency_slots: latency,
                next_state: self.observe(),
            }
        };
        Ok(outcome)
    }
}
