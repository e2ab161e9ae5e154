//! Per-station reputation from user feedback: decayed history blending,
//! committee selection by threshold-and-rank, uniform miner assignment, and
//! the user-population feedback model that drives all of it.
//!
//! Reputation lives in [0, 1]. Each slot a station either receives an
//! aggregated feedback value (its users' served fraction) or nothing; with
//! nothing the value holds still. Served users always file receipts while
//! denied users complain only with the configured probability, so feedback
//! under-counts denials slightly and a persistent 50% denier settles near
//! 0.6 rather than 0.5.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::config::ReputationConfig;
use crate::error::{Result, SimError};

/// One slot's aggregated user feedback for one station.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackBatch {
    pub bs_id: usize,
    /// Fraction of reporting users that were served, in [0, 1].
    pub served_fraction: f64,
    /// True when no user reported anything this slot.
    pub empty: bool,
}

impl FeedbackBatch {
    pub fn none(bs_id: usize) -> Self {
        FeedbackBatch { bs_id, served_fraction: 0.0, empty: true }
    }

    pub fn of(bs_id: usize, served_fraction: f64) -> Self {
        FeedbackBatch { bs_id, served_fraction, empty: false }
    }
}

/// Mean of served indicators; empty input means no feedback.
pub fn aggregate_feedback(bs_id: usize, served: &[bool]) -> FeedbackBatch {
    if served.is_empty() {
        return FeedbackBatch::none(bs_id);
    }
    let sum: usize = served.iter().map(|&s| s as usize).sum();
    FeedbackBatch::of(bs_id, sum as f64 / served.len() as f64)
}

/// Draws one slot of user experiences against a station denying with
/// probability `deny_prob`, applying the asymmetric reporting model:
/// receipts always arrive, complaints arrive with `complaint_report_prob`.
pub fn synth_feedback(
    bs_id: usize,
    deny_prob: f64,
    users: usize,
    complaint_report_prob: f64,
    rng: &mut ChaCha12Rng,
) -> FeedbackBatch {
    let mut reports = Vec::with_capacity(users);
    for _ in 0..users {
        let denied = rng.gen_bool(deny_prob);
        if denied {
            if rng.gen_bool(complaint_report_prob) {
                reports.push(false);
            }
        } else {
            reports.push(true);
        }
    }
    aggregate_feedback(bs_id, &reports)
}

/// One station's reputation state.
#[derive(Debug, Clone, PartialEq)]
pub struct ReputationRecord {
    pub bs_id: usize,
    current: f64,
    /// Past values, newest first; at most `history_len` entries.
    past: VecDeque<f64>,
    feedback_weight: f64,
    history_len: usize,
    history_decay: f64,
}

impl ReputationRecord {
    pub fn new(bs_id: usize, cfg: &ReputationConfig) -> Self {
        ReputationRecord {
            bs_id,
            current: 1.0,
            past: VecDeque::with_capacity(cfg.history_len),
            feedback_weight: cfg.feedback_weight,
            history_len: cfg.history_len,
            history_decay: cfg.history_decay,
        }
    }

    pub fn current(&self) -> f64 {
        self.current
    }

    /// Decay-weighted mean of the stored history, newest weighted highest.
    /// Weights renormalize over however many entries exist, so a constant
    /// history is a fixed point even during warm-up. Empty history falls
    /// back to the current value.
    pub fn historical_component(&self) -> f64 {
        if self.past.is_empty() {
            return self.current;
        }
        let mut weighted = 0.0;
        let mut norm = 0.0;
        let mut w = 1.0;
        for value in &self.past {
            weighted += w * value;
            norm += w;
            w *= 1.0 - self.history_decay;
        }
        weighted / norm
    }

    /// Applies one slot of feedback: blend fresh served-fraction with the
    /// historical component, or hold still when the batch is empty. The
    /// history ring advances in both cases.
    pub fn update(&mut self, fb: &FeedbackBatch) {
        if !fb.empty {
            let hist = self.historical_component();
            self.current =
                self.feedback_weight * fb.served_fraction + (1.0 - self.feedback_weight) * hist;
        }
        self.past.push_front(self.current);
        self.past.truncate(self.history_len);
    }
}

/// Reputation table for the whole cell.
#[derive(Debug, Clone)]
pub struct ReputationTable {
    records: Vec<ReputationRecord>,
    threshold: f64,
    committee_size: usize,
}

impl ReputationTable {
    pub fn new(cfg: &ReputationConfig) -> Self {
        let records = (0..cfg.num_bs).map(|id| ReputationRecord::new(id, cfg)).collect();
        ReputationTable { records, threshold: cfg.committee_threshold, committee_size: cfg.committee_size }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record(&self, bs_id: usize) -> &ReputationRecord {
        &self.records[bs_id]
    }

    pub fn current(&self, bs_id: usize) -> f64 {
        self.records[bs_id].current
    }

    pub fn update(&mut self, fb: &FeedbackBatch) {
        self.records[fb.bs_id].update(fb);
    }

    /// Advances every station: the one with feedback blends it in, the rest
    /// hold still.
    pub fn update_all(&mut self, feedback: &FeedbackBatch) {
        for record in &mut self.records {
            if record.bs_id == feedback.bs_id {
                record.update(feedback);
            } else {
                record.update(&FeedbackBatch::none(record.bs_id));
            }
        }
    }

    /// Top stations by reputation among those at or above the threshold,
    /// ties broken by lower id. Errors when nobody qualifies.
    pub fn select_committee(&self) -> Result<Vec<usize>> {
        let mut qualified: Vec<&ReputationRecord> =
            self.records.iter().filter(|r| r.current >= self.threshold).collect();
        if qualified.is_empty() {
            return Err(SimError::EmptyCommittee);
        }
        qualified.sort_by(|a, b| {
            b.current.partial_cmp(&a.current).expect("reputations are finite").then(a.bs_id.cmp(&b.bs_id))
        });
        qualified.truncate(self.committee_size);
        Ok(qualified.into_iter().map(|r| r.bs_id).collect())
    }

    /// Station with the highest reputation regardless of threshold, ties
    /// broken by lower id. Fallback miner source when the committee empties.
    pub fn best_effort_leader(&self) -> usize {
        let mut best = 0;
        for r in &self.records {
            if r.current > self.records[best].current {
                best = r.bs_id;
            }
        }
        best
    }
}

/// Uniform draw over the committee.
pub fn assign_miner(committee: &[usize], rng: &mut ChaCha12Rng) -> Result<usize> {
    if committee.is_empty() {
        return Err(SimError::EmptyCommittee);
    }
    Ok(committee[rng.gen_range(0..committee.len())])
}

/// Bernoulli denial draw for a malicious station.
pub fn malicious_denies(prob: f64, rng: &mut ChaCha12Rng) -> bool {
    rng.gen_bool(prob)
}
