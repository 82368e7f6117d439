//! Evaluation metrics computed from traces and energy ledgers.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{TraceKind, TraceRecord};
use crate::NodeId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("received {received} exceeds sent {sent}")]
    ReceivedExceedsSent { sent: u64, received: u64 },
    #[error("{deaths} death times but {dead} dead nodes (N={total}, M={alive})")]
    CountMismatch { deaths: usize, dead: usize, total: usize, alive: usize },
    #[error("death time {0} exceeds the predetermined lifetime")]
    DeathAfterLifetime(f64),
    #[error("packet arrives at {arrive} not after send at {send}")]
    NonPositiveDelay { send: f64, arrive: f64 },
    #[error("report field `{0}` is invalid")]
    InvalidReport(&'static str),
}

/// Delivered / sent as a percentage. No traffic counts as full delivery.
pub fn compute_pdr(sent: u64, received: u64) -> Result<f64, MetricsError> {
    if received > sent {
        return Err(MetricsError::ReceivedExceedsSent { sent, received });
    }
    if sent == 0 {
        return Ok(100.0);
    }
    Ok(received as f64 / sent as f64 * 100.0)
}

/// Average network lifetime: dead nodes contribute their death time,
/// survivors the predetermined lifetime.
pub fn compute_altn(death_times: &[f64], alive: usize, total: usize, lifetime_s: f64) -> Result<f64, MetricsError> {
    if alive > total || death_times.len() != total - alive {
        return Err(MetricsError::CountMismatch {
            deaths: death_times.len(),
            dead: total.saturating_sub(alive),
            total,
            alive,
        });
    }
    if let Some(&t) = death_times.iter().find(|t| **t > lifetime_s) {
        return Err(MetricsError::DeathAfterLifetime(t));
    }
    if total == 0 {
        return Ok(lifetime_s);
    }
    let sum: f64 = death_times.iter().sum();
    Ok((sum + alive as f64 * lifetime_s) / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayStats {
    pub mean_s: f64,
    /// Population standard deviation of the delays.
    pub jitter_s: f64,
}

pub fn delay_stats(delivered: &[(f64, f64)]) -> Result<Option<DelayStats>, MetricsError> {
    if let Some(&(send, arrive)) = delivered.iter().find(|(s, a)| !(a > s)) {
        return Err(MetricsError::NonPositiveDelay { send, arrive });
    }
    if delivered.is_empty() {
        return Ok(None);
    }
    let n = delivered.len() as f64;
    let mean = delivered.iter().map(|(s, a)| a - s).sum::<f64>() / n;
    let var = delivered.iter().map(|(s, a)| (a - s - mean).powi(2)).sum::<f64>() / n;
    Ok(Some(DelayStats { mean_s: mean, jitter_s: var.sqrt() }))
}

/// Lower median: element ⌈n/2⌉ of the sorted list (1-based).
pub fn lower_median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    Some(v[(v.len() - 1) / 2])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lifetimes {
    pub first_death_s: Option<f64>,
    pub median_death_s: Option<f64>,
    pub convergence_time_s: Option<f64>,
}

/// Death statistics and convergence time from a trace.
///
/// Convergence is the earliest time `t` at which every alive node that the
/// latest `reach` record lists has a preferred parent, and no `parent` record
/// falls in `(t, t + window_s]`, with `t + window_s <= end_s`.
pub fn lifetime_and_convergence(trace: &[TraceRecord], node_count: usize, window_s: f64, end_s: f64) -> Lifetimes {
    let deaths: Vec<f64> = trace.iter().filter(|r| r.kind == TraceKind::Death).map(|r| r.time_s).collect();
    let first = deaths.iter().copied().min_by(|a, b| a.total_cmp(b));

    let mut parent: Vec<Option<NodeId>> = vec![None; node_count.max(1)];
    let mut dead: BTreeSet<NodeId> = BTreeSet::new();
    let mut reach: BTreeSet<NodeId> = BTreeSet::new();
    let changes: Vec<f64> = trace.iter().filter(|r| r.kind == TraceKind::Parent).map(|r| r.time_s).collect();

    let converged = |parent: &Vec<Option<NodeId>>, dead: &BTreeSet<NodeId>, reach: &BTreeSet<NodeId>| {
        reach
            .iter()
            .filter(|&&n| n != 0 && !dead.contains(&n))
            .all(|&n| parent.get(n as usize).is_some_and(|p| p.is_some()))
    };
    let quiet_after = |t: f64| {
        let i = changes.partition_point(|c| *c <= t);
        changes.get(i).is_none_or(|c| *c > t + window_s)
    };

    let mut convergence = None;
    let relevant: Vec<&TraceRecord> = trace
        .iter()
        .filter(|r| matches!(r.kind, TraceKind::Parent | TraceKind::Reach | TraceKind::Death))
        .collect();
    if relevant.first().is_none_or(|r| r.time_s > 0.0) && window_s <= end_s && quiet_after(0.0) {
        convergence = Some(0.0);
    }
    let mut i = 0;
    while convergence.is_none() && i < relevant.len() {
        let t = relevant[i].time_s;
        while i < relevant.len() && relevant[i].time_s == t {
            let r = relevant[i];
            match r.kind {
                TraceKind::Parent => {
                    if let Some(slot) = parent.get_mut(r.node as usize) {
                        *slot = r.peer;
                    }
                }
                TraceKind::Death => {
                    dead.insert(r.node);
                }
                TraceKind::Reach => {
                    reach = r.detail.split_whitespace().filter_map(|s| s.parse().ok()).collect();
                }
                _ => {}
            }
            i += 1;
        }
        if t + window_s <= end_s && converged(&parent, &dead, &reach) && quiet_after(t) {
            convergence = Some(t);
        }
    }

    Lifetimes { first_death_s: first, median_death_s: lower_median(&deaths), convergence_time_s: convergence }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub pdr_percent: f64,
    pub altn_s: f64,
    pub first_death_s: Option<f64>,
    pub median_death_s: Option<f64>,
    pub mean_e2e_delay_s: Option<f64>,
    pub delay_jitter_s: Option<f64>,
    pub convergence_time_s: Option<f64>,
    pub alive_node_count: usize,
    /// Residual energy per node, joules.
    pub per_node_energy_j: BTreeMap<NodeId, f64>,
    pub control_overhead_packets: u64,
    pub data_sent: u64,
    pub data_delivered: u64,
    pub predetermined_lifetime_s: f64,
}

impl MetricsReport {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(0.0..=100.0).contains(&self.pdr_percent) {
            return Err(MetricsError::InvalidReport("pdr_percent"));
        }
        if !(self.altn_s.is_finite() && self.altn_s >= 0.0 && self.altn_s <= self.predetermined_lifetime_s) {
            return Err(MetricsError::InvalidReport("altn_s"));
        }
        if let (Some(f), Some(m)) = (self.first_death_s, self.median_death_s) {
            if f > m {
                return Err(MetricsError::InvalidReport("first_death_s"));
            }
        }
        if self.first_death_s.is_some() != self.median_death_s.is_some() {
            return Err(MetricsError::InvalidReport("median_death_s"));
        }
        for (name, v) in [
            ("mean_e2e_delay_s", self.mean_e2e_delay_s),
            ("delay_jitter_s", self.delay_jitter_s),
            ("convergence_time_s", self.convergence_time_s),
        ] {
            if v.is_some_and(|x| !(x.is_finite() && x >= 0.0)) {
                return Err(MetricsError::InvalidReport(name));
            }
        }
        if self.data_delivered > self.data_sent {
            return Err(MetricsError::InvalidReport("data_delivered"));
        }
        if self.alive_node_count > self.per_node_energy_j.len() {
            return Err(MetricsError::InvalidReport("alive_node_count"));
        }
        if self.per_node_energy_j.values().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(MetricsError::InvalidReport("per_node_energy_j"));
        }
        Ok(())
    }
}
