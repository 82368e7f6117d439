//! Per-node energy accounts kept in integer picojoules so that balances are exact.

use serde::{Deserialize, Serialize};

pub const PJ_PER_J: f64 = 1e12;

pub fn joules_to_pj(j: f64) -> u64 {
    (j * PJ_PER_J).round().max(0.0) as u64
}

pub fn pj_to_joules(pj: u64) -> f64 {
    pj as f64 / PJ_PER_J
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnergyUse {
    Tx,
    Rx,
    Idle,
    Aggregation,
}

impl EnergyUse {
    pub const ALL: [EnergyUse; 4] = [EnergyUse::Tx, EnergyUse::Rx, EnergyUse::Idle, EnergyUse::Aggregation];

    pub fn label(self) -> &'static str {
        match self {
            EnergyUse::Tx => "tx",
            EnergyUse::Rx => "rx",
            EnergyUse::Idle => "idle",
            EnergyUse::Aggregation => "aggregation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyAccount {
    pub initial_pj: u64,
    pub residual_pj: u64,
    /// Debits by use: tx, rx, idle, aggregation.
    pub debits_pj: [u64; 4],
    pub debit_count: u64,
    /// Idle draw in pJ per second.
    idle_rate_pj_s: f64,
    idle_settled_s: f64,
    pub death_s: Option<f64>,
}

impl EnergyAccount {
    pub fn new(initial_j: f64, idle_w: f64) -> Self {
        let initial_pj = joules_to_pj(initial_j);
        Self {
            initial_pj,
            residual_pj: initial_pj,
            debits_pj: [0; 4],
            debit_count: 0,
            idle_rate_pj_s: idle_w * PJ_PER_J,
            idle_settled_s: 0.0,
            death_s: None,
        }
    }

    pub fn is_alive(&self) -> bool {
        self.death_s.is_none()
    }

    pub fn residual_j(&self) -> f64 {
        pj_to_joules(self.residual_pj)
    }

    pub fn total_debits_pj(&self) -> u64 {
        self.debits_pj.iter().sum()
    }

    fn take(&mut self, kind: EnergyUse, amount_pj: u64) -> u64 {
        let taken = amount_pj.min(self.residual_pj);
        self.residual_pj -= taken;
        self.debits_pj[kind as usize] += taken;
        self.debit_count += 1;
        taken
    }

    /// Debit idle draw up to `now_s`. If the battery runs dry on idle alone,
    /// the node dies at the exact crossing time, which is returned.
    pub fn settle_idle(&mut self, now_s: f64) -> Option<f64> {
        if !self.is_alive() || now_s <= self.idle_settled_s {
            return None;
        }
        let due = ((now_s - self.idle_settled_s) * self.idle_rate_pj_s).round() as u64;
        if due >= self.residual_pj && self.idle_rate_pj_s > 0.0 {
            let t = self.idle_settled_s + self.residual_pj as f64 / self.idle_rate_pj_s;
            let rest = self.residual_pj;
            self.take(EnergyUse::Idle, rest);
            self.idle_settled_s = now_s;
            self.death_s = Some(t.min(now_s));
            return self.death_s;
        }
        self.take(EnergyUse::Idle, due);
        self.idle_settled_s = now_s;
        None
    }

    /// Time at which idle draw alone would exhaust the battery.
    pub fn idle_exhaustion_s(&self) -> Option<f64> {
        if !self.is_alive() || self.idle_rate_pj_s <= 0.0 {
            return None;
        }
        Some(self.idle_settled_s + self.residual_pj as f64 / self.idle_rate_pj_s)
    }

    /// Debit `power_w` over `duration_s` at `now_s`. Idle draw is settled first.
    /// Returns `true` if the node is still alive afterwards.
    pub fn debit(&mut self, kind: EnergyUse, power_w: f64, duration_s: f64, now_s: f64) -> bool {
        if self.settle_idle(now_s).is_some() {
            return false;
        }
        if !self.is_alive() {
            return false;
        }
        let amount = joules_to_pj(power_w * duration_s);
        if amount >= self.residual_pj && amount > 0 {
            let rest = self.residual_pj;
            self.take(kind, rest);
            self.death_s = Some(now_s);
            return false;
        }
        self.take(kind, amount);
        true
    }

    /// Exact balance check: initial minus every debit equals the residual.
    pub fn balanced(&self) -> bool {
        self.initial_pj.checked_sub(self.total_debits_pj()) == Some(self.residual_pj)
    }
}
