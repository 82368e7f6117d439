//! Trickle interval scheduler for DIO emission.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrickleConfig {
    pub i_min_ms: u64,
    pub i_doublings: u32,
    pub inconsistency_threshold: u32,
}

impl Default for TrickleConfig {
    fn default() -> Self {
        Self { i_min_ms: 4096, i_doublings: 4, inconsistency_threshold: 1 }
    }
}

impl TrickleConfig {
    pub fn i_max_ms(&self) -> u64 {
        self.i_min_ms << self.i_doublings
    }

    pub fn i_max_s(&self) -> f64 {
        self.i_max_ms() as f64 / 1000.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrickleState {
    pub i_min_ms: u64,
    pub i_doublings: u32,
    pub i_max_ms: u64,
    pub current_interval_ms: u64,
    pub inconsistency_count: u32,
    pub inconsistency_threshold: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrickleEvent {
    IntervalExpired,
    Consistency,
    Inconsistency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TrickleOutcome {
    pub emit_dio: bool,
    /// The interval was cut back to `i_min` and a new interval starts now.
    pub reset: bool,
}

impl TrickleState {
    pub fn new(cfg: &TrickleConfig) -> Self {
        Self {
            i_min_ms: cfg.i_min_ms,
            i_doublings: cfg.i_doublings,
            i_max_ms: cfg.i_max_ms(),
            current_interval_ms: cfg.i_min_ms,
            inconsistency_count: 0,
            inconsistency_threshold: cfg.inconsistency_threshold.max(1),
        }
    }

    pub fn interval_s(&self) -> f64 {
        self.current_interval_ms as f64 / 1000.0
    }

    pub fn restart(&mut self) {
        self.current_interval_ms = self.i_min_ms;
        self.inconsistency_count = 0;
    }

    pub fn step(&mut self, event: TrickleEvent) -> TrickleOutcome {
        match event {
            TrickleEvent::IntervalExpired => {
                self.current_interval_ms = (self.current_interval_ms * 2).min(self.i_max_ms);
                TrickleOutcome { emit_dio: true, reset: false }
            }
            TrickleEvent::Consistency => TrickleOutcome::default(),
            TrickleEvent::Inconsistency => {
                self.inconsistency_count += 1;
                if self.inconsistency_count >= self.inconsistency_threshold {
                    self.restart();
                    TrickleOutcome { emit_dio: false, reset: true }
                } else {
                    TrickleOutcome::default()
                }
            }
        }
    }

    pub fn is_valid(&self) -> bool {
        (0..=self.i_doublings).any(|j| self.current_interval_ms == self.i_min_ms << j)
    }
}

/// Functional form of [`TrickleState::step`].
pub fn trickle_step(trickle: &TrickleState, event: TrickleEvent) -> (TrickleState, bool) {
    let mut next = *trickle;
    let out = next.step(event);
    (next, out.emit_dio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn stable_sequence_doubles_to_max() {
        let mut t = TrickleState::new(&TrickleConfig::default());
        let mut seen = vec![t.current_interval_ms];
        for _ in 0..5 {
            let (n, emit) = trickle_step(&t, TrickleEvent::IntervalExpired);
            assert!(emit);
            t = n;
            seen.push(t.current_interval_ms);
        }
        assert_eq!(seen, vec![4096, 8192, 16384, 32768, 65536, 65536]);
    }

    #[test]
    fn inconsistency_resets_to_min() {
        let mut t = TrickleState::new(&TrickleConfig::default());
        t.current_interval_ms = 65536;
        let out = t.step(TrickleEvent::Inconsistency);
        assert!(out.reset && !out.emit_dio);
        assert_eq!(t.current_interval_ms, 4096);
        assert_eq!(t.inconsistency_count, 0);
    }

    #[test]
    fn threshold_counts_up() {
        let cfg = TrickleConfig { inconsistency_threshold: 3, ..TrickleConfig::default() };
        let mut t = TrickleState::new(&cfg);
        t.current_interval_ms = 32768;
        assert!(!t.step(TrickleEvent::Inconsistency).reset);
        assert!(!t.step(TrickleEvent::Inconsistency).reset);
        assert_eq!(t.current_interval_ms, 32768);
        assert!(t.step(TrickleEvent::Inconsistency).reset);
        assert_eq!(t.current_interval_ms, 4096);
    }

    #[test]
    fn consistency_is_inert() {
        let mut t = TrickleState::new(&TrickleConfig::default());
        t.current_interval_ms = 8192;
        let (n, emit) = trickle_step(&t, TrickleEvent::Consistency);
        assert!(!emit);
        assert_eq!(n.current_interval_ms, 8192);
    }

    proptest! {
        #[test]
        fn interval_stays_on_grid(events in prop::collection::vec(0u8..3, 0..200), thr in 1u32..4) {
            let cfg = TrickleConfig { inconsistency_threshold: thr, ..TrickleConfig::default() };
            let mut t = TrickleState::new(&cfg);
            for e in events {
                let ev = match e { 0 => TrickleEvent::IntervalExpired, 1 => TrickleEvent::Consistency, _ => TrickleEvent::Inconsistency };
                let out = t.step(ev);
                prop_assert!(t.is_valid());
                if out.reset {
                    prop_assert_eq!(t.current_interval_ms, 4096);
                }
            }
        }
    }
}
