//! Scenario parameters and validation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{Environment, PropagationModel, SoundSpeedMode, SpreadingGeometry};
use crate::madm::{ahp_weights, default_comparison_matrix, standard_criteria, ComparisonMatrix};
use crate::protocol::{Mode, ProtocolConfig, RankWeights, TrickleConfig};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid scenario field `{field}`: {reason}")]
pub struct ScenarioError {
    pub field: String,
    pub reason: String,
}

impl ScenarioError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self { field: field.into(), reason: reason.into() }
    }
}

/// How transmission loss geometry is chosen for a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossMode {
    /// Cylindrical above the shallow threshold, spherical below it.
    Auto,
    Shallow,
    Deep,
    Practical,
}

impl LossMode {
    pub fn forced_geometry(self) -> Option<SpreadingGeometry> {
        match self {
            LossMode::Auto => None,
            LossMode::Shallow => Some(SpreadingGeometry::ShallowCylindrical),
            LossMode::Deep => Some(SpreadingGeometry::DeepSpherical),
            LossMode::Practical => Some(SpreadingGeometry::Practical),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Total nodes including the sink (node 0).
    pub node_count: usize,
    /// Deployment box extents (x, y, depth) in metres; the origin is a surface corner.
    pub area: [f64; 3],
    pub sink_position: [f64; 3],
    pub mobile_fraction: f64,
    pub speed_range_mps: (f64, f64),
    /// Period between random-walk direction and speed draws.
    pub direction_epoch_s: f64,
    pub mobility_tick_s: f64,
    pub initial_node_energy_j: f64,
    pub initial_sink_energy_j: f64,
    pub tx_long_w: f64,
    pub tx_short_w: f64,
    pub rx_w: f64,
    pub idle_w: f64,
    pub aggregation_w: f64,
    /// Unicast links longer than this use `tx_long_w`.
    pub long_tx_threshold_m: f64,
    pub node_range_m: f64,
    pub sink_range_m: f64,
    pub frequency_khz: f64,
    /// Carried as metadata only; the simulator models one shared channel.
    pub channels_khz: Vec<f64>,
    pub bandwidth_bps: f64,
    pub packet_rate_pps: f64,
    pub data_packet_bytes: u32,
    pub link_ack_bytes: u32,
    pub queue_capacity: usize,
    pub max_link_attempts: u32,
    pub data_ttl: u32,
    pub mac_backoff_max_s: f64,
    pub sim_duration_s: f64,
    pub seed: u64,
    pub mode: Mode,
    pub max_parents: usize,
    pub environment: Environment,
    pub sound_speed_mode: SoundSpeedMode,
    pub loss_mode: LossMode,
    pub shallow_depth_threshold_m: f64,
    pub shallow_tl_coefficient: f64,
    pub anomaly_db: f64,
    pub spreading_factor: f64,
    pub snr_threshold_db: f64,
    pub dao_ack_snr_db: f64,
    pub predetermined_lifetime_s: f64,
    pub convergence_window_s: f64,
    pub trickle_i_min_ms: u64,
    pub trickle_doublings: u32,
    pub inconsistency_threshold: u32,
    pub arssi_beta: f64,
    pub switch_hysteresis: f64,
    pub response_delay_max_s: f64,
    pub rank_weights: RankWeights,
    /// Pairwise comparison matrix over the seven parent criteria, row-major,
    /// criteria in `Criterion::ALL` order. `None` uses the built-in priority matrix.
    pub ahp_matrix: Option<Vec<f64>>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            node_count: 50,
            area: [1000.0, 1000.0, 500.0],
            sink_position: [500.0, 500.0, 0.0],
            mobile_fraction: 0.4,
            speed_range_mps: (1.0, 5.0),
            direction_epoch_s: 30.0,
            mobility_tick_s: 1.0,
            initial_node_energy_j: 50.0,
            initial_sink_energy_j: 50_000.0,
            tx_long_w: 1.3,
            tx_short_w: 0.8,
            rx_w: 0.7,
            idle_w: 0.008,
            aggregation_w: 0.22,
            long_tx_threshold_m: 75.0,
            node_range_m: 150.0,
            sink_range_m: 200.0,
            frequency_khz: 30.5,
            channels_khz: (0..11).map(|i| 30.511 + 0.007 * i as f64).collect(),
            bandwidth_bps: 30_000.0,
            packet_rate_pps: 0.1,
            data_packet_bytes: 32,
            link_ack_bytes: 4,
            queue_capacity: 64,
            max_link_attempts: 3,
            data_ttl: 64,
            mac_backoff_max_s: 0.2,
            sim_duration_s: 600.0,
            seed: 1,
            mode: Mode::Rpluwm,
            max_parents: 4,
            environment: Environment::default(),
            sound_speed_mode: SoundSpeedMode::MackenzieCorrected,
            loss_mode: LossMode::Auto,
            shallow_depth_threshold_m: 100.0,
            shallow_tl_coefficient: 10.0,
            anomaly_db: 0.0,
            spreading_factor: 1.3,
            snr_threshold_db: 10.0,
            dao_ack_snr_db: 10.0,
            predetermined_lifetime_s: 600.0,
            convergence_window_s: 30.0,
            trickle_i_min_ms: 4096,
            trickle_doublings: 4,
            inconsistency_threshold: 1,
            arssi_beta: 0.3,
            switch_hysteresis: 0.05,
            response_delay_max_s: 1.0,
            rank_weights: RankWeights::default(),
            ahp_matrix: None,
        }
    }
}

fn positive(field: &str, v: f64) -> Result<(), ScenarioError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ScenarioError::new(field, format!("must be positive, got {v}")))
    }
}

fn nonneg(field: &str, v: f64) -> Result<(), ScenarioError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ScenarioError::new(field, format!("must be nonnegative, got {v}")))
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.node_count < 1 {
            return Err(ScenarioError::new("node_count", "at least the sink is required"));
        }
        for (i, name) in ["area.x", "area.y", "area.z"].iter().enumerate() {
            positive(name, self.area[i])?;
        }
        for i in 0..3 {
            let p = self.sink_position[i];
            if !(0.0..=self.area[i]).contains(&p) {
                return Err(ScenarioError::new("sink_position", format!("{p} outside the deployment box")));
            }
        }
        if !(0.0..=1.0).contains(&self.mobile_fraction) {
            return Err(ScenarioError::new(
                "mobile_fraction",
                format!("{} outside [0, 1]", self.mobile_fraction),
            ));
        }
        let (lo, hi) = self.speed_range_mps;
        nonneg("speed_range_mps", lo)?;
        if !(hi >= lo && hi.is_finite()) {
            return Err(ScenarioError::new("speed_range_mps", "upper bound below lower bound"));
        }
        positive("direction_epoch_s", self.direction_epoch_s)?;
        positive("mobility_tick_s", self.mobility_tick_s)?;
        positive("initial_node_energy_j", self.initial_node_energy_j)?;
        positive("initial_sink_energy_j", self.initial_sink_energy_j)?;
        for (name, v) in [
            ("tx_long_w", self.tx_long_w),
            ("tx_short_w", self.tx_short_w),
            ("rx_w", self.rx_w),
            ("idle_w", self.idle_w),
            ("aggregation_w", self.aggregation_w),
            ("long_tx_threshold_m", self.long_tx_threshold_m),
            ("mac_backoff_max_s", self.mac_backoff_max_s),
            ("anomaly_db", self.anomaly_db.abs()),
            ("response_delay_max_s", self.response_delay_max_s),
            ("switch_hysteresis", self.switch_hysteresis),
        ] {
            nonneg(name, v)?;
        }
        if self.tx_long_w <= 0.0 || self.tx_short_w <= 0.0 {
            return Err(ScenarioError::new("tx_short_w", "transmit powers must be positive"));
        }
        positive("node_range_m", self.node_range_m)?;
        positive("sink_range_m", self.sink_range_m)?;
        positive("frequency_khz", self.frequency_khz)?;
        positive("bandwidth_bps", self.bandwidth_bps)?;
        positive("packet_rate_pps", self.packet_rate_pps)?;
        positive("sim_duration_s", self.sim_duration_s)?;
        positive("convergence_window_s", self.convergence_window_s)?;
        positive("shallow_tl_coefficient", self.shallow_tl_coefficient)?;
        positive("spreading_factor", self.spreading_factor)?;
        nonneg("shallow_depth_threshold_m", self.shallow_depth_threshold_m)?;
        if !self.snr_threshold_db.is_finite() {
            return Err(ScenarioError::new("snr_threshold_db", "must be finite"));
        }
        if !self.dao_ack_snr_db.is_finite() {
            return Err(ScenarioError::new("dao_ack_snr_db", "must be finite"));
        }
        if !(self.predetermined_lifetime_s >= self.sim_duration_s) {
            return Err(ScenarioError::new(
                "predetermined_lifetime_s",
                "must be at least sim_duration_s so every death time is covered",
            ));
        }
        if self.data_packet_bytes == 0 {
            return Err(ScenarioError::new("data_packet_bytes", "must be positive"));
        }
        if self.link_ack_bytes == 0 {
            return Err(ScenarioError::new("link_ack_bytes", "must be positive"));
        }
        if self.queue_capacity == 0 {
            return Err(ScenarioError::new("queue_capacity", "must be positive"));
        }
        if self.max_link_attempts == 0 {
            return Err(ScenarioError::new("max_link_attempts", "must be positive"));
        }
        if self.data_ttl == 0 {
            return Err(ScenarioError::new("data_ttl", "must be positive"));
        }
        if self.max_parents == 0 {
            return Err(ScenarioError::new("max_parents", "must be at least 1"));
        }
        if self.trickle_i_min_ms == 0 {
            return Err(ScenarioError::new("trickle_i_min_ms", "must be positive"));
        }
        if self.trickle_doublings > 20 {
            return Err(ScenarioError::new("trickle_doublings", "at most 20"));
        }
        if self.inconsistency_threshold == 0 {
            return Err(ScenarioError::new("inconsistency_threshold", "must be at least 1"));
        }
        if !(self.arssi_beta > 0.0 && self.arssi_beta <= 1.0) {
            return Err(ScenarioError::new("arssi_beta", "must lie in (0, 1]"));
        }
        let w = self.rank_weights;
        if [w.hop, w.depth, w.arssi].iter().any(|x| !(*x >= 0.0)) || ((w.hop + w.depth + w.arssi) - 1.0).abs() > 1e-9 {
            return Err(ScenarioError::new("rank_weights", "must be nonnegative and sum to 1"));
        }
        if w.hop <= 0.0 {
            return Err(ScenarioError::new("rank_weights", "hop weight must be positive"));
        }
        self.environment
            .validate()
            .map_err(|e| ScenarioError::new("environment", e.to_string()))?;
        self.comparison_matrix()?;
        Ok(())
    }

    pub fn comparison_matrix(&self) -> Result<ComparisonMatrix, ScenarioError> {
        let spec = standard_criteria();
        match &self.ahp_matrix {
            None => Ok(default_comparison_matrix(&spec)),
            Some(flat) => {
                let n = spec.len();
                if flat.len() != n * n {
                    return Err(ScenarioError::new(
                        "ahp_matrix",
                        format!("expected {} entries, got {}", n * n, flat.len()),
                    ));
                }
                let rows = flat.chunks(n).map(|r| r.to_vec()).collect();
                ComparisonMatrix::new(rows).map_err(|e| ScenarioError::new("ahp_matrix", e.to_string()))
            }
        }
    }

    pub fn trickle_config(&self) -> TrickleConfig {
        TrickleConfig {
            i_min_ms: self.trickle_i_min_ms,
            i_doublings: self.trickle_doublings,
            inconsistency_threshold: self.inconsistency_threshold,
        }
    }

    pub fn propagation_model(&self) -> PropagationModel {
        PropagationModel {
            shallow_coefficient: self.shallow_tl_coefficient,
            reference_range_m: 1.0,
            anomaly_db: self.anomaly_db,
            spreading_factor: self.spreading_factor,
            shallow_depth_threshold_m: self.shallow_depth_threshold_m,
            forced_geometry: self.loss_mode.forced_geometry(),
        }
    }

    /// Protocol parameters derived from the scenario. Requires a valid scenario.
    pub fn protocol_config(&self) -> ProtocolConfig {
        let criteria = standard_criteria();
        let madm_weights = ahp_weights(&self.comparison_matrix().expect("validated scenario"));
        ProtocolConfig {
            mode: self.mode,
            max_parents: self.max_parents,
            rank_weights: self.rank_weights,
            max_depth_m: self.area[2],
            trickle: self.trickle_config(),
            arssi_beta: self.arssi_beta,
            arssi_floor_db: self.snr_threshold_db,
            arssi_span_db: 60.0,
            dao_ack_snr_db: self.dao_ack_snr_db,
            mobility_snr_threshold_db: self.snr_threshold_db,
            response_delay_max_s: self.response_delay_max_s,
            mobility_period_s: 1.0 / self.packet_rate_pps,
            switch_hysteresis: self.switch_hysteresis,
            criteria,
            madm_weights,
            dao_retry_s: 2.0,
            dao_max_attempts: 3,
            link_failure_limit: self.max_link_attempts,
        }
    }

    pub fn mobile_count(&self) -> usize {
        (self.mobile_fraction * self.node_count as f64).floor() as usize
    }
}
