//! Flat `key = value` scenario files.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored.
//! Every key is optional; missing keys keep the defaults of [`Scenario`].
//! Vector values are comma separated, e.g. `area = 1000, 1000, 500`.
//! Frequencies are in kHz.

use thiserror::Error;

use crate::channel::SoundSpeedMode;
use crate::protocol::{Mode, RankWeights};
use crate::sim::{LossMode, Scenario, ScenarioError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error(transparent)]
    Invalid(#[from] ScenarioError),
}

/// Whether a key takes a comma-separated vector rather than a scalar.
pub fn is_vector_key(key: &str) -> bool {
    matches!(
        key,
        "area" | "sink_position" | "speed_range_mps" | "channels_khz" | "rank_weights" | "ahp_matrix"
    )
}

/// Every key accepted in a scenario file.
pub const SCENARIO_KEYS: &[&str] = &[
    "node_count",
    "area",
    "sink_position",
    "mobile_fraction",
    "speed_range_mps",
    "direction_epoch_s",
    "mobility_tick_s",
    "initial_node_energy_j",
    "initial_sink_energy_j",
    "tx_long_w",
    "tx_short_w",
    "rx_w",
    "idle_w",
    "aggregation_w",
    "long_tx_threshold_m",
    "node_range_m",
    "sink_range_m",
    "frequency_khz",
    "channels_khz",
    "bandwidth_bps",
    "packet_rate_pps",
    "data_packet_bytes",
    "link_ack_bytes",
    "queue_capacity",
    "max_link_attempts",
    "data_ttl",
    "mac_backoff_max_s",
    "sim_duration_s",
    "seed",
    "mode",
    "max_parents",
    "temperature_celsius",
    "salinity_ppt",
    "ph",
    "wind_speed_mps",
    "shipping_factor",
    "water_density_kg_m3",
    "gravity_mps2",
    "sound_speed_mode",
    "loss_mode",
    "shallow_depth_threshold_m",
    "shallow_tl_coefficient",
    "anomaly_db",
    "spreading_factor",
    "snr_threshold_db",
    "dao_ack_snr_db",
    "predetermined_lifetime_s",
    "convergence_window_s",
    "trickle_i_min_ms",
    "trickle_doublings",
    "inconsistency_threshold",
    "arssi_beta",
    "switch_hysteresis",
    "response_delay_max_s",
    "rank_weights",
    "ahp_matrix",
];

fn num(v: &str) -> Result<f64, String> {
    let x: f64 = v.trim().parse().map_err(|_| format!("`{}` is not a number", v.trim()))?;
    if !x.is_finite() {
        return Err(format!("`{}` is not finite", v.trim()));
    }
    Ok(x)
}

fn int<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.trim().parse().map_err(|_| format!("`{}` is not a nonnegative integer", v.trim()))
}

fn list(v: &str) -> Result<Vec<f64>, String> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(num).collect()
}

fn fixed<const N: usize>(v: &str) -> Result<[f64; N], String> {
    let xs = list(v)?;
    xs.try_into().map_err(|xs: Vec<f64>| format!("expected {N} values, got {}", xs.len()))
}

pub fn parse_mode(v: &str) -> Result<Mode, String> {
    match v.trim().to_ascii_uppercase().as_str() {
        "RPLUW" => Ok(Mode::Rpluw),
        "RPLUWM" => Ok(Mode::Rpluwm),
        other => Err(format!("mode must be RPLUW or RPLUWM, got `{other}`")),
    }
}

/// Set one field from its textual value.
pub fn apply_setting(s: &mut Scenario, key: &str, value: &str) -> Result<(), String> {
    let v = value.trim();
    match key {
        "node_count" => s.node_count = int(v)?,
        "area" => s.area = fixed(v)?,
        "sink_position" => s.sink_position = fixed(v)?,
        "mobile_fraction" => s.mobile_fraction = num(v)?,
        "speed_range_mps" => {
            let [lo, hi] = fixed(v)?;
            s.speed_range_mps = (lo, hi);
        }
        "direction_epoch_s" => s.direction_epoch_s = num(v)?,
        "mobility_tick_s" => s.mobility_tick_s = num(v)?,
        "initial_node_energy_j" => s.initial_node_energy_j = num(v)?,
        "initial_sink_energy_j" => s.initial_sink_energy_j = num(v)?,
        "tx_long_w" => s.tx_long_w = num(v)?,
        "tx_short_w" => s.tx_short_w = num(v)?,
        "rx_w" => s.rx_w = num(v)?,
        "idle_w" => s.idle_w = num(v)?,
        "aggregation_w" => s.aggregation_w = num(v)?,
        "long_tx_threshold_m" => s.long_tx_threshold_m = num(v)?,
        "node_range_m" => s.node_range_m = num(v)?,
        "sink_range_m" => s.sink_range_m = num(v)?,
        "frequency_khz" => s.frequency_khz = num(v)?,
        "channels_khz" => s.channels_khz = list(v)?,
        "bandwidth_bps" => s.bandwidth_bps = num(v)?,
        "packet_rate_pps" => s.packet_rate_pps = num(v)?,
        "data_packet_bytes" => s.data_packet_bytes = int(v)?,
        "link_ack_bytes" => s.link_ack_bytes = int(v)?,
        "queue_capacity" => s.queue_capacity = int(v)?,
        "max_link_attempts" => s.max_link_attempts = int(v)?,
        "data_ttl" => s.data_ttl = int(v)?,
        "mac_backoff_max_s" => s.mac_backoff_max_s = num(v)?,
        "sim_duration_s" => s.sim_duration_s = num(v)?,
        "seed" => s.seed = int(v)?,
        "mode" => s.mode = parse_mode(v)?,
        "max_parents" => s.max_parents = int(v)?,
        "temperature_celsius" => s.environment.temperature_celsius = num(v)?,
        "salinity_ppt" => s.environment.salinity_ppt = num(v)?,
        "ph" => s.environment.ph = num(v)?,
        "wind_speed_mps" => s.environment.wind_speed_mps = num(v)?,
        "shipping_factor" => s.environment.shipping_factor = num(v)?,
        "water_density_kg_m3" => s.environment.water_density_kg_m3 = num(v)?,
        "gravity_mps2" => s.environment.gravity_mps2 = num(v)?,
        "sound_speed_mode" => {
            s.sound_speed_mode = match v.to_ascii_lowercase().as_str() {
                "mackenzie" | "mackenzie-corrected" => SoundSpeedMode::MackenzieCorrected,
                "paper" | "paper-verbatim" | "verbatim" => SoundSpeedMode::PaperVerbatim,
                other => return Err(format!("sound_speed_mode must be mackenzie or verbatim, got `{other}`")),
            }
        }
        "loss_mode" => {
            s.loss_mode = match v.to_ascii_lowercase().as_str() {
                "auto" => LossMode::Auto,
                "shallow" => LossMode::Shallow,
                "deep" => LossMode::Deep,
                "practical" => LossMode::Practical,
                other => return Err(format!("loss_mode must be auto, shallow, deep or practical, got `{other}`")),
            }
        }
        "shallow_depth_threshold_m" => s.shallow_depth_threshold_m = num(v)?,
        "shallow_tl_coefficient" => s.shallow_tl_coefficient = num(v)?,
        "anomaly_db" => s.anomaly_db = num(v)?,
        "spreading_factor" => s.spreading_factor = num(v)?,
        "snr_threshold_db" => s.snr_threshold_db = num(v)?,
        "dao_ack_snr_db" => s.dao_ack_snr_db = num(v)?,
        "predetermined_lifetime_s" => s.predetermined_lifetime_s = num(v)?,
        "convergence_window_s" => s.convergence_window_s = num(v)?,
        "trickle_i_min_ms" => s.trickle_i_min_ms = int(v)?,
        "trickle_doublings" => s.trickle_doublings = int(v)?,
        "inconsistency_threshold" => s.inconsistency_threshold = int(v)?,
        "arssi_beta" => s.arssi_beta = num(v)?,
        "switch_hysteresis" => s.switch_hysteresis = num(v)?,
        "response_delay_max_s" => s.response_delay_max_s = num(v)?,
        "rank_weights" => {
            let [hop, depth, arssi] = fixed(v)?;
            s.rank_weights = RankWeights { hop, depth, arssi };
        }
        "ahp_matrix" => s.ahp_matrix = if v.is_empty() { None } else { Some(list(v)?) },
        _ => return Err(format!("unknown key `{key}`")),
    }
    Ok(())
}

/// Split a file into `(line_number, key, value)` triples.
pub fn parse_lines(text: &str) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Parse { line: line_no, message: format!("expected `key = value`, got `{line}`") });
        };
        let key = k.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(ConfigError::Parse { line: line_no, message: format!("malformed key `{key}`") });
        }
        if out.iter().any(|(_, seen, _): &(usize, String, String)| seen == key) {
            return Err(ConfigError::DuplicateKey { line: line_no, key: key.to_string() });
        }
        out.push((line_no, key.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Parse and validate a scenario file's contents.
pub fn parse_scenario_str(text: &str) -> Result<Scenario, ConfigError> {
    let mut s = Scenario::default();
    for (line, key, value) in parse_lines(text)? {
        if !SCENARIO_KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey { line, key });
        }
        apply_setting(&mut s, &key, &value).map_err(|message| ConfigError::Parse { line, message })?;
    }
    s.validate()?;
    Ok(s)
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

/// Render a scenario in the file format; parsing the output yields the same scenario.
pub fn render_scenario(s: &Scenario) -> String {
    let e = &s.environment;
    let w = &s.rank_weights;
    let mut lines = vec![
        format!("node_count = {}", s.node_count),
        format!("area = {}", join(&s.area)),
        format!("sink_position = {}", join(&s.sink_position)),
        format!("mobile_fraction = {:?}", s.mobile_fraction),
        format!("speed_range_mps = {:?}, {:?}", s.speed_range_mps.0, s.speed_range_mps.1),
        format!("direction_epoch_s = {:?}", s.direction_epoch_s),
        format!("mobility_tick_s = {:?}", s.mobility_tick_s),
        format!("initial_node_energy_j = {:?}", s.initial_node_energy_j),
        format!("initial_sink_energy_j = {:?}", s.initial_sink_energy_j),
        format!("tx_long_w = {:?}", s.tx_long_w),
        format!("tx_short_w = {:?}", s.tx_short_w),
        format!("rx_w = {:?}", s.rx_w),
        format!("idle_w = {:?}", s.idle_w),
        format!("aggregation_w = {:?}", s.aggregation_w),
        format!("long_tx_threshold_m = {:?}", s.long_tx_threshold_m),
        format!("node_range_m = {:?}", s.node_range_m),
        format!("sink_range_m = {:?}", s.sink_range_m),
        format!("frequency_khz = {:?}", s.frequency_khz),
        format!("channels_khz = {}", join(&s.channels_khz)),
        format!("bandwidth_bps = {:?}", s.bandwidth_bps),
        format!("packet_rate_pps = {:?}", s.packet_rate_pps),
        format!("data_packet_bytes = {}", s.data_packet_bytes),
        format!("link_ack_bytes = {}", s.link_ack_bytes),
        format!("queue_capacity = {}", s.queue_capacity),
        format!("max_link_attempts = {}", s.max_link_attempts),
        format!("data_ttl = {}", s.data_ttl),
        format!("mac_backoff_max_s = {:?}", s.mac_backoff_max_s),
        format!("sim_duration_s = {:?}", s.sim_duration_s),
        format!("seed = {}", s.seed),
        format!("mode = {}", s.mode.label()),
        format!("max_parents = {}", s.max_parents),
        format!("temperature_celsius = {:?}", e.temperature_celsius),
        format!("salinity_ppt = {:?}", e.salinity_ppt),
        format!("ph = {:?}", e.ph),
        format!("wind_speed_mps = {:?}", e.wind_speed_mps),
        format!("shipping_factor = {:?}", e.shipping_factor),
        format!("water_density_kg_m3 = {:?}", e.water_density_kg_m3),
        format!("gravity_mps2 = {:?}", e.gravity_mps2),
        format!(
            "sound_speed_mode = {}",
            match s.sound_speed_mode {
                SoundSpeedMode::MackenzieCorrected => "mackenzie",
                SoundSpeedMode::PaperVerbatim => "verbatim",
            }
        ),
        format!(
            "loss_mode = {}",
            match s.loss_mode {
                LossMode::Auto => "auto",
                LossMode::Shallow => "shallow",
                LossMode::Deep => "deep",
                LossMode::Practical => "practical",
            }
        ),
        format!("shallow_depth_threshold_m = {:?}", s.shallow_depth_threshold_m),
        format!("shallow_tl_coefficient = {:?}", s.shallow_tl_coefficient),
        format!("anomaly_db = {:?}", s.anomaly_db),
        format!("spreading_factor = {:?}", s.spreading_factor),
        format!("snr_threshold_db = {:?}", s.snr_threshold_db),
        format!("dao_ack_snr_db = {:?}", s.dao_ack_snr_db),
        format!("predetermined_lifetime_s = {:?}", s.predetermined_lifetime_s),
        format!("convergence_window_s = {:?}", s.convergence_window_s),
        format!("trickle_i_min_ms = {}", s.trickle_i_min_ms),
        format!("trickle_doublings = {}", s.trickle_doublings),
        format!("inconsistency_threshold = {}", s.inconsistency_threshold),
        format!("arssi_beta = {:?}", s.arssi_beta),
        format!("switch_hysteresis = {:?}", s.switch_hysteresis),
        format!("response_delay_max_s = {:?}", s.response_delay_max_s),
        format!("rank_weights = {:?}, {:?}, {:?}", w.hop, w.depth, w.arssi),
    ];
    if let Some(m) = &s.ahp_matrix {
        lines.push(format!("ahp_matrix = {}", join(m)));
    }
    let mut text = lines.join("\n");
    text.push('\n');
    text
}
