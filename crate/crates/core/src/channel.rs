//! Underwater acoustic channel physics.
//!
//! Everything here is a pure function of its arguments. Frequencies passed to
//! the empirical noise and absorption formulas are in kHz, ranges in metres,
//! pressures in pascal and absorption in dB/km.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("frequency must be positive, got {0} kHz")]
    NonPositiveFrequency(f64),
    #[error("bandwidth must be positive, got {0} Hz")]
    NonPositiveBandwidth(f64),
    #[error("range must be positive, got {0} m")]
    NonPositiveRange(f64),
    #[error("transmit power must be positive, got {0} W")]
    NonPositivePower(f64),
    #[error("hop list is empty")]
    EmptyPath,
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("linear chain needs at least one hop")]
    NoHops,
    #[error("invalid environment: {0}")]
    Environment(String),
}

pub type Result<T> = std::result::Result<T, ChannelError>;

/// Water and surface conditions shared by every channel computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub temperature_celsius: f64,
    pub salinity_ppt: f64,
    pub ph: f64,
    /// Surface wind speed, 0..=10 m/s.
    pub wind_speed_mps: f64,
    /// Shipping activity factor, 0..=1.
    pub shipping_factor: f64,
    pub water_density_kg_m3: f64,
    pub gravity_mps2: f64,
}

impl Default for Environment {
    fn default() -> Self {
        Self {
            temperature_celsius: 4.0,
            salinity_ppt: 30.0,
            ph: 8.0,
            wind_speed_mps: 5.0,
            shipping_factor: 0.5,
            water_density_kg_m3: 1025.0,
            gravity_mps2: 9.81,
        }
    }
}

impl Environment {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.shipping_factor) {
            return Err(ChannelError::Environment(format!(
                "shipping_factor {} outside [0, 1]",
                self.shipping_factor
            )));
        }
        if !(0.0..=10.0).contains(&self.wind_speed_mps) {
            return Err(ChannelError::Environment(format!(
                "wind_speed_mps {} outside [0, 10]",
                self.wind_speed_mps
            )));
        }
        if !(self.water_density_kg_m3 > 0.0) {
            return Err(ChannelError::Environment(
                "water_density_kg_m3 must be positive".into(),
            ));
        }
        if !(self.gravity_mps2 > 0.0) {
            return Err(ChannelError::Environment(
                "gravity_mps2 must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One evaluation point of the channel: carrier, range, depth and band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSample {
    pub frequency_khz: f64,
    pub distance_m: f64,
    pub depth_m: f64,
    pub bandwidth_hz: f64,
}

// ---------------------------------------------------------------------------
// Sound speed
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SoundSpeedMode {
    /// Final `T·d³` coefficient as printed, 7.139e-3. Diverges at depth.
    PaperVerbatim,
    /// Mackenzie's published coefficient, 7.139e-13.
    #[default]
    MackenzieCorrected,
}

/// Nine-term Mackenzie sound speed in m/s.
pub fn sound_speed(env: &Environment, depth_m: f64, mode: SoundSpeedMode) -> f64 {
    let t = env.temperature_celsius;
    let s = env.salinity_ppt - 35.0;
    let d = depth_m;
    let cubic_coeff = match mode {
        SoundSpeedMode::PaperVerbatim => 7.139e-3,
        SoundSpeedMode::MackenzieCorrected => 7.139e-13,
    };
    1449.0 + 4.591 * t - 5.304e-2 * t * t + 2.374e-4 * t * t * t + 1.34 * s + 1.63e-2 * d
        + 1.675e-7 * d * d
        + 1.025e-2 * t * s
        - cubic_coeff * t * d * d * d
}

// ---------------------------------------------------------------------------
// Ambient noise
// ---------------------------------------------------------------------------

/// Noise power spectral density components, dB re 1 µPa²/Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseBreakdown {
    pub turbulence_db: f64,
    pub shipping_db: f64,
    pub wind_db: f64,
    pub thermal_db: f64,
    pub total_db: f64,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Turbulence, shipping, wind and thermal noise at `frequency_khz`, summed
/// in the linear power domain.
pub fn ambient_noise(env: &Environment, frequency_khz: f64) -> Result<NoiseBreakdown> {
    if !(frequency_khz > 0.0) {
        return Err(ChannelError::NonPositiveFrequency(frequency_khz));
    }
    let f = frequency_khz;
    let lf = f.log10();
    let turbulence_db = 17.0 - 30.0 * lf;
    let shipping_db =
        40.0 + 20.0 * (env.shipping_factor - 0.5) + 26.0 * lf - 60.0 * (f + 0.03).log10();
    let wind_db = 50.0 + 7.5 * env.wind_speed_mps.sqrt() + 20.0 * lf - 40.0 * (f + 0.4).log10();
    let thermal_db = -15.0 + 20.0 * lf;
    let total = db_to_linear(turbulence_db)
        + db_to_linear(shipping_db)
        + db_to_linear(wind_db)
        + db_to_linear(thermal_db);
    Ok(NoiseBreakdown {
        turbulence_db,
        shipping_db,
        wind_db,
        thermal_db,
        total_db: linear_to_db(total),
    })
}

/// Noise power in the band, dB re 1 µPa²: flat PSD at the carrier times `B`.
pub fn noise_power_db(env: &Environment, frequency_khz: f64, bandwidth_hz: f64) -> Result<f64> {
    if !(bandwidth_hz > 0.0) {
        return Err(ChannelError::NonPositiveBandwidth(bandwidth_hz));
    }
    Ok(ambient_noise(env, frequency_khz)?.total_db + linear_to_db(bandwidth_hz))
}

// ---------------------------------------------------------------------------
// Absorption
// ---------------------------------------------------------------------------

/// Boric acid relaxation frequency f₁ in kHz.
pub fn boric_relaxation_khz(env: &Environment) -> f64 {
    0.78 * (env.salinity_ppt / 35.0).sqrt() * (env.temperature_celsius / 26.0).exp()
}

/// Magnesium sulphate relaxation frequency f₂ in kHz.
pub fn magnesium_relaxation_khz(env: &Environment) -> f64 {
    42.0 * (env.temperature_celsius / 17.0).exp()
}

/// pH factor of the boric acid term; exactly 1 at pH 8.
pub fn ph_factor(env: &Environment) -> f64 {
    ((env.ph - 8.0) / 0.56).exp()
}

/// Absorption coefficient in dB/km (boric acid + magnesium sulphate + pure
/// water terms). `depth_km` is in kilometres.
pub fn absorption_db_per_km(env: &Environment, frequency_khz: f64, depth_km: f64) -> f64 {
    let f2sq = frequency_khz * frequency_khz;
    let t = env.temperature_celsius;
    let fb = boric_relaxation_khz(env);
    let fm = magnesium_relaxation_khz(env);
    let boric = 0.106 * fb * f2sq / (fb * fb + f2sq) * ph_factor(env);
    let magnesium = 0.52 * (1.0 + t / 43.0) * (env.salinity_ppt / 25.0) * fm * f2sq
        / (fm * fm + f2sq)
        * (-depth_km / 6.0).exp();
    let water = 4.9e-4 * f2sq * (-(t / 27.0 + depth_km / 17.0)).exp();
    boric + magnesium + water
}

/// Depth at which the linear depth correction reaches zero (~51.8 km).
pub const ATTENUATION_ZERO_DEPTH_M: f64 = 1.0 / 1.93e-5;

/// Depth-corrected absorption `α₀(1 − 1.93e-5·d)`. The linear factor goes
/// negative past [`ATTENUATION_ZERO_DEPTH_M`]; the result is clamped to 0 there.
pub fn attenuation_at_depth(alpha_surface: f64, depth_m: f64) -> f64 {
    (alpha_surface * (1.0 - 1.93e-5 * depth_m)).max(0.0)
}

/// True when `depth_m` is outside the physical domain of the depth correction.
pub fn attenuation_depth_out_of_domain(depth_m: f64) -> bool {
    depth_m > ATTENUATION_ZERO_DEPTH_M
}

// ---------------------------------------------------------------------------
// Transmission loss
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpreadingGeometry {
    ShallowCylindrical,
    DeepSpherical,
    /// `10·k·log₁₀ r + α·r/1000` with a user-chosen spreading exponent `k`.
    Practical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationModel {
    /// Coefficient of the shallow `log₁₀(r₁/r₂)` law.
    pub shallow_coefficient: f64,
    /// r₂ of the shallow law, metres.
    pub reference_range_m: f64,
    /// Environmental anomaly term of the deep law, dB.
    pub anomaly_db: f64,
    /// Exponent `k` used only by [`SpreadingGeometry::Practical`].
    pub spreading_factor: f64,
    /// Links shallower than this use the cylindrical law in `Auto` mode.
    pub shallow_depth_threshold_m: f64,
    /// `None` picks the geometry from depth.
    pub forced_geometry: Option<SpreadingGeometry>,
}

impl Default for PropagationModel {
    fn default() -> Self {
        Self {
            shallow_coefficient: 10.0,
            reference_range_m: 1.0,
            anomaly_db: 0.0,
            spreading_factor: 1.3,
            shallow_depth_threshold_m: 100.0,
            forced_geometry: None,
        }
    }
}

impl PropagationModel {
    pub fn geometry_at(&self, depth_m: f64) -> SpreadingGeometry {
        match self.forced_geometry {
            Some(g) => g,
            None if depth_m < self.shallow_depth_threshold_m => {
                SpreadingGeometry::ShallowCylindrical
            }
            None => SpreadingGeometry::DeepSpherical,
        }
    }
}

/// `coeff·log₁₀(r₁/r₂)` between two ranges of a cylindrical field.
pub fn shallow_loss(r1_m: f64, r2_m: f64, coefficient: f64) -> Result<f64> {
    if !(r1_m > 0.0) {
        return Err(ChannelError::NonPositiveRange(r1_m));
    }
    if !(r2_m > 0.0) {
        return Err(ChannelError::NonPositiveRange(r2_m));
    }
    Ok(coefficient * (r1_m / r2_m).log10())
}

/// `20·log₁₀ r + α·r·10⁻³ + A`.
pub fn deep_loss(r_m: f64, alpha_db_per_km: f64, anomaly_db: f64) -> Result<f64> {
    if !(r_m > 0.0) {
        return Err(ChannelError::NonPositiveRange(r_m));
    }
    Ok(20.0 * r_m.log10() + alpha_db_per_km * r_m * 1e-3 + anomaly_db)
}

/// Transmission loss in dB at range `r_m` for the chosen geometry.
pub fn transmission_loss(
    geometry: SpreadingGeometry,
    r_m: f64,
    alpha_db_per_km: f64,
    model: &PropagationModel,
) -> Result<f64> {
    match geometry {
        SpreadingGeometry::ShallowCylindrical => {
            shallow_loss(r_m, model.reference_range_m, model.shallow_coefficient)
        }
        SpreadingGeometry::DeepSpherical => deep_loss(r_m, alpha_db_per_km, model.anomaly_db),
        SpreadingGeometry::Practical => {
            if !(r_m > 0.0) {
                return Err(ChannelError::NonPositiveRange(r_m));
            }
            Ok(10.0 * model.spreading_factor * r_m.log10() + alpha_db_per_km * r_m * 1e-3)
        }
    }
}

/// Absorption used on a link at `depth_m`: the surface coefficient corrected
/// for depth.
pub fn link_absorption_db_per_km(env: &Environment, frequency_khz: f64, depth_m: f64) -> f64 {
    attenuation_at_depth(absorption_db_per_km(env, frequency_khz, 0.0), depth_m)
}

/// Transmission loss for a sample, geometry picked by `model`.
pub fn sample_loss(sample: &ChannelSample, env: &Environment, model: &PropagationModel) -> Result<f64> {
    if !(sample.frequency_khz > 0.0) {
        return Err(ChannelError::NonPositiveFrequency(sample.frequency_khz));
    }
    let alpha = link_absorption_db_per_km(env, sample.frequency_khz, sample.depth_m);
    transmission_loss(model.geometry_at(sample.depth_m), sample.distance_m, alpha, model)
}

// ---------------------------------------------------------------------------
// SNR and capacity
// ---------------------------------------------------------------------------

/// Source level in dB re 1 µPa @ 1 m of an omnidirectional projector
/// radiating `power_w` acoustic watts.
pub fn source_level_db(power_w: f64) -> f64 {
    170.8 + linear_to_db(power_w)
}

/// Shannon capacity `B·log₂(1 + SNR)` in bit/s.
pub fn shannon_capacity(bandwidth_hz: f64, snr_linear: f64) -> Result<f64> {
    if !(bandwidth_hz > 0.0) {
        return Err(ChannelError::NonPositiveBandwidth(bandwidth_hz));
    }
    Ok(bandwidth_hz * (1.0 + snr_linear.max(0.0)).log2())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub received_level_db: f64,
    pub noise_level_db: f64,
    pub snr_db: f64,
    pub snr_linear: f64,
    pub capacity_bps: f64,
}

/// Received level after transmission loss, SNR against the in-band noise,
/// and the resulting Shannon capacity.
pub fn snr_and_capacity(
    tx_power_w: f64,
    sample: &ChannelSample,
    env: &Environment,
    model: &PropagationModel,
) -> Result<LinkBudget> {
    if !(tx_power_w > 0.0) {
        return Err(ChannelError::NonPositivePower(tx_power_w));
    }
    let noise_level_db = noise_power_db(env, sample.frequency_khz, sample.bandwidth_hz)?;
    let received_level_db = source_level_db(tx_power_w) - sample_loss(sample, env, model)?;
    let snr_db = received_level_db - noise_level_db;
    let snr_linear = db_to_linear(snr_db);
    Ok(LinkBudget {
        received_level_db,
        noise_level_db,
        snr_db,
        snr_linear,
        capacity_bps: shannon_capacity(sample.bandwidth_hz, snr_linear)?,
    })
}

// ---------------------------------------------------------------------------
// Delay
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayBreakdown {
    pub processing_s: f64,
    pub queuing_s: f64,
    pub propagation_s: f64,
    pub transmission_s: f64,
    pub total_s: f64,
}

/// End-to-end delay over a path given per-hop distances. Processing and
/// queuing are per-hop figures and are charged once per hop.
pub fn delay(
    hop_distances_m: &[f64],
    sound_speed_mps: f64,
    packet_bits: f64,
    bitrate_bps: f64,
    proc_s: f64,
    queue_s: f64,
) -> Result<DelayBreakdown> {
    if hop_distances_m.is_empty() {
        return Err(ChannelError::EmptyPath);
    }
    if !(sound_speed_mps > 0.0) {
        return Err(ChannelError::NonPositive { name: "sound_speed_mps", value: sound_speed_mps });
    }
    if !(bitrate_bps > 0.0) {
        return Err(ChannelError::NonPositive { name: "bitrate_bps", value: bitrate_bps });
    }
    let hops = hop_distances_m.len() as f64;
    let propagation_s: f64 = hop_distances_m.iter().map(|d| d / sound_speed_mps).sum();
    let transmission_s = hops * (packet_bits / bitrate_bps);
    let processing_s = hops * proc_s;
    let queuing_s = hops * queue_s;
    Ok(DelayBreakdown {
        processing_s,
        queuing_s,
        propagation_s,
        transmission_s,
        total_s: processing_s + queuing_s + propagation_s + transmission_s,
    })
}

// ---------------------------------------------------------------------------
// Depth gauge
// ---------------------------------------------------------------------------

/// `(P_A − P_B)/(ρg)` in metres.
pub fn depth_difference(pressure_a_pa: f64, pressure_b_pa: f64, env: &Environment) -> f64 {
    (pressure_a_pa - pressure_b_pa) / (env.water_density_kg_m3 * env.gravity_mps2)
}

/// Gauge pressure at `depth_m`, the inverse of [`depth_difference`] against the surface.
pub fn hydrostatic_pressure(depth_m: f64, env: &Environment) -> f64 {
    env.water_density_kg_m3 * env.gravity_mps2 * depth_m
}

// ---------------------------------------------------------------------------
// Linear-chain energy models
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaterGeometry {
    Shallow,
    Deep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelayMode {
    MultiHop,
    SingleHop,
}

/// Source power needed to hold a cylindrical field of height `height_m` at radius `r_m`.
pub fn cylindrical_source_power(r_m: f64, height_m: f64) -> f64 {
    2.0 * std::f64::consts::PI * r_m * height_m
}

/// Source power needed for intensity `intensity` at radius `r_m` of a spherical field.
pub fn spherical_source_power(r_m: f64, intensity: f64) -> f64 {
    4.0 * std::f64::consts::PI * r_m * r_m * intensity
}

/// Total energy of a linear chain of `n_hops` hops each `hop_distance_m`
/// long, where `per_hop_tx_energy` is the energy to push one packet across one
/// hop and `packets` packets are sent.
pub fn linear_chain_energy(
    geometry: WaterGeometry,
    mode: RelayMode,
    n_hops: u32,
    hop_distance_m: f64,
    per_hop_tx_energy: f64,
    packets: u64,
) -> Result<f64> {
    if n_hops < 1 {
        return Err(ChannelError::NoHops);
    }
    if !(hop_distance_m > 0.0) {
        return Err(ChannelError::NonPositiveRange(hop_distance_m));
    }
    let unit = per_hop_tx_energy * packets as f64;
    let n = n_hops as f64;
    Ok(match (geometry, mode) {
        (WaterGeometry::Shallow, RelayMode::MultiHop) => n * (n + 1.0) / 2.0 * unit,
        (WaterGeometry::Deep, RelayMode::MultiHop) => n * unit,
        (WaterGeometry::Shallow, RelayMode::SingleHop) => {
            let base = cylindrical_source_power(hop_distance_m, 1.0);
            (1..=n_hops)
                .map(|i| cylindrical_source_power(i as f64 * hop_distance_m, 1.0) / base)
                .sum::<f64>()
                * unit
        }
        (WaterGeometry::Deep, RelayMode::SingleHop) => {
            let base = spherical_source_power(hop_distance_m, 1.0);
            (1..=n_hops)
                .map(|i| spherical_source_power(i as f64 * hop_distance_m, 1.0) / base)
                .sum::<f64>()
                * unit
        }
    })
}
