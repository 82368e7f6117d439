use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RankError {
    #[error("max_depth_m must be positive, got {0}")]
    MaxDepth(f64),
    #[error("parent rank must be nonnegative, got {0}")]
    ParentRank(f64),
}

pub const ROOT_RANK: f64 = 0.0;
pub const INFINITE_RANK: f64 = f64::INFINITY;

/// Weights of the hop, depth and link-quality terms of the rank increment.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RankWeights {
    pub hop: f64,
    pub depth: f64,
    pub arssi: f64,
}

impl Default for RankWeights {
    fn default() -> Self {
        Self { hop: 0.5, depth: 0.3, arssi: 0.2 }
    }
}

/// Rank through a parent: hop increment, normalised depth gain below the
/// parent and link weakness, on top of the parent's rank.
pub fn compute_rank(
    parent_rank: f64,
    hop_increment: u32,
    own_depth_m: f64,
    parent_depth_m: f64,
    arssi_norm: f64,
    weights: &RankWeights,
    max_depth_m: f64,
) -> Result<f64, RankError> {
    if !(max_depth_m > 0.0) {
        return Err(RankError::MaxDepth(max_depth_m));
    }
    if !(parent_rank >= 0.0) {
        return Err(RankError::ParentRank(parent_rank));
    }
    let depth_gain = (own_depth_m - parent_depth_m).max(0.0) / max_depth_m;
    Ok(parent_rank
        + weights.hop * hop_increment as f64
        + weights.depth * depth_gain
        + weights.arssi * (1.0 - arssi_norm.clamp(0.0, 1.0)))
}
