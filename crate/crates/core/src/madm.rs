//! Parent valuation: AHP criterion weights and multi-attribute parent ranking.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::NodeId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MadmError {
    #[error("comparison matrix is empty")]
    Empty,
    #[error("comparison matrix is not square: row {row} has {len} entries, expected {n}")]
    NotSquare { row: usize, len: usize, n: usize },
    #[error("entry ({0}, {1}) is not a positive finite number")]
    NonPositive(usize, usize),
    #[error("diagonal entry ({0}, {0}) is not 1")]
    Diagonal(usize),
    #[error("entries ({0}, {1}) and ({1}, {0}) are not reciprocal")]
    NotReciprocal(usize, usize),
    #[error("length mismatch: {params} parameters vs {weights} weights")]
    LengthMismatch { params: usize, weights: usize },
    #[error("criterion list must name each of the seven criteria exactly once")]
    CriteriaSet,
}

/// Pairwise comparison matrix `A` with `a_ji = 1/a_ij` and a unit diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonMatrix {
    entries: Vec<Vec<f64>>,
}

const RECIPROCAL_TOL: f64 = 1e-9;

impl ComparisonMatrix {
    pub fn new(entries: Vec<Vec<f64>>) -> Result<Self, MadmError> {
        let n = entries.len();
        if n == 0 {
            return Err(MadmError::Empty);
        }
        for (i, row) in entries.iter().enumerate() {
            if row.len() != n {
                return Err(MadmError::NotSquare { row: i, len: row.len(), n });
            }
            for (j, &a) in row.iter().enumerate() {
                if !(a.is_finite() && a > 0.0) {
                    return Err(MadmError::NonPositive(i, j));
                }
            }
        }
        for i in 0..n {
            if (entries[i][i] - 1.0).abs() > RECIPROCAL_TOL {
                return Err(MadmError::Diagonal(i));
            }
            for j in (i + 1)..n {
                let prod = entries[i][j] * entries[j][i];
                if (prod - 1.0).abs() > RECIPROCAL_TOL {
                    return Err(MadmError::NotReciprocal(i, j));
                }
            }
        }
        Ok(Self { entries })
    }

    /// The perfectly consistent matrix `a_ij = w_i / w_j`.
    pub fn from_weights(weights: &[f64]) -> Result<Self, MadmError> {
        let entries = weights
            .iter()
            .map(|wi| weights.iter().map(|wj| wi / wj).collect())
            .collect();
        Self::new(entries)
    }

    pub fn size(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[Vec<f64>] {
        &self.entries
    }

    /// Largest relative deviation of `a_ij` from `ω_i/ω_j` for the derived
    /// weights. Zero for a consistent matrix.
    pub fn inconsistency(&self) -> f64 {
        let w = ahp_weights(self);
        let mut worst: f64 = 0.0;
        for (i, row) in self.entries.iter().enumerate() {
            for (j, &a) in row.iter().enumerate() {
                let ideal = w[i] / w[j];
                worst = worst.max((a - ideal).abs() / ideal);
            }
        }
        worst
    }
}

/// Priority vector by column normalisation and row averaging.
pub fn ahp_weights(matrix: &ComparisonMatrix) -> Vec<f64> {
    let a = matrix.entries();
    let n = a.len();
    let column_sums: Vec<f64> = (0..n).map(|j| a.iter().map(|row| row[j]).sum()).collect();
    a.iter()
        .map(|row| {
            let s: f64 = row.iter().zip(&column_sums).map(|(x, c)| x / c).sum();
            s / n as f64
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Criterion {
    HopCount,
    ResidualEnergy,
    Arssi,
    Delay,
    Etx,
    LinkPdr,
    Depth,
}

impl Criterion {
    pub const ALL: [Criterion; 7] = [
        Criterion::HopCount,
        Criterion::ResidualEnergy,
        Criterion::Arssi,
        Criterion::Delay,
        Criterion::Etx,
        Criterion::LinkPdr,
        Criterion::Depth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::HopCount => "hop_count",
            Criterion::ResidualEnergy => "residual_energy",
            Criterion::Arssi => "arssi",
            Criterion::Delay => "delay",
            Criterion::Etx => "etx",
            Criterion::LinkPdr => "link_pdr",
            Criterion::Depth => "depth",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }

    pub fn direction(self) -> Direction {
        match self {
            Criterion::ResidualEnergy | Criterion::Arssi | Criterion::LinkPdr => Direction::Benefit,
            Criterion::HopCount | Criterion::Delay | Criterion::Etx | Criterion::Depth => {
                Direction::Cost
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Benefit,
    Cost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriterionSpec {
    pub criterion: Criterion,
    pub direction: Direction,
}

/// The seven criteria in parent-table order with their fixed directions.
pub fn standard_criteria() -> Vec<CriterionSpec> {
    Criterion::ALL
        .iter()
        .map(|&c| CriterionSpec { criterion: c, direction: c.direction() })
        .collect()
}

pub fn validate_criteria(spec: &[CriterionSpec]) -> Result<(), MadmError> {
    if spec.len() != Criterion::ALL.len() {
        return Err(MadmError::CriteriaSet);
    }
    for c in Criterion::ALL {
        if spec.iter().filter(|s| s.criterion == c).count() != 1 {
            return Err(MadmError::CriteriaSet);
        }
    }
    Ok(())
}

/// Default priority ordering, most important first.
pub const DEFAULT_PRIORITY: [Criterion; 7] = [
    Criterion::Arssi,
    Criterion::ResidualEnergy,
    Criterion::HopCount,
    Criterion::Depth,
    Criterion::Delay,
    Criterion::Etx,
    Criterion::LinkPdr,
];

/// Consistent comparison matrix over `spec` order where each criterion is
/// twice as important as the next one in `priority`.
pub fn default_comparison_matrix(spec: &[CriterionSpec]) -> ComparisonMatrix {
    let raw: Vec<f64> = spec
        .iter()
        .map(|s| {
            let rank = DEFAULT_PRIORITY.iter().position(|&c| c == s.criterion).unwrap_or(6);
            2f64.powi(-(rank as i32))
        })
        .collect();
    ComparisonMatrix::from_weights(&raw).expect("powers of two are positive")
}

// ---------------------------------------------------------------------------
// Parent records and selection
// ---------------------------------------------------------------------------

/// One candidate parent with the seven decision criteria.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParentRecord {
    pub parent_id: NodeId,
    pub hop_count: u32,
    pub residual_energy_j: f64,
    /// Smoothed link SNR, dB.
    pub arssi: f64,
    pub delay_ms: f64,
    pub etx: f64,
    pub link_pdr: f64,
    pub depth_m: f64,
    pub madm_value: f64,
}

impl ParentRecord {
    pub fn value_of(&self, c: Criterion) -> f64 {
        match c {
            Criterion::HopCount => self.hop_count as f64,
            Criterion::ResidualEnergy => self.residual_energy_j,
            Criterion::Arssi => self.arssi,
            Criterion::Delay => self.delay_ms,
            Criterion::Etx => self.etx,
            Criterion::LinkPdr => self.link_pdr,
            Criterion::Depth => self.depth_m,
        }
    }
}

/// Min-max normalisation per criterion; benefit criteria map the best to 1,
/// cost criteria map the lowest to 1, constant columns map to 1.
pub fn normalize_criteria(candidates: &[ParentRecord], spec: &[CriterionSpec]) -> Vec<Vec<f64>> {
    let columns: Vec<(f64, f64)> = spec
        .iter()
        .map(|s| {
            candidates.iter().map(|c| c.value_of(s.criterion)).fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(lo, hi), v| (lo.min(v), hi.max(v)),
            )
        })
        .collect();
    candidates
        .iter()
        .map(|c| {
            spec.iter()
                .zip(&columns)
                .map(|(s, &(lo, hi))| {
                    let range = hi - lo;
                    if !(range > 0.0) {
                        return 1.0;
                    }
                    let x = c.value_of(s.criterion);
                    match s.direction {
                        Direction::Benefit => (x - lo) / range,
                        Direction::Cost => (hi - x) / range,
                    }
                })
                .collect()
        })
        .collect()
}

/// Weighted sum of normalised parameters.
pub fn node_value(params: &[f64], weights: &[f64]) -> Result<f64, MadmError> {
    if params.len() != weights.len() {
        return Err(MadmError::LengthMismatch { params: params.len(), weights: weights.len() });
    }
    Ok(params.iter().zip(weights).map(|(p, w)| p * w).sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Best first, at most `k_bar` entries, `madm_value` filled in.
    pub table: Vec<ParentRecord>,
    pub preferred: Option<NodeId>,
}

/// Total order used to rank scored candidates: higher value first, then
/// shallower, then lower id.
pub fn ranking_order(a: &ParentRecord, b: &ParentRecord) -> std::cmp::Ordering {
    b.madm_value
        .total_cmp(&a.madm_value)
        .then(a.depth_m.total_cmp(&b.depth_m))
        .then(a.parent_id.cmp(&b.parent_id))
}

/// Score every candidate and keep the best `k_bar`.
pub fn select_parents(
    candidates: &[ParentRecord],
    weights: &[f64],
    spec: &[CriterionSpec],
    k_bar: usize,
) -> Selection {
    let normalized = normalize_criteria(candidates, spec);
    let mut scored: Vec<ParentRecord> = candidates
        .iter()
        .zip(&normalized)
        .map(|(c, params)| ParentRecord {
            madm_value: node_value(params, weights).unwrap_or(f64::NEG_INFINITY),
            ..c.clone()
        })
        .collect();
    scored.sort_by(ranking_order);
    scored.truncate(k_bar);
    Selection { preferred: scored.first().map(|r| r.parent_id), table: scored }
}
