//! Euler characteristic and genus from the rank of the handle operator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{decide_rank, require_gap, TolPolicy};
use crate::operator::{handle_operator, BoundaryOperator};

/// Topological invariants read off `∂γ + ΛJΛ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopologyResult {
    #[serde(rename = "r")]
    pub handle_rank: usize,
    #[serde(rename = "chi")]
    pub euler_characteristic: i64,
    pub genus: usize,
    pub gap_ratio: f64,
    /// Leading singular values of the handle operator.
    pub singular_values: Vec<f64>,
}

/// Gap required between retained and discarded singular values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopologyConfig {
    pub policy: TolPolicy,
    pub gap_factor: f64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            policy: TolPolicy::default(),
            gap_factor: 1e3,
        }
    }
}

impl TopologyConfig {
    /// Settings for finite-element operators, whose null directions are only
    /// resolved to discretization error.
    pub fn discretized() -> Self {
        Self {
            policy: TolPolicy::Gap {
                min_ratio: 10.0,
                max_rank: 8,
            },
            gap_factor: 10.0,
        }
    }
}

/// Largest handle rank considered finite for a grid of size `2N + 1`.
pub fn max_handle_rank(size: usize) -> usize {
    size / 4
}

pub fn topology_of(lambda: &BoundaryOperator, config: &TopologyConfig) -> Result<TopologyResult> {
    let h = handle_operator(lambda)?;
    let size = lambda.grid().size();
    let policy = match config.policy {
        TolPolicy::Gap { min_ratio, max_rank } => TolPolicy::Gap {
            min_ratio,
            max_rank: max_rank.min(max_handle_rank(size)),
        },
        p => p,
    };
    let sv = h.singular_values()?;
    let info = decide_rank(&sv, h.meta().reference_norm.unwrap_or(0.0), size, policy)?;
    if info.rank > max_handle_rank(size) {
        return Err(Error::UnboundedRank { rank: info.rank, size });
    }
    require_gap(&info, config.gap_factor)?;
    if info.rank % 2 == 1 {
        return Err(Error::OddRank { rank: info.rank });
    }
    Ok(TopologyResult {
        handle_rank: info.rank,
        euler_characteristic: 1 - info.rank as i64,
        genus: info.rank / 2,
        gap_ratio: info.gap_ratio,
        singular_values: sv.iter().take((info.rank + 4).min(sv.len())).copied().collect(),
    })
}
