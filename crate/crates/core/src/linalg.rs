//! Thin wrappers over `faer` dense factorizations and the rank policy.

use faer::{Mat, MatRef, Side};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) type CMat = Mat<C64>;

pub(crate) struct Svd {
    /// Nonincreasing.
    pub s: Vec<f64>,
    pub v: CMat,
}

pub(crate) fn svd(m: MatRef<'_, C64>) -> Result<Svd> {
    let d = m.svd().map_err(|e| Error::Linalg(format!("svd: {e:?}")))?;
    Ok(Svd {
        s: d.S().column_vector().iter().map(|x| x.re).collect(),
        v: d.V().to_owned(),
    })
}

pub(crate) fn singular_values(m: MatRef<'_, C64>) -> Result<Vec<f64>> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(Vec::new());
    }
    m.singular_values()
        .map_err(|e| Error::Linalg(format!("singular values: {e:?}")))
}

/// Eigenpairs of a Hermitian matrix, eigenvalues nondecreasing.
pub(crate) fn hermitian_eigen(m: MatRef<'_, C64>) -> Result<(Vec<f64>, CMat)> {
    let e = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Linalg(format!("eigen: {e:?}")))?;
    Ok((
        e.S().column_vector().iter().map(|x| x.re).collect(),
        e.U().to_owned(),
    ))
}

pub(crate) fn spectral_norm(m: MatRef<'_, C64>) -> Result<f64> {
    Ok(singular_values(m)?.first().copied().unwrap_or(0.0))
}

/// How the numerical rank threshold `τ` is chosen from the singular values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TolPolicy {
    /// `τ = scale · (2N + 1) · eps`, where `scale` is the larger of `σ_max` and
    /// the operator's reference norm.
    Relative { eps: f64 },
    /// Fixed threshold.
    Absolute { tau: f64 },
    /// Largest `r <= max_rank` with `σ_r / σ_{r+1} >= min_ratio`, with
    /// `σ_0 := scale`. Meant for discretized operators whose null directions
    /// are only resolved to discretization error.
    Gap { min_ratio: f64, max_rank: usize },
    /// Smallest `r >= 1` with `σ_r / σ_{r+1} >= min_ratio`: the first clear
    /// drop below the top of the spectrum. Meant for kernels of discretized
    /// operators, where the null directions sit at discretization error.
    LeadingGap { min_ratio: f64 },
}

impl Default for TolPolicy {
    fn default() -> Self {
        TolPolicy::Relative { eps: 1e-13 }
    }
}

/// Outcome of a rank decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankInfo {
    pub rank: usize,
    pub tau: f64,
    /// Ratio of the smallest retained singular value (or the scale, if none)
    /// to the largest discarded one; `f64::MAX` when nothing is discarded
    /// or the discarded ones vanish.
    pub gap_ratio: f64,
    pub singular_values: Vec<f64>,
}

pub(crate) fn ratio(above: f64, below: f64) -> f64 {
    if below <= 0.0 {
        if above > 0.0 {
            f64::MAX
        } else {
            1.0
        }
    } else {
        (above / below).min(f64::MAX)
    }
}

/// Applies `policy` to singular values `sv` (nonincreasing). `size` is the
/// truncated dimension `2N + 1`.
pub(crate) fn decide_rank(sv: &[f64], scale: f64, size: usize, policy: TolPolicy) -> Result<RankInfo> {
    let scale = sv.first().copied().unwrap_or(0.0).max(scale);
    let at = |k: usize| -> f64 {
        // σ_k with σ_0 = scale and σ_{len+1} = 0
        if k == 0 {
            scale
        } else {
            sv.get(k - 1).copied().unwrap_or(0.0)
        }
    };
    let (rank, tau) = match policy {
        TolPolicy::Relative { eps } => {
            let tau = scale * size as f64 * eps;
            (sv.iter().filter(|&&s| s > tau).count(), tau)
        }
        TolPolicy::Absolute { tau } => (sv.iter().filter(|&&s| s > tau).count(), tau),
        TolPolicy::LeadingGap { min_ratio } => {
            let top = sv.len();
            match (1..=top).find(|&r| ratio(at(r), at(r + 1)) >= min_ratio) {
                Some(r) => {
                    let (a, b) = (at(r), at(r + 1));
                    (r, if b > 0.0 { (a * b).sqrt() } else { a * 0.5 })
                }
                None => {
                    return Err(Error::RankAmbiguous {
                        lower: 0,
                        upper: top,
                        gap: (1..=top).map(|r| ratio(at(r), at(r + 1))).fold(0.0, f64::max),
                    })
                }
            }
        }
        TolPolicy::Gap { min_ratio, max_rank } => {
            let top = max_rank.min(sv.len());
            let found = (0..=top).rev().find(|&r| ratio(at(r), at(r + 1)) >= min_ratio);
            match found {
                Some(r) => {
                    let (a, b) = (at(r), at(r + 1));
                    let tau = if b > 0.0 { (a * b).sqrt() } else { a * 0.5 };
                    (r, tau)
                }
                None => {
                    let best = (0..=top)
                        .map(|r| ratio(at(r), at(r + 1)))
                        .fold(0.0, f64::max);
                    return Err(Error::RankAmbiguous {
                        lower: 0,
                        upper: top,
                        gap: best,
                    });
                }
            }
        }
    };
    // A zero operator has rank 0 beyond doubt.
    let gap_ratio = if scale == 0.0 { f64::MAX } else { ratio(at(rank), at(rank + 1)) };
    Ok(RankInfo {
        rank,
        tau,
        gap_ratio,
        singular_values: sv.to_vec(),
    })
}

/// Fails with [`Error::RankAmbiguous`] unless the singular values on either side
/// of `τ` are separated by at least `gap_factor`.
pub(crate) fn require_gap(info: &RankInfo, gap_factor: f64) -> Result<()> {
    if info.gap_ratio >= gap_factor {
        return Ok(());
    }
    let r = info.rank;
    let above = if r == 0 { f64::MAX } else { info.singular_values[r - 1] };
    let below = info.singular_values.get(r).copied().unwrap_or(0.0);
    // The candidate on the far side of τ is whichever neighbor sits closer to it.
    let (lower, upper) = if r > 0 && above / info.tau < info.tau / below.max(f64::MIN_POSITIVE) {
        (r - 1, r)
    } else {
        (r, r + 1)
    };
    Err(Error::RankAmbiguous {
        lower,
        upper,
        gap: info.gap_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_policy_counts_above_threshold() {
        let sv = [10.0, 5.0, 1e-14, 0.0];
        let info = decide_rank(&sv, 0.0, 4, TolPolicy::default()).unwrap();
        assert_eq!(info.rank, 2);
        assert!(info.gap_ratio > 1e14);
        require_gap(&info, 1e3).unwrap();
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let info = decide_rank(&[0.0; 5], 0.0, 5, TolPolicy::default()).unwrap();
        assert_eq!(info.rank, 0);
    }

    #[test]
    fn gap_policy_prefers_largest_isolated_rank() {
        let sv = [0.9, 0.9, 0.05, 0.04, 0.03];
        let info = decide_rank(&sv, 300.0, 33, TolPolicy::Gap { min_ratio: 10.0, max_rank: 4 }).unwrap();
        assert_eq!(info.rank, 2);
        assert!((info.gap_ratio - 18.0).abs() < 1e-9);
    }

    #[test]
    fn leading_gap_takes_first_drop() {
        let sv = [32.0, 30.0, 2.0, 0.3, 0.02, 0.01, 3e-11];
        let info = decide_rank(&sv, 0.0, 7, TolPolicy::LeadingGap { min_ratio: 10.0 }).unwrap();
        assert_eq!(info.rank, 2);
        let info = decide_rank(&[1.0, 0.0], 0.0, 2, TolPolicy::LeadingGap { min_ratio: 10.0 }).unwrap();
        assert_eq!(info.rank, 1);
        let info = decide_rank(&[1.0, 0.5], 0.0, 2, TolPolicy::LeadingGap { min_ratio: 10.0 }).unwrap();
        assert_eq!(info.rank, 2);
    }

    #[test]
    fn gap_policy_reports_ambiguity() {
        let sv = [1.0, 0.5, 0.25, 0.125];
        let err = decide_rank(&sv, 1.0, 9, TolPolicy::Gap { min_ratio: 10.0, max_rank: 2 }).unwrap_err();
        assert!(matches!(err, Error::RankAmbiguous { .. }));
    }

    #[test]
    fn missing_gap_is_ambiguous() {
        let sv = [1.0, 1e-12, 5e-13];
        let info = decide_rank(&sv, 0.0, 3, TolPolicy::Absolute { tau: 8e-13 }).unwrap();
        assert_eq!(info.rank, 2);
        assert!(matches!(
            require_gap(&info, 1e3),
            Err(Error::RankAmbiguous { .. })
        ));
    }
}
