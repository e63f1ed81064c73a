//! Subspace extraction from a fitted multi-task matrix.
//!
//! Two estimators of the shared representation: the rank-agnostic one keeps
//! every direction whose singular value clears a relative threshold, the
//! rank-truncated one keeps exactly the top `r` directions and therefore
//! needs `r` as an input.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Representation, SvdFactors, DEFAULT_RANK_TOL};

/// How a representation estimate was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionMethod {
    /// Numerical range of the fitted matrix; no knowledge of the true rank.
    RankAgnostic,
    /// Top-`r` left singular subspace at a caller-supplied rank.
    RankTruncated,
}

impl ExtractionMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExtractionMethod::RankAgnostic => "rank_agnostic",
            ExtractionMethod::RankTruncated => "rank_r",
        }
    }
}

/// An estimated representation along with how it was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationEstimate {
    pub basis: Representation,
    pub method: ExtractionMethod,
    /// Column count of `basis`.
    pub estimated_rank: usize,
    /// Singular values of the matrix the basis was extracted from.
    pub source_singular_values: Vec<f64>,
}

impl RepresentationEstimate {
    /// The degenerate estimate with no directions at all. Policies treat it
    /// as "no usable representation" and fall back to the ambient space.
    pub fn zero_rank(d: usize) -> Self {
        RepresentationEstimate {
            basis: Representation::empty(d),
            method: ExtractionMethod::RankAgnostic,
            estimated_rank: 0,
            source_singular_values: Vec::new(),
        }
    }
}

/// Extract the numerical range of `w_hat` without knowing the true rank:
/// keep left singular vectors with `sigma_j > rel_rank_tol * sigma_max`.
pub fn extract_rank_agnostic(w_hat: &Matrix, rel_rank_tol: f64) -> Result<RepresentationEstimate> {
    let factors = SvdFactors::compute(w_hat)?;
    let rank = factors.rank(rel_rank_tol);
    if !rel_rank_tol.is_finite() || rel_rank_tol <= 0.0 || rel_rank_tol >= 1.0 {
        return Err(Error::invalid_argument(format!(
            "relative rank tolerance must lie in (0, 1), got {rel_rank_tol}"
        )));
    }
    if rank == 0 {
        return Err(Error::DegenerateInput(
            "cannot extract a representation from the zero matrix".into(),
        ));
    }
    Ok(RepresentationEstimate {
        basis: Representation::new(factors.left.columns(0, rank).into_owned())?,
        method: ExtractionMethod::RankAgnostic,
        estimated_rank: rank,
        source_singular_values: factors.singular_values,
    })
}

/// Extract the top-`r` left singular subspace of `w_hat`.
///
/// Errors if `r` exceeds the numerical rank of `w_hat` (at the default
/// relative threshold): the requested decomposition would include directions
/// that are pure noise floor.
pub fn extract_rank_r(w_hat: &Matrix, r: usize) -> Result<RepresentationEstimate> {
    if r == 0 {
        return Err(Error::invalid_argument("requested rank must be positive"));
    }
    let factors = SvdFactors::compute(w_hat)?;
    let numerical_rank = factors.rank(DEFAULT_RANK_TOL);
    if r > numerical_rank {
        return Err(Error::RankDeficient(format!(
            "requested rank {r} exceeds numerical rank {numerical_rank}"
        )));
    }
    Ok(RepresentationEstimate {
        basis: Representation::new(factors.left.columns(0, r).into_owned())?,
        method: ExtractionMethod::RankTruncated,
        estimated_rank: r,
        source_singular_values: factors.singular_values,
    })
}

/// Parameter estimation error `||B_est a_hat - B_true a_true||`.
pub fn estimation_error(
    b_est: &Representation,
    alpha_hat: &DVector<f64>,
    b_true: &Representation,
    alpha_true: &DVector<f64>,
) -> Result<f64> {
    if b_est.dim() != b_true.dim() {
        return Err(Error::invalid_argument(format!(
            "representation row counts differ: {} vs {}",
            b_est.dim(),
            b_true.dim()
        )));
    }
    if alpha_hat.len() != b_est.rank() || alpha_true.len() != b_true.rank() {
        return Err(Error::invalid_argument(
            "coefficient length does not match basis column count",
        ));
    }
    Ok((b_est.expand(alpha_hat) - b_true.expand(alpha_true)).norm())
}
