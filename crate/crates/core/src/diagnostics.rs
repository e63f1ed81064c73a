//! Quantities the recovery and regret guarantees are stated in terms of,
//! computed from simulation runs so the guarantees can be checked
//! numerically.

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    min_eigenvalue_symmetric, operator_norm, subspace_distance, Matrix, Representation,
    SvdFactors,
};
use crate::policies::RegretTrace;

/// Per-run diagnostic summary.
///
/// The traces are indexed by observation count: entry `n` uses the first
/// `n + 1` observations of the run.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    /// `||W_hat - W||_F`.
    pub frob_error: f64,
    /// `||W_hat - W||_op`.
    pub op_error: f64,
    /// `sigma_r(W)` of the true task matrix.
    pub sigma_r_w: f64,
    /// Operator norm distance between the top-`r` singular projector of
    /// `W_hat` and the true projector.
    pub subspace_gap: f64,
    /// Per-round smallest eigenvalue of the projected empirical covariance.
    pub min_eig_projected_trace: Vec<f64>,
    /// Column count of the representation the policy used.
    pub estimated_rank: usize,
    /// Per-round parameter estimation error of the policy.
    pub estimation_error_trace: Vec<f64>,
}

/// Smallest eigenvalue of `B^T ( (1/n) sum_i x_i x_i^T ) B`.
pub fn min_eig_projected(basis: &Representation, arms: &[DVector<f64>]) -> Result<f64> {
    let n = arms.len();
    if n == 0 {
        return Err(Error::invalid_argument(
            "need at least one observed arm for the projected covariance",
        ));
    }
    if basis.rank() == 0 {
        return Err(Error::invalid_argument(
            "projected covariance of a zero-rank basis",
        ));
    }
    let dim = basis.rank();
    let mut gram = Matrix::zeros(dim, dim);
    for x in arms {
        if x.len() != basis.dim() {
            return Err(Error::invalid_argument(format!(
                "arm has dimension {}, basis expects {}",
                x.len(),
                basis.dim()
            )));
        }
        let z = basis.project(x);
        gram += &z * z.transpose();
    }
    gram /= n as f64;
    Ok(min_eigenvalue_symmetric(&gram))
}

/// Both sides of the subspace perturbation inequality
/// `||P_hat_r - P_r||_op <= ||W_hat - W||_op / sigma_r(W)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Evaluate the perturbation inequality at rank `r`. Errors when
/// `sigma_r(w_true)` vanishes (the bound divides by it).
pub fn perturbation_check(w_hat: &Matrix, w_true: &Matrix, r: usize) -> Result<PerturbationCheck> {
    if r == 0 || r > w_true.nrows().min(w_true.ncols()) {
        return Err(Error::invalid_argument(format!("rank {r} out of range")));
    }
    if w_hat.shape() != w_true.shape() {
        return Err(Error::invalid_argument(format!(
            "shape mismatch: {:?} vs {:?}",
            w_hat.shape(),
            w_true.shape()
        )));
    }
    let true_factors = SvdFactors::compute(w_true)?;
    let sigma_r = true_factors.singular_values[r - 1];
    if sigma_r <= f64::EPSILON * true_factors.singular_values[0].max(1.0) {
        return Err(Error::DegenerateInput(format!(
            "sigma_{r} of the true matrix vanishes"
        )));
    }
    let hat_factors = SvdFactors::compute(w_hat)?;
    let p_hat = Representation::new(hat_factors.left.columns(0, r).into_owned())?;
    let p_true = Representation::new(true_factors.left.columns(0, r).into_owned())?;
    let lhs = subspace_distance(&p_hat, &p_true)?;
    let rhs = operator_norm(&(w_hat - w_true)) / sigma_r;
    Ok(PerturbationCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-9,
    })
}

/// Final cumulative transfer regret of a run.
pub fn transfer_regret(trace: &RegretTrace) -> f64 {
    trace.total()
}

/// Lower-bound proxy for the restricted curvature of the arm covariance:
/// `lambda_min(Sigma) / 2` with `Sigma = (1/K) sum_k Sigma_k`.
///
/// The cone-restricted constant itself is a nonconvex program; for the
/// full-rank covariances the generators produce, half the smallest
/// eigenvalue lower-bounds it and is what gets reported.
pub fn rsc_proxy(spec: &crate::env::EnvironmentSpec) -> Result<f64> {
    spec.validate()?;
    let mut sigma = Matrix::zeros(spec.d, spec.d);
    for k in 0..spec.arms {
        sigma += spec.arm_covariance.matrix(spec.d, k);
    }
    sigma /= spec.arms as f64;
    Ok(min_eigenvalue_symmetric(&sigma) / 2.0)
}

/// One summarized regret measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretObservation {
    pub policy: String,
    pub d: usize,
    pub n: usize,
    pub seed: u64,
    pub regret: f64,
}

/// Mean/std regret for one `(d, n)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingCell {
    pub d: usize,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

/// Scaling statistics for one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyScaling {
    pub policy: String,
    pub cells: Vec<ScalingCell>,
    /// Least-squares slope of `log mean regret` against `log n`, averaged
    /// over the ambient dimensions present.
    pub growth_exponent: f64,
    /// `mean(d_max, n_max) / mean(d_min, n_max)` at the largest horizon
    /// shared by both dimensions.
    pub d_ratio: f64,
}

/// Summary over a table of regret observations keyed by
/// `(policy, d, n, seed)`.
///
/// Requires at least two distinct horizons and two distinct dimensions per
/// policy; cells with non-positive mean regret are excluded from the log-log
/// slope fit.
pub fn scaling_summary(observations: &[RegretObservation]) -> Result<Vec<PolicyScaling>> {
    let mut grouped: BTreeMap<String, BTreeMap<(usize, usize), Vec<f64>>> = BTreeMap::new();
    for obs in observations {
        grouped
            .entry(obs.policy.clone())
            .or_default()
            .entry((obs.d, obs.n))
            .or_default()
            .push(obs.regret);
    }

    let mut out = Vec::new();
    for (policy, cells_map) in grouped {
        let ds: std::collections::BTreeSet<usize> = cells_map.keys().map(|k| k.0).collect();
        let ns: std::collections::BTreeSet<usize> = cells_map.keys().map(|k| k.1).collect();
        if ds.len() < 2 || ns.len() < 2 {
            return Err(Error::invalid_argument(format!(
                "policy {policy}: need at least 2 dimensions and 2 horizons, got {} and {}",
                ds.len(),
                ns.len()
            )));
        }

        let mut cells = Vec::new();
        for (&(d, n), values) in &cells_map {
            let count = values.len();
            let mean = values.iter().sum::<f64>() / count as f64;
            let var = values
                .iter()
                .map(|v| (v - mean) * (v - mean))
                .sum::<f64>()
                / count as f64;
            cells.push(ScalingCell {
                d,
                n,
                mean,
                std: var.sqrt(),
                count,
            });
        }

        // Per-dimension log-log slope, averaged.
        let mut slopes = Vec::new();
        for &d in &ds {
            let points: Vec<(f64, f64)> = cells
                .iter()
                .filter(|c| c.d == d && c.mean > 0.0)
                .map(|c| ((c.n as f64).ln(), c.mean.ln()))
                .collect();
            if points.len() >= 2 {
                slopes.push(least_squares_slope(&points));
            }
        }
        let growth_exponent = if slopes.is_empty() {
            f64::NAN
        } else {
            slopes.iter().sum::<f64>() / slopes.len() as f64
        };

        let d_min = *ds.first().unwrap();
        let d_max = *ds.last().unwrap();
        let shared_n = ns
            .iter()
            .rev()
            .find(|&&n| {
                cells_map.contains_key(&(d_min, n)) && cells_map.contains_key(&(d_max, n))
            })
            .copied();
        let d_ratio = match shared_n {
            Some(n) => {
                let lo = cells.iter().find(|c| c.d == d_min && c.n == n).unwrap();
                let hi = cells.iter().find(|c| c.d == d_max && c.n == n).unwrap();
                hi.mean / lo.mean
            }
            None => f64::NAN,
        };

        out.push(PolicyScaling {
            policy,
            cells,
            growth_exponent,
            d_ratio,
        });
    }
    Ok(out)
}

/// Ordinary least-squares slope through `(x, y)` points.
pub fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Log-log slope of cumulative regret against horizon; the growth exponent
/// of one run's checkpoints.
pub fn log_log_slope(points: &[(usize, f64)]) -> f64 {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(n, v)| *n > 0 && *v > 0.0)
        .map(|(n, v)| ((*n as f64).ln(), v.ln()))
        .collect();
    if usable.len() < 2 {
        return f64::NAN;
    }
    least_squares_slope(&usable)
}
