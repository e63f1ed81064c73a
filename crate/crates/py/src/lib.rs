//! Python bindings for the metabandit simulator.
//!
//! Matrices cross the boundary as row-major lists of lists of floats;
//! experiment configs as TOML strings. Build with
//! `cargo build -p metabandit-py --release` and rename the produced
//! `libmetabandit_py.so` to `metabandit.so` somewhere on `sys.path`
//! (see `python/smoke_test.py`).

use metabandit::diagnostics;
use metabandit::env::TaskEnv;
use metabandit::experiment::{self, ExperimentConfig, RunRecord};
use metabandit::linalg;
use metabandit::mtl;
use metabandit::policies;
use metabandit::representation;
use metabandit::{Error, Matrix, Representation};
use nalgebra::DVector;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::InvalidSpec(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn to_matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    if rows.is_empty() {
        return Err(PyValueError::new_err("matrix needs at least one row"));
    }
    let ncols = rows[0].len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err(
            "matrix rows must be non-empty and of equal length",
        ));
    }
    Ok(Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn from_matrix(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn to_representation(columns: Vec<Vec<f64>>) -> PyResult<Representation> {
    Representation::new(to_matrix(columns)?).map_err(to_py_err)
}

/// Proximal operator of `tau * ||.||_*`: soft-threshold the singular values.
#[pyfunction]
fn svt(m: Vec<Vec<f64>>, tau: f64) -> PyResult<Vec<Vec<f64>>> {
    let out = linalg::svt(&to_matrix(m)?, tau).map_err(to_py_err)?;
    Ok(from_matrix(&out))
}

/// Best rank-`r` approximation in Frobenius norm.
#[pyfunction]
fn truncate_rank(m: Vec<Vec<f64>>, r: usize) -> PyResult<Vec<Vec<f64>>> {
    let out = linalg::truncate_rank(&to_matrix(m)?, r).map_err(to_py_err)?;
    Ok(from_matrix(&out))
}

/// Orthonormal basis of the numerical range (columns of the result).
#[pyfunction]
#[pyo3(signature = (m, rel_rank_tol = 1e-6))]
fn orthonormal_range(m: Vec<Vec<f64>>, rel_rank_tol: f64) -> PyResult<Vec<Vec<f64>>> {
    let rep = linalg::orthonormal_range(&to_matrix(m)?, rel_rank_tol).map_err(to_py_err)?;
    Ok(from_matrix(rep.columns()))
}

/// Operator-norm distance between the spans of two orthonormal bases.
#[pyfunction]
fn subspace_distance(b1: Vec<Vec<f64>>, b2: Vec<Vec<f64>>) -> PyResult<f64> {
    linalg::subspace_distance(&to_representation(b1)?, &to_representation(b2)?)
        .map_err(to_py_err)
}

/// Sum of singular values.
#[pyfunction]
fn nuclear_norm(m: Vec<Vec<f64>>) -> PyResult<f64> {
    linalg::nuclear_norm(&to_matrix(m)?).map_err(to_py_err)
}

/// Size-driven trace-norm regularization level.
#[pyfunction]
fn lambda_schedule(
    tasks: usize,
    dim: usize,
    n_tr: usize,
    confidence_x: f64,
    scale_c: f64,
) -> PyResult<f64> {
    mtl::lambda_schedule(tasks, dim, n_tr, confidence_x, scale_c).map_err(to_py_err)
}

/// Solve the trace-norm multi-task program.
///
/// `designs` is one `d x n` matrix per task (columns are inputs), `rewards`
/// one length-`n` list per task. Returns a dict with the solution and the
/// convergence certificate.
#[pyfunction]
#[pyo3(signature = (designs, rewards, lam, max_iters = 4000, tol = 1e-8))]
fn fit_trace_norm<'py>(
    py: Python<'py>,
    designs: Vec<Vec<Vec<f64>>>,
    rewards: Vec<Vec<f64>>,
    lam: f64,
    max_iters: usize,
    tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let designs = designs
        .into_iter()
        .map(to_matrix)
        .collect::<PyResult<Vec<_>>>()?;
    let rewards = rewards
        .into_iter()
        .map(DVector::from_vec)
        .collect::<Vec<_>>();
    let problem = mtl::MtlProblem::new(designs, rewards, lam).map_err(to_py_err)?;
    let report = mtl::fit_trace_norm(&problem, max_iters, tol).map_err(to_py_err)?;

    let out = PyDict::new(py);
    out.set_item("solution", from_matrix(&report.solution))?;
    out.set_item("iterations", report.iterations)?;
    out.set_item("kkt_residual", report.kkt_residual)?;
    out.set_item("converged", report.converged)?;
    out.set_item("objective", *report.objective_trace.last().unwrap())?;
    Ok(out)
}

/// Extract a representation estimate from a fitted matrix. `rank = None`
/// selects the rank-agnostic estimator; a concrete rank selects the top-r
/// truncation.
#[pyfunction]
#[pyo3(signature = (w_hat, rank = None, rel_rank_tol = 1e-6))]
fn extract_representation<'py>(
    py: Python<'py>,
    w_hat: Vec<Vec<f64>>,
    rank: Option<usize>,
    rel_rank_tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let w = to_matrix(w_hat)?;
    let est = match rank {
        Some(r) => representation::extract_rank_r(&w, r),
        None => representation::extract_rank_agnostic(&w, rel_rank_tol),
    }
    .map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("basis", from_matrix(est.basis.columns()))?;
    out.set_item("method", est.method.as_str())?;
    out.set_item("estimated_rank", est.estimated_rank)?;
    out.set_item("singular_values", est.source_singular_values)?;
    Ok(out)
}

/// Both sides of the subspace perturbation inequality at rank `r`.
#[pyfunction]
fn perturbation_check(
    w_hat: Vec<Vec<f64>>,
    w_true: Vec<Vec<f64>>,
    r: usize,
) -> PyResult<(f64, f64, bool)> {
    let checked =
        diagnostics::perturbation_check(&to_matrix(w_hat)?, &to_matrix(w_true)?, r)
            .map_err(to_py_err)?;
    Ok((checked.lhs, checked.rhs, checked.holds))
}

/// Play the greedy policy on a synthetic task with a fixed basis.
///
/// Draws a fresh environment (`d` inferred from the basis), runs `n_rounds`,
/// and returns the cumulative regret trace.
#[pyfunction]
#[pyo3(signature = (basis, true_w, arms, n_rounds, noise_sigma, seed = 0))]
fn run_greedy(
    basis: Vec<Vec<f64>>,
    true_w: Vec<f64>,
    arms: usize,
    n_rounds: usize,
    noise_sigma: f64,
    seed: u64,
) -> PyResult<Vec<f64>> {
    let rep = to_representation(basis)?;
    let d = rep.dim();
    let spec = metabandit::env::EnvironmentSpec {
        d,
        r: rep.rank().min(d.saturating_sub(1)).max(1),
        tasks: rep.rank().max(2),
        arms,
        arm_model: metabandit::env::ArmModel::Gaussian,
        arm_covariance: metabandit::env::CovarianceModel::Identity,
        noise_sigma,
        task_norm_bound: 1.0,
        alpha_scale: 1.0,
    };
    let mut env_rng = ChaCha12Rng::seed_from_u64(seed);
    let env = TaskEnv::generate(&spec, DVector::from_vec(true_w), n_rounds, &mut env_rng)
        .map_err(to_py_err)?;
    let mut policy_rng = ChaCha12Rng::seed_from_u64(seed ^ 0x9E3779B97F4A7C15);
    let (_, trace) =
        policies::run_oracle_greedy(&env, &rep, n_rounds, &mut policy_rng).map_err(to_py_err)?;
    Ok(trace.cumulative)
}

fn record_to_dict<'py>(py: Python<'py>, r: &RunRecord) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("seed", r.seed)?;
    out.set_item("policy", &r.policy)?;
    out.set_item("method", &r.method)?;
    out.set_item("regret_n8", r.regret_n8)?;
    out.set_item("regret_n4", r.regret_n4)?;
    out.set_item("regret_n2", r.regret_n2)?;
    out.set_item("regret_n", r.regret_n)?;
    out.set_item("frob_error", r.frob_error)?;
    out.set_item("op_error", r.op_error)?;
    out.set_item("sigma_r_w", r.sigma_r_w)?;
    out.set_item("subspace_gap", r.subspace_gap)?;
    out.set_item("estimated_rank", r.estimated_rank)?;
    out.set_item("min_eig_final", r.min_eig_final)?;
    out.set_item("converged", r.converged)?;
    Ok(out)
}

fn parse_config(config_toml: &str) -> PyResult<ExperimentConfig> {
    let config: ExperimentConfig =
        toml::from_str(config_toml).map_err(|e| PyValueError::new_err(e.to_string()))?;
    config.validate().map_err(to_py_err)?;
    Ok(config)
}

/// Run the full experiment described by a TOML config string; returns one
/// dict per run record, sorted by (seed, policy, method).
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config_toml: &str) -> PyResult<Bound<'py, PyList>> {
    let config = parse_config(config_toml)?;
    let records = experiment::run_experiment(&config).map_err(to_py_err)?;
    let list = PyList::empty(py);
    for record in &records {
        list.append(record_to_dict(py, record)?)?;
    }
    Ok(list)
}

/// Parse and validate a TOML config; raises ValueError on problems.
#[pyfunction]
fn validate_config(config_toml: &str) -> PyResult<String> {
    let config = parse_config(config_toml)?;
    let lambdas = config.resolve_lambdas().map_err(to_py_err)?;
    Ok(format!(
        "ok: d={} r={} T={} K={} n_tr={} n_test={} seeds={} lambda={lambdas:?}",
        config.environment.d,
        config.environment.r,
        config.environment.tasks,
        config.environment.arms,
        config.n_tr,
        config.n_test,
        config.n_seeds
    ))
}

#[pymodule(name = "metabandit")]
fn metabandit_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(svt, m)?)?;
    m.add_function(wrap_pyfunction!(truncate_rank, m)?)?;
    m.add_function(wrap_pyfunction!(orthonormal_range, m)?)?;
    m.add_function(wrap_pyfunction!(subspace_distance, m)?)?;
    m.add_function(wrap_pyfunction!(nuclear_norm, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(fit_trace_norm, m)?)?;
    m.add_function(wrap_pyfunction!(extract_representation, m)?)?;
    m.add_function(wrap_pyfunction!(perturbation_check, m)?)?;
    m.add_function(wrap_pyfunction!(run_greedy, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(validate_config, m)?)?;
    Ok(())
}
