//! Trace-norm regularized multi-task least squares.
//!
//! Given logged designs `X_t` (columns are the arms chosen while task `t`
//! was played) and rewards `y_t`, the estimator minimizes
//!
//! ```text
//! f(W) = (1 / (T n)) sum_t ||X_t^T w_t - y_t||^2 + lambda ||W||_*
//! ```
//!
//! over `d x T` matrices `W`. The smooth part is separable across columns
//! with gradient `(2 / (T n)) X_t (X_t^T w_t - y_t)`; the nonsmooth part is
//! handled exactly by singular value thresholding. We solve with FISTA plus
//! an adaptive restart that keeps the recorded objective non-increasing, and
//! certify solutions by a first-order stationarity residual.

use nalgebra::DVector;

use crate::env::InteractionLog;
use crate::error::{Error, Result};
use crate::linalg::{self, ensure_finite, Matrix, SvdFactors};

/// Multi-task regression data shared by the solver and its certificates.
#[derive(Debug, Clone)]
pub struct MtlProblem {
    /// Per-task `d x n_tr` design matrices (columns are chosen arms).
    designs: Vec<Matrix>,
    /// Per-task reward vectors of length `n_tr`.
    rewards: Vec<DVector<f64>>,
    /// Trace-norm weight, non-negative.
    pub lambda: f64,
}

impl MtlProblem {
    pub fn new(designs: Vec<Matrix>, rewards: Vec<DVector<f64>>, lambda: f64) -> Result<Self> {
        if designs.is_empty() || designs.len() != rewards.len() {
            return Err(Error::invalid_argument(format!(
                "need matching non-empty designs and rewards, got {} and {}",
                designs.len(),
                rewards.len()
            )));
        }
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::invalid_argument(format!(
                "lambda must be finite and non-negative, got {lambda}"
            )));
        }
        let d = designs[0].nrows();
        let n = designs[0].ncols();
        if n == 0 {
            return Err(Error::invalid_argument("empty training horizon"));
        }
        for (t, (x, y)) in designs.iter().zip(&rewards).enumerate() {
            if x.nrows() != d || x.ncols() != n {
                return Err(Error::invalid_argument(format!(
                    "design {t} is {}x{}, expected {d}x{n}",
                    x.nrows(),
                    x.ncols()
                )));
            }
            if y.len() != n {
                return Err(Error::invalid_argument(format!(
                    "rewards {t} have length {}, expected {n}",
                    y.len()
                )));
            }
            ensure_finite(x, "mtl design")?;
            if !y.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("mtl rewards"));
            }
        }
        Ok(MtlProblem {
            designs,
            rewards,
            lambda,
        })
    }

    /// Assemble the problem from recorded interaction logs. All logs must
    /// share one horizon and one ambient dimension.
    pub fn from_logs(logs: &[InteractionLog], lambda: f64) -> Result<Self> {
        if logs.is_empty() {
            return Err(Error::invalid_argument("no interaction logs"));
        }
        let mut designs = Vec::with_capacity(logs.len());
        let mut rewards = Vec::with_capacity(logs.len());
        for log in logs {
            let n = log.len();
            if n == 0 {
                return Err(Error::invalid_argument(format!(
                    "log for task {} is empty",
                    log.task_index
                )));
            }
            let d = log.records[0].decision_set.arm(0).len();
            let mut x = Matrix::zeros(d, n);
            let mut y = DVector::zeros(n);
            for (i, rec) in log.records.iter().enumerate() {
                x.set_column(i, rec.decision_set.arm(rec.chosen_index));
                y[i] = rec.reward;
            }
            designs.push(x);
            rewards.push(y);
        }
        MtlProblem::new(designs, rewards, lambda)
    }

    pub fn tasks(&self) -> usize {
        self.designs.len()
    }

    pub fn dim(&self) -> usize {
        self.designs[0].nrows()
    }

    pub fn horizon(&self) -> usize {
        self.designs[0].ncols()
    }

    fn scale(&self) -> f64 {
        1.0 / (self.tasks() as f64 * self.horizon() as f64)
    }

    /// Mean squared residual over all tasks and rounds (the smooth term).
    pub fn loss(&self, w: &Matrix) -> f64 {
        let mut total = 0.0;
        for (t, (x, y)) in self.designs.iter().zip(&self.rewards).enumerate() {
            let residual = x.tr_mul(&w.column(t)) - y;
            total += residual.norm_squared();
        }
        total * self.scale()
    }

    /// Gradient of the smooth term; column `t` is
    /// `(2 / (T n)) X_t (X_t^T w_t - y_t)`.
    pub fn gradient(&self, w: &Matrix) -> Matrix {
        let mut g = Matrix::zeros(self.dim(), self.tasks());
        for (t, (x, y)) in self.designs.iter().zip(&self.rewards).enumerate() {
            let residual = x.tr_mul(&w.column(t)) - y;
            g.set_column(t, &(x * residual * (2.0 * self.scale())));
        }
        g
    }

    /// Full objective `loss + lambda * ||W||_*`.
    pub fn objective(&self, w: &Matrix) -> Result<f64> {
        Ok(self.loss(w) + self.lambda * linalg::nuclear_norm(w)?)
    }

    /// Lipschitz constant of the gradient:
    /// `(2 / (T n)) max_t lambda_max(X_t X_t^T)`.
    pub fn lipschitz(&self) -> f64 {
        let mut max_eig: f64 = 0.0;
        for x in &self.designs {
            let gram = x * x.transpose();
            let eig = gram.symmetric_eigen();
            max_eig = max_eig.max(eig.eigenvalues.iter().copied().fold(0.0, f64::max));
        }
        2.0 * self.scale() * max_eig
    }
}

/// Outcome of one solver invocation.
#[derive(Debug, Clone)]
pub struct SolverReport {
    /// The fitted `d x T` matrix.
    pub solution: Matrix,
    /// Objective at the initial point and after each accepted prox step;
    /// non-increasing up to 1e-9 slack.
    pub objective_trace: Vec<f64>,
    /// Number of prox steps taken.
    pub iterations: usize,
    /// First-order stationarity residual at the solution.
    pub kkt_residual: f64,
    pub converged: bool,
}

/// Regularization level as a function of problem size: the four-way maximum
///
/// ```text
/// scale_c * max( (T+d)/n,  (x+log(2n))/n,  sqrt((T+d)/n),  sqrt((x+log(2n))/n) )
/// ```
///
/// where `x` is a confidence parameter and `n` the per-task training horizon
/// (which is also the count inside the logarithm).
pub fn lambda_schedule(
    tasks: usize,
    dim: usize,
    n_tr: usize,
    confidence_x: f64,
    scale_c: f64,
) -> Result<f64> {
    if tasks == 0 || dim == 0 || n_tr == 0 {
        return Err(Error::invalid_argument(
            "lambda schedule needs positive T, d and n_tr",
        ));
    }
    if !scale_c.is_finite() || scale_c <= 0.0 {
        return Err(Error::invalid_argument(format!(
            "lambda schedule scale must be positive, got {scale_c}"
        )));
    }
    if !confidence_x.is_finite() || confidence_x < 0.0 {
        return Err(Error::invalid_argument(format!(
            "confidence parameter must be non-negative, got {confidence_x}"
        )));
    }
    let n = n_tr as f64;
    let a = (tasks as f64 + dim as f64) / n;
    let b = (confidence_x + (2.0 * n).ln()) / n;
    Ok(scale_c * a.max(b).max(a.sqrt()).max(b.sqrt()))
}

/// First-order stationarity residual of `w` for the trace-norm objective.
///
/// With `G` the smooth gradient at `w` and `U, V` spanning the singular
/// subspaces of `w`, optimality requires `U^T G V = -lambda I` on the span
/// and `||P_U_perp G P_V_perp||_op <= lambda` off it. Returns the larger of
/// the two defects (operator norms); zero exactly at minimizers.
pub fn kkt_residual(w: &Matrix, problem: &MtlProblem) -> Result<f64> {
    ensure_finite(w, "kkt input")?;
    if w.nrows() != problem.dim() || w.ncols() != problem.tasks() {
        return Err(Error::invalid_argument(format!(
            "solution is {}x{}, expected {}x{}",
            w.nrows(),
            w.ncols(),
            problem.dim(),
            problem.tasks()
        )));
    }
    let g = problem.gradient(w);
    let factors = SvdFactors::compute(w)?;
    let rank = factors.rank(1e-12);

    let off_span = if rank == 0 {
        (linalg::operator_norm(&g) - problem.lambda).max(0.0)
    } else {
        let u = factors.left.columns(0, rank);
        let v = factors.right.columns(0, rank);
        let pu = Matrix::identity(w.nrows(), w.nrows()) - u * u.transpose();
        let pv = Matrix::identity(w.ncols(), w.ncols()) - v * v.transpose();
        (linalg::operator_norm(&(pu * &g * pv)) - problem.lambda).max(0.0)
    };

    let on_span = if rank == 0 {
        0.0
    } else {
        let u = factors.left.columns(0, rank);
        let v = factors.right.columns(0, rank);
        let block = u.transpose() * &g * v + Matrix::identity(rank, rank) * problem.lambda;
        linalg::operator_norm(&block)
    };

    Ok(on_span.max(off_span))
}

/// Solve the trace-norm program by FISTA with singular value thresholding.
///
/// Convergence is declared when the stationarity residual drops below `tol`
/// or the relative objective change drops below `tol * 1e-2`. If `max_iters`
/// is exhausted first the report comes back with `converged = false` and the
/// caller decides what to do with it.
pub fn fit_trace_norm(problem: &MtlProblem, max_iters: usize, tol: f64) -> Result<SolverReport> {
    fit_trace_norm_warm(problem, None, max_iters, tol)
}

/// Like [`fit_trace_norm`] but starting from `w0` (used for warm starts
/// across a grid of lambda values).
pub fn fit_trace_norm_warm(
    problem: &MtlProblem,
    w0: Option<&Matrix>,
    max_iters: usize,
    tol: f64,
) -> Result<SolverReport> {
    if !tol.is_finite() || tol <= 0.0 {
        return Err(Error::invalid_argument(format!(
            "solver tolerance must be positive, got {tol}"
        )));
    }
    let d = problem.dim();
    let t = problem.tasks();
    let mut x = match w0 {
        Some(w) => {
            if w.nrows() != d || w.ncols() != t {
                return Err(Error::invalid_argument(format!(
                    "warm start is {}x{}, expected {d}x{t}",
                    w.nrows(),
                    w.ncols()
                )));
            }
            w.clone()
        }
        None => Matrix::zeros(d, t),
    };

    let lip = problem.lipschitz();
    if lip <= 0.0 {
        // All-zero designs: the smooth term is constant and the penalty is
        // minimized at zero.
        let solution = Matrix::zeros(d, t);
        let obj = problem.objective(&solution)?;
        return Ok(SolverReport {
            kkt_residual: kkt_residual(&solution, problem)?,
            solution,
            objective_trace: vec![obj],
            iterations: 0,
            converged: true,
        });
    }
    let step = 1.0 / lip;

    let mut z = x.clone();
    let mut theta: f64 = 1.0;
    let mut obj = problem.objective(&x)?;
    let mut trace = vec![obj];
    let mut iterations = 0;
    let mut converged = false;
    // Momentum restarts can flatten the objective for a few iterations while
    // the iterate is still moving; only a sustained stall counts as done.
    let mut stalled = 0usize;

    // A plain proximal step from the given point; never increases the
    // objective for step <= 1/L.
    let prox_step = |from: &Matrix| -> Result<Matrix> {
        let grad = problem.gradient(from);
        linalg::svt(&(from - grad * step), problem.lambda * step)
    };

    for iter in 1..=max_iters {
        let mut cand = prox_step(&z)?;
        let mut cand_obj = problem.objective(&cand)?;
        if !cand_obj.is_finite() {
            return Err(Error::SolverDiverged(format!(
                "objective became non-finite at iteration {iter}"
            )));
        }
        if cand_obj > obj {
            // Momentum overshot: restart from the last accepted iterate.
            theta = 1.0;
            cand = prox_step(&x)?;
            cand_obj = problem.objective(&cand)?;
            if cand_obj > obj + 1e-9 {
                return Err(Error::SolverDiverged(format!(
                    "descent step increased the objective by {}",
                    cand_obj - obj
                )));
            }
            cand_obj = cand_obj.min(obj);
        }

        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let beta = (theta - 1.0) / theta_next;
        z = &cand + (&cand - &x) * beta;
        theta = theta_next;

        let rel_change = (obj - cand_obj) / obj.abs().max(1.0);
        x = cand;
        obj = cand_obj;
        trace.push(obj);
        iterations = iter;

        if rel_change <= tol * 1e-2 {
            stalled += 1;
            if stalled >= 30 {
                converged = true;
                break;
            }
        } else {
            stalled = 0;
        }
        if iter % 20 == 0 && kkt_residual(&x, problem)? <= tol {
            converged = true;
            break;
        }
    }

    let kkt = kkt_residual(&x, problem)?;
    if kkt <= tol {
        converged = true;
    }
    Ok(SolverReport {
        solution: x,
        objective_trace: trace,
        iterations,
        kkt_residual: kkt,
        converged,
    })
}
