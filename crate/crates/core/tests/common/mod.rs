//! Independent numerical oracles for integration tests.
//!
//! Nothing here calls into the crate's SVD or solver paths: the SVD is a
//! hand-rolled one-sided Jacobi, and the trace-norm minimizer is a plain
//! subgradient method with its own objective evaluation. Slow and simple on
//! purpose.

use metabandit::Matrix;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// One-sided Jacobi SVD: returns `(U, S, V)` with `M = U diag(S) V^T`,
/// singular values sorted non-increasing, `k = min(rows, cols)` columns.
pub fn jacobi_svd(m: &Matrix) -> (Matrix, Vec<f64>, Matrix) {
    if m.nrows() < m.ncols() {
        let (u, s, v) = jacobi_svd(&m.transpose());
        return (v, s, u);
    }
    let rows = m.nrows();
    let n = m.ncols();
    let mut work = m.clone();
    let mut v = Matrix::identity(n, n);

    for _sweep in 0..100 {
        let mut worst: f64 = 0.0;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let a = work.column(p).norm_squared();
                let b = work.column(q).norm_squared();
                let c = work.column(p).dot(&work.column(q));
                let scale = (a * b).sqrt();
                if scale <= f64::MIN_POSITIVE || c.abs() <= 1e-30 {
                    continue;
                }
                worst = worst.max(c.abs() / scale);
                // Hestenes rotation zeroing <u_p, u_q>.
                let zeta = (b - a) / (2.0 * c);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for i in 0..rows {
                    let tp = work[(i, p)];
                    let tq = work[(i, q)];
                    work[(i, p)] = cs * tp - sn * tq;
                    work[(i, q)] = sn * tp + cs * tq;
                }
                for i in 0..n {
                    let tp = v[(i, p)];
                    let tq = v[(i, q)];
                    v[(i, p)] = cs * tp - sn * tq;
                    v[(i, q)] = sn * tp + cs * tq;
                }
            }
        }
        if worst < 1e-15 {
            break;
        }
    }

    let mut order: Vec<(f64, usize)> = (0..n).map(|j| (work.column(j).norm(), j)).collect();
    order.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());

    let mut u_out = Matrix::zeros(rows, n);
    let mut v_out = Matrix::zeros(n, n);
    let mut singulars = Vec::with_capacity(n);
    for (dst, &(sigma, src)) in order.iter().enumerate() {
        singulars.push(sigma);
        if sigma > 1e-300 {
            u_out.set_column(dst, &(work.column(src) / sigma));
        }
        v_out.set_column(dst, &v.column(src));
    }
    (u_out, singulars, v_out)
}

/// Soft-threshold the Jacobi singular values: the analytic prox of
/// `tau * ||.||_*` built on the independent SVD.
pub fn svt_oracle(m: &Matrix, tau: f64) -> Matrix {
    let (u, s, v) = jacobi_svd(m);
    let mut out = Matrix::zeros(m.nrows(), m.ncols());
    for (j, &sigma) in s.iter().enumerate() {
        let kept = (sigma - tau).max(0.0);
        if kept > 0.0 {
            out += u.column(j) * v.column(j).transpose() * kept;
        }
    }
    out
}

pub fn nuclear_norm_oracle(m: &Matrix) -> f64 {
    jacobi_svd(m).1.iter().sum()
}

/// The multi-task data in raw form, with its own objective/gradient
/// formulas so the oracle never touches the solver's code path.
pub struct SmallProblem {
    pub designs: Vec<Matrix>,
    pub rewards: Vec<DVector<f64>>,
    pub lambda: f64,
}

impl SmallProblem {
    pub fn seeded(d: usize, tasks: usize, n: usize, sigma: f64, lambda: f64, seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        // A low-rank truth keeps instances representative of the pipeline.
        let rank = 2.min(d).min(tasks);
        let left = Matrix::from_fn(d, rank, |_, _| rng.sample::<f64, _>(StandardNormal));
        let right = Matrix::from_fn(rank, tasks, |_, _| rng.sample::<f64, _>(StandardNormal));
        let truth = left * right;
        let mut designs = Vec::new();
        let mut rewards = Vec::new();
        for t in 0..tasks {
            let x = Matrix::from_fn(d, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = x.tr_mul(&truth.column(t))
                + DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal) * sigma);
            designs.push(x);
            rewards.push(y);
        }
        SmallProblem {
            designs,
            rewards,
            lambda,
        }
    }

    fn scale(&self) -> f64 {
        1.0 / (self.designs.len() as f64 * self.designs[0].ncols() as f64)
    }

    pub fn objective_oracle(&self, w: &Matrix) -> f64 {
        let mut loss = 0.0;
        for (t, (x, y)) in self.designs.iter().zip(&self.rewards).enumerate() {
            loss += (x.tr_mul(&w.column(t)) - y).norm_squared();
        }
        loss * self.scale() + self.lambda * nuclear_norm_oracle(w)
    }

    fn smooth_gradient(&self, w: &Matrix) -> Matrix {
        let mut g = Matrix::zeros(w.nrows(), w.ncols());
        for (t, (x, y)) in self.designs.iter().zip(&self.rewards).enumerate() {
            let residual = x.tr_mul(&w.column(t)) - y;
            g.set_column(t, &(x * residual * (2.0 * self.scale())));
        }
        g
    }

    /// Best objective value found by a diminishing-step subgradient method
    /// started at zero. Returns an upper bound on the true minimum that
    /// tightens as `iters` grows.
    pub fn subgradient_best_objective(&self, iters: usize) -> f64 {
        let d = self.designs[0].nrows();
        let tasks = self.designs.len();
        let mut w = Matrix::zeros(d, tasks);
        // Frobenius bound on the smooth gradient's Lipschitz constant.
        let lip: f64 = self
            .designs
            .iter()
            .map(|x| 2.0 * self.scale() * x.norm_squared())
            .fold(0.0, f64::max);
        let base_step = 1.0 / (1.0 + lip);

        let mut best = self.objective_oracle(&w);
        for k in 1..=iters {
            let (u, s, v) = jacobi_svd(&w);
            let mut subgrad = self.smooth_gradient(&w);
            for (j, &sigma) in s.iter().enumerate() {
                if sigma > 1e-12 {
                    subgrad += u.column(j) * v.column(j).transpose() * self.lambda;
                }
            }
            w -= subgrad * (base_step / (k as f64).sqrt());
            let obj = self.objective_oracle(&w);
            if obj < best {
                best = obj;
            }
        }
        best
    }
}
