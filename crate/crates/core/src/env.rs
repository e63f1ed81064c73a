//! Synthetic bandit environments with a shared low-rank task structure.
//!
//! A task family is generated as `W = B * A` where `B` is a `d x r`
//! orthonormal basis and the columns of `A` are task coefficients drawn
//! uniformly on a sphere. Per-round decision sets contain `K` arms
//! `x_k = S_k z_k` with `S_k` a square root of the arm covariance and `z_k`
//! either standard Gaussian or uniform on the sphere of radius `sqrt(d)`.
//! Rewards are linear in the chosen arm plus Gaussian noise.
//!
//! All generators take an explicit seeded RNG and have no global state, so
//! independent replicates can run in parallel and identical seeds reproduce
//! bit-identical streams.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Representation};

/// Marginal law of the pre-covariance arm vector `z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmModel {
    /// `z` has i.i.d. standard normal entries.
    Gaussian,
    /// `z` is uniform on the sphere of radius `sqrt(d)` (so entries have
    /// unit variance, matching the Gaussian model's scale).
    UniformSphere,
}

/// Arm covariance structure, one PSD `d x d` matrix per arm slot.
///
/// The compact variants apply the same covariance to every arm; `PerArm`
/// lists one dense matrix per slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceModel {
    Identity,
    ScaledIdentity { scale: f64 },
    Diagonal { entries: Vec<f64> },
    PerArm { matrices: Vec<Vec<Vec<f64>>> },
}

impl CovarianceModel {
    /// Dense covariance matrix for arm slot `k`.
    pub fn matrix(&self, d: usize, k: usize) -> Matrix {
        match self {
            CovarianceModel::Identity => Matrix::identity(d, d),
            CovarianceModel::ScaledIdentity { scale } => Matrix::identity(d, d) * *scale,
            CovarianceModel::Diagonal { entries } => {
                Matrix::from_diagonal(&DVector::from_vec(entries.clone()))
            }
            CovarianceModel::PerArm { matrices } => {
                let m = &matrices[k];
                Matrix::from_fn(d, d, |i, j| m[i][j])
            }
        }
    }
}

fn default_arm_model() -> ArmModel {
    ArmModel::Gaussian
}

fn default_covariance() -> CovarianceModel {
    CovarianceModel::Identity
}

fn default_noise_sigma() -> f64 {
    0.5
}

fn default_task_norm_bound() -> f64 {
    1.0
}

fn default_alpha_scale() -> f64 {
    1.0
}

/// Full description of a synthetic environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    /// Ambient dimension.
    pub d: usize,
    /// Representation rank, `1 <= r < d`.
    pub r: usize,
    /// Number of training tasks.
    #[serde(rename = "T")]
    pub tasks: usize,
    /// Arms per round, at least 2.
    #[serde(rename = "K")]
    pub arms: usize,
    #[serde(default = "default_arm_model")]
    pub arm_model: ArmModel,
    #[serde(default = "default_covariance")]
    pub arm_covariance: CovarianceModel,
    /// Reward noise standard deviation.
    #[serde(default = "default_noise_sigma")]
    pub noise_sigma: f64,
    /// Upper bound `L` on task parameter norms.
    #[serde(default = "default_task_norm_bound")]
    pub task_norm_bound: f64,
    /// Radius of the sphere task coefficients are drawn from.
    #[serde(default = "default_alpha_scale")]
    pub alpha_scale: f64,
}

impl EnvironmentSpec {
    /// Check every structural invariant, including PSD arm covariances.
    pub fn validate(&self) -> Result<()> {
        if self.r < 1 || self.r >= self.d {
            return Err(Error::InvalidSpec(format!(
                "rank must satisfy 1 <= r < d, got r={} d={}",
                self.r, self.d
            )));
        }
        if self.arms < 2 {
            return Err(Error::InvalidSpec(format!(
                "at least 2 arms per round required, got K={}",
                self.arms
            )));
        }
        if self.tasks < self.r {
            return Err(Error::InvalidSpec(format!(
                "need at least r tasks for a rank-r task matrix, got T={} r={}",
                self.tasks, self.r
            )));
        }
        if !self.task_norm_bound.is_finite() || self.task_norm_bound <= 0.0 {
            return Err(Error::InvalidSpec(format!(
                "task norm bound must be positive, got {}",
                self.task_norm_bound
            )));
        }
        if !self.alpha_scale.is_finite() || self.alpha_scale <= 0.0 {
            return Err(Error::InvalidSpec(format!(
                "alpha scale must be positive, got {}",
                self.alpha_scale
            )));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(Error::InvalidSpec(format!(
                "noise sigma must be non-negative, got {}",
                self.noise_sigma
            )));
        }
        match &self.arm_covariance {
            CovarianceModel::Identity => {}
            CovarianceModel::ScaledIdentity { scale } => {
                if !scale.is_finite() || *scale < 0.0 {
                    return Err(Error::InvalidSpec(format!(
                        "covariance scale must be non-negative, got {scale}"
                    )));
                }
            }
            CovarianceModel::Diagonal { entries } => {
                if entries.len() != self.d {
                    return Err(Error::InvalidSpec(format!(
                        "diagonal covariance has {} entries, expected d={}",
                        entries.len(),
                        self.d
                    )));
                }
            }
            CovarianceModel::PerArm { matrices } => {
                if matrices.len() != self.arms {
                    return Err(Error::InvalidSpec(format!(
                        "per-arm covariance lists {} matrices, expected K={}",
                        matrices.len(),
                        self.arms
                    )));
                }
                for (k, m) in matrices.iter().enumerate() {
                    if m.len() != self.d || m.iter().any(|row| row.len() != self.d) {
                        return Err(Error::InvalidSpec(format!(
                            "covariance matrix {k} is not {d}x{d}",
                            d = self.d
                        )));
                    }
                }
            }
        }
        // PSD check happens while factoring.
        ArmSampler::new(self)?;
        Ok(())
    }
}

/// The set of `T` training task vectors plus the downstream test task,
/// all sharing one representation.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSet {
    /// Shared `d x r` orthonormal basis.
    pub representation: Representation,
    /// `r x T` task coefficients.
    pub coefficients: Matrix,
    /// Coefficients of the held-out task `T+1`.
    pub test_alpha: DVector<f64>,
    /// `d x T` matrix `W = B * A` of training task vectors.
    pub task_matrix: Matrix,
}

impl TaskSet {
    /// Parameter vector of training task `t` (column `t` of `W`).
    pub fn task_vector(&self, t: usize) -> DVector<f64> {
        self.task_matrix.column(t).into_owned()
    }

    /// Parameter vector `B * alpha_{T+1}` of the test task.
    pub fn test_vector(&self) -> DVector<f64> {
        self.representation.expand(&self.test_alpha)
    }
}

/// The `K` candidate arms offered in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionSet {
    pub arms: Vec<DVector<f64>>,
}

impl DecisionSet {
    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    pub fn arm(&self, k: usize) -> &DVector<f64> {
        &self.arms[k]
    }
}

/// One recorded interaction: the offered arms, the index played, the reward.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionRecord {
    pub decision_set: DecisionSet,
    pub chosen_index: usize,
    pub reward: f64,
}

/// Recorded history of one task, in round order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InteractionLog {
    pub task_index: usize,
    pub records: Vec<InteractionRecord>,
}

impl InteractionLog {
    pub fn new(task_index: usize) -> Self {
        InteractionLog {
            task_index,
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, decision_set: DecisionSet, chosen_index: usize, reward: f64) {
        debug_assert!(chosen_index < decision_set.len());
        self.records.push(InteractionRecord {
            decision_set,
            chosen_index,
            reward,
        });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Unit-sphere draw scaled to `radius`.
fn sphere_vector<R: Rng + ?Sized>(dim: usize, radius: f64, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-12 {
            return v * (radius / norm);
        }
    }
}

/// Draw a `d x r` orthonormal basis by orthonormalizing a standard Gaussian
/// matrix. Deterministic given the RNG state.
pub fn sample_representation<R: Rng + ?Sized>(
    d: usize,
    r: usize,
    rng: &mut R,
) -> Result<Representation> {
    if r < 1 || r >= d {
        return Err(Error::invalid_argument(format!(
            "representation rank must satisfy 1 <= r < d, got r={r} d={d}"
        )));
    }
    let raw = Matrix::from_fn(d, r, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = raw.qr().q();
    Representation::new(q.columns(0, r).into_owned())
}

/// Draw a task family: shared basis, `T` coefficient columns, and the
/// held-out test coefficients, all on the sphere of radius `alpha_scale`
/// (capped at the norm bound `L`).
///
/// Coefficient draws are rejected until `sigma_r(W) / sigma_1(W) >= 0.05`
/// so downstream quantities that divide by `sigma_r(W)` stay well scaled.
pub fn sample_task_set<R: Rng + ?Sized>(spec: &EnvironmentSpec, rng: &mut R) -> Result<TaskSet> {
    spec.validate()?;
    let representation = sample_representation(spec.d, spec.r, rng)?;
    let radius = spec.alpha_scale.min(spec.task_norm_bound);

    let mut coefficients = Matrix::zeros(spec.r, spec.tasks);
    for _attempt in 0..1000 {
        for t in 0..spec.tasks {
            coefficients.set_column(t, &sphere_vector(spec.r, radius, rng));
        }
        let task_matrix = representation.columns() * &coefficients;
        let svd = task_matrix.clone().svd(false, false);
        let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let top = sv[0];
        let rth = sv[spec.r - 1];
        if top > 0.0 && rth / top >= 0.05 {
            let test_alpha = sphere_vector(spec.r, radius, rng);
            return Ok(TaskSet {
                representation,
                coefficients,
                test_alpha,
                task_matrix,
            });
        }
    }
    Err(Error::DegenerateInput(
        "could not draw a well-conditioned task matrix in 1000 attempts".into(),
    ))
}

enum SqrtOp {
    Identity,
    Scale(f64),
    Diag(DVector<f64>),
    Dense(Matrix),
}

impl SqrtOp {
    fn apply(&self, z: DVector<f64>) -> DVector<f64> {
        match self {
            SqrtOp::Identity => z,
            SqrtOp::Scale(s) => z * *s,
            SqrtOp::Diag(d) => z.component_mul(d),
            SqrtOp::Dense(m) => m * z,
        }
    }
}

/// Pre-factored arm generator: holds one covariance square root per arm slot
/// so hot loops avoid refactoring each round.
pub struct ArmSampler {
    d: usize,
    arms: usize,
    model: ArmModel,
    // One op shared by all slots, or one per slot.
    ops: Vec<SqrtOp>,
}

impl ArmSampler {
    pub fn new(spec: &EnvironmentSpec) -> Result<Self> {
        let ops = match &spec.arm_covariance {
            CovarianceModel::Identity => vec![SqrtOp::Identity],
            CovarianceModel::ScaledIdentity { scale } => {
                if *scale < -1e-10 {
                    return Err(Error::InvalidSpec(format!(
                        "covariance scale {scale} is negative"
                    )));
                }
                vec![SqrtOp::Scale(scale.max(0.0).sqrt())]
            }
            CovarianceModel::Diagonal { entries } => {
                if let Some(bad) = entries.iter().find(|&&e| e < -1e-10) {
                    return Err(Error::InvalidSpec(format!(
                        "diagonal covariance entry {bad} is negative"
                    )));
                }
                vec![SqrtOp::Diag(DVector::from_iterator(
                    entries.len(),
                    entries.iter().map(|e| e.max(0.0).sqrt()),
                ))]
            }
            CovarianceModel::PerArm { .. } => (0..spec.arms)
                .map(|k| psd_sqrt(&spec.arm_covariance.matrix(spec.d, k), k))
                .collect::<Result<Vec<_>>>()?,
        };
        Ok(ArmSampler {
            d: spec.d,
            arms: spec.arms,
            model: spec.arm_model,
            ops,
        })
    }

    fn draw_z<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        match self.model {
            ArmModel::Gaussian => {
                DVector::from_fn(self.d, |_, _| rng.sample::<f64, _>(StandardNormal))
            }
            ArmModel::UniformSphere => sphere_vector(self.d, (self.d as f64).sqrt(), rng),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DecisionSet {
        let arms = (0..self.arms)
            .map(|k| {
                let op = if self.ops.len() == 1 {
                    &self.ops[0]
                } else {
                    &self.ops[k]
                };
                op.apply(self.draw_z(rng))
            })
            .collect();
        DecisionSet { arms }
    }
}

fn psd_sqrt(cov: &Matrix, k: usize) -> Result<SqrtOp> {
    let sym_defect = (cov - cov.transpose()).norm();
    if sym_defect > 1e-10 * (1.0 + cov.norm()) {
        return Err(Error::InvalidSpec(format!(
            "covariance matrix {k} is not symmetric"
        )));
    }
    let eig = cov.clone().symmetric_eigen();
    if let Some(bad) = eig.eigenvalues.iter().find(|&&l| l < -1e-10) {
        return Err(Error::InvalidSpec(format!(
            "covariance matrix {k} has negative eigenvalue {bad}"
        )));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(SqrtOp::Dense(
        &eig.eigenvectors * Matrix::from_diagonal(&roots) * eig.eigenvectors.transpose(),
    ))
}

/// Draw one decision set of `K` arms `x_k = S_k z_k`.
///
/// Arms are independent across slots and across rounds. Errors if any arm
/// covariance fails the PSD factorization.
pub fn sample_decision_set<R: Rng + ?Sized>(
    spec: &EnvironmentSpec,
    rng: &mut R,
) -> Result<DecisionSet> {
    Ok(ArmSampler::new(spec)?.sample(rng))
}

/// One noisy linear reward `<arm, w> + eta`, `eta ~ N(0, sigma^2)`.
pub fn reward_draw<R: Rng + ?Sized>(
    arm: &DVector<f64>,
    w: &DVector<f64>,
    sigma: f64,
    rng: &mut R,
) -> Result<f64> {
    if arm.len() != w.len() {
        return Err(Error::invalid_argument(format!(
            "arm dimension {} does not match parameter dimension {}",
            arm.len(),
            w.len()
        )));
    }
    let noise: f64 = rng.sample(StandardNormal);
    Ok(arm.dot(w) + sigma * noise)
}

/// Pre-generated interaction stream for one task: per-round decision sets
/// and reward noise.
///
/// The noise draw is attached to the round, not the arm, so different
/// policies replayed against the same `TaskEnv` see identical environments
/// and their regrets compare pairwise.
#[derive(Debug, Clone)]
pub struct TaskEnv {
    true_w: DVector<f64>,
    rounds: Vec<(DecisionSet, f64)>,
}

impl TaskEnv {
    pub fn generate<R: Rng + ?Sized>(
        spec: &EnvironmentSpec,
        true_w: DVector<f64>,
        n_rounds: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let sampler = ArmSampler::new(spec)?;
        let rounds = (0..n_rounds)
            .map(|_| {
                let ds = sampler.sample(rng);
                let noise: f64 = rng.sample::<f64, _>(StandardNormal) * spec.noise_sigma;
                (ds, noise)
            })
            .collect();
        Ok(TaskEnv { true_w, rounds })
    }

    /// Build directly from rounds; used by tests that need hand-crafted arms.
    pub fn from_rounds(true_w: DVector<f64>, rounds: Vec<(DecisionSet, f64)>) -> Self {
        TaskEnv { true_w, rounds }
    }

    pub fn n_rounds(&self) -> usize {
        self.rounds.len()
    }

    pub fn true_w(&self) -> &DVector<f64> {
        &self.true_w
    }

    pub fn decision_set(&self, n: usize) -> &DecisionSet {
        &self.rounds[n].0
    }

    /// Realized reward had arm `k` been played at round `n`.
    pub fn reward(&self, n: usize, k: usize) -> f64 {
        self.rounds[n].0.arm(k).dot(&self.true_w) + self.rounds[n].1
    }

    /// Expected reward of arm `k` at round `n` (no noise).
    pub fn mean_reward(&self, n: usize, k: usize) -> f64 {
        self.rounds[n].0.arm(k).dot(&self.true_w)
    }
}
