//! Greedy bandit policies over a (possibly estimated) representation.
//!
//! The transfer policy plays round 1 uniformly at random, and from round 2
//! on refits the task coefficients by least squares in the representation's
//! coordinates and plays the arm maximizing the estimated mean reward. No
//! exploration bonus is used anywhere; diversity of the sampled decision
//! sets is what keeps the projected Gram matrix growing.
//!
//! Three variants share the loop and differ only in the basis they project
//! onto: the estimated representation (`run_meta_greedy`), the true one
//! (`run_oracle_greedy`), or none at all (`run_ambient_greedy`, which works
//! in the full ambient space). `run_behavior_uniform` is the logging policy
//! that generates training data.

use nalgebra::DVector;
use rand::Rng;

use crate::env::{DecisionSet, InteractionLog, TaskEnv};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Representation};
use crate::representation::RepresentationEstimate;

/// Eigenvalues of the projected Gram matrix at or below this floor are
/// treated as zero when inverting; keeps pre-invertibility rounds stable.
const EIG_FLOOR: f64 = 1e-10;

/// Sufficient statistics of one policy run.
///
/// `gram` accumulates `(B^T x)(B^T x)^T` and `moment` accumulates
/// `(B^T x) y` over the observed rounds; with the identity basis these are
/// the ambient statistics.
#[derive(Debug, Clone)]
pub struct PolicyState {
    basis: Option<Representation>,
    gram: Matrix,
    moment: DVector<f64>,
    round: usize,
    /// Most recent coefficient estimate (working dimension).
    pub alpha_hat: DVector<f64>,
}

impl PolicyState {
    /// `basis = None` means ambient mode: statistics live in `R^d`.
    pub fn new(basis: Option<Representation>, d: usize) -> Self {
        let dim = basis.as_ref().map_or(d, |b| b.rank());
        PolicyState {
            basis,
            gram: Matrix::zeros(dim, dim),
            moment: DVector::zeros(dim),
            round: 0,
            alpha_hat: DVector::zeros(dim),
        }
    }

    /// Working dimension of the statistics.
    pub fn dim(&self) -> usize {
        self.moment.len()
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.basis {
            Some(b) => b.project(x),
            None => x.clone(),
        }
    }

    fn expand(&self, a: &DVector<f64>) -> DVector<f64> {
        match &self.basis {
            Some(b) => b.expand(a),
            None => a.clone(),
        }
    }

    /// Fold one observation into the statistics.
    pub fn observe(&mut self, arm: &DVector<f64>, reward: f64) {
        let z = self.project(arm);
        self.gram += &z * z.transpose();
        self.moment += z * reward;
        self.round += 1;
    }
}

/// Minimum-norm least-squares estimate of the coefficients: the
/// pseudo-inverse solution of `gram * alpha = moment`, with eigenvalues at
/// or below 1e-10 treated as zero. Coincides with the unique least-squares
/// minimizer once the projected Gram matrix is invertible.
pub fn estimate_alpha(state: &PolicyState) -> DVector<f64> {
    let dim = state.dim();
    if dim == 0 {
        return DVector::zeros(0);
    }
    let eig = state.gram.clone().symmetric_eigen();
    let mut solution = DVector::zeros(dim);
    for j in 0..dim {
        let lambda = eig.eigenvalues[j];
        if lambda > EIG_FLOOR {
            let q = eig.eigenvectors.column(j);
            solution += q * (q.dot(&state.moment) / lambda);
        }
    }
    solution
}

/// Index of the arm maximizing `<x, direction>`; ties go to the lowest index.
pub fn select_arm(decision_set: &DecisionSet, direction: &DVector<f64>) -> Result<usize> {
    if decision_set.is_empty() {
        return Err(Error::invalid_argument("empty decision set"));
    }
    let mut best = 0;
    let mut best_value = decision_set.arm(0).dot(direction);
    for k in 1..decision_set.len() {
        let value = decision_set.arm(k).dot(direction);
        if value > best_value {
            best = k;
            best_value = value;
        }
    }
    Ok(best)
}

/// Per-round and cumulative gaps to the optimal arm under the true parameter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegretTrace {
    pub instantaneous: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl RegretTrace {
    pub fn push(&mut self, gap: f64) {
        let total = self.cumulative.last().copied().unwrap_or(0.0) + gap;
        self.instantaneous.push(gap);
        self.cumulative.push(total);
    }

    pub fn len(&self) -> usize {
        self.instantaneous.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instantaneous.is_empty()
    }

    /// Final cumulative regret (zero for an empty trace).
    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

fn run_greedy<R: Rng + ?Sized>(
    env: &TaskEnv,
    basis: Option<Representation>,
    n_rounds: usize,
    rng: &mut R,
) -> Result<(InteractionLog, RegretTrace)> {
    if n_rounds > env.n_rounds() {
        return Err(Error::invalid_argument(format!(
            "requested {n_rounds} rounds but the environment holds {}",
            env.n_rounds()
        )));
    }
    let d = env.true_w().len();
    if let Some(b) = &basis {
        if b.dim() != d {
            return Err(Error::invalid_argument(format!(
                "representation has {} rows, environment dimension is {d}",
                b.dim()
            )));
        }
    }

    let mut state = PolicyState::new(basis, d);
    let mut log = InteractionLog::new(0);
    let mut trace = RegretTrace::default();

    for n in 0..n_rounds {
        let ds = env.decision_set(n);
        let chosen = if n == 0 {
            rng.random_range(0..ds.len())
        } else {
            state.alpha_hat = estimate_alpha(&state);
            let direction = state.expand(&state.alpha_hat);
            select_arm(ds, &direction)?
        };
        let reward = env.reward(n, chosen);
        state.observe(ds.arm(chosen), reward);

        let best = select_arm(ds, env.true_w())?;
        trace.push(env.mean_reward(n, best) - env.mean_reward(n, chosen));
        log.push(ds.clone(), chosen, reward);
    }
    Ok((log, trace))
}

/// Greedy policy on an estimated representation.
///
/// A zero-rank estimate carries no usable directions; the run falls back to
/// the ambient policy and logs a warning.
pub fn run_meta_greedy<R: Rng + ?Sized>(
    env: &TaskEnv,
    representation: &RepresentationEstimate,
    n_rounds: usize,
    rng: &mut R,
) -> Result<(InteractionLog, RegretTrace)> {
    if representation.estimated_rank == 0 {
        log::warn!("zero-rank representation estimate; falling back to ambient greedy");
        return run_greedy(env, None, n_rounds, rng);
    }
    run_greedy(env, Some(representation.basis.clone()), n_rounds, rng)
}

/// Greedy policy given the true representation.
pub fn run_oracle_greedy<R: Rng + ?Sized>(
    env: &TaskEnv,
    true_b: &Representation,
    n_rounds: usize,
    rng: &mut R,
) -> Result<(InteractionLog, RegretTrace)> {
    run_greedy(env, Some(true_b.clone()), n_rounds, rng)
}

/// Greedy policy with no representation: least squares in the full ambient
/// space.
pub fn run_ambient_greedy<R: Rng + ?Sized>(
    env: &TaskEnv,
    n_rounds: usize,
    rng: &mut R,
) -> Result<(InteractionLog, RegretTrace)> {
    run_greedy(env, None, n_rounds, rng)
}

/// Logging policy for the training phase: picks arms uniformly at random.
pub fn run_behavior_uniform<R: Rng + ?Sized>(
    env: &TaskEnv,
    n_rounds: usize,
    rng: &mut R,
) -> Result<InteractionLog> {
    if n_rounds > env.n_rounds() {
        return Err(Error::invalid_argument(format!(
            "requested {n_rounds} rounds but the environment holds {}",
            env.n_rounds()
        )));
    }
    let mut log = InteractionLog::new(0);
    for n in 0..n_rounds {
        let ds = env.decision_set(n);
        let chosen = rng.random_range(0..ds.len());
        let reward = env.reward(n, chosen);
        log.push(ds.clone(), chosen, reward);
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{sample_representation, ArmModel, CovarianceModel, EnvironmentSpec, TaskEnv};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    fn spec(d: usize, r: usize, arms: usize, sigma: f64) -> EnvironmentSpec {
        EnvironmentSpec {
            d,
            r,
            tasks: r.max(2),
            arms,
            arm_model: ArmModel::Gaussian,
            arm_covariance: CovarianceModel::Identity,
            noise_sigma: sigma,
            task_norm_bound: 1.0,
            alpha_scale: 1.0,
        }
    }

    fn unit(d: usize, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(d);
        v[i] = 1.0;
        v
    }

    #[test]
    fn estimate_alpha_exact_in_noiseless_full_rank_case() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let b = sample_representation(6, 2, &mut rng).unwrap();
        let alpha = DVector::from_vec(vec![0.8, -0.3]);
        let w = b.expand(&alpha);
        let mut state = PolicyState::new(Some(b), 6);
        for _ in 0..10 {
            let x = DVector::from_fn(6, |_, _| rng.sample::<f64, _>(StandardNormal));
            state.observe(&x, x.dot(&w));
        }
        let est = estimate_alpha(&state);
        assert!((est - alpha).norm() < 1e-8);
    }

    #[test]
    fn estimate_alpha_single_observation_closed_form() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let b = sample_representation(5, 2, &mut rng).unwrap();
        let x = DVector::from_fn(5, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = 1.7;
        let mut state = PolicyState::new(Some(b.clone()), 5);
        state.observe(&x, y);
        let est = estimate_alpha(&state);
        let z = b.project(&x);
        let expected = &z * (y / z.norm_squared());
        assert!((est - expected).norm() < 1e-10);
    }

    #[test]
    fn estimate_alpha_zero_moment_gives_zero() {
        let state = PolicyState::new(None, 4);
        assert_eq!(estimate_alpha(&state), DVector::zeros(4));
    }

    #[test]
    fn select_arm_basic_cases() {
        let ds = DecisionSet {
            arms: vec![
                DVector::from_vec(vec![1.0, 0.0]),
                DVector::from_vec(vec![0.0, 1.0]),
            ],
        };
        let dir = DVector::from_vec(vec![2.0, 1.0]);
        assert_eq!(select_arm(&ds, &dir).unwrap(), 0);
        // All ties break to the lowest index.
        assert_eq!(select_arm(&ds, &DVector::zeros(2)).unwrap(), 0);
        let empty = DecisionSet { arms: vec![] };
        assert!(select_arm(&empty, &dir).is_err());
    }

    #[test]
    fn select_arm_matches_exhaustive_scan() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..50 {
            let arms: Vec<DVector<f64>> = (0..10)
                .map(|_| DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal)))
                .collect();
            let direction = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
            let ds = DecisionSet { arms };
            let picked = select_arm(&ds, &direction).unwrap();
            let mut best = 0;
            for k in 0..10 {
                if ds.arm(k).dot(&direction) > ds.arm(best).dot(&direction) {
                    best = k;
                }
            }
            assert_eq!(picked, best);
        }
    }

    #[test]
    fn one_dimensional_noiseless_meta_identifies_after_first_observation() {
        // With r = 1, sigma = 0 and the true basis, a single informative
        // observation pins alpha exactly; every later round has zero regret.
        let s = spec(4, 1, 2, 0.0);
        let mut env_rng = ChaCha12Rng::seed_from_u64(3);
        let ts = crate::env::sample_task_set(&s, &mut env_rng).unwrap();
        let env = TaskEnv::generate(&s, ts.test_vector(), 30, &mut env_rng).unwrap();

        let est = RepresentationEstimate {
            basis: ts.representation.clone(),
            method: crate::representation::ExtractionMethod::RankTruncated,
            estimated_rank: 1,
            source_singular_values: vec![1.0],
        };
        let mut policy_rng = ChaCha12Rng::seed_from_u64(4);
        let (log, trace) = run_meta_greedy(&env, &est, 30, &mut policy_rng).unwrap();

        // The first pick must be informative for the basis direction.
        let first_arm = log.records[0].decision_set.arm(log.records[0].chosen_index);
        assert!(ts.representation.project(first_arm).norm() > 1e-9);
        for (n, gap) in trace.instantaneous.iter().enumerate().skip(1) {
            assert!(gap.abs() <= 1e-10, "round {n} has regret {gap}");
        }
    }

    #[test]
    fn zero_rank_estimate_falls_back_to_ambient() {
        let s = spec(5, 2, 3, 0.3);
        let mut env_rng = ChaCha12Rng::seed_from_u64(5);
        let ts = crate::env::sample_task_set(&s, &mut env_rng).unwrap();
        let env = TaskEnv::generate(&s, ts.test_vector(), 40, &mut env_rng).unwrap();

        let est = RepresentationEstimate::zero_rank(5);
        let mut rng_a = ChaCha12Rng::seed_from_u64(6);
        let mut rng_b = ChaCha12Rng::seed_from_u64(6);
        let meta = run_meta_greedy(&env, &est, 40, &mut rng_a).unwrap();
        let ambient = run_ambient_greedy(&env, 40, &mut rng_b).unwrap();
        assert_eq!(meta, ambient);
    }

    #[test]
    fn empty_run_produces_empty_traces() {
        let s = spec(4, 1, 2, 0.1);
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let ts = crate::env::sample_task_set(&s, &mut rng).unwrap();
        let env = TaskEnv::generate(&s, ts.test_vector(), 5, &mut rng).unwrap();
        let (log, trace) =
            run_oracle_greedy(&env, &ts.representation, 0, &mut rng).unwrap();
        assert!(log.is_empty());
        assert!(trace.is_empty());
        assert_eq!(trace.total(), 0.0);
    }

    #[test]
    fn ambient_equals_oracle_in_one_dimension() {
        // d = 1: the ambient space and any orthonormal basis coincide up to
        // sign, and the policy is sign-invariant through least squares.
        let w = DVector::from_vec(vec![0.7]);
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let rounds: Vec<(DecisionSet, f64)> = (0..25)
            .map(|_| {
                let arms = (0..3)
                    .map(|_| DVector::from_vec(vec![rng.sample::<f64, _>(StandardNormal)]))
                    .collect();
                (DecisionSet { arms }, 0.1 * rng.sample::<f64, _>(StandardNormal))
            })
            .collect();
        let env = TaskEnv::from_rounds(w, rounds);
        let b = Representation::new(Matrix::from_element(1, 1, 1.0)).unwrap();

        let mut rng_a = ChaCha12Rng::seed_from_u64(9);
        let mut rng_b = ChaCha12Rng::seed_from_u64(9);
        let oracle = run_oracle_greedy(&env, &b, 25, &mut rng_a).unwrap();
        let ambient = run_ambient_greedy(&env, 25, &mut rng_b).unwrap();
        assert_eq!(oracle, ambient);
    }

    #[test]
    fn noiseless_ambient_regret_is_flat_after_full_rank() {
        let s = spec(3, 1, 3, 0.0);
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let ts = crate::env::sample_task_set(&s, &mut rng).unwrap();
        let env = TaskEnv::generate(&s, ts.test_vector(), 20, &mut rng).unwrap();
        let mut policy_rng = ChaCha12Rng::seed_from_u64(11);
        let (log, trace) = run_ambient_greedy(&env, 20, &mut policy_rng).unwrap();

        // Find the first round after which the ambient Gram is full rank.
        let mut gram = Matrix::zeros(3, 3);
        let mut full_rank_at = None;
        for (n, rec) in log.records.iter().enumerate() {
            let x = rec.decision_set.arm(rec.chosen_index);
            gram += x * x.transpose();
            let min_eig = gram.clone().symmetric_eigen().eigenvalues.min();
            if min_eig > 1e-10 {
                full_rank_at = Some(n);
                break;
            }
        }
        let n0 = full_rank_at.expect("gram never reached full rank in 20 rounds");
        for n in (n0 + 1)..trace.len() {
            assert!(
                trace.instantaneous[n].abs() <= 1e-9,
                "round {n} regret {} after rank saturation at {n0}",
                trace.instantaneous[n]
            );
        }
    }

    #[test]
    fn instantaneous_regret_is_nonnegative_across_policies() {
        let s = spec(6, 2, 4, 0.5);
        for seed in 0..5 {
            let mut rng = ChaCha12Rng::seed_from_u64(20 + seed);
            let ts = crate::env::sample_task_set(&s, &mut rng).unwrap();
            let env = TaskEnv::generate(&s, ts.test_vector(), 50, &mut rng).unwrap();
            let mut policy_rng = ChaCha12Rng::seed_from_u64(40 + seed);
            let (_, oracle) =
                run_oracle_greedy(&env, &ts.representation, 50, &mut policy_rng).unwrap();
            let (_, ambient) = run_ambient_greedy(&env, 50, &mut policy_rng).unwrap();
            for trace in [&oracle, &ambient] {
                for &gap in &trace.instantaneous {
                    assert!(gap >= -1e-9, "negative instantaneous regret {gap}");
                }
                for w in trace.cumulative.windows(2) {
                    assert!(w[1] >= w[0] - 1e-9);
                }
            }
        }
    }

    #[test]
    fn uniform_behavior_logs_everything() {
        let w = DVector::from_vec(vec![1.0]);
        let mut rng = ChaCha12Rng::seed_from_u64(30);
        let rounds: Vec<(DecisionSet, f64)> = (0..10)
            .map(|_| {
                (
                    DecisionSet {
                        arms: vec![DVector::from_vec(vec![rng
                            .sample::<f64, _>(StandardNormal)])],
                    },
                    0.0,
                )
            })
            .collect();
        let env = TaskEnv::from_rounds(w, rounds);
        let log = run_behavior_uniform(&env, 10, &mut rng).unwrap();
        assert_eq!(log.len(), 10);
        // K = 1: every pick is index 0.
        assert!(log.records.iter().all(|r| r.chosen_index == 0));
    }

    #[test]
    fn uniform_behavior_frequencies_concentrate() {
        let s = spec(3, 1, 5, 0.0);
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let ts = crate::env::sample_task_set(&s, &mut rng).unwrap();
        let env = TaskEnv::generate(&s, ts.test_vector(), 10_000, &mut rng).unwrap();
        let log = run_behavior_uniform(&env, 10_000, &mut rng).unwrap();
        let mut counts = [0usize; 5];
        for rec in &log.records {
            counts[rec.chosen_index] += 1;
        }
        for (k, &c) in counts.iter().enumerate() {
            let freq = c as f64 / 10_000.0;
            assert!(
                (0.17..=0.23).contains(&freq),
                "arm {k} frequency {freq} outside [0.17, 0.23]"
            );
        }
    }

    #[test]
    fn unit_vectors_give_unit_gram_diagonal() {
        let mut state = PolicyState::new(None, 3);
        for i in 0..3 {
            state.observe(&unit(3, i), 1.0);
        }
        assert_eq!(state.round(), 3);
        assert!((state.gram() - Matrix::identity(3, 3)).norm() < 1e-12);
    }

    proptest! {
        #[test]
        fn select_arm_is_scale_invariant(seed in 0u64..200, scale in 1e-3f64..1e3) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let arms: Vec<DVector<f64>> = (0..6)
                .map(|_| DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal)))
                .collect();
            let direction = DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal));
            let ds = DecisionSet { arms };
            let base = select_arm(&ds, &direction).unwrap();
            let scaled = select_arm(&ds, &(&direction * scale)).unwrap();
            prop_assert_eq!(base, scaled);
        }
    }
}
