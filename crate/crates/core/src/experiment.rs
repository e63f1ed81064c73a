//! Config-driven Monte-Carlo experiment harness.
//!
//! One experiment = for each replicate seed: draw a task family, record
//! training logs under a behavior policy, fit the trace-norm estimator,
//! extract representation estimates, replay the requested test policies on a
//! shared test-task environment, and summarize each run as a [`RunRecord`].
//!
//! Determinism: every random draw comes from a stream derived from
//! `(base_seed + replicate, purpose)` by a splitmix64 mix, so adding or
//! removing policies never shifts environment draws, and replicates are
//! independent. Records are sorted by `(seed, policy, method)` so worker
//! count never changes output bytes.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, DiagnosticsReport, PolicyScaling, RegretObservation};
use crate::env::{EnvironmentSpec, InteractionLog, TaskEnv, TaskSet};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Representation, SvdFactors};
use crate::mtl::{self, MtlProblem, SolverReport};
use crate::policies::{self, RegretTrace};
use crate::representation::{self, RepresentationEstimate};

/// How the trace-norm weight is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// The size-dependent schedule with a configurable scale.
    Schedule,
    /// A single explicit value.
    Fixed,
    /// A list of values; the largest one whose fit passes the noise
    /// discrepancy test is kept (fits are warm-started along the list).
    Grid,
}

/// Which representation estimator(s) the meta policy uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepresentationMethod {
    RankAgnostic,
    RankR,
    Both,
}

/// Test-phase policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Greedy on the estimated representation.
    Meta,
    /// Greedy on the true representation.
    Oracle,
    /// Greedy in the full ambient space.
    Ambient,
}

/// Training-phase behavior policy that produces the logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorPolicy {
    Uniform,
    Greedy,
}

fn default_n_tr() -> usize {
    400
}
fn default_n_test() -> usize {
    400
}
fn default_n_seeds() -> usize {
    20
}
fn default_base_seed() -> u64 {
    0
}
fn default_lambda_mode() -> LambdaMode {
    LambdaMode::Schedule
}
fn default_confidence_x() -> f64 {
    // Matches a 0.05 confidence level.
    (1.0_f64 / 0.05).ln()
}
fn default_representation_method() -> RepresentationMethod {
    RepresentationMethod::RankAgnostic
}
fn default_rank_tol() -> f64 {
    linalg::DEFAULT_RANK_TOL
}
fn default_policies() -> Vec<PolicyKind> {
    vec![PolicyKind::Meta, PolicyKind::Oracle, PolicyKind::Ambient]
}
fn default_behavior() -> BehaviorPolicy {
    BehaviorPolicy::Uniform
}
fn default_transfer_comparison() -> bool {
    true
}
fn default_output_path() -> PathBuf {
    PathBuf::from("results.csv")
}
fn default_solver_max_iters() -> usize {
    4000
}
fn default_solver_tol() -> f64 {
    1e-8
}

/// Everything one experiment needs, loadable from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentSpec,
    /// Training rounds per task.
    #[serde(default = "default_n_tr")]
    pub n_tr: usize,
    /// Test rounds on the downstream task.
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    /// Monte-Carlo replicates.
    #[serde(default = "default_n_seeds")]
    pub n_seeds: usize,
    #[serde(default = "default_base_seed")]
    pub base_seed: u64,
    #[serde(default = "default_lambda_mode")]
    pub lambda_mode: LambdaMode,
    /// Scale for the schedule; defaults to `0.5 * noise_sigma`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_scale_c: Option<f64>,
    #[serde(default = "default_confidence_x")]
    pub lambda_confidence_x: f64,
    /// Explicit weight for `lambda_mode = "fixed"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_fixed: Option<f64>,
    /// Explicit weights for `lambda_mode = "grid"`; defaults to the schedule
    /// evaluated at scales `{0.1, 0.5, 1, 2} * noise_sigma`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_grid: Option<Vec<f64>>,
    #[serde(default = "default_representation_method")]
    pub representation_method: RepresentationMethod,
    /// Relative singular-value threshold for the rank-agnostic extraction.
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
    #[serde(default = "default_policies")]
    pub policies: Vec<PolicyKind>,
    #[serde(default = "default_behavior")]
    pub behavior_policy: BehaviorPolicy,
    /// When set, validation enforces `n_test <= n_tr` (the regime where the
    /// training-vs-test comparison is meaningful in).
    #[serde(default = "default_transfer_comparison")]
    pub transfer_comparison: bool,
    #[serde(default = "default_output_path")]
    pub output_path: PathBuf,
    #[serde(default = "default_solver_max_iters")]
    pub solver_max_iters: usize,
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.environment
            .validate()
            .map_err(|e| Error::config(format!("environment: {e}")))?;
        if self.n_seeds < 1 {
            return Err(Error::config("n_seeds must be at least 1"));
        }
        if self.n_tr < 1 || self.n_test < 1 {
            return Err(Error::config("n_tr and n_test must be at least 1"));
        }
        if self.transfer_comparison && self.n_test > self.n_tr {
            return Err(Error::config(format!(
                "transfer_comparison requires n_test <= n_tr, got n_test={} n_tr={}",
                self.n_test, self.n_tr
            )));
        }
        if !self.rank_tol.is_finite() || self.rank_tol <= 0.0 || self.rank_tol >= 1.0 {
            return Err(Error::config(format!(
                "rank_tol must lie in (0, 1), got {}",
                self.rank_tol
            )));
        }
        if self.policies.is_empty() {
            return Err(Error::config("at least one policy must be requested"));
        }
        let unique: BTreeSet<_> = self.policies.iter().collect();
        if unique.len() != self.policies.len() {
            return Err(Error::config("duplicate entries in policies"));
        }
        if !self.solver_tol.is_finite() || self.solver_tol <= 0.0 || self.solver_max_iters == 0 {
            return Err(Error::config(
                "solver_tol must be positive and solver_max_iters non-zero",
            ));
        }
        match self.lambda_mode {
            LambdaMode::Schedule => {
                let scale = self.schedule_scale();
                if !scale.is_finite() || scale <= 0.0 {
                    return Err(Error::config(
                        "schedule mode needs lambda_scale_c > 0 (the default \
                         0.5 * noise_sigma vanishes for noiseless environments; \
                         set lambda_scale_c or use lambda_mode = \"fixed\")",
                    ));
                }
                self.resolve_lambdas()?;
            }
            LambdaMode::Fixed => {
                let v = self.lambda_fixed.ok_or_else(|| {
                    Error::config("lambda_mode = \"fixed\" requires lambda_fixed")
                })?;
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::config(format!(
                        "lambda_fixed must be finite and non-negative, got {v}"
                    )));
                }
            }
            LambdaMode::Grid => {
                let values = self.resolve_lambdas()?;
                if values.is_empty() {
                    return Err(Error::config("lambda_grid must not be empty"));
                }
                if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::config(
                        "lambda_grid values must be finite and non-negative",
                    ));
                }
            }
        }
        Ok(())
    }

    fn schedule_scale(&self) -> f64 {
        self.lambda_scale_c
            .unwrap_or(0.5 * self.environment.noise_sigma)
    }

    /// The lambda value(s) the runner will use, in fitting order.
    pub fn resolve_lambdas(&self) -> Result<Vec<f64>> {
        match self.lambda_mode {
            LambdaMode::Schedule => Ok(vec![mtl::lambda_schedule(
                self.environment.tasks,
                self.environment.d,
                self.n_tr,
                self.lambda_confidence_x,
                self.schedule_scale(),
            )?]),
            LambdaMode::Fixed => Ok(vec![self
                .lambda_fixed
                .ok_or_else(|| Error::config("lambda_fixed missing"))?]),
            LambdaMode::Grid => {
                let mut values = match &self.lambda_grid {
                    Some(v) => v.clone(),
                    None => {
                        let sigma = self.environment.noise_sigma;
                        if sigma <= 0.0 {
                            return Err(Error::config(
                                "default lambda grid needs noise_sigma > 0; \
                                 set lambda_grid explicitly",
                            ));
                        }
                        [0.1, 0.5, 1.0, 2.0]
                            .iter()
                            .map(|c| {
                                mtl::lambda_schedule(
                                    self.environment.tasks,
                                    self.environment.d,
                                    self.n_tr,
                                    self.lambda_confidence_x,
                                    c * sigma,
                                )
                            })
                            .collect::<Result<Vec<f64>>>()?
                    }
                };
                values.sort_by(|a, b| b.partial_cmp(a).unwrap());
                Ok(values)
            }
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("serialize: {e}")))
    }
}

/// Parse and validate a config file. Unknown keys and violated invariants
/// are reported by name.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
    let config: ExperimentConfig = toml::from_str(&text)
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub policy: String,
    pub method: String,
    pub regret_n8: f64,
    pub regret_n4: f64,
    pub regret_n2: f64,
    pub regret_n: f64,
    pub frob_error: f64,
    pub op_error: f64,
    pub sigma_r_w: f64,
    pub subspace_gap: f64,
    pub estimated_rank: usize,
    pub min_eig_final: f64,
    pub converged: bool,
}

/// Optional per-round detail for one run, emitted behind a flag.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub seed: u64,
    pub policy: String,
    pub method: String,
    pub regret: RegretTrace,
    pub diagnostics: DiagnosticsReport,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Independent stream for `(seed, purpose)`.
fn stream_rng(seed: u64, tag: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(splitmix64(seed ^ splitmix64(tag)))
}

const TAG_TASKS: u64 = 1;
const TAG_TEST_ENV: u64 = 2;
const TAG_TRAIN_ENV_BASE: u64 = 1_000;
const TAG_TRAIN_POLICY_BASE: u64 = 2_000_000;
// All test-phase policies draw from one stream so their round-1 random picks
// coincide and regrets compare pairwise within a seed.
const TAG_POLICY_SHARED: u64 = 10;

struct FitOutcome {
    w_hat: Matrix,
    converged: bool,
}

/// Fit with the configured lambda mode. Grid mode fits the values largest to
/// smallest with warm starts and keeps the largest lambda whose mean squared
/// residual is within 10% of the noise floor `sigma^2` (falling back to the
/// smallest value when none qualifies).
fn fit_for_config(config: &ExperimentConfig, logs: &[InteractionLog]) -> Result<FitOutcome> {
    let lambdas = config.resolve_lambdas()?;
    let sigma2 = config.environment.noise_sigma * config.environment.noise_sigma;
    let mut warm: Option<Matrix> = None;
    let mut last: Option<SolverReport> = None;
    for &lambda in &lambdas {
        let problem = MtlProblem::from_logs(logs, lambda)?;
        let report = mtl::fit_trace_norm_warm(
            &problem,
            warm.as_ref(),
            config.solver_max_iters,
            config.solver_tol,
        )?;
        let mse = problem.loss(&report.solution);
        warm = Some(report.solution.clone());
        let accept = lambdas.len() == 1 || mse <= 1.1 * sigma2;
        last = Some(report);
        if accept {
            break;
        }
    }
    let report = last.expect("at least one lambda");
    if !report.converged {
        log::warn!(
            "trace-norm solver did not converge (kkt residual {:.3e})",
            report.kkt_residual
        );
    }
    Ok(FitOutcome {
        converged: report.converged,
        w_hat: report.solution,
    })
}

fn policy_name(kind: PolicyKind) -> &'static str {
    match kind {
        PolicyKind::Meta => "meta",
        PolicyKind::Oracle => "oracle",
        PolicyKind::Ambient => "ambient",
    }
}

/// Checkpoint horizons `{N/8, N/4, N/2, N}` (clamped to at least 1).
pub fn checkpoints(n_test: usize) -> [usize; 4] {
    [
        (n_test / 8).max(1),
        (n_test / 4).max(1),
        (n_test / 2).max(1),
        n_test.max(1),
    ]
}

struct SeedContext<'a> {
    config: &'a ExperimentConfig,
    seed: u64,
    task_set: TaskSet,
    test_env: TaskEnv,
    w_hat: Matrix,
    converged: bool,
    frob_error: f64,
    op_error: f64,
    sigma_r_w: f64,
    subspace_gap: f64,
}

impl SeedContext<'_> {
    fn build(config: &ExperimentConfig, seed: u64) -> Result<SeedContext<'_>> {
        let spec = &config.environment;
        let mut task_rng = stream_rng(seed, TAG_TASKS);
        let task_set = crate::env::sample_task_set(spec, &mut task_rng)?;

        let mut logs = Vec::with_capacity(spec.tasks);
        for t in 0..spec.tasks {
            let mut env_rng = stream_rng(seed, TAG_TRAIN_ENV_BASE + t as u64);
            let env =
                TaskEnv::generate(spec, task_set.task_vector(t), config.n_tr, &mut env_rng)?;
            let mut policy_rng = stream_rng(seed, TAG_TRAIN_POLICY_BASE + t as u64);
            let mut log = match config.behavior_policy {
                BehaviorPolicy::Uniform => {
                    policies::run_behavior_uniform(&env, config.n_tr, &mut policy_rng)?
                }
                BehaviorPolicy::Greedy => {
                    policies::run_ambient_greedy(&env, config.n_tr, &mut policy_rng)?.0
                }
            };
            log.task_index = t;
            logs.push(log);
        }

        let fit = fit_for_config(config, &logs)?;

        let diff = &fit.w_hat - &task_set.task_matrix;
        let frob_error = diff.norm();
        let op_error = linalg::operator_norm(&diff);
        let true_factors = SvdFactors::compute(&task_set.task_matrix)?;
        let sigma_r_w = true_factors.singular_values[spec.r - 1];
        let subspace_gap =
            diagnostics::perturbation_check(&fit.w_hat, &task_set.task_matrix, spec.r)?.lhs;

        let mut test_rng = stream_rng(seed, TAG_TEST_ENV);
        let test_env =
            TaskEnv::generate(spec, task_set.test_vector(), config.n_test, &mut test_rng)?;

        Ok(SeedContext {
            config,
            seed,
            task_set,
            test_env,
            converged: fit.converged,
            w_hat: fit.w_hat,
            frob_error,
            op_error,
            sigma_r_w,
            subspace_gap,
        })
    }

    /// Representation estimates the meta policy runs with, one per method.
    fn meta_estimates(&self) -> Vec<(String, RepresentationEstimate)> {
        let mut out = Vec::new();
        let method = self.config.representation_method;
        if matches!(
            method,
            RepresentationMethod::RankAgnostic | RepresentationMethod::Both
        ) {
            let est = representation::extract_rank_agnostic(&self.w_hat, self.config.rank_tol)
                .unwrap_or_else(|e| {
                    log::warn!("seed {}: rank-agnostic extraction failed ({e})", self.seed);
                    RepresentationEstimate::zero_rank(self.config.environment.d)
                });
            out.push(("rank_agnostic".to_string(), est));
        }
        if matches!(
            method,
            RepresentationMethod::RankR | RepresentationMethod::Both
        ) {
            let est = representation::extract_rank_r(&self.w_hat, self.config.environment.r)
                .unwrap_or_else(|e| {
                    log::warn!("seed {}: rank-r extraction failed ({e})", self.seed);
                    RepresentationEstimate::zero_rank(self.config.environment.d)
                });
            out.push(("rank_r".to_string(), est));
        }
        out
    }

    /// Execute one policy run and summarize it.
    fn run_policy(
        &self,
        kind: PolicyKind,
        method: &str,
        estimate: Option<&RepresentationEstimate>,
        with_trace: bool,
    ) -> Result<(RunRecord, Option<RunTrace>)> {
        let n = self.config.n_test;
        let mut rng = stream_rng(self.seed, TAG_POLICY_SHARED);
        let (log, regret) = match kind {
            PolicyKind::Meta => policies::run_meta_greedy(
                &self.test_env,
                estimate.expect("meta runs carry an estimate"),
                n,
                &mut rng,
            )?,
            PolicyKind::Oracle => policies::run_oracle_greedy(
                &self.test_env,
                &self.task_set.representation,
                n,
                &mut rng,
            )?,
            PolicyKind::Ambient => policies::run_ambient_greedy(&self.test_env, n, &mut rng)?,
        };

        let d = self.config.environment.d;
        // The basis the run effectively used (zero-rank estimates fall back
        // to ambient).
        let basis = match kind {
            PolicyKind::Meta => {
                let est = estimate.unwrap();
                if est.estimated_rank == 0 {
                    Representation::identity(d)
                } else {
                    est.basis.clone()
                }
            }
            PolicyKind::Oracle => self.task_set.representation.clone(),
            PolicyKind::Ambient => Representation::identity(d),
        };
        let estimated_rank = match kind {
            PolicyKind::Meta => estimate.unwrap().estimated_rank,
            PolicyKind::Oracle => self.config.environment.r,
            PolicyKind::Ambient => d,
        };

        let chosen_arms: Vec<DVector<f64>> = log
            .records
            .iter()
            .map(|rec| rec.decision_set.arm(rec.chosen_index).clone())
            .collect();
        let min_eig_final = diagnostics::min_eig_projected(&basis, &chosen_arms)?;

        let cp = checkpoints(n);
        let at = |idx: usize| regret.cumulative[idx - 1];
        let record = RunRecord {
            seed: self.seed,
            policy: policy_name(kind).to_string(),
            method: method.to_string(),
            regret_n8: at(cp[0]),
            regret_n4: at(cp[1]),
            regret_n2: at(cp[2]),
            regret_n: at(cp[3]),
            frob_error: self.frob_error,
            op_error: self.op_error,
            sigma_r_w: self.sigma_r_w,
            subspace_gap: self.subspace_gap,
            estimated_rank,
            min_eig_final,
            converged: self.converged,
        };
        debug_assert!(
            record.regret_n8 <= record.regret_n4 + 1e-9
                && record.regret_n4 <= record.regret_n2 + 1e-9
                && record.regret_n2 <= record.regret_n + 1e-9
        );

        let trace = if with_trace {
            let (min_eig_trace, estimation_error_trace) = replay_diagnostics(
                &log,
                &basis,
                &self.task_set.representation,
                &self.task_set.test_alpha,
            )?;
            Some(RunTrace {
                seed: self.seed,
                policy: policy_name(kind).to_string(),
                method: method.to_string(),
                regret,
                diagnostics: DiagnosticsReport {
                    frob_error: self.frob_error,
                    op_error: self.op_error,
                    sigma_r_w: self.sigma_r_w,
                    subspace_gap: self.subspace_gap,
                    min_eig_projected_trace: min_eig_trace,
                    estimated_rank,
                    estimation_error_trace,
                },
            })
        } else {
            None
        };
        Ok((record, trace))
    }
}

/// Per-round diagnostics replayed from a recorded run: the smallest
/// eigenvalue of the projected empirical covariance and the parameter
/// estimation error, both after `n + 1` observations.
pub fn replay_diagnostics(
    log: &InteractionLog,
    basis: &Representation,
    b_true: &Representation,
    alpha_true: &DVector<f64>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut state = policies::PolicyState::new(Some(basis.clone()), basis.dim());
    let mut min_eigs = Vec::with_capacity(log.len());
    let mut errors = Vec::with_capacity(log.len());
    let mut arms = Vec::with_capacity(log.len());
    for rec in &log.records {
        let arm = rec.decision_set.arm(rec.chosen_index);
        state.observe(arm, rec.reward);
        arms.push(arm.clone());
        min_eigs.push(diagnostics::min_eig_projected(basis, &arms)?);
        let alpha_hat = policies::estimate_alpha(&state);
        errors.push(representation::estimation_error(
            basis, &alpha_hat, b_true, alpha_true,
        )?);
    }
    Ok((min_eigs, errors))
}

fn run_seed(
    config: &ExperimentConfig,
    replicate: usize,
    with_traces: bool,
) -> Result<(Vec<RunRecord>, Vec<RunTrace>)> {
    let seed = config.base_seed + replicate as u64;
    let ctx = SeedContext::build(config, seed)?;
    let mut records = Vec::new();
    let mut traces = Vec::new();
    for &kind in &config.policies {
        match kind {
            PolicyKind::Meta => {
                for (method, est) in ctx.meta_estimates() {
                    let (rec, tr) = ctx.run_policy(kind, &method, Some(&est), with_traces)?;
                    records.push(rec);
                    traces.extend(tr);
                }
            }
            PolicyKind::Oracle => {
                let (rec, tr) = ctx.run_policy(kind, "true_b", None, with_traces)?;
                records.push(rec);
                traces.extend(tr);
            }
            PolicyKind::Ambient => {
                let (rec, tr) = ctx.run_policy(kind, "ambient", None, with_traces)?;
                records.push(rec);
                traces.extend(tr);
            }
        }
    }
    Ok((records, traces))
}

fn sort_key(r: &RunRecord) -> (u64, String, String) {
    (r.seed, r.policy.clone(), r.method.clone())
}

/// Run the full experiment. Replicates execute in parallel; output order is
/// `(seed, policy, method)` regardless of worker count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    Ok(run_experiment_with_traces(config, false)?.0)
}

/// Like [`run_experiment`], optionally collecting per-round traces.
pub fn run_experiment_with_traces(
    config: &ExperimentConfig,
    with_traces: bool,
) -> Result<(Vec<RunRecord>, Vec<RunTrace>)> {
    config.validate()?;
    let results: Result<Vec<_>> = (0..config.n_seeds)
        .into_par_iter()
        .map(|replicate| run_seed(config, replicate, with_traces))
        .collect();
    let mut records = Vec::new();
    let mut traces = Vec::new();
    for (r, t) in results? {
        records.extend(r);
        traces.extend(t);
    }
    records.sort_by_key(sort_key);
    traces.sort_by_key(|t| (t.seed, t.policy.clone(), t.method.clone()));
    Ok((records, traces))
}

/// Write records as CSV: a header row plus one row per record, stable column
/// order `seed, policy, method, regret_n8, regret_n4, regret_n2, regret_n,
/// frob_error, op_error, sigma_r_w, subspace_gap, estimated_rank,
/// min_eig_final, converged`.
pub fn emit_csv(records: &[RunRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for record in records {
        writer.serialize(record).map_err(|e| csv_error(path, e))?;
    }
    // Header-only output for an empty record list.
    if records.is_empty() {
        writer
            .write_record([
                "seed",
                "policy",
                "method",
                "regret_n8",
                "regret_n4",
                "regret_n2",
                "regret_n",
                "frob_error",
                "op_error",
                "sigma_r_w",
                "subspace_gap",
                "estimated_rank",
                "min_eig_final",
                "converged",
            ])
            .map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Parse a records CSV produced by [`emit_csv`].
pub fn read_records_csv(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row.map_err(|e| csv_error(path, e))?);
    }
    Ok(out)
}

/// Per-round trace rows for `--dump-traces`.
pub fn emit_traces_csv(traces: &[RunTrace], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    writer
        .write_record([
            "seed",
            "policy",
            "method",
            "round",
            "instantaneous",
            "cumulative",
            "min_eig",
            "estimation_error",
        ])
        .map_err(|e| csv_error(path, e))?;
    for t in traces {
        for i in 0..t.regret.len() {
            writer
                .write_record([
                    t.seed.to_string(),
                    t.policy.clone(),
                    t.method.clone(),
                    (i + 1).to_string(),
                    t.regret.instantaneous[i].to_string(),
                    t.regret.cumulative[i].to_string(),
                    t.diagnostics.min_eig_projected_trace[i].to_string(),
                    t.diagnostics.estimation_error_trace[i].to_string(),
                ])
                .map_err(|e| csv_error(path, e))?;
        }
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Expand checkpoint regrets into long-format observations for scaling
/// analysis. Meta rows are labelled `meta:<method>` so different extraction
/// methods summarize separately.
pub fn records_to_observations(
    records: &[RunRecord],
    d: usize,
    n_test: usize,
) -> Vec<RegretObservation> {
    let cp = checkpoints(n_test);
    let horizons: BTreeSet<usize> = cp.iter().copied().collect();
    let mut out = Vec::new();
    for record in records {
        let policy = if record.policy == "meta" {
            format!("meta:{}", record.method)
        } else {
            record.policy.clone()
        };
        for &n in &horizons {
            let regret = match cp.iter().position(|&c| c == n).unwrap() {
                0 => record.regret_n8,
                1 => record.regret_n4,
                2 => record.regret_n2,
                _ => record.regret_n,
            };
            out.push(RegretObservation {
                policy: policy.clone(),
                d,
                n,
                seed: record.seed,
                regret,
            });
        }
    }
    out
}

/// Write long-format observations (`policy,d,n,seed,regret`).
pub fn write_observations_csv(
    observations: &[RegretObservation],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for obs in observations {
        writer.serialize(obs).map_err(|e| csv_error(path, e))?;
    }
    if observations.is_empty() {
        writer
            .write_record(["policy", "d", "n", "seed", "regret"])
            .map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Parse long-format observations.
pub fn read_observations_csv(path: impl AsRef<Path>) -> Result<Vec<RegretObservation>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row.map_err(|e| csv_error(path, e))?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct ScalingRow<'a> {
    policy: &'a str,
    d: usize,
    n: usize,
    mean_regret: f64,
    std_regret: f64,
    count: usize,
    growth_exponent: f64,
    d_ratio: f64,
}

/// Write a scaling summary as CSV, one row per `(policy, d, n)` cell with
/// the per-policy slope and dimension ratio repeated on each row.
pub fn write_scaling_csv(summary: &[PolicyScaling], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for policy in summary {
        for cell in &policy.cells {
            writer
                .serialize(ScalingRow {
                    policy: &policy.policy,
                    d: cell.d,
                    n: cell.n,
                    mean_regret: cell.mean,
                    std_regret: cell.std,
                    count: cell.count,
                    growth_exponent: policy.growth_exponent,
                    d_ratio: policy.d_ratio,
                })
                .map_err(|e| csv_error(path, e))?;
        }
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::config(format!("{}: {other:?}", path.display())),
    }
}
