//! Haar-random starts, constrained local optimization over `U(n)`, and
//! multi-start campaign orchestration.
//!
//! The primary parameterization treats the `2n²` real and imaginary parts of
//! the mode-coupling matrix as free variables and enforces unitarity through
//! `n²` scalar equality constraints: `n` row normalizations plus the real and
//! imaginary parts of the `n(n−1)/2` distinct row inner products. A sequential
//! quadratic programming loop (damped-BFGS Lagrangian Hessian, LU-factorized
//! KKT steps, ℓ1 merit line search with a second-order correction) drives the
//! figure of merit down; intermediate iterates may leave the manifold, the
//! returned point may not. An unconstrained comparison path parameterizes
//! `U = U₀·exp(iH)` by the `n²` real degrees of freedom of the Hermitian `H`
//! and runs BFGS on finite-difference gradients.
//!
//! Campaigns launch many independent local searches from fresh Haar starts.
//! Each run derives its own seed from the master seed and run index, so any
//! single run can be reproduced in isolation and results do not depend on the
//! number of worker threads.

use std::sync::Mutex;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compiler::{compile, EvaluationPlan, PlanEvaluator};
use crate::evolve::UnitaryMatrix;
use crate::fock::AncillaSpec;
use crate::objective::{figure_of_merit, fom_with_grad, pattern, success_probability, DEFAULT_EPS_ZERO};
use crate::{Error, Result};

/// Width of the histogram bins collecting local-optimum success
/// probabilities.
pub const HISTOGRAM_BIN_WIDTH: f64 = 1e-6;

/// Which coordinate system the local optimizer works in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    /// `2n²` reals constrained to the unitary manifold (analytic gradients).
    Constrained,
    /// Unconstrained `U₀·exp(iH)` chart, finite-difference gradients.
    Exponential,
}

/// Knobs for a single local optimization run.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Hard cap on SQP (or BFGS) iterations.
    pub max_iterations: usize,
    /// Convergence tolerance on the change of the figure of merit.
    pub f_tolerance: f64,
    /// Feasibility tolerance on the orthonormality residual (`‖c‖_∞`), also
    /// used to validate the returned unitary.
    pub constraint_tolerance: f64,
    /// Threshold below which an event probability counts as unpopulated.
    pub eps_zero: f64,
    /// Default number of restarts a campaign performs when the caller does
    /// not say otherwise.
    pub restarts: usize,
    /// Master seed; recorded (derived per run) in every [`RunRecord`].
    pub seed: u64,
    /// Coordinate system for the local search.
    pub parameterization: Parameterization,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iterations: 500,
            f_tolerance: 1e-10,
            constraint_tolerance: 1e-9,
            eps_zero: DEFAULT_EPS_ZERO,
            restarts: 1,
            seed: 0,
            parameterization: Parameterization::Constrained,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.f_tolerance) || !positive(self.constraint_tolerance) {
            return Err(Error::InvalidConfig(
                "convergence tolerances must be positive".into(),
            ));
        }
        if !positive(self.eps_zero) {
            return Err(Error::InvalidConfig("eps_zero must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidConfig("restarts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of one local optimization run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    /// Position of the run inside its campaign (0 for standalone runs).
    pub run_index: usize,
    /// The seed that produced the starting point.
    pub seed: u64,
    /// Content hash of the starting unitary.
    pub start_hash: String,
    /// Final point, projected onto the unitary manifold and validated.
    pub final_unitary: UnitaryMatrix,
    /// Figure of merit recomputed at [`RunRecord::final_unitary`].
    pub final_f: f64,
    /// Success probability recomputed at the final unitary (never carried
    /// over from optimizer state).
    pub success_probability: f64,
    /// Per-Bell-state discriminating mass at the final unitary.
    pub pattern: [f64; 4],
    /// Iterations executed by the local search.
    pub iterations: usize,
    /// Whether the run met both tolerances before hitting the iteration cap.
    pub converged: bool,
    /// Wall-clock duration of the run in seconds.
    pub wall_time_secs: f64,
}

/// One bin of the campaign histogram: success probabilities within
/// [`HISTOGRAM_BIN_WIDTH`] of `value` (converged runs only).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HistogramBin {
    pub value: f64,
    pub count: usize,
}

/// Reference to the best run of a campaign.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BestRun {
    pub run_index: usize,
    pub seed: u64,
    pub success_probability: f64,
    pub final_f: f64,
    pub converged: bool,
}

/// Aggregate of a multi-start campaign.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub ancilla: AncillaSpec,
    pub n: usize,
    pub runs: usize,
    pub converged_runs: usize,
    /// Local-optimum success probabilities of converged runs, binned at
    /// [`HISTOGRAM_BIN_WIDTH`], ascending.
    pub histogram: Vec<HistogramBin>,
    /// The run with the highest success probability (converged or not; ties
    /// go to the lowest run index).
    pub best: BestRun,
}

/// Draws an `n×n` unitary from the Haar measure: QR-factorize a matrix of
/// independent standard complex Gaussians, then absorb the phases of `R`'s
/// diagonal into `Q`'s columns so the distribution is exactly invariant.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> UnitaryMatrix {
    assert!(n >= 1, "a unitary needs at least one mode");
    let ginibre = DMatrix::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im)
    });
    let qr = ginibre.qr();
    let r = qr.r();
    let mut mat = qr.q();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() == 0.0 { Complex64::ONE } else { d / d.norm() };
        for i in 0..n {
            mat[(i, j)] *= phase;
        }
    }
    let u = UnitaryMatrix::from_matrix(mat);
    u.validate(crate::evolve::UNITARITY_TOLERANCE)
        .expect("QR of a Gaussian matrix yields a unitary factor");
    u
}

/// Per-run seed: the `index`-th output of a splitmix stream keyed by the
/// master seed, so any campaign run is reproducible on its own.
pub fn derived_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add((index + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs one local optimization from `u0` and reports the polished result.
///
/// The returned point is the polar projection of the last iterate, validated
/// against the configured constraint tolerance; figure of merit, success
/// probability, and pattern are all recomputed there. Hitting the iteration
/// cap yields `converged = false` rather than an error.
pub fn local_optimize(
    plan: &EvaluationPlan,
    u0: &UnitaryMatrix,
    cfg: &OptimizerConfig,
) -> Result<RunRecord> {
    cfg.validate()?;
    if u0.n() != plan.n() {
        return Err(Error::DimensionMismatch(format!(
            "start unitary has {} modes, plan expects {}",
            u0.n(),
            plan.n()
        )));
    }
    let clock = Instant::now();
    let mut evaluator = PlanEvaluator::new(plan);
    let (raw, iterations, converged) = match cfg.parameterization {
        Parameterization::Constrained => optimize_constrained(&mut evaluator, u0, cfg)?,
        Parameterization::Exponential => optimize_exponential(&mut evaluator, u0, cfg)?,
    };

    let final_unitary = raw.project_unitary();
    final_unitary.validate(cfg.constraint_tolerance)?;
    let table = evaluator
        .probabilities(&final_unitary)?
        .with_eps_zero(cfg.eps_zero);
    Ok(RunRecord {
        run_index: 0,
        seed: cfg.seed,
        start_hash: u0.content_hash(),
        final_f: figure_of_merit(&table),
        success_probability: success_probability(&table),
        pattern: pattern(&table).values(),
        final_unitary,
        iterations,
        converged,
        wall_time_secs: clock.elapsed().as_secs_f64(),
    })
}

/// Runs `runs` independent local optimizations from fresh Haar starts.
///
/// Seeds are derived per run from `cfg.seed`, so the per-run results — and
/// therefore the summary — are identical for any `parallelism`
/// (`0` = one worker per core).
pub fn campaign(
    spec: &AncillaSpec,
    n: usize,
    runs: usize,
    cfg: &OptimizerConfig,
    parallelism: usize,
) -> Result<CampaignSummary> {
    campaign_with_sink(spec, n, runs, cfg, parallelism, |_| Ok(())).map(|(summary, _)| summary)
}

/// [`campaign`], additionally handing every finished [`RunRecord`] to `sink`
/// (in completion order, from worker threads, serialized by a lock) and
/// returning the records alongside the summary. The sink lets callers stream
/// records to durable storage so an interrupted campaign loses at most the
/// in-flight runs.
pub fn campaign_with_sink<F>(
    spec: &AncillaSpec,
    n: usize,
    runs: usize,
    cfg: &OptimizerConfig,
    parallelism: usize,
    sink: F,
) -> Result<(CampaignSummary, Vec<RunRecord>)>
where
    F: FnMut(&RunRecord) -> Result<()> + Send,
{
    cfg.validate()?;
    if runs == 0 {
        return Err(Error::InvalidConfig("a campaign needs at least one run".into()));
    }
    let plan = compile(spec, n)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
    let sink = Mutex::new(sink);
    let records: Vec<RunRecord> = pool.install(|| {
        (0..runs)
            .into_par_iter()
            .map(|index| {
                let record = campaign_run(&plan, index, cfg)?;
                {
                    let mut deliver = sink.lock().expect("record sink poisoned");
                    (deliver)(&record)?;
                }
                Ok(record)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok((summarize(spec, n, &records), records))
}

fn campaign_run(plan: &EvaluationPlan, index: usize, cfg: &OptimizerConfig) -> Result<RunRecord> {
    let seed = derived_seed(cfg.seed, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u0 = haar_unitary(plan.n(), &mut rng);
    let mut run_cfg = cfg.clone();
    run_cfg.seed = seed;
    let mut record = local_optimize(plan, &u0, &run_cfg)?;
    record.run_index = index;
    Ok(record)
}

fn summarize(spec: &AncillaSpec, n: usize, records: &[RunRecord]) -> CampaignSummary {
    let mut best = 0usize;
    for (i, record) in records.iter().enumerate() {
        if record.success_probability > records[best].success_probability {
            best = i;
        }
    }
    let mut bins = std::collections::BTreeMap::<i64, usize>::new();
    for record in records.iter().filter(|r| r.converged) {
        let key = (record.success_probability / HISTOGRAM_BIN_WIDTH).round() as i64;
        *bins.entry(key).or_insert(0) += 1;
    }
    let best_record = &records[best];
    CampaignSummary {
        ancilla: spec.clone(),
        n,
        runs: records.len(),
        converged_runs: records.iter().filter(|r| r.converged).count(),
        histogram: bins
            .into_iter()
            .map(|(key, count)| HistogramBin { value: key as f64 * HISTOGRAM_BIN_WIDTH, count })
            .collect(),
        best: BestRun {
            run_index: best_record.run_index,
            seed: best_record.seed,
            success_probability: best_record.success_probability,
            final_f: best_record.final_f,
            converged: best_record.converged,
        },
    }
}

// ---------------------------------------------------------------------------
// Constrained SQP path.
// ---------------------------------------------------------------------------

/// Variable layout shared with the analytic gradient: `x[2(i·n+j)]` is
/// `Re u_ij`, the next slot `Im u_ij`.
fn vars_from_unitary(u: &UnitaryMatrix) -> DVector<f64> {
    let n = u.n();
    let mut x = DVector::zeros(2 * n * n);
    for i in 0..n {
        for j in 0..n {
            let z = u.get(i, j);
            x[2 * (i * n + j)] = z.re;
            x[2 * (i * n + j) + 1] = z.im;
        }
    }
    x
}

fn unitary_from_vars(x: &DVector<f64>, n: usize) -> UnitaryMatrix {
    UnitaryMatrix::from_matrix(DMatrix::from_fn(n, n, |i, j| {
        Complex64::new(x[2 * (i * n + j)], x[2 * (i * n + j) + 1])
    }))
}

/// Orthonormality residual `c(U)`: `n` row norms followed by the real and
/// imaginary parts of each distinct row inner product `⟨row_i, row_j⟩`,
/// `i < j`, in lexicographic order — `n²` scalars, all zero exactly on the
/// unitary manifold.
fn orthonormality_residual(u: &UnitaryMatrix) -> DVector<f64> {
    let n = u.n();
    let gram = u.as_matrix() * u.as_matrix().adjoint();
    let mut c = DVector::zeros(n * n);
    for i in 0..n {
        c[i] = gram[(i, i)].re - 1.0;
    }
    let mut row = n;
    for i in 0..n {
        for j in (i + 1)..n {
            c[row] = gram[(i, j)].re;
            c[row + 1] = gram[(i, j)].im;
            row += 2;
        }
    }
    c
}

/// Analytic Jacobian of [`orthonormality_residual`] with respect to the
/// interleaved re/im variables.
fn orthonormality_jacobian(u: &UnitaryMatrix) -> DMatrix<f64> {
    let n = u.n();
    let var = |i: usize, k: usize| 2 * (i * n + k);
    let mut jac = DMatrix::zeros(n * n, 2 * n * n);
    for i in 0..n {
        for k in 0..n {
            let z = u.get(i, k);
            jac[(i, var(i, k))] = 2.0 * z.re;
            jac[(i, var(i, k) + 1)] = 2.0 * z.im;
        }
    }
    let mut row = n;
    for i in 0..n {
        for j in (i + 1)..n {
            for k in 0..n {
                let zi = u.get(i, k);
                let zj = u.get(j, k);
                // Re⟨row_i,row_j⟩ = Σ_k (a_ik a_jk + b_ik b_jk)
                jac[(row, var(i, k))] = zj.re;
                jac[(row, var(i, k) + 1)] = zj.im;
                jac[(row, var(j, k))] = zi.re;
                jac[(row, var(j, k) + 1)] = zi.im;
                // Im⟨row_i,row_j⟩ = Σ_k (b_ik a_jk − a_ik b_jk)
                jac[(row + 1, var(i, k))] = -zj.im;
                jac[(row + 1, var(i, k) + 1)] = zj.re;
                jac[(row + 1, var(j, k))] = zi.im;
                jac[(row + 1, var(j, k) + 1)] = -zi.re;
            }
            row += 2;
        }
    }
    jac
}

/// Powell-damped BFGS update of the Lagrangian Hessian approximation; keeps
/// `B` positive definite even when the raw curvature `sᵀy` is negative.
fn damped_bfgs_update(b: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>) {
    let bs = &*b * s;
    let sbs = s.dot(&bs);
    if sbs <= 1e-16 {
        return;
    }
    let sy = s.dot(y);
    let r = if sy < 0.2 * sbs {
        let theta = 0.8 * sbs / (sbs - sy);
        y * theta + &bs * (1.0 - theta)
    } else {
        y.clone()
    };
    let sr = s.dot(&r);
    if sr <= 1e-16 {
        return;
    }
    *b += &r * r.transpose() / sr;
    *b -= &bs * bs.transpose() / sbs;
}

struct SqpEvaluation {
    f: f64,
    grad: DVector<f64>,
    c: DVector<f64>,
    jac: DMatrix<f64>,
}

fn sqp_evaluate(
    evaluator: &mut PlanEvaluator<'_>,
    x: &DVector<f64>,
    n: usize,
    eps_zero: f64,
) -> Result<SqpEvaluation> {
    let u = unitary_from_vars(x, n);
    let (f, grad, _) = fom_with_grad(evaluator, &u, eps_zero)?;
    Ok(SqpEvaluation {
        f,
        grad: DVector::from_vec(grad),
        c: orthonormality_residual(&u),
        jac: orthonormality_jacobian(&u),
    })
}

/// Figure of merit and constraint 1-norm at a trial point (no gradients).
fn merit_parts(
    evaluator: &mut PlanEvaluator<'_>,
    x: &DVector<f64>,
    n: usize,
) -> Result<(f64, f64)> {
    let u = unitary_from_vars(x, n);
    let table = evaluator.probabilities(&u)?;
    Ok((figure_of_merit(&table), orthonormality_residual(&u).abs().sum()))
}

/// Solves the regularized KKT system; retries with an inflated diagonal when
/// the factorization is singular. Returns the primal step and the new
/// multiplier estimate.
fn solve_kkt(
    b: &DMatrix<f64>,
    jac: &DMatrix<f64>,
    grad: &DVector<f64>,
    c: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let nv = b.nrows();
    let m = jac.nrows();
    for tau in [0.0, 1e-8, 1e-4, 1.0] {
        let mut kkt = DMatrix::zeros(nv + m, nv + m);
        kkt.view_mut((0, 0), (nv, nv)).copy_from(&(b + DMatrix::identity(nv, nv) * tau));
        kkt.view_mut((nv, 0), (m, nv)).copy_from(jac);
        kkt.view_mut((0, nv), (nv, m)).copy_from(&jac.transpose());
        for d in 0..m {
            kkt[(nv + d, nv + d)] = -1e-11;
        }
        let mut rhs = DVector::zeros(nv + m);
        rhs.rows_mut(0, nv).copy_from(&(-grad));
        rhs.rows_mut(nv, m).copy_from(&(-c));
        if let Some(sol) = kkt.full_piv_lu().solve(&rhs) {
            let p = sol.rows(0, nv).into_owned();
            let lambda = sol.rows(nv, m).into_owned();
            // An ill-conditioned factorization can "solve" to an absurd
            // step; inflate the damping and try again instead.
            let sane = p.iter().all(|v| v.is_finite())
                && lambda.iter().all(|v| v.is_finite())
                && p.abs().max() <= 1e6;
            if sane {
                return Some((p, lambda));
            }
        }
    }
    None
}

/// Minimum-norm restoration step `d` with `J·d = −c_trial` (used as a
/// second-order correction when a unit step increases the violation).
fn restoration_step(jac: &DMatrix<f64>, c_trial: &DVector<f64>) -> Option<DVector<f64>> {
    let jjt = jac * jac.transpose();
    let rhs = -c_trial;
    let y = nalgebra::linalg::Cholesky::new(jjt.clone())
        .map(|ch| ch.solve(&rhs))
        .or_else(|| jjt.full_piv_lu().solve(&rhs))?;
    Some(jac.transpose() * y)
}

fn optimize_constrained(
    evaluator: &mut PlanEvaluator<'_>,
    u0: &UnitaryMatrix,
    cfg: &OptimizerConfig,
) -> Result<(UnitaryMatrix, usize, bool)> {
    let n = u0.n();
    let nv = 2 * n * n;
    let mut x = vars_from_unitary(u0);
    let mut b = DMatrix::<f64>::identity(nv, nv);
    let mut mu = 1.0f64;
    let mut current = sqp_evaluate(evaluator, &x, n, cfg.eps_zero)?;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iterations {
        iterations += 1;
        let feasible = current.c.abs().max() <= cfg.constraint_tolerance;
        let Some((p, lambda)) = solve_kkt(&b, &current.jac, &current.grad, &current.c) else {
            converged = feasible;
            break;
        };
        if p.abs().max() < 1e-14 && feasible {
            converged = true;
            break;
        }
        mu = mu.max(lambda.abs().max() * 1.1 + 0.1);
        let viol = current.c.abs().sum();
        let descent = current.grad.dot(&p) - mu * viol;
        if descent >= 0.0 {
            // No merit descent available from this model; a feasible point
            // that cannot improve is a (possibly non-smooth) local optimum.
            converged = feasible;
            break;
        }
        let merit0 = current.f + mu * viol;

        let mut accepted: Option<(DVector<f64>, f64)> = None;
        let mut alpha = 1.0f64;
        while alpha >= 1e-12 {
            let trial = &x + &p * alpha;
            if trial.abs().max() > 1e3 {
                alpha *= 0.5;
                continue;
            }
            let (f_t, viol_t) = merit_parts(evaluator, &trial, n)?;
            if !f_t.is_finite() || !viol_t.is_finite() {
                alpha *= 0.5;
                continue;
            }
            if f_t + mu * viol_t <= merit0 + 1e-4 * alpha * descent {
                accepted = Some((trial, f_t));
                break;
            }
            if alpha == 1.0 && viol_t > viol {
                // Second-order correction: bend the full step back toward
                // the constraint manifold before conceding to shorter steps.
                let u_trial = unitary_from_vars(&trial, n);
                if let Some(d) = restoration_step(&current.jac, &orthonormality_residual(&u_trial))
                {
                    let bent = &trial + &d;
                    let (f_b, viol_b) = merit_parts(evaluator, &bent, n)?;
                    if f_b.is_finite()
                        && viol_b.is_finite()
                        && f_b + mu * viol_b <= merit0 + 1e-4 * descent
                    {
                        accepted = Some((bent, f_b));
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }

        let Some((x_new, f_new)) = accepted else {
            converged = feasible;
            break;
        };
        let next = sqp_evaluate(evaluator, &x_new, n, cfg.eps_zero)?;
        let s = &x_new - &x;
        let y = (&next.grad + next.jac.transpose() * &lambda)
            - (&current.grad + current.jac.transpose() * &lambda);
        damped_bfgs_update(&mut b, &s, &y);
        let f_drop = (current.f - f_new).abs();
        x = x_new;
        current = next;
        if current.c.abs().max() <= cfg.constraint_tolerance && f_drop <= cfg.f_tolerance {
            converged = true;
            break;
        }
    }
    Ok((unitary_from_vars(&x, n), iterations, converged))
}

// ---------------------------------------------------------------------------
// Unconstrained exponential-map path.
// ---------------------------------------------------------------------------

/// Hermitian matrix from its `n²` real parameters: `n` diagonal entries, then
/// interleaved re/im for each `i < j`.
fn hermitian_from_params(theta: &DVector<f64>, n: usize) -> DMatrix<Complex64> {
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = Complex64::new(theta[i], 0.0);
    }
    let mut idx = n;
    for i in 0..n {
        for j in (i + 1)..n {
            let z = Complex64::new(theta[idx], theta[idx + 1]);
            h[(i, j)] = z;
            h[(j, i)] = z.conj();
            idx += 2;
        }
    }
    h
}

/// `U₀ · exp(iH(θ))` through the eigendecomposition of the Hermitian `H`.
fn chart_point(u0: &UnitaryMatrix, theta: &DVector<f64>, n: usize) -> UnitaryMatrix {
    let h = hermitian_from_params(theta, n);
    let eigen = nalgebra::SymmetricEigen::new(h);
    let phases = DVector::from_iterator(
        n,
        eigen.eigenvalues.iter().map(|l| Complex64::new(l.cos(), l.sin())),
    );
    let exp_ih = &eigen.eigenvectors
        * DMatrix::from_diagonal(&phases)
        * eigen.eigenvectors.adjoint();
    UnitaryMatrix::from_matrix(u0.as_matrix() * exp_ih)
}

fn optimize_exponential(
    evaluator: &mut PlanEvaluator<'_>,
    u0: &UnitaryMatrix,
    cfg: &OptimizerConfig,
) -> Result<(UnitaryMatrix, usize, bool)> {
    let n = u0.n();
    let dim = n * n;
    let mut theta = DVector::<f64>::zeros(dim);
    let evaluate = |theta: &DVector<f64>, ev: &mut PlanEvaluator<'_>| -> Result<f64> {
        let table = ev.probabilities(&chart_point(u0, theta, n))?;
        Ok(figure_of_merit(&table))
    };
    let fd_gradient = |theta: &DVector<f64>, ev: &mut PlanEvaluator<'_>| -> Result<DVector<f64>> {
        let h = 1e-6;
        let mut g = DVector::zeros(dim);
        let mut probe = theta.clone();
        for k in 0..dim {
            probe[k] = theta[k] + h;
            let up = {
                let table = ev.probabilities(&chart_point(u0, &probe, n))?;
                figure_of_merit(&table)
            };
            probe[k] = theta[k] - h;
            let down = {
                let table = ev.probabilities(&chart_point(u0, &probe, n))?;
                figure_of_merit(&table)
            };
            probe[k] = theta[k];
            g[k] = (up - down) / (2.0 * h);
        }
        Ok(g)
    };

    let mut f = evaluate(&theta, evaluator)?;
    let mut grad = fd_gradient(&theta, evaluator)?;
    let mut hinv = DMatrix::<f64>::identity(dim, dim);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let mut p = -(&hinv * &grad);
        if grad.dot(&p) >= 0.0 {
            hinv = DMatrix::identity(dim, dim);
            p = -grad.clone();
        }
        let descent = grad.dot(&p);
        if descent >= -1e-15 {
            converged = true;
            break;
        }
        let mut alpha = 1.0f64;
        let mut accepted = None;
        while alpha >= 1e-12 {
            let trial = &theta + &p * alpha;
            let f_t = evaluate(&trial, evaluator)?;
            if f_t <= f + 1e-4 * alpha * descent {
                accepted = Some((trial, f_t));
                break;
            }
            alpha *= 0.5;
        }
        let Some((theta_new, f_new)) = accepted else {
            converged = grad.abs().max() <= 1e-6;
            break;
        };
        let grad_new = fd_gradient(&theta_new, evaluator)?;
        let s = &theta_new - &theta;
        let y = &grad_new - &grad;
        let sy = s.dot(&y);
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            hinv = hinv.clone() - (&hy * s.transpose() + &s * hy.transpose()) * rho
                + &s * s.transpose() * (rho * rho * yhy + rho);
        }
        let f_drop = (f - f_new).abs();
        theta = theta_new;
        f = f_new;
        grad = grad_new;
        if f_drop <= cfg.f_tolerance {
            converged = true;
            break;
        }
    }
    Ok((chart_point(u0, &theta, n), iterations, converged))
}
