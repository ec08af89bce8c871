//! Asymptotic covariance and rate diagnostics.
//!
//! With `γ_n = 1/n`, i.i.d. directions and `ρ = λ_min(H) > 1/2`, the scaled
//! error `√n (x_n - x*)` is asymptotically `N(0, Σ)` where `Σ` solves
//!
//! ```text
//! (H - I/2)^T Σ + Σ (H - I/2) = Γ,    Γ = E[V V^T Q V V^T],
//! Q = (1/N) Σ_k ∇f_k(x*) ∇f_k(x*)^T.
//! ```
//!
//! This module computes those matrices, replicates runs to compare the
//! empirical covariance with `Σ`, and fits log-log slopes of
//! `E‖x_n - x*‖^{2p}` against `n`.

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::directions::{DirectionError, DirectionKind, DirectionSampler, Draw};
use crate::numkit::{
    default_horizon, quadrature_sigma_oracle, solve_lyapunov_transposed, sym_eig, DenseMatrix,
    NumError, DEFAULT_QUADRATURE_STEPS,
};
use crate::objectives::{FiniteSumObjective, ObjectiveError, ReferenceOptimum};
use crate::optimizer::{
    run_method, step_condition_warnings, InitPolicy, Method, NuPolicy, OptimizerError, RunOptions,
    SnapshotPolicy, StepSchedule,
};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum AsymptoticsError {
    #[error("the non-uniform closed form needs the coordinate probabilities")]
    MissingProbs,
    #[error("invalid probabilities: {0}")]
    InvalidProbs(String),
    #[error("smallest Hessian eigenvalue {rho} does not exceed 1/2")]
    RhoTooSmall { rho: f64 },
    #[error("the adaptive non-uniform policy does not draw i.i.d. directions")]
    AdaptiveSamplerNotIid,
    #[error("invalid schedule for this analysis: {0}")]
    InvalidSchedule(String),
    #[error("need at least {needed} replicates, got {got}")]
    TooFewReplicates { needed: usize, got: usize },
    #[error("invalid iteration grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Direction(#[from] DirectionError),
}

/// Closed-form `Γ` per direction law:
///
/// * uniform: `d · diag(Q)`
/// * non-uniform: `diag(Q_11/p_1, ..., Q_dd/p_d)`
/// * Gaussian: `2Q + tr(Q) I`
/// * spherical: `d/(d+2) · (2Q + tr(Q) I)`
pub fn gamma_closed_form<T: Scalar>(
    kind: DirectionKind,
    q: &DenseMatrix<T>,
    probs: Option<&[T]>,
) -> Result<DenseMatrix<T>, AsymptoticsError> {
    q.check_symmetric(T::tolerance(1e-12))?;
    let d = q.rows();
    let df = T::lit(d as f64);
    let diag = q.diagonal();
    Ok(match kind {
        DirectionKind::Uniform => {
            DenseMatrix::from_diag(&diag.iter().map(|&v| df * v).collect::<Vec<_>>())
        }
        DirectionKind::NonUniform => {
            let p = probs.ok_or(AsymptoticsError::MissingProbs)?;
            if p.len() != d || p.iter().any(|&v| !(v > T::zero())) {
                return Err(AsymptoticsError::InvalidProbs(format!(
                    "need {d} strictly positive probabilities"
                )));
            }
            DenseMatrix::from_diag(
                &diag
                    .iter()
                    .zip(p)
                    .map(|(&v, &pj)| v / pj)
                    .collect::<Vec<_>>(),
            )
        }
        DirectionKind::Gaussian => gaussian_gamma(q),
        DirectionKind::Spherical => gaussian_gamma(q).scale(df / (df + T::lit(2.0))),
    })
}

fn gaussian_gamma<T: Scalar>(q: &DenseMatrix<T>) -> DenseMatrix<T> {
    q.scale(T::lit(2.0))
        .add(&DenseMatrix::identity(q.rows()).scale(q.trace()))
}

/// `Γ` for any method; plain SGD has `D(V) = I` and hence `Γ = Q`.
pub fn gamma_for_method<T: Scalar>(
    method: Method,
    q: &DenseMatrix<T>,
    probs: Option<&[T]>,
) -> Result<DenseMatrix<T>, AsymptoticsError> {
    match method {
        Method::Sgd => Ok(q.clone()),
        Method::Scors(kind) => gamma_closed_form(kind, q, probs),
    }
}

/// Monte Carlo estimate of `E[(V V^T) Q (V V^T)]`, using
/// `(V V^T) Q (V V^T) = ⟨V, QV⟩ V V^T`. The result is symmetrized.
pub fn gamma_monte_carlo<T: Scalar, R: Rng + ?Sized>(
    sampler: &DirectionSampler<T>,
    q: &DenseMatrix<T>,
    draws: usize,
    rng: &mut R,
) -> Result<DenseMatrix<T>, AsymptoticsError> {
    let d = sampler.dim();
    if q.rows() != d || q.cols() != d {
        return Err(NumError::DimensionMismatch(format!(
            "Q is {}x{}, sampler dimension is {d}",
            q.rows(),
            q.cols()
        ))
        .into());
    }
    let mut acc = DenseMatrix::zeros(d, d);
    let mut v = vec![T::zero(); d];
    for _ in 0..draws {
        match sampler.draw(rng, &mut v)? {
            Draw::Canonical { index, scale } => {
                let s2 = scale * scale;
                acc[(index, index)] += s2 * s2 * q[(index, index)];
            }
            Draw::Dense => {
                let qv = q.mul_vec(&v);
                let s = crate::scalar::dot(&v, &qv);
                acc.add_scaled_outer(s, &v);
            }
        }
    }
    Ok(acc
        .scale(T::one() / T::lit(draws.max(1) as f64))
        .symmetrize())
}

/// Smallest eigenvalue `ρ` of `H` and whether `ρ > 1/2`.
pub fn rho_check<T: Scalar>(h: &DenseMatrix<T>) -> Result<(T, bool), AsymptoticsError> {
    let rho = sym_eig(h)?.min_eigenvalue();
    Ok((rho, rho > T::lit(0.5)))
}

/// `Σ` solving `(H - I/2)^T Σ + Σ (H - I/2) = Γ`.
pub fn sigma_from_lyapunov<T: Scalar>(
    h: &DenseMatrix<T>,
    gamma: &DenseMatrix<T>,
) -> Result<DenseMatrix<T>, AsymptoticsError> {
    let (rho, _) = rho_check(h)?;
    if rho <= T::lit(0.5) + T::tolerance(1e-12) {
        return Err(AsymptoticsError::RhoTooSmall { rho: rho.as_f64() });
    }
    let a = shifted_hessian(h);
    Ok(solve_lyapunov_transposed(&a, gamma)?)
}

fn shifted_hessian<T: Scalar>(h: &DenseMatrix<T>) -> DenseMatrix<T> {
    h.sub(&DenseMatrix::identity(h.rows()).scale(T::lit(0.5)))
}

/// `‖A^T Σ + Σ A - Γ‖_F / ‖Γ‖_F` with `A = H - I/2`.
pub fn lyapunov_residual<T: Scalar>(
    h: &DenseMatrix<T>,
    sigma: &DenseMatrix<T>,
    gamma: &DenseMatrix<T>,
) -> T {
    let a = shifted_hessian(h);
    a.transpose()
        .matmul(sigma)
        .add(&sigma.matmul(&a))
        .rel_frobenius_error(gamma)
}

/// Everything the CLT predicts for one objective and direction law.
#[derive(Clone, Debug)]
pub struct AsymptoticsReport<T> {
    pub h: DenseMatrix<T>,
    pub rho: T,
    pub q: DenseMatrix<T>,
    pub gamma_closed: DenseMatrix<T>,
    pub gamma_mc: DenseMatrix<T>,
    pub mc_draws: usize,
    pub gamma_rel_error: T,
    /// `None` when `ρ ≤ 1/2`.
    pub sigma: Option<DenseMatrix<T>>,
    pub lyapunov_residual: Option<T>,
    /// Relative Frobenius gap between the Lyapunov and quadrature routes.
    pub quadrature_gap: Option<T>,
}

pub fn asymptotics_report<T: Scalar, R: Rng + ?Sized>(
    obj: &FiniteSumObjective<T>,
    reference: &ReferenceOptimum<T>,
    sampler: &DirectionSampler<T>,
    mc_draws: usize,
    rng: &mut R,
) -> Result<AsymptoticsReport<T>, AsymptoticsError> {
    let h = obj.hessian_at(&reference.x_star)?;
    let (rho, admissible) = rho_check(&h)?;
    let q = obj.q_matrix(reference)?;
    let gamma_closed = gamma_closed_form(sampler.kind(), &q, sampler.probs())?;
    let gamma_mc = gamma_monte_carlo(sampler, &q, mc_draws, rng)?;
    let gamma_rel_error = gamma_mc.rel_frobenius_error(&gamma_closed);
    let (sigma, lyapunov_residual, quadrature_gap) = if admissible {
        let sigma = sigma_from_lyapunov(&h, &gamma_closed)?;
        let resid = lyapunov_residual(&h, &sigma, &gamma_closed);
        let a = shifted_hessian(&h);
        let oracle = quadrature_sigma_oracle(
            &a,
            &gamma_closed,
            default_horizon(&a)?,
            DEFAULT_QUADRATURE_STEPS,
        )?;
        let gap = oracle.rel_frobenius_error(&sigma);
        (Some(sigma), Some(resid), Some(gap))
    } else {
        (None, None, None)
    };
    Ok(AsymptoticsReport {
        h,
        rho,
        q,
        gamma_closed,
        gamma_mc,
        mc_draws,
        gamma_rel_error,
        sigma,
        lyapunov_residual,
        quadrature_gap,
    })
}

/// Replicated terminal errors against the predicted covariance.
#[derive(Clone, Debug)]
pub struct CltComparison<T> {
    pub n: u64,
    pub replicates: usize,
    /// `√n (x_n - x*)` per replicate.
    pub terminal: Vec<Vec<T>>,
    pub sample_cov: DenseMatrix<T>,
    pub predicted_sigma: DenseMatrix<T>,
    pub rel_frobenius_error: T,
    /// Standard deviation of `‖√n (x_n - x*)‖` across replicates.
    pub norm_std: T,
}

#[derive(Clone, Debug)]
pub struct ReplicateOptions<T> {
    pub replicates: usize,
    pub base_seed: u64,
    pub init: InitPolicy<T>,
    pub nu_policy: NuPolicy,
}

impl<T: Scalar> ReplicateOptions<T> {
    pub fn new(replicates: usize, base_seed: u64) -> Self {
        Self {
            replicates,
            base_seed,
            init: InitPolicy::Zero,
            nu_policy: NuPolicy::Static,
        }
    }
}

/// The i.i.d. sampler a replicated run uses. For non-uniform directions
/// `AsGiven` keeps `sampler` and `Static` applies the largest-coordinate
/// rule at the deterministic starting point; `Adaptive` is rejected.
/// `None` for SGD.
pub fn iid_sampler<T: Scalar>(
    obj: &FiniteSumObjective<T>,
    method: Method,
    sampler: Option<&DirectionSampler<T>>,
    opts: &ReplicateOptions<T>,
) -> Result<Option<DirectionSampler<T>>, AsymptoticsError> {
    let Method::Scors(kind) = method else {
        return Ok(None);
    };
    let base = match sampler {
        Some(s) => s.clone(),
        None => DirectionSampler::of_kind(kind, obj.dim())?,
    };
    if kind != DirectionKind::NonUniform {
        return Ok(Some(base));
    }
    match opts.nu_policy {
        NuPolicy::AsGiven => Ok(Some(base)),
        NuPolicy::Adaptive => Err(AsymptoticsError::AdaptiveSamplerNotIid),
        NuPolicy::Static => {
            let x1 = match &opts.init {
                InitPolicy::Zero => vec![T::zero(); obj.dim()],
                InitPolicy::Point(p) => p.clone(),
                InitPolicy::Gaussian { .. } => return Err(AsymptoticsError::AdaptiveSamplerNotIid),
            };
            Ok(Some(crate::optimizer::initial_nu_sampler(obj, &x1, &base)?))
        }
    }
}

/// Runs `R` independent replicates of `n - 1` updates with `γ_n = 1/n` and
/// compares the sample covariance of `√n (x_n - x*)` with `Σ`.
pub fn clt_replicate<T: Scalar>(
    obj: &FiniteSumObjective<T>,
    reference: &ReferenceOptimum<T>,
    method: Method,
    sampler: Option<&DirectionSampler<T>>,
    schedule: &StepSchedule<T>,
    n: u64,
    opts: &ReplicateOptions<T>,
) -> Result<CltComparison<T>, AsymptoticsError> {
    if schedule.alpha() != T::one() || schedule.c() != T::one() {
        return Err(AsymptoticsError::InvalidSchedule(format!(
            "the covariance prediction assumes γ_n = 1/n, got c = {}, α = {}",
            schedule.c(),
            schedule.alpha()
        )));
    }
    if opts.replicates < 2 {
        return Err(AsymptoticsError::TooFewReplicates {
            needed: 2,
            got: opts.replicates,
        });
    }
    if n < 2 {
        return Err(AsymptoticsError::InvalidGrid("n must be at least 2".into()));
    }
    let sampler = iid_sampler(obj, method, sampler, opts)?;
    let h = obj.hessian_at(&reference.x_star)?;
    let q = obj.q_matrix(reference)?;
    let gamma = gamma_for_method(method, &q, sampler.as_ref().and_then(|s| s.probs()))?;
    let predicted_sigma = sigma_from_lyapunov(&h, &gamma)?;

    let scale = T::lit(n as f64).sqrt();
    let terminal = (0..opts.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let run_opts = RunOptions::new(n - 1, opts.base_seed)
                .replicate(r)
                .snapshots(SnapshotPolicy::FinalOnly)
                .init(opts.init.clone())
                .nu_policy(NuPolicy::AsGiven);
            let trace = run_method(
                obj,
                &reference.x_star,
                method,
                sampler.as_ref(),
                schedule,
                &run_opts,
            )?;
            Ok(trace
                .final_iterate
                .iter()
                .zip(&reference.x_star)
                .map(|(&x, &xs)| scale * (x - xs))
                .collect::<Vec<T>>())
        })
        .collect::<Result<Vec<_>, OptimizerError>>()?;

    let sample_cov = sample_covariance(&terminal);
    let rel_frobenius_error = sample_cov.rel_frobenius_error(&predicted_sigma);
    let norms: Vec<T> = terminal
        .iter()
        .map(|z| crate::scalar::norm_sq(z).sqrt())
        .collect();
    Ok(CltComparison {
        n,
        replicates: opts.replicates,
        terminal,
        sample_cov,
        predicted_sigma,
        rel_frobenius_error,
        norm_std: std_dev(&norms),
    })
}

/// Mean-centred sample covariance with the `R - 1` denominator.
pub fn sample_covariance<T: Scalar>(samples: &[Vec<T>]) -> DenseMatrix<T> {
    let r = samples.len();
    let d = samples.first().map_or(0, Vec::len);
    let mut mean = vec![T::zero(); d];
    for z in samples {
        for (m, &v) in mean.iter_mut().zip(z) {
            *m += v;
        }
    }
    let inv_r = T::one() / T::lit(r as f64);
    mean.iter_mut().for_each(|m| *m *= inv_r);
    let mut cov = DenseMatrix::zeros(d, d);
    let mut c = vec![T::zero(); d];
    for z in samples {
        for ((ci, &zi), &mi) in c.iter_mut().zip(z).zip(&mean) {
            *ci = zi - mi;
        }
        cov.add_scaled_outer(T::one(), &c);
    }
    cov.scale(T::one() / T::lit((r.max(2) - 1) as f64))
        .symmetrize()
}

fn std_dev<T: Scalar>(v: &[T]) -> T {
    let n = T::lit(v.len() as f64);
    let mean = v.iter().copied().sum::<T>() / n;
    let ss: T = v.iter().map(|&x| (x - mean) * (x - mean)).sum();
    (ss / (n - T::one())).sqrt()
}

/// Rate fit of `E‖x_n - x*‖^{2p}` over an iteration grid.
#[derive(Clone, Debug)]
pub struct MseFit<T> {
    pub p: u32,
    pub grid: Vec<u64>,
    /// Replicate mean of `‖x_n - x*‖^{2p}` at each grid point.
    pub mean_pow: Vec<T>,
    /// Grid points used by the fit (the first decade is discarded).
    pub fit_from: u64,
    pub slope: T,
    pub warnings: Vec<String>,
}

/// Averages `‖x_n - x*‖^{2p}` over replicates at each `n` of `grid` and
/// fits the least-squares slope of `log mean` against `log n`, ignoring
/// points below ten times the first grid value.
///
/// When the objective's monotonicity constant is known, violations of the
/// step-constant conditions are reported in `warnings`.
#[allow(clippy::too_many_arguments)]
pub fn mse_slope<T: Scalar>(
    obj: &FiniteSumObjective<T>,
    reference: &ReferenceOptimum<T>,
    method: Method,
    sampler: Option<&DirectionSampler<T>>,
    schedule: &StepSchedule<T>,
    p: u32,
    grid: &[u64],
    opts: &ReplicateOptions<T>,
) -> Result<MseFit<T>, AsymptoticsError> {
    if p == 0 {
        return Err(AsymptoticsError::InvalidGrid(
            "moment order must be ≥ 1".into(),
        ));
    }
    let mut grid: Vec<u64> = grid.iter().copied().filter(|&n| n >= 1).collect();
    grid.sort_unstable();
    grid.dedup();
    let (Some(&first), Some(&last)) = (grid.first(), grid.last()) else {
        return Err(AsymptoticsError::InvalidGrid("empty grid".into()));
    };
    let fit_from = first.saturating_mul(10);
    if grid.iter().filter(|&&n| n >= fit_from).count() < 2 {
        return Err(AsymptoticsError::InvalidGrid(
            "need at least two grid points beyond the first decade".into(),
        ));
    }
    if last < 2 {
        return Err(AsymptoticsError::InvalidGrid(
            "grid must reach n ≥ 2".into(),
        ));
    }
    if opts.replicates < 1 {
        return Err(AsymptoticsError::TooFewReplicates { needed: 1, got: 0 });
    }
    let warnings = step_condition_warnings(
        schedule.c().as_f64(),
        schedule.alpha().as_f64(),
        obj.monotonicity_constant().map(Scalar::as_f64),
        p,
    );

    let per_rep = (0..opts.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let run_opts = RunOptions::new(last - 1, opts.base_seed)
                .replicate(r)
                .snapshots(SnapshotPolicy::At(grid.clone()))
                .init(opts.init.clone())
                .nu_policy(opts.nu_policy);
            let trace = run_method(obj, &reference.x_star, method, sampler, schedule, &run_opts)?;
            Ok(trace
                .snapshots
                .iter()
                .map(|s| s.dist_sq.powi(p as i32))
                .collect::<Vec<T>>())
        })
        .collect::<Result<Vec<_>, OptimizerError>>()?;

    let inv_r = T::one() / T::lit(opts.replicates as f64);
    let mean_pow: Vec<T> = (0..grid.len())
        .map(|i| per_rep.iter().map(|v| v[i]).sum::<T>() * inv_r)
        .collect();
    let pts: Vec<(f64, f64)> = grid
        .iter()
        .zip(&mean_pow)
        .filter(|(&n, _)| n >= fit_from)
        .map(|(&n, &m)| ((n as f64).ln(), m.as_f64().ln()))
        .collect();
    Ok(MseFit {
        p,
        grid,
        mean_pow,
        fit_from,
        slope: T::lit(least_squares_slope(&pts)),
        warnings,
    })
}

pub fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}
