//! Finite-sum objectives `f(x) = (1/N) Σ_k f_k(x)` and the diagnostic
//! quantities evaluated at the optimum.
//!
//! Two families are provided:
//!
//! * logistic regression, `f_k(x) = log(1 + e^{⟨x,w_k⟩}) - y_k ⟨x,w_k⟩`;
//! * a noisy quadratic `f_k(x) = ½ (x-x*)^T A (x-x*) - ⟨b_k, x⟩` with
//!   `Σ_k b_k = 0`, whose optimum, Hessian and gradient covariance are known
//!   exactly.
//!
//! Component indices are zero-based.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::numkit::{sym_eig, DenseMatrix, NumError};
use crate::rng::{stream, Purpose};
use crate::scalar::{all_finite, dist_sq, dot, norm_sq};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("objective needs at least one component")]
    Empty,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("component index {index} out of range for N = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid noisy quadratic: {0}")]
    InvalidQuadratic(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("Newton iterations stopped at gradient norm {grad_norm:e}")]
    NoConvergence { grad_norm: f64 },
    #[error("reference optimum violates its invariant: {0}")]
    InvalidReference(String),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Logistic,
    NoisyQuadratic,
}

#[derive(Clone, Debug)]
enum Payload<T> {
    Logistic {
        // N x d, row-major.
        features: Vec<T>,
        labels: Vec<bool>,
    },
    NoisyQuadratic {
        a: DenseMatrix<T>,
        noise: Vec<T>,
        x_star: Vec<T>,
        lambda_min: T,
        lambda_max: T,
    },
}

#[derive(Clone, Debug)]
pub struct FiniteSumObjective<T> {
    n: usize,
    dim: usize,
    payload: Payload<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimumSource {
    ExactByConstruction,
    GeneratorParameter,
    NumericallyComputed,
}

/// A point `x*` together with where it came from and `‖∇f(x*)‖`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceOptimum<T> {
    pub x_star: Vec<T>,
    pub source: OptimumSource,
    pub gradient_norm: T,
}

impl<T: Scalar> ReferenceOptimum<T> {
    pub fn evaluate(
        obj: &FiniteSumObjective<T>,
        x_star: Vec<T>,
        source: OptimumSource,
    ) -> Result<Self, ObjectiveError> {
        let gradient_norm = norm_sq(&obj.full_grad(&x_star)?).sqrt();
        Ok(Self {
            x_star,
            source,
            gradient_norm,
        })
    }

    /// Exact references must have `‖∇f‖ ≤ 1e-12`, computed ones `≤ 1e-10`.
    pub fn check(&self) -> Result<(), ObjectiveError> {
        let bound = match self.source {
            OptimumSource::ExactByConstruction => T::tolerance(1e-12),
            OptimumSource::NumericallyComputed => T::tolerance(1e-10),
            OptimumSource::GeneratorParameter => return Ok(()),
        };
        if self.gradient_norm <= bound {
            Ok(())
        } else {
            Err(ObjectiveError::InvalidReference(format!(
                "{:?} reference has gradient norm {:e}",
                self.source, self.gradient_norm
            )))
        }
    }
}

#[inline]
fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `σ(z) - y`, evaluated without cancellation when `y = 1`.
#[inline]
fn residual<T: Scalar>(z: T, y: bool) -> T {
    if y {
        -sigmoid(-z)
    } else {
        sigmoid(z)
    }
}

#[inline]
fn softplus<T: Scalar>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

impl<T: Scalar> FiniteSumObjective<T> {
    /// Logistic regression over rows `features[k] = w_k` and labels `y_k`.
    pub fn logistic(features: &DenseMatrix<T>, labels: Vec<bool>) -> Result<Self, ObjectiveError> {
        let n = features.rows();
        if n == 0 {
            return Err(ObjectiveError::Empty);
        }
        if labels.len() != n {
            return Err(ObjectiveError::DimensionMismatch(format!(
                "{} labels for {n} samples",
                labels.len()
            )));
        }
        Ok(Self {
            n,
            dim: features.cols(),
            payload: Payload::Logistic {
                features: features.as_slice().to_vec(),
                labels,
            },
        })
    }

    /// Noisy quadratic with Hessian `a`, offsets `noise[k] = b_k` and
    /// optimum `x_star`. Requires `a` SPD and `Σ_k b_k ≈ 0`.
    pub fn noisy_quadratic(
        a: DenseMatrix<T>,
        noise: &[Vec<T>],
        x_star: Vec<T>,
    ) -> Result<Self, ObjectiveError> {
        let n = noise.len();
        let d = x_star.len();
        if n == 0 {
            return Err(ObjectiveError::Empty);
        }
        if a.rows() != d || a.cols() != d || noise.iter().any(|b| b.len() != d) {
            return Err(ObjectiveError::DimensionMismatch(
                "A, b_k and x* must share the dimension".into(),
            ));
        }
        if !all_finite(&x_star) || noise.iter().any(|b| !all_finite(b)) {
            return Err(ObjectiveError::NonFinite("quadratic data"));
        }
        let eig = sym_eig(&a)?;
        if !(eig.min_eigenvalue() > T::zero()) {
            return Err(ObjectiveError::InvalidQuadratic(format!(
                "λ_min(A) = {} is not positive",
                eig.min_eigenvalue()
            )));
        }
        let scale = noise.iter().flatten().fold(T::one(), |m, b| m.max(b.abs()));
        let mut sum = vec![T::zero(); d];
        for b in noise {
            for (s, &v) in sum.iter_mut().zip(b) {
                *s += v;
            }
        }
        let sum_norm = norm_sq(&sum).sqrt();
        if sum_norm > T::tolerance(1e-10) * T::lit(n as f64) * scale {
            return Err(ObjectiveError::InvalidQuadratic(format!(
                "‖Σ b_k‖ = {sum_norm:e} is not zero"
            )));
        }
        Ok(Self {
            n,
            dim: d,
            payload: Payload::NoisyQuadratic {
                a: a.symmetrize(),
                noise: noise.concat(),
                x_star,
                lambda_min: eig.min_eigenvalue(),
                lambda_max: eig.max_eigenvalue(),
            },
        })
    }

    pub fn n_components(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> Family {
        match self.payload {
            Payload::Logistic { .. } => Family::Logistic,
            Payload::NoisyQuadratic { .. } => Family::NoisyQuadratic,
        }
    }

    /// Features and labels of a logistic objective.
    pub fn logistic_data(&self) -> Option<(&[T], &[bool])> {
        match &self.payload {
            Payload::Logistic { features, labels } => Some((features, labels)),
            Payload::NoisyQuadratic { .. } => None,
        }
    }

    /// Strong monotonicity constant `μ` with
    /// `⟨x - x*, ∇f(x)⟩ ≥ μ ‖x - x*‖²`, known exactly for the quadratic.
    pub fn monotonicity_constant(&self) -> Option<T> {
        match &self.payload {
            Payload::NoisyQuadratic { lambda_min, .. } => Some(*lambda_min),
            Payload::Logistic { .. } => None,
        }
    }

    /// A valid `L` in `τ²(x) ≤ L ‖x - x*‖²`: `λ_max(A)²` for the quadratic,
    /// `max_k ‖w_k‖⁴ / 16` for logistic regression.
    pub fn lipschitz_bound(&self) -> T {
        match &self.payload {
            Payload::NoisyQuadratic { lambda_max, .. } => *lambda_max * *lambda_max,
            Payload::Logistic { features, .. } => {
                features
                    .chunks_exact(self.dim)
                    .map(|w| {
                        let s = norm_sq(w);
                        s * s
                    })
                    .fold(T::zero(), T::max)
                    / T::lit(16.0)
            }
        }
    }

    fn check_args(&self, k: usize, x: &[T]) -> Result<(), ObjectiveError> {
        if k >= self.n {
            return Err(ObjectiveError::IndexOutOfRange {
                index: k,
                n: self.n,
            });
        }
        if x.len() != self.dim {
            return Err(ObjectiveError::DimensionMismatch(format!(
                "x has length {}, objective has dimension {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    #[inline]
    fn row<'a>(&self, data: &'a [T], k: usize) -> &'a [T] {
        &data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn component_loss(&self, k: usize, x: &[T]) -> Result<T, ObjectiveError> {
        self.check_args(k, x)?;
        let v = match &self.payload {
            Payload::Logistic { features, labels } => {
                let z = dot(x, self.row(features, k));
                let yz = if labels[k] { z } else { T::zero() };
                softplus(z) - yz
            }
            Payload::NoisyQuadratic {
                a, noise, x_star, ..
            } => {
                let diff: Vec<T> = x.iter().zip(x_star).map(|(&a, &b)| a - b).collect();
                T::lit(0.5) * dot(&diff, &a.mul_vec(&diff)) - dot(self.row(noise, k), x)
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ObjectiveError::NonFinite("component loss"))
        }
    }

    pub fn loss(&self, x: &[T]) -> Result<T, ObjectiveError> {
        let mut s = T::zero();
        for k in 0..self.n {
            s += self.component_loss(k, x)?;
        }
        Ok(s / T::lit(self.n as f64))
    }

    pub fn component_grad(&self, k: usize, x: &[T]) -> Result<Vec<T>, ObjectiveError> {
        let mut out = vec![T::zero(); self.dim];
        self.component_grad_into(k, x, &mut out)?;
        Ok(out)
    }

    /// Writes `∇f_k(x)` into `out`.
    pub fn component_grad_into(
        &self,
        k: usize,
        x: &[T],
        out: &mut [T],
    ) -> Result<(), ObjectiveError> {
        self.check_args(k, x)?;
        match &self.payload {
            Payload::Logistic { features, labels } => {
                let w = self.row(features, k);
                let r = residual(dot(x, w), labels[k]);
                for (o, &wj) in out.iter_mut().zip(w) {
                    *o = r * wj;
                }
            }
            Payload::NoisyQuadratic {
                a, noise, x_star, ..
            } => {
                let b = self.row(noise, k);
                for (j, o) in out.iter_mut().enumerate() {
                    let arow = a.row(j);
                    let mut s = T::zero();
                    for i in 0..self.dim {
                        s += arow[i] * (x[i] - x_star[i]);
                    }
                    *o = s - b[j];
                }
            }
        }
        if all_finite(out) {
            Ok(())
        } else {
            Err(ObjectiveError::NonFinite("component gradient"))
        }
    }

    /// Coordinate `j` of `∇f_k(x)` alone. One inner product, no
    /// d-vector is formed.
    #[inline]
    pub fn component_grad_coord(&self, k: usize, x: &[T], j: usize) -> T {
        match &self.payload {
            Payload::Logistic { features, labels } => {
                let w = self.row(features, k);
                residual(dot(x, w), labels[k]) * w[j]
            }
            Payload::NoisyQuadratic {
                a, noise, x_star, ..
            } => {
                let arow = a.row(j);
                let mut s = T::zero();
                for i in 0..self.dim {
                    s += arow[i] * (x[i] - x_star[i]);
                }
                s - noise[k * self.dim + j]
            }
        }
    }

    pub fn full_grad(&self, x: &[T]) -> Result<Vec<T>, ObjectiveError> {
        self.check_args(0, x)?;
        let mut acc = vec![T::zero(); self.dim];
        let mut g = vec![T::zero(); self.dim];
        for k in 0..self.n {
            self.component_grad_into(k, x, &mut g)?;
            for (a, &v) in acc.iter_mut().zip(&g) {
                *a += v;
            }
        }
        let inv = T::one() / T::lit(self.n as f64);
        acc.iter_mut().for_each(|a| *a *= inv);
        Ok(acc)
    }

    /// `τ²(x) = (1/N) Σ_k ‖∇f_k(x) - ∇f_k(x*)‖²`.
    pub fn tau_squared(
        &self,
        x: &[T],
        reference: &ReferenceOptimum<T>,
    ) -> Result<T, ObjectiveError> {
        let mut g = vec![T::zero(); self.dim];
        let mut g_star = vec![T::zero(); self.dim];
        let mut s = T::zero();
        for k in 0..self.n {
            self.component_grad_into(k, x, &mut g)?;
            self.component_grad_into(k, &reference.x_star, &mut g_star)?;
            s += dist_sq(&g, &g_star);
        }
        Ok(s / T::lit(self.n as f64))
    }

    /// `θ* = (1/N) Σ_k ‖∇f_k(x*)‖²`.
    pub fn theta_star(&self, reference: &ReferenceOptimum<T>) -> Result<T, ObjectiveError> {
        let mut g = vec![T::zero(); self.dim];
        let mut s = T::zero();
        for k in 0..self.n {
            self.component_grad_into(k, &reference.x_star, &mut g)?;
            s += norm_sq(&g);
        }
        Ok(s / T::lit(self.n as f64))
    }

    /// `Q = (1/N) Σ_k ∇f_k(x*) ∇f_k(x*)^T`.
    pub fn q_matrix(
        &self,
        reference: &ReferenceOptimum<T>,
    ) -> Result<DenseMatrix<T>, ObjectiveError> {
        let mut q = DenseMatrix::zeros(self.dim, self.dim);
        let mut g = vec![T::zero(); self.dim];
        for k in 0..self.n {
            self.component_grad_into(k, &reference.x_star, &mut g)?;
            q.add_scaled_outer(T::one(), &g);
        }
        Ok(q.scale(T::one() / T::lit(self.n as f64)).symmetrize())
    }

    /// `∇²f(x)`.
    pub fn hessian_at(&self, x: &[T]) -> Result<DenseMatrix<T>, ObjectiveError> {
        self.check_args(0, x)?;
        match &self.payload {
            Payload::Logistic { features, .. } => {
                let mut h = DenseMatrix::zeros(self.dim, self.dim);
                for w in features.chunks_exact(self.dim) {
                    let z = dot(x, w);
                    h.add_scaled_outer(sigmoid(z) * sigmoid(-z), w);
                }
                let h = h.scale(T::one() / T::lit(self.n as f64)).symmetrize();
                if h.is_finite() {
                    Ok(h)
                } else {
                    Err(ObjectiveError::NonFinite("Hessian"))
                }
            }
            Payload::NoisyQuadratic { a, .. } => Ok(a.clone()),
        }
    }

    /// Minimizer of the finite sum by damped Newton iterations, stopped at
    /// `‖∇f‖ ≤ 1e-10`.
    pub fn empirical_minimizer(&self, start: &[T]) -> Result<ReferenceOptimum<T>, ObjectiveError> {
        const MAX_NEWTON: usize = 100;
        let target = T::tolerance(1e-10);
        let mut x = start.to_vec();
        let mut g = self.full_grad(&x)?;
        let mut f = self.loss(&x)?;
        for _ in 0..MAX_NEWTON {
            let gn = norm_sq(&g).sqrt();
            if gn <= target {
                return ReferenceOptimum::evaluate(self, x, OptimumSource::NumericallyComputed);
            }
            let step = self.hessian_at(&x)?.solve_spd(&g)?;
            let mut t = T::one();
            loop {
                let trial: Vec<T> = x.iter().zip(&step).map(|(&a, &s)| a - t * s).collect();
                let ft = self.loss(&trial)?;
                // Near the optimum loss differences drown in rounding; accept
                // the full step there and let the gradient test decide.
                if ft <= f || t < T::lit(1e-3) {
                    x = trial;
                    f = ft;
                    break;
                }
                t *= T::lit(0.5);
            }
            g = self.full_grad(&x)?;
        }
        Err(ObjectiveError::NoConvergence {
            grad_norm: norm_sq(&g).sqrt().as_f64(),
        })
    }

    /// Writes a logistic dataset as CSV rows `y, w_1, ..., w_d`.
    pub fn export_csv(&self, path: &Path) -> Result<(), ObjectiveError> {
        let (features, labels) = self.logistic_data().ok_or_else(|| {
            ObjectiveError::InvalidDataset("only logistic datasets are exported".into())
        })?;
        let mut wtr = csv::Writer::from_path(path)?;
        let mut header = vec!["y".to_string()];
        header.extend((1..=self.dim).map(|j| format!("w_{j}")));
        wtr.write_record(&header)?;
        for (w, &y) in features.chunks_exact(self.dim).zip(labels) {
            let mut rec = vec![if y { "1".to_string() } else { "0".to_string() }];
            rec.extend(w.iter().map(|&v| crate::format::real(v)));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads a dataset written by [`export_csv`](Self::export_csv).
    pub fn import_csv(path: &Path) -> Result<Self, ObjectiveError> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("y") || headers.len() < 2 {
            return Err(ObjectiveError::InvalidDataset(
                "header must be y, w_1, ..., w_d".into(),
            ));
        }
        let dim = headers.len() - 1;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad =
                |msg: String| ObjectiveError::InvalidDataset(format!("row {}: {msg}", line + 1));
            if rec.len() != dim + 1 {
                return Err(bad(format!(
                    "expected {} fields, got {}",
                    dim + 1,
                    rec.len()
                )));
            }
            labels.push(match rec[0].trim() {
                "0" => false,
                "1" => true,
                other => return Err(bad(format!("label '{other}' is not 0 or 1"))),
            });
            for field in rec.iter().skip(1) {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| bad(format!("'{field}' is not a number")))?;
                features.push(T::lit(v));
            }
        }
        let n = labels.len();
        let m = DenseMatrix::from_vec(n, dim, features)?;
        Self::logistic(&m, labels)
    }
}

fn normal_vec<T: Scalar, R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<T> {
    (0..d)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            T::lit(z)
        })
        .collect()
}

fn unit_sphere<T: Scalar, R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<T> {
    loop {
        let v = normal_vec::<T, _>(rng, d);
        let n = norm_sq(&v).sqrt();
        if n > T::zero() {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Synthetic logistic regression: `w ~ N(0, I_d)`,
/// `P(y = 1 | w) = σ(⟨w, x*⟩)` with `x*` uniform on the unit sphere.
///
/// Returns the generating parameter as the reference; use
/// [`FiniteSumObjective::empirical_minimizer`] for the minimizer of the
/// finite sum.
pub fn synthesize_logistic<T: Scalar>(
    n: usize,
    d: usize,
    seed: u64,
) -> Result<(FiniteSumObjective<T>, ReferenceOptimum<T>), ObjectiveError> {
    if n == 0 || d == 0 {
        return Err(ObjectiveError::Empty);
    }
    let mut rng = stream(seed, 0, Purpose::Data);
    let x_star: Vec<T> = unit_sphere(&mut rng, d);
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let w = normal_vec::<T, _>(&mut rng, d);
        let p = sigmoid(dot(&w, &x_star)).as_f64();
        labels.push(rng.random::<f64>() < p);
        features.extend(w);
    }
    let obj = FiniteSumObjective::logistic(&DenseMatrix::from_vec(n, d, features)?, labels)?;
    let reference = ReferenceOptimum::evaluate(&obj, x_star, OptimumSource::GeneratorParameter)?;
    Ok((obj, reference))
}

/// Noisy quadratic with `A = U diag(λ) U^T`, `U` a random rotation and the
/// `λ_i` evenly spaced on a log scale from `λ_lo` to `λ_hi` (both included),
/// `x*` uniform on the unit sphere and `b_k = noise_scale · N(0, I_d)`
/// recentred to sum to zero.
pub fn make_noisy_quadratic<T: Scalar>(
    d: usize,
    eig_range: (T, T),
    noise_scale: T,
    n: usize,
    seed: u64,
) -> Result<(FiniteSumObjective<T>, ReferenceOptimum<T>), ObjectiveError> {
    let (lo, hi) = eig_range;
    if d == 0 {
        return Err(ObjectiveError::Empty);
    }
    if n < 2 {
        return Err(ObjectiveError::InvalidQuadratic("need N ≥ 2".into()));
    }
    if !(lo > T::zero() && hi >= lo) || !(noise_scale >= T::zero()) {
        return Err(ObjectiveError::InvalidQuadratic(format!(
            "need 0 < λ_lo ≤ λ_hi and noise ≥ 0, got [{lo}, {hi}], {noise_scale}"
        )));
    }
    let mut rng = stream(seed, 0, Purpose::Problem);
    let lambdas: Vec<T> = (0..d)
        .map(|i| {
            if d == 1 {
                lo
            } else {
                let t = T::lit(i as f64 / (d - 1) as f64);
                lo * (hi / lo).powf(t)
            }
        })
        .collect();
    let rotation = random_rotation::<T, _>(&mut rng, d);
    let a = rotation
        .matmul(&DenseMatrix::from_diag(&lambdas))
        .matmul(&rotation.transpose())
        .symmetrize();
    let x_star: Vec<T> = unit_sphere(&mut rng, d);
    let mut noise: Vec<Vec<T>> = (0..n)
        .map(|_| {
            normal_vec::<T, _>(&mut rng, d)
                .into_iter()
                .map(|z| z * noise_scale)
                .collect()
        })
        .collect();
    let inv_n = T::one() / T::lit(n as f64);
    for j in 0..d {
        let mean = noise.iter().map(|b| b[j]).sum::<T>() * inv_n;
        noise.iter_mut().for_each(|b| b[j] -= mean);
    }
    let obj = FiniteSumObjective::noisy_quadratic(a, &noise, x_star.clone())?;
    let reference = ReferenceOptimum::evaluate(&obj, x_star, OptimumSource::ExactByConstruction)?;
    Ok((obj, reference))
}

// Modified Gram-Schmidt on a Gaussian matrix.
fn random_rotation<T: Scalar, R: Rng + ?Sized>(rng: &mut R, d: usize) -> DenseMatrix<T> {
    let mut cols: Vec<Vec<T>> = Vec::with_capacity(d);
    while cols.len() < d {
        let mut v = normal_vec::<T, _>(rng, d);
        for c in &cols {
            let p = dot(&v, c);
            v.iter_mut().zip(c).for_each(|(x, &ci)| *x -= p * ci);
        }
        let n = norm_sq(&v).sqrt();
        if n > T::lit(1e-6) {
            cols.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    let mut m = DenseMatrix::zeros(d, d);
    for (j, c) in cols.iter().enumerate() {
        for (i, &v) in c.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    m
}
