//! Random search directions with `E[V V^T] = I_d`.
//!
//! Four laws are supported: uniform and non-uniform draws from the scaled
//! canonical basis, standard Gaussian vectors, and uniform vectors on the
//! sphere of radius `√d`.

use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::numkit::DenseMatrix;
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DirectionError {
    #[error("direction dimension must be at least 1")]
    ZeroDimension,
    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),
    #[error("probability floor {floor} outside (0, 1/{dim}]")]
    InvalidFloor { floor: f64, dim: usize },
    #[error("spherical draw produced the zero vector twice")]
    ZeroVector,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DirectionKind {
    Uniform,
    NonUniform,
    Gaussian,
    Spherical,
}

impl DirectionKind {
    pub const ALL: [DirectionKind; 4] = [
        DirectionKind::Uniform,
        DirectionKind::NonUniform,
        DirectionKind::Gaussian,
        DirectionKind::Spherical,
    ];

    /// Canonical kinds move a single coordinate per draw.
    pub fn is_canonical(self) -> bool {
        matches!(self, DirectionKind::Uniform | DirectionKind::NonUniform)
    }

    pub fn short_name(self) -> &'static str {
        match self {
            DirectionKind::Uniform => "U",
            DirectionKind::NonUniform => "NU",
            DirectionKind::Gaussian => "G",
            DirectionKind::Spherical => "S",
        }
    }
}

impl fmt::Display for DirectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for DirectionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "U" | "UNIFORM" => Ok(DirectionKind::Uniform),
            "NU" | "NONUNIFORM" | "NON-UNIFORM" => Ok(DirectionKind::NonUniform),
            "G" | "GAUSSIAN" => Ok(DirectionKind::Gaussian),
            "S" | "SPHERICAL" => Ok(DirectionKind::Spherical),
            other => Err(format!("unknown direction kind '{other}'")),
        }
    }
}

/// A drawn direction. Canonical draws are kept in factored form
/// `scale · e_index`, so using them costs O(1).
#[derive(Clone, Debug, PartialEq)]
pub enum DirectionVector<T> {
    Canonical { index: usize, scale: T, dim: usize },
    Dense(Vec<T>),
}

impl<T: Scalar> DirectionVector<T> {
    pub fn dim(&self) -> usize {
        match self {
            DirectionVector::Canonical { dim, .. } => *dim,
            DirectionVector::Dense(v) => v.len(),
        }
    }

    pub fn selected_coordinate(&self) -> Option<usize> {
        match self {
            DirectionVector::Canonical { index, .. } => Some(*index),
            DirectionVector::Dense(_) => None,
        }
    }

    pub fn values(&self) -> Vec<T> {
        match self {
            DirectionVector::Canonical { index, scale, dim } => {
                let mut v = vec![T::zero(); *dim];
                v[*index] = *scale;
                v
            }
            DirectionVector::Dense(v) => v.clone(),
        }
    }

    pub fn dot(&self, g: &[T]) -> T {
        match self {
            DirectionVector::Canonical { index, scale, .. } => *scale * g[*index],
            DirectionVector::Dense(v) => crate::scalar::dot(v, g),
        }
    }

    pub fn norm_sq(&self) -> T {
        match self {
            DirectionVector::Canonical { scale, .. } => *scale * *scale,
            DirectionVector::Dense(v) => crate::scalar::norm_sq(v),
        }
    }
}

/// Borrowed draw used on the hot path; dense values live in caller scratch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Draw<T> {
    Canonical { index: usize, scale: T },
    Dense,
}

#[derive(Clone, Debug)]
struct Categorical<T> {
    probs: Vec<T>,
    // 1/√p_j, cached per coordinate.
    scales: Vec<T>,
    index: WeightedIndex<f64>,
}

impl<T: Scalar> Categorical<T> {
    fn new(probs: Vec<T>) -> Result<Self, DirectionError> {
        let weights: Vec<f64> = probs.iter().map(|p| p.as_f64()).collect();
        let index = WeightedIndex::new(&weights)
            .map_err(|e| DirectionError::InvalidProbabilities(e.to_string()))?;
        let scales = probs.iter().map(|&p| T::one() / p.sqrt()).collect();
        Ok(Self {
            probs,
            scales,
            index,
        })
    }
}

/// Immutable description of a direction law. The random stream is owned by
/// the caller.
#[derive(Clone, Debug)]
pub struct DirectionSampler<T> {
    kind: DirectionKind,
    dim: usize,
    prob_floor: T,
    categorical: Option<Categorical<T>>,
}

impl<T: Scalar> DirectionSampler<T> {
    fn plain(kind: DirectionKind, dim: usize) -> Result<Self, DirectionError> {
        if dim == 0 {
            return Err(DirectionError::ZeroDimension);
        }
        Ok(Self {
            kind,
            dim,
            prob_floor: default_prob_floor(dim),
            categorical: None,
        })
    }

    pub fn uniform(dim: usize) -> Result<Self, DirectionError> {
        Self::plain(DirectionKind::Uniform, dim)
    }

    pub fn gaussian(dim: usize) -> Result<Self, DirectionError> {
        Self::plain(DirectionKind::Gaussian, dim)
    }

    pub fn spherical(dim: usize) -> Result<Self, DirectionError> {
        Self::plain(DirectionKind::Spherical, dim)
    }

    /// Non-uniform canonical sampler. `probs` must sum to one and every
    /// entry must be at least `prob_floor`, itself in `(0, 1/d]`.
    pub fn non_uniform(probs: Vec<T>, prob_floor: T) -> Result<Self, DirectionError> {
        let dim = probs.len();
        if dim == 0 {
            return Err(DirectionError::ZeroDimension);
        }
        check_floor(prob_floor, dim)?;
        let sum: T = probs.iter().copied().sum();
        let tol = T::tolerance(1e-12) * T::lit(dim as f64);
        if !((sum - T::one()).abs() <= tol) {
            return Err(DirectionError::InvalidProbabilities(format!(
                "sum is {sum}, expected 1"
            )));
        }
        if let Some((j, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, &p)| !(p >= prob_floor * (T::one() - tol)))
        {
            return Err(DirectionError::InvalidProbabilities(format!(
                "probs[{j}] = {p} is below the floor {prob_floor}"
            )));
        }
        Ok(Self {
            kind: DirectionKind::NonUniform,
            dim,
            prob_floor,
            categorical: Some(Categorical::new(probs)?),
        })
    }

    /// Builds the sampler of `kind`; non-uniform samplers start from the
    /// uniform probability vector.
    pub fn of_kind(kind: DirectionKind, dim: usize) -> Result<Self, DirectionError> {
        match kind {
            DirectionKind::NonUniform => {
                if dim == 0 {
                    return Err(DirectionError::ZeroDimension);
                }
                let p = T::one() / T::lit(dim as f64);
                Self::non_uniform(vec![p; dim], default_prob_floor(dim))
            }
            _ => Self::plain(kind, dim),
        }
    }

    /// Same law family with new probabilities (non-uniform only).
    pub fn with_probs(&self, probs: Vec<T>) -> Result<Self, DirectionError> {
        Self::non_uniform(probs, self.prob_floor)
    }

    pub fn kind(&self) -> DirectionKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn prob_floor(&self) -> T {
        self.prob_floor
    }

    pub fn probs(&self) -> Option<&[T]> {
        self.categorical.as_ref().map(|c| c.probs.as_slice())
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
    ) -> Result<DirectionVector<T>, DirectionError> {
        let mut scratch = vec![
            T::zero();
            if self.kind.is_canonical() {
                0
            } else {
                self.dim
            }
        ];
        Ok(match self.draw(rng, &mut scratch)? {
            Draw::Canonical { index, scale } => DirectionVector::Canonical {
                index,
                scale,
                dim: self.dim,
            },
            Draw::Dense => DirectionVector::Dense(scratch),
        })
    }

    /// Draws into `scratch` (length `d`, dense kinds only).
    pub(crate) fn draw<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        scratch: &mut [T],
    ) -> Result<Draw<T>, DirectionError> {
        match self.kind {
            DirectionKind::Uniform => {
                let index = rng.random_range(0..self.dim);
                Ok(Draw::Canonical {
                    index,
                    scale: T::lit(self.dim as f64).sqrt(),
                })
            }
            DirectionKind::NonUniform => {
                let cat = self
                    .categorical
                    .as_ref()
                    .expect("non-uniform sampler has probs");
                let index = cat.index.sample(rng);
                Ok(Draw::Canonical {
                    index,
                    scale: cat.scales[index],
                })
            }
            DirectionKind::Gaussian => {
                fill_normal(rng, scratch);
                Ok(Draw::Dense)
            }
            DirectionKind::Spherical => {
                let mut norm_sq = T::zero();
                for _ in 0..2 {
                    fill_normal(rng, scratch);
                    norm_sq = crate::scalar::norm_sq(scratch);
                    if norm_sq > T::zero() {
                        break;
                    }
                }
                if !(norm_sq > T::zero()) {
                    return Err(DirectionError::ZeroVector);
                }
                let s = (T::lit(self.dim as f64) / norm_sq).sqrt();
                scratch.iter_mut().for_each(|x| *x *= s);
                Ok(Draw::Dense)
            }
        }
    }

    /// `E‖V‖⁴`: `d²` for uniform and spherical, `d(d+2)` for Gaussian and
    /// `Σ_j 1/p_j` for non-uniform.
    pub fn fourth_moment(&self) -> T {
        let d = T::lit(self.dim as f64);
        match self.kind {
            DirectionKind::Uniform | DirectionKind::Spherical => d * d,
            DirectionKind::Gaussian => d * (d + T::lit(2.0)),
            DirectionKind::NonUniform => self
                .probs()
                .expect("non-uniform sampler has probs")
                .iter()
                .map(|&p| T::one() / p)
                .sum(),
        }
    }

    /// Upper bound on the fourth moment valid for any admissible
    /// probability vector of this sampler (`d / floor` for non-uniform).
    pub fn fourth_moment_bound(&self) -> T {
        match self.kind {
            DirectionKind::NonUniform => T::lit(self.dim as f64) / self.prob_floor,
            _ => self.fourth_moment(),
        }
    }
}

fn fill_normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R, out: &mut [T]) {
    for x in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *x = T::lit(z);
    }
}

/// `1 / (10 d)`.
pub fn default_prob_floor<T: Scalar>(dim: usize) -> T {
    T::one() / T::lit(10.0 * dim.max(1) as f64)
}

fn check_floor<T: Scalar>(floor: T, dim: usize) -> Result<(), DirectionError> {
    let max = T::one() / T::lit(dim as f64);
    if !(floor > T::zero() && floor <= max * (T::one() + T::epsilon())) {
        return Err(DirectionError::InvalidFloor {
            floor: floor.as_f64(),
            dim,
        });
    }
    Ok(())
}

/// `‖(1/M) Σ V V^T - I‖_F` over `draws` samples.
pub fn second_moment_check<T: Scalar, R: Rng + ?Sized>(
    sampler: &DirectionSampler<T>,
    draws: usize,
    rng: &mut R,
) -> Result<T, DirectionError> {
    let d = sampler.dim();
    let mut acc = DenseMatrix::<T>::zeros(d, d);
    let mut scratch = vec![T::zero(); d];
    for _ in 0..draws {
        match sampler.draw(rng, &mut scratch)? {
            Draw::Canonical { index, scale } => acc[(index, index)] += scale * scale,
            Draw::Dense => acc.add_scaled_outer(T::one(), &scratch),
        }
    }
    let mean = acc.scale(T::one() / T::lit(draws as f64));
    Ok(mean.sub(&DenseMatrix::identity(d)).frobenius_norm())
}

/// Coordinate probabilities from an aggregated gradient.
///
/// The largest-magnitude coordinate `j*` (lowest index on ties) gets
/// `|g_{j*}| / Σ|g_i|`, the others share the rest equally. Entries are then
/// floored at `prob_floor` and the remaining mass is redistributed
/// proportionally over the unfloored entries, so the result sums to one
/// with every entry at least the floor. An all-zero gradient yields the
/// uniform vector.
pub fn nu_probabilities_from_gradient<T: Scalar>(
    g: &[T],
    prob_floor: T,
) -> Result<Vec<T>, DirectionError> {
    let d = g.len();
    if d == 0 {
        return Err(DirectionError::ZeroDimension);
    }
    check_floor(prob_floor, d)?;
    if d == 1 {
        return Ok(vec![T::one()]);
    }
    let total: T = g.iter().map(|x| x.abs()).sum();
    if !(total > T::zero()) || !total.is_finite() {
        return Ok(vec![T::one() / T::lit(d as f64); d]);
    }
    let mut j_star = 0;
    for (j, x) in g.iter().enumerate() {
        if x.abs() > g[j_star].abs() {
            j_star = j;
        }
    }
    let p_star = g[j_star].abs() / total;
    let rest = (T::one() - p_star) / T::lit((d - 1) as f64);
    let raw: Vec<T> = (0..d)
        .map(|j| if j == j_star { p_star } else { rest })
        .collect();
    Ok(apply_floor(&raw, prob_floor))
}

fn apply_floor<T: Scalar>(raw: &[T], floor: T) -> Vec<T> {
    let d = raw.len();
    let mut pinned = vec![false; d];
    loop {
        let n_pinned = pinned.iter().filter(|&&p| p).count();
        let free_mass = T::one() - T::lit(n_pinned as f64) * floor;
        let free_raw: T = (0..d).filter(|&j| !pinned[j]).map(|j| raw[j]).sum();
        let out: Vec<T> = (0..d)
            .map(|j| {
                if pinned[j] {
                    floor
                } else if free_raw > T::zero() {
                    raw[j] * free_mass / free_raw
                } else {
                    free_mass / T::lit((d - n_pinned) as f64)
                }
            })
            .collect();
        let mut changed = false;
        for j in 0..d {
            if !pinned[j] && out[j] < floor {
                pinned[j] = true;
                changed = true;
            }
        }
        if !changed {
            return out;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    fn rng(seed: u64) -> crate::rng::StreamRng {
        stream(seed, 0, Purpose::MonteCarlo)
    }

    #[test]
    fn uniform_draws_scaled_basis_with_equal_frequency() {
        let s = DirectionSampler::<f64>::uniform(4).unwrap();
        let mut r = rng(1);
        let m = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..m {
            let v = s.sample(&mut r).unwrap();
            let j = v.selected_coordinate().unwrap();
            assert_eq!(v.values()[j], 2.0);
            assert_eq!(v.norm_sq(), 4.0);
            counts[j] += 1;
        }
        for c in counts {
            assert!((c as f64 / m as f64 - 0.25).abs() <= 0.01, "{counts:?}");
        }
    }

    #[test]
    fn spherical_norm_is_exact() {
        let s = DirectionSampler::<f64>::spherical(7).unwrap();
        let mut r = rng(2);
        for _ in 0..10_000 {
            let v = s.sample(&mut r).unwrap();
            assert!((v.norm_sq() - 7.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn gaussian_mean_is_near_zero() {
        let s = DirectionSampler::<f64>::gaussian(3).unwrap();
        let mut r = rng(3);
        let m = 1_000_000;
        let mut mean = [0.0; 3];
        for _ in 0..m {
            if let DirectionVector::Dense(v) = s.sample(&mut r).unwrap() {
                for (a, b) in mean.iter_mut().zip(&v) {
                    *a += b / m as f64;
                }
            }
        }
        let n = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(n <= 0.005, "‖mean‖ = {n}");
    }

    #[test]
    fn second_moment_within_tolerance() {
        for (kind, seed) in [(DirectionKind::Uniform, 4), (DirectionKind::Gaussian, 5)] {
            let s = DirectionSampler::<f64>::of_kind(kind, 10).unwrap();
            let err = second_moment_check(&s, 200_000, &mut rng(seed)).unwrap();
            assert!(err <= 0.05, "{kind}: {err}");
        }
    }

    #[test]
    fn one_dimensional_uniform_is_exact() {
        let s = DirectionSampler::<f64>::uniform(1).unwrap();
        assert_eq!(second_moment_check(&s, 10_000, &mut rng(6)).unwrap(), 0.0);
    }

    #[test]
    fn fourth_moments() {
        assert_eq!(
            DirectionSampler::<f64>::uniform(5).unwrap().fourth_moment(),
            25.0
        );
        assert_eq!(
            DirectionSampler::<f64>::spherical(5)
                .unwrap()
                .fourth_moment(),
            25.0
        );
        assert_eq!(
            DirectionSampler::<f64>::gaussian(5)
                .unwrap()
                .fourth_moment(),
            35.0
        );
        let nu = DirectionSampler::non_uniform(vec![0.5, 0.25, 0.25], 0.1).unwrap();
        assert_eq!(nu.fourth_moment(), 10.0);
        assert!(nu.fourth_moment() <= nu.fourth_moment_bound());
    }

    #[test]
    fn gaussian_fourth_moment_matches_monte_carlo() {
        let s = DirectionSampler::<f64>::gaussian(5).unwrap();
        let mut r = rng(7);
        let m = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..m {
            let n2 = s.sample(&mut r).unwrap().norm_sq();
            acc += n2 * n2;
        }
        let est = acc / m as f64;
        assert!((est - 35.0).abs() / 35.0 <= 0.01, "{est}");
    }

    #[test]
    fn nu_probabilities_examples() {
        let p = nu_probabilities_from_gradient::<f64>(&[3.0, -1.0, 1.0], 0.01).unwrap();
        for (a, b) in p.iter().zip([0.6, 0.2, 0.2]) {
            assert!((a - b).abs() < 1e-15);
        }
        let p = nu_probabilities_from_gradient::<f64>(&[0.0, 0.0, 0.0], 0.01).unwrap();
        assert_eq!(p, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn nu_probabilities_are_floored_then_renormalized() {
        let mut g = vec![1e-9; 10];
        g[0] = 100.0;
        let p = nu_probabilities_from_gradient::<f64>(&g, 0.02).unwrap();
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x >= 0.02 - 1e-15), "{p:?}");
        assert!((p[0] - (1.0 - 9.0 * 0.02)).abs() < 1e-12);
    }

    #[test]
    fn nu_argmax_ties_break_low() {
        let p = nu_probabilities_from_gradient::<f64>(&[1.0, -2.0, 2.0, 0.5], 0.01).unwrap();
        assert!(p[1] > p[2]);
    }

    #[test]
    fn non_uniform_validation() {
        assert!(DirectionSampler::non_uniform(vec![0.5, 0.6], 0.1).is_err());
        assert!(DirectionSampler::non_uniform(vec![0.95, 0.05], 0.1).is_err());
        assert!(matches!(
            DirectionSampler::non_uniform(vec![0.5, 0.5], 0.6),
            Err(DirectionError::InvalidFloor { .. })
        ));
        assert!(DirectionSampler::<f64>::uniform(0).is_err());
    }

    #[test]
    fn identical_seeds_identical_draws() {
        for kind in DirectionKind::ALL {
            let s = DirectionSampler::<f64>::of_kind(kind, 6).unwrap();
            let (mut a, mut b) = (rng(9), rng(9));
            for _ in 0..100 {
                assert_eq!(s.sample(&mut a).unwrap(), s.sample(&mut b).unwrap());
            }
        }
    }
}
