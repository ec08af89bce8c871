use super::{mat_exp, sym_eig, DenseMatrix, NumError};
use crate::Scalar;

pub const DEFAULT_QUADRATURE_STEPS: usize = 4000;

const TAIL_LIMIT: f64 = 1e-9;

/// Solves `A^T Σ + Σ A = Γ` for symmetric `A` with positive spectrum.
///
/// With `A = V diag(λ) V^T` the equation decouples in the eigenbasis:
/// `Σ = V [ (V^T Γ V)_ij / (λ_i + λ_j) ] V^T`.
pub fn solve_lyapunov_transposed<T: Scalar>(
    a: &DenseMatrix<T>,
    gamma: &DenseMatrix<T>,
) -> Result<DenseMatrix<T>, NumError> {
    if a.rows() != gamma.rows() || a.cols() != gamma.cols() {
        return Err(NumError::DimensionMismatch(format!(
            "A is {}x{}, Γ is {}x{}",
            a.rows(),
            a.cols(),
            gamma.rows(),
            gamma.cols()
        )));
    }
    gamma.check_symmetric(T::tolerance(1e-12))?;
    let eig = sym_eig(a)?;
    let lmin = eig.min_eigenvalue();
    if !(lmin > T::zero()) {
        return Err(NumError::UnstableSpectrum {
            min_eigenvalue: lmin.as_f64(),
        });
    }
    let v = &eig.eigenvectors;
    let mut inner = v.transpose().matmul(gamma).matmul(v);
    let n = a.rows();
    for i in 0..n {
        for j in 0..n {
            inner[(i, j)] /= eig.eigenvalues[i] + eig.eigenvalues[j];
        }
    }
    let sigma = v.matmul(&inner).matmul(&v.transpose()).symmetrize();
    if !sigma.is_finite() {
        return Err(NumError::NonFinite("Lyapunov solution"));
    }
    Ok(sigma)
}

/// `max(20, 30 / (2 λ_min(sym(A))))`.
pub fn default_horizon<T: Scalar>(a: &DenseMatrix<T>) -> Result<T, NumError> {
    let decay = decay_rate(a)?;
    Ok(T::lit(20.0).max(T::lit(30.0) / (T::lit(2.0) * decay)))
}

// Smallest eigenvalue of the symmetric part bounds ‖e^{-Au}‖ ≤ e^{-λ u}.
fn decay_rate<T: Scalar>(a: &DenseMatrix<T>) -> Result<T, NumError> {
    if !a.is_square() {
        return Err(NumError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let lmin = sym_eig(&a.symmetrize())?.min_eigenvalue();
    if !(lmin > T::zero()) {
        return Err(NumError::UnstableSpectrum {
            min_eigenvalue: lmin.as_f64(),
        });
    }
    Ok(lmin)
}

/// Composite Simpson approximation of `∫_0^horizon (e^{-Au})^T Γ e^{-Au} du`.
///
/// Independent of the eigenbasis route: the integrand is propagated with a
/// single matrix exponential of the step, `e^{-A(u+h)} = e^{-Au} e^{-Ah}`.
/// `steps` is rounded up to an even count.
pub fn quadrature_sigma_oracle<T: Scalar>(
    a: &DenseMatrix<T>,
    gamma: &DenseMatrix<T>,
    horizon: T,
    steps: usize,
) -> Result<DenseMatrix<T>, NumError> {
    if a.rows() != gamma.rows() || a.cols() != gamma.cols() {
        return Err(NumError::DimensionMismatch(
            "A and Γ must have the same shape".into(),
        ));
    }
    let decay = decay_rate(a)?;
    let tail = (-(T::lit(2.0) * decay * horizon)).exp().as_f64();
    if !(tail <= TAIL_LIMIT) {
        return Err(NumError::HorizonTooShort { tail });
    }
    let steps = (steps.max(2) + 1) & !1;
    let h = horizon / T::lit(steps as f64);
    let step_map = mat_exp(&a.scale(-h))?;

    let n = a.rows();
    let mut propagator = DenseMatrix::identity(n);
    let mut acc = DenseMatrix::zeros(n, n);
    for k in 0..=steps {
        let weight = if k == 0 || k == steps {
            T::one()
        } else if k % 2 == 1 {
            T::lit(4.0)
        } else {
            T::lit(2.0)
        };
        let integrand = propagator.transpose().matmul(gamma).matmul(&propagator);
        acc = acc.add(&integrand.scale(weight));
        propagator = propagator.matmul(&step_map);
    }
    Ok(acc.scale(h / T::lit(3.0)).symmetrize())
}
