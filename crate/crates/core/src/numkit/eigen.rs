use super::{DenseMatrix, NumError};
use crate::Scalar;

const MAX_SWEEPS: usize = 100;

/// `A = V diag(λ) V^T` with eigenvalues ascending and orthonormal columns.
#[derive(Clone, Debug, PartialEq)]
pub struct SymEigDecomposition<T> {
    pub eigenvalues: Vec<T>,
    pub eigenvectors: DenseMatrix<T>,
}

impl<T: Scalar> SymEigDecomposition<T> {
    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues[0]
    }

    pub fn max_eigenvalue(&self) -> T {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    /// `V diag(f(λ)) V^T`.
    pub fn apply(&self, f: impl Fn(T) -> T) -> DenseMatrix<T> {
        let n = self.eigenvalues.len();
        let v = &self.eigenvectors;
        let mut out = DenseMatrix::zeros(n, n);
        for (k, &lam) in self.eigenvalues.iter().enumerate() {
            let w = f(lam);
            for i in 0..n {
                let vik = v[(i, k)] * w;
                for j in 0..n {
                    out[(i, j)] += vik * v[(j, k)];
                }
            }
        }
        out
    }

    pub fn reconstruct(&self) -> DenseMatrix<T> {
        self.apply(|l| l)
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Each sweep visits every off-diagonal pair `(p, q)` once and applies the
/// plane rotation that annihilates `a_pq`; the product of rotations
/// converges to the eigenvector matrix. Sweeps stop when the off-diagonal
/// Frobenius norm drops below `eps · ‖A‖_F`.
pub fn sym_eig<T: Scalar>(a: &DenseMatrix<T>) -> Result<SymEigDecomposition<T>, NumError> {
    if !a.is_square() {
        return Err(NumError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if !a.is_finite() {
        return Err(NumError::NonFinite("sym_eig input"));
    }
    a.check_symmetric(T::tolerance(1e-12))?;

    let n = a.rows();
    let mut m = a.symmetrize();
    let mut v = DenseMatrix::identity(n);
    let target = T::epsilon() * m.frobenius_norm();

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&m) <= target {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut m, &mut v, p, q);
            }
        }
    }
    if !converged {
        let off = off_diagonal_norm(&m);
        if off > target * T::lit(16.0) {
            return Err(NumError::NoConvergence {
                off_norm: off.as_f64(),
            });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[(i, i)]
            .partial_cmp(&m[(j, j)])
            .expect("finite eigenvalues")
    });
    let eigenvalues = order.iter().map(|&i| m[(i, i)]).collect();
    let mut eigenvectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..n {
            eigenvectors[(i, dst)] = v[(i, src)];
        }
    }
    Ok(SymEigDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm<T: Scalar>(m: &DenseMatrix<T>) -> T {
    let n = m.rows();
    let mut s = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += m[(i, j)] * m[(i, j)];
            }
        }
    }
    s.sqrt()
}

fn rotate<T: Scalar>(m: &mut DenseMatrix<T>, v: &mut DenseMatrix<T>, p: usize, q: usize) {
    let apq = m[(p, q)];
    if apq == T::zero() {
        return;
    }
    let theta = (m[(q, q)] - m[(p, p)]) / (T::lit(2.0) * apq);
    let sign = if theta >= T::zero() {
        T::one()
    } else {
        -T::one()
    };
    let t = sign / (theta.abs() + (theta * theta + T::one()).sqrt());
    let c = T::one() / (t * t + T::one()).sqrt();
    let s = t * c;
    let n = m.rows();

    // M <- M J, then J^T M; V <- V J with J = [[c, s], [-s, c]] on (p, q).
    for k in 0..n {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = c * mkp - s * mkq;
        m[(k, q)] = s * mkp + c * mkq;
    }
    for k in 0..n {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = c * mpk - s * mqk;
        m[(q, k)] = s * mpk + c * mqk;
    }
    m[(p, q)] = T::zero();
    m[(q, p)] = T::zero();
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use rand::Rng;

    fn random_symmetric(n: usize, seed: u64) -> DenseMatrix<f64> {
        let mut rng = stream(seed, 0, Purpose::MonteCarlo);
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let x: f64 = rng.random_range(-1.0..1.0);
                a[(i, j)] = x;
                a[(j, i)] = x;
            }
        }
        a
    }

    #[test]
    fn diagonal_input_sorts_and_permutes() {
        let e = sym_eig(&DenseMatrix::from_diag(&[2.0, 1.0])).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 2.0]);
        assert_eq!(e.eigenvectors.as_slice(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let e = sym_eig(&DenseMatrix::<f64>::identity(5)).unwrap();
        assert!(e.eigenvalues.iter().all(|&l| l == 1.0));
    }

    #[test]
    fn random_reconstruction_and_orthonormality() {
        for seed in 0..20 {
            let a = random_symmetric(6, seed);
            let e = sym_eig(&a).unwrap();
            let resid = e.reconstruct().rel_frobenius_error(&a);
            assert!(resid <= 1e-10, "seed {seed}: residual {resid:e}");
            let vtv = e.eigenvectors.transpose().matmul(&e.eigenvectors);
            assert!(vtv.sub(&DenseMatrix::identity(6)).max_abs() <= 1e-10);
            assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn rejects_asymmetric_and_non_finite() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eig(&a), Err(NumError::NonSymmetric { .. })));
        let mut b = DenseMatrix::<f64>::identity(2);
        b[(0, 0)] = f64::INFINITY;
        assert!(matches!(sym_eig(&b), Err(NumError::NonFinite(_))));
    }

    #[test]
    fn single_precision() {
        let a = DenseMatrix::<f32>::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let e = sym_eig(&a).unwrap();
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-6);
        assert!((e.eigenvalues[1] - 3.0).abs() < 1e-6);
    }
}
