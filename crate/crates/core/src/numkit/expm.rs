use super::{DenseMatrix, NumError};
use crate::Scalar;

const TAYLOR_DEGREE: usize = 6;
// Scaled norm bound; the degree-6 remainder is then below 1e-14.
const SCALED_NORM: f64 = 1.0 / 32.0;

/// `e^A` by scaling and squaring around a degree-6 Taylor polynomial.
pub fn mat_exp<T: Scalar>(a: &DenseMatrix<T>) -> Result<DenseMatrix<T>, NumError> {
    if !a.is_square() {
        return Err(NumError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if !a.is_finite() {
        return Err(NumError::NonFinite("mat_exp input"));
    }
    let n = a.rows();
    let norm = (0..n)
        .map(|i| a.row(i).iter().fold(T::zero(), |s, x| s + x.abs()))
        .fold(T::zero(), T::max)
        .as_f64();

    let squarings = if norm > SCALED_NORM {
        (norm / SCALED_NORM).log2().ceil() as i32
    } else {
        0
    };
    let b = a.scale(T::lit(0.5f64.powi(squarings)));

    // Horner: I + B(I + B/2(I + B/3(...)))
    let id = DenseMatrix::identity(n);
    let mut e = id.clone();
    for k in (1..=TAYLOR_DEGREE).rev() {
        e = id.add(&b.matmul(&e).scale(T::one() / T::lit(k as f64)));
    }
    for _ in 0..squarings {
        e = e.matmul(&e);
        if !e.is_finite() {
            return Err(NumError::NonFinite("mat_exp overflow"));
        }
    }
    if !e.is_finite() {
        return Err(NumError::NonFinite("mat_exp overflow"));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::sym_eig;

    #[test]
    fn zero_gives_identity() {
        let e = mat_exp(&DenseMatrix::<f64>::zeros(3, 3)).unwrap();
        assert_eq!(e, DenseMatrix::identity(3));
    }

    #[test]
    fn diagonal_exponentiates_entrywise() {
        let d: [f64; 4] = [-3.0, 0.5, 2.0, 7.0];
        let e = mat_exp(&DenseMatrix::from_diag(&d)).unwrap();
        for (i, &x) in d.iter().enumerate() {
            let want = x.exp();
            assert!(
                (e[(i, i)] - want).abs() <= 1e-12 * want,
                "{} vs {want}",
                e[(i, i)]
            );
        }
        assert!(e.sub(&DenseMatrix::from_diag(&e.diagonal())).max_abs() == 0.0);
    }

    #[test]
    fn nilpotent_series_truncates() {
        let a = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let e = mat_exp(&a).unwrap();
        let want = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        assert!(e.sub(&want).max_abs() <= 1e-14);
    }

    #[test]
    fn symmetric_matches_spectral_route() {
        let a = DenseMatrix::from_rows(&[
            vec![-1.0, 0.3, 0.2],
            vec![0.3, -2.0, 0.5],
            vec![0.2, 0.5, -0.4],
        ])
        .unwrap();
        let spectral = sym_eig(&a).unwrap().apply(f64::exp);
        assert!(mat_exp(&a).unwrap().rel_frobenius_error(&spectral) <= 1e-12);
    }

    #[test]
    fn overflow_is_reported() {
        let a = DenseMatrix::from_diag(&[1000.0]);
        assert_eq!(mat_exp(&a), Err(NumError::NonFinite("mat_exp overflow")));
    }
}
