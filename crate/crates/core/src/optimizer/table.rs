use crate::Scalar;

/// Stored component gradients `g_{n,k}` and their running sum
/// `g_n = Σ_k g_{n,k}`.
#[derive(Clone, Debug)]
pub struct GradientTable<T> {
    dim: usize,
    rows: Vec<T>,
    aggregate: Vec<T>,
}

impl<T: Scalar> GradientTable<T> {
    /// `rows` is `N x d`, row-major.
    pub fn new(dim: usize, rows: Vec<T>) -> Self {
        assert!(dim > 0 && rows.len().is_multiple_of(dim), "table rows must be N x d");
        let mut aggregate = vec![T::zero(); dim];
        for row in rows.chunks_exact(dim) {
            for (a, &v) in aggregate.iter_mut().zip(row) {
                *a += v;
            }
        }
        Self {
            dim,
            rows,
            aggregate,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn row(&self, k: usize) -> &[T] {
        &self.rows[k * self.dim..(k + 1) * self.dim]
    }

    pub fn aggregate(&self) -> &[T] {
        &self.aggregate
    }

    /// Replaces row `k` and updates the sum incrementally.
    pub fn update(&mut self, k: usize, new_grad: &[T]) {
        assert_eq!(new_grad.len(), self.dim);
        let row = &mut self.rows[k * self.dim..(k + 1) * self.dim];
        for ((a, r), &g) in self.aggregate.iter_mut().zip(row.iter_mut()).zip(new_grad) {
            *a += g - *r;
            *r = g;
        }
    }

    /// Row sum computed from scratch.
    pub fn resum(&self) -> Vec<T> {
        GradientTable::new(self.dim, self.rows.clone()).aggregate
    }
}
