use super::OptimizerError;
use crate::Scalar;

/// `γ_n = c / n^α` with `c > 0` and `1/2 < α ≤ 1`, so that `Σ γ_n = ∞` and
/// `Σ γ_n² < ∞`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSchedule<T> {
    c: T,
    alpha: T,
}

impl<T: Scalar> StepSchedule<T> {
    pub fn new(c: T, alpha: T) -> Result<Self, OptimizerError> {
        if !(c > T::zero()) || !c.is_finite() {
            return Err(OptimizerError::InvalidSchedule(format!(
                "c must be positive, got {c}"
            )));
        }
        if !(alpha > T::lit(0.5) && alpha <= T::one()) {
            return Err(OptimizerError::InvalidSchedule(format!(
                "alpha must lie in (1/2, 1], got {alpha}"
            )));
        }
        Ok(Self { c, alpha })
    }

    /// `γ_n = 1/n`.
    pub fn harmonic() -> Self {
        Self {
            c: T::one(),
            alpha: T::one(),
        }
    }

    pub fn c(&self) -> T {
        self.c
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    /// `c · n^{-α}` for `n ≥ 1`.
    #[inline]
    pub fn step_size(&self, n: u64) -> T {
        assert!(n >= 1, "iterations are numbered from 1");
        let n = T::lit(n as f64);
        if self.alpha == T::one() {
            self.c / n
        } else {
            self.c * n.powf(-self.alpha)
        }
    }
}

/// Checks the constants conditions under which `E‖x_n - x*‖^{2p}` decays as
/// `n^{-pα}`:
///
/// * `p = 1`: `cμ ≤ 2^{α-1}`, and `2cμ > 1` when `α = 1`;
/// * `p ≥ 2`: `pcμ ≤ 2^α`, and `cμ > 1` when `α = 1`.
///
/// Returns one message per violated inequality. Silent when `μ` is unknown.
/// Values within a relative `1e-9` of a bound count as equal to it, so a
/// numerically computed `μ` does not flip a boundary case.
pub fn step_condition_warnings(c: f64, alpha: f64, mu: Option<f64>, p: u32) -> Vec<String> {
    const SLACK: f64 = 1.0 + 1e-9;
    let Some(mu) = mu else {
        return Vec::new();
    };
    let cmu = c * mu;
    let mut out = Vec::new();
    let harmonic = (alpha - 1.0).abs() < 1e-12;
    if p <= 1 {
        let bound = 2f64.powf(alpha - 1.0);
        if cmu > bound * SLACK {
            out.push(format!(
                "condition cμ ≤ 2^(α-1) violated: cμ = {cmu:.6} > {bound:.6}"
            ));
        }
        if harmonic && 2.0 * cmu <= SLACK {
            out.push(format!(
                "condition 2cμ > 1 violated: 2cμ = {:.6}",
                2.0 * cmu
            ));
        }
    } else {
        let pcmu = p as f64 * cmu;
        let bound = 2f64.powf(alpha);
        if pcmu > bound * SLACK {
            out.push(format!(
                "condition pcμ ≤ 2^α violated: pcμ = {pcmu:.6} > {bound:.6}"
            ));
        }
        if harmonic && cmu <= SLACK {
            out.push(format!("condition cμ > 1 violated: cμ = {cmu:.6}"));
        }
    }
    out
}
