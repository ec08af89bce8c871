use crate::Scalar;

/// Locale-independent scientific notation with 17 significant digits;
/// parses back to the identical `f64`.
pub(crate) fn real<T: Scalar>(x: T) -> String {
    format!("{:.16e}", x.as_f64())
}
