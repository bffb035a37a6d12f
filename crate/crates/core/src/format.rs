//! Number formatting shared by every exported table.

/// `x` with 17 significant digits, which round-trips any `f64`.
pub fn sig17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}
