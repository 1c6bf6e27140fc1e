//! Plain-text output helpers shared by the CSV writers.

/// 17 significant digits, enough to round-trip any `f64`; infinities are
/// written as `inf` and `-inf`.
pub fn fmt_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:.16e}")
    }
}
