//! Small log-space helpers shared by the samplers.

/// `ln Σ exp(v)` with the usual max shift; `−∞` entries drop out.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `ln(1 − exp(a))` for `a ≤ 0`; `−∞` when `a = 0`.
pub fn ln_one_minus_exp(a: f64) -> f64 {
    debug_assert!(a <= 0.0 || a.is_nan());
    if a == f64::NEG_INFINITY {
        return 0.0;
    }
    if a >= 0.0 {
        return f64::NEG_INFINITY;
    }
    if a < -std::f64::consts::LN_2 {
        (-a.exp()).ln_1p()
    } else {
        (-a.exp_m1()).ln()
    }
}
