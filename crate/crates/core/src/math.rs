/// Exponents are clamped to this magnitude before `exp`.
pub const EXP_CLAMP: f64 = 700.0;

#[inline]
pub fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if a > b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// Normalizes a pair of log scores into probabilities.
///
/// Two `-inf` scores carry no information and give `(0.5, 0.5)`.
#[inline]
pub fn normalize_pair(a: f64, b: f64) -> (f64, f64) {
    let z = log_sum_exp(a, b);
    if z == f64::NEG_INFINITY {
        return (0.5, 0.5);
    }
    ((a - z).exp(), (b - z).exp())
}

/// `1 / (1 + exp(-t))` with the exponent clamped.
#[inline]
pub fn logistic(t: f64) -> f64 {
    let t = t.clamp(-EXP_CLAMP, EXP_CLAMP);
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(t))` without overflow.
#[inline]
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}
