/// Logistic function, evaluated without overflow for large |x|.
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `x · logistic(x)`.
#[inline]
pub fn silu(x: f64) -> f64 {
    x * logistic(x)
}

#[inline]
pub fn silu_derivative(x: f64) -> f64 {
    let s = logistic(x);
    s * (1.0 + x * (1.0 - s))
}

/// Upper bound on `sup |silu'(x)|` (attained near x ≈ 2.3994).
pub const SILU_LIPSCHITZ: f64 = 1.09984;
