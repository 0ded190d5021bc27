/// Hyperbolic tangent. `f64::tanh` saturates cleanly, no overflow for large |x|.
#[inline]
pub fn tanh_eval(x: f64) -> f64 {
    x.tanh()
}

/// Logistic sigmoid, evaluated on the branch that keeps `exp` bounded.
#[inline]
pub fn sigmoid_eval(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
