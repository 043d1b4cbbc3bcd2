use crate::limit::LimitState;
use crate::normal::log_cdf_f64;
use crate::Scalar;

/// Entropy (nats) of the surrogate's pass/fail classification at a point
/// with predictive `mean` and `sd`.
///
/// Evaluated as `Σ p·(−ln p)` over `p ∈ {Φ(−|z|), Φ(|z|)}` with `ln p` taken
/// from `log Φ`, so deep tails decay to `+0` instead of producing NaN. The
/// result depends on `|z|` only, which makes it exactly symmetric about the
/// threshold and independent of the limit-state direction.
pub fn ecl<T: Scalar>(mean: T, sd: T, limit: &LimitState<T>) -> T {
    T::of(ecl_f64(mean.f64(), sd.f64(), limit.threshold.f64()))
}

pub fn ecl_f64(mean: f64, sd: f64, threshold: f64) -> f64 {
    let diff = mean - threshold;
    if !(sd > 0.0) {
        return if diff == 0.0 { std::f64::consts::LN_2 } else { 0.0 };
    }
    let a = (diff / sd).abs();
    if a == 0.0 {
        return std::f64::consts::LN_2;
    }
    binary_entropy_tail(a)
}

/// Binary entropy of `Φ(a)` for `a > 0`.
fn binary_entropy_tail(a: f64) -> f64 {
    let ln_small = log_cdf_f64(-a);
    let ln_big = log_cdf_f64(a);
    let small = ln_small.exp();
    let big = ln_big.exp();
    let h = small * -ln_small + big * -ln_big;
    if h.is_nan() {
        0.0
    } else {
        h.max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_values() {
        let l = LimitState::above(3.0);
        assert_relative_eq!(ecl(3.0, 0.7, &l), std::f64::consts::LN_2, epsilon = 1e-12);
        // mpmath, 50 digits: -(1-p)ln(1-p) - p ln p at p = Φ(1)
        assert_relative_eq!(ecl_f64(1.0, 1.0, 0.0), 0.437_433_240_927_119_1, epsilon = 1e-12);
        assert_eq!(ecl(2.0, 0.0, &l), 0.0);
        assert_eq!(ecl(3.0, 0.0, &l), std::f64::consts::LN_2);
    }

    #[test]
    fn deep_tails_are_finite() {
        let mut prev = f64::INFINITY;
        for i in 0..=3700 {
            let z = i as f64 * 0.01;
            let h = ecl_f64(z, 1.0, 0.0);
            assert!(h.is_finite() && h >= 0.0 && h.is_sign_positive(), "z={z} h={h}");
            assert!(h <= prev, "not monotone at z={z}");
            prev = h;
        }
        assert!(ecl_f64(1e3, 1.0, 0.0) == 0.0);
    }

    #[test]
    fn f32_entry_point() {
        let l = LimitState::below(0.0f32);
        assert!((ecl(1.0f32, 1.0, &l) - 0.437_433_24).abs() < 1e-6);
    }
}
