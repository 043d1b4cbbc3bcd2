//! Standard normal density, distribution function, its logarithm and inverse.
//!
//! All evaluation happens in `f64`; generic entry points cast in and out.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use libm::erfc;

use crate::Scalar;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Below this argument `log Φ` switches to the asymptotic tail expansion.
const LOG_CDF_ASYMPTOTIC_BELOW: f64 = -8.0;

pub fn pdf<T: Scalar>(x: T) -> T {
    T::of(pdf_f64(x.f64()))
}

pub fn cdf<T: Scalar>(x: T) -> T {
    T::of(cdf_f64(x.f64()))
}

/// Upper tail `1 − Φ(x)` without cancellation.
pub fn sf<T: Scalar>(x: T) -> T {
    T::of(cdf_f64(-x.f64()))
}

pub fn log_cdf<T: Scalar>(x: T) -> T {
    T::of(log_cdf_f64(x.f64()))
}

pub fn ppf<T: Scalar>(p: T) -> T {
    T::of(ppf_f64(p.f64()))
}

pub fn pdf_f64(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn cdf_f64(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// `log Φ(x)`, finite for every finite `x`.
pub fn log_cdf_f64(x: f64) -> f64 {
    if x.is_nan() {
        f64::NAN
    } else if x < LOG_CDF_ASYMPTOTIC_BELOW {
        log_cdf_tail(x)
    } else if x > 5.0 {
        (-cdf_f64(-x)).ln_1p()
    } else {
        cdf_f64(x).ln()
    }
}

/// Mills-ratio expansion:
/// `log Φ(x) = −x²/2 − log(−x) − log √(2π) + log(1 − 1/x² + 3/x⁴ − 15/x⁶ + …)`,
/// summed until the terms stop shrinking.
fn log_cdf_tail(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let inv_x2 = 1.0 / (x * x);
    let mut term = 1.0;
    let mut series = 1.0;
    for k in 1..64 {
        let next = -term * (2 * k - 1) as f64 * inv_x2;
        if next.abs() >= term.abs() || next.abs() < 1e-17 {
            if next.abs() < term.abs() {
                series += next;
            }
            break;
        }
        term = next;
        series += term;
    }
    -0.5 * x * x - (-x).ln() - LN_SQRT_2PI + series.ln()
}

/// Inverse standard normal CDF.
///
/// Rational approximation (relative error about 1e-9) followed by one Halley
/// refinement against the `erfc`-based CDF, which takes it to near machine
/// precision.
pub fn ppf_f64(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let x = ppf_rational(p);
    // Halley step on whichever tail is represented more accurately.
    let e = if p < 0.5 {
        cdf_f64(x) - p
    } else {
        (1.0 - p) - cdf_f64(-x)
    };
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    if u.is_finite() {
        x - u / (1.0 + 0.5 * x * u)
    } else {
        x
    }
}

fn ppf_rational(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;
    let tail = |q: f64| {
        let q = (-2.0 * q.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < P_LOW {
        tail(p)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail(1.0 - p)
    }
}
