use std::f64::consts::PI;

use crate::Scalar;

/// Branin-Hoo on `[-5, 10] × [0, 15]`.
pub fn branin<T: Scalar>(x: &[T]) -> T {
    let a = T::one();
    let b = T::of(5.1 / (4.0 * PI * PI));
    let c = T::of(5.0 / PI);
    let r = T::of(6.0);
    let s = T::of(10.0);
    let t = T::of(1.0 / (8.0 * PI));
    let (x1, x2) = (x[0], x[1]);
    let q = x2 - b * x1 * x1 + c * x1 - r;
    a * q * q + s * (T::one() - t) * x1.cos() + s
}

/// Ishigami with coefficients 5 and 0.1 on `[-π, π]³`.
pub fn ishigami<T: Scalar>(x: &[T]) -> T {
    let s1 = x[0].sin();
    let s2 = x[1].sin();
    let x3 = x[2];
    s1 + T::of(5.0) * s2 * s2 + T::of(0.1) * x3 * x3 * x3 * x3 * s1
}

const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const HARTMANN_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];
const HARTMANN_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];

/// Location of the Hartmann-6 peak.
pub const HARTMANN6_ARGMAX: [f64; 6] = [0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573];

/// Negated Hartmann-6 on `[0, 1]⁶`, so the peak value is about 3.32237.
pub fn hartmann6<T: Scalar>(x: &[T]) -> T {
    let mut total = T::zero();
    for i in 0..4 {
        let mut e = T::zero();
        for j in 0..6 {
            let d = x[j] - T::of(HARTMANN_P[i][j]);
            e = e + T::of(HARTMANN_A[i][j]) * d * d;
        }
        total = total + T::of(HARTMANN_ALPHA[i]) * (-e).exp();
    }
    total
}

/// Two-dimensional multimodal test function on `[-4, 7] × [-3, 8]`.
pub fn multimodal2d<T: Scalar>(x: &[T]) -> T {
    let (x1, x2) = (x[0], x[1]);
    (x1 * x1 + T::of(4.0)) * (x2 - T::one()) / T::of(20.0) - (T::of(2.5) * x1).sin() - T::of(2.0)
}

pub const SPACESUIT_MEAN: [f64; 4] = [0.41597, 1.54189, 0.01031, 1.0];
pub const SPACESUIT_COV: [[f64; 4]; 4] = [
    [0.00275, -0.00494, -0.00373, 0.0],
    [-0.00494, 0.01856, 0.0032, 0.0],
    [-0.00373, 0.0032, 0.01834, 0.0],
    [0.0, 0.0, 0.0, 0.00016],
];

/// Smooth synthetic response over the 4d correlated-normal spacesuit inputs.
/// Not a physical model; it only gives that configuration something to run.
pub fn spacesuit_standin<T: Scalar>(x: &[T]) -> T {
    let z: Vec<T> = (0..4)
        .map(|j| (x[j] - T::of(SPACESUIT_MEAN[j])) / T::of(SPACESUIT_COV[j][j].sqrt()))
        .collect();
    let lin = z[3] + T::of(0.6) * z[0] - T::of(0.4) * z[1] + T::of(0.3) * (T::of(2.0) * z[2]).sin();
    T::of(2000.0) + T::of(250.0) * lin + T::of(40.0) * z[0] * z[1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn branin_values() {
        assert_relative_eq!(branin(&[PI, 2.275]), 0.397_887, epsilon = 1e-6);
        assert_relative_eq!(branin(&[-5.0, 0.0]), 308.129_1, epsilon = 1e-4);
    }

    #[test]
    fn ishigami_values() {
        assert_eq!(ishigami(&[0.0, 0.0, 0.0]), 0.0);
        assert_relative_eq!(ishigami(&[PI / 2.0, 0.0, 0.0]), 1.0, epsilon = 1e-15);
        assert_relative_eq!(ishigami(&[PI / 2.0, PI / 2.0, 0.0]), 6.0, epsilon = 1e-14);
    }

    #[test]
    fn hartmann_values() {
        assert_relative_eq!(hartmann6(&HARTMANN6_ARGMAX), 3.32237, epsilon = 1e-5);
        let far = [1.0, 1.0, 0.0, 1.0, 1.0, 0.0];
        assert!(hartmann6(&far) > 0.0 && hartmann6(&far) < 1e-2);
    }

    #[test]
    fn multimodal_values() {
        assert_relative_eq!(multimodal2d(&[0.0, 1.0]), -2.0, epsilon = 1e-15);
        assert_relative_eq!(multimodal2d(&[0.0, 6.0]), -1.0, epsilon = 1e-15);
        assert_relative_eq!(multimodal2d(&[0.0, 21.0]), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn standin_is_centered() {
        assert_eq!(spacesuit_standin(&SPACESUIT_MEAN), 2000.0);
        let f32_val = spacesuit_standin(&SPACESUIT_MEAN.map(|v| v as f32));
        assert!((f32_val - 2000.0).abs() < 1.0);
    }
}
