use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// Separable Gaussian kernel.
    #[default]
    SquaredExponential,
    /// Matérn ν = 3/2.
    Matern32,
}

/// Stationary anisotropic kernel `τ²·ρ(r)` in unit-cube coordinates, where
/// `r² = Σ (a_j − b_j)² / θ_j²`.
///
/// `jitter` is relative: the covariance of the training design is
/// `τ²(R + jitter·I)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct KernelSpec<T> {
    pub family: KernelFamily,
    pub lengthscales: Vec<T>,
    pub scale: T,
    pub jitter: T,
}

pub const DEFAULT_JITTER: f64 = 1e-6;

impl<T: Scalar> KernelSpec<T> {
    pub fn new(family: KernelFamily, lengthscales: Vec<T>, scale: T) -> Result<Self> {
        let k = Self {
            family,
            lengthscales,
            scale,
            jitter: T::of(DEFAULT_JITTER),
        };
        k.validate()?;
        Ok(k)
    }

    pub fn with_jitter(mut self, jitter: T) -> Result<Self> {
        self.jitter = jitter;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengthscales.is_empty() {
            return Err(Error::ParameterDomain("kernel needs at least one lengthscale".into()));
        }
        if let Some(j) = self
            .lengthscales
            .iter()
            .position(|&t| !(t > T::zero() && t.is_finite()))
        {
            return Err(Error::ParameterDomain(format!(
                "lengthscale {j} must be positive, got {}",
                self.lengthscales[j]
            )));
        }
        if !(self.scale > T::zero() && self.scale.is_finite()) {
            return Err(Error::ParameterDomain(format!(
                "scale must be positive, got {}",
                self.scale
            )));
        }
        if !(self.jitter >= T::zero() && self.jitter.is_finite()) {
            return Err(Error::ParameterDomain(format!(
                "jitter must be nonnegative, got {}",
                self.jitter
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// Covariance `k(a, b)`; `eval(x, x) = τ²`.
    #[inline]
    pub fn eval(&self, a: &[T], b: &[T]) -> T {
        self.scale * self.correlation(a, b)
    }

    #[inline]
    pub fn correlation(&self, a: &[T], b: &[T]) -> T {
        correlation(self.family, &self.lengthscales, a, b)
    }

    /// Nugget added to the diagonal of the design covariance.
    #[inline]
    pub fn nugget(&self) -> T {
        self.scale * self.jitter
    }
}

#[inline]
pub(crate) fn scaled_sq_dist<T: Scalar>(theta: &[T], a: &[T], b: &[T]) -> T {
    let mut r2 = T::zero();
    for ((&x, &y), &t) in a.iter().zip(b).zip(theta) {
        let d = (x - y) / t;
        r2 = r2 + d * d;
    }
    r2
}

#[inline]
pub(crate) fn correlation<T: Scalar>(family: KernelFamily, theta: &[T], a: &[T], b: &[T]) -> T {
    let r2 = scaled_sq_dist(theta, a, b);
    correlation_from_sq(family, r2)
}

#[inline]
pub(crate) fn correlation_from_sq<T: Scalar>(family: KernelFamily, r2: T) -> T {
    match family {
        KernelFamily::SquaredExponential => (-r2 * T::of(0.5)).exp(),
        KernelFamily::Matern32 => {
            let s = T::of(3f64.sqrt()) * r2.sqrt();
            (T::one() + s) * (-s).exp()
        }
    }
}

/// `∂ρ/∂log θ_j` divided by `Δ_j²/θ_j²`, as a function of `r²`.
#[inline]
pub(crate) fn correlation_log_theta_factor<T: Scalar>(family: KernelFamily, r2: T) -> T {
    match family {
        KernelFamily::SquaredExponential => (-r2 * T::of(0.5)).exp(),
        KernelFamily::Matern32 => {
            let s = T::of(3f64.sqrt()) * r2.sqrt();
            T::of(3.0) * (-s).exp()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn squared_exponential_values() {
        let k = KernelSpec::new(KernelFamily::SquaredExponential, vec![1.0, 1.0], 1.0).unwrap();
        assert_eq!(k.eval(&[0.3, 0.7], &[0.3, 0.7]), 1.0);
        let k = KernelSpec::new(KernelFamily::SquaredExponential, vec![1.0], 2.0).unwrap();
        assert_relative_eq!(k.eval(&[0.0], &[1.0]), 2.0 * (-0.5f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(k.eval(&[0.0], &[1.0]), 1.213_061_319_425_267, max_relative = 1e-14);
    }

    #[test]
    fn matern_values() {
        let k = KernelSpec::new(KernelFamily::Matern32, vec![1.0], 1.0).unwrap();
        let s3 = 3f64.sqrt();
        assert_relative_eq!(k.eval(&[0.0], &[1.0]), (1.0 + s3) * (-s3).exp(), max_relative = 1e-15);
        assert_relative_eq!(k.eval(&[0.0], &[1.0]), 0.483_357_724_596_507_7, max_relative = 1e-12);
    }

    #[test]
    fn symmetric_and_anisotropic() {
        let k = KernelSpec::new(KernelFamily::Matern32, vec![0.2, 3.0], 1.5).unwrap();
        let (a, b) = ([0.1, 0.9], [0.4, 0.2]);
        assert_eq!(k.eval(&a, &b), k.eval(&b, &a));
        assert_eq!(k.eval(&a, &a), 1.5);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            KernelSpec::new(KernelFamily::SquaredExponential, vec![1.0, 0.0], 1.0),
            Err(Error::ParameterDomain(_))
        ));
        assert!(KernelSpec::new(KernelFamily::SquaredExponential, vec![1.0], -1.0).is_err());
        assert!(KernelSpec::new(KernelFamily::SquaredExponential, vec![1.0], 1.0)
            .unwrap()
            .with_jitter(-1e-6)
            .is_err());
    }
}
