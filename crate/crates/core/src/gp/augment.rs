use super::model::{posterior_variance, GpModel, PredictiveDist};
use crate::linalg::{cholesky_append, sq_dist, Matrix};
use crate::{Error, Result, Scalar};

/// Scaled distance below which an added point counts as a duplicate.
pub const AUGMENT_DUPLICATE_TOLERANCE: f64 = 1e-8;

/// A GP extended by inputs whose responses are not yet known.
///
/// The predictive mean is that of the base model; only the variance
/// conditions on the pending inputs.
#[derive(Clone, Debug)]
pub struct AugmentedModel<'a, T: Scalar> {
    base: &'a GpModel<T>,
    pending: Matrix<T>,
    chol: Matrix<T>,
}

impl<T: Scalar> GpModel<T> {
    /// Starts an augmentation chain with no pending points.
    pub fn augmented(&self) -> AugmentedModel<'_, T> {
        AugmentedModel {
            base: self,
            pending: Matrix::zeros(0, self.dim()),
            chol: self.chol().clone(),
        }
    }

    /// Adds `x_new` (original units) without a response.
    pub fn augment(&self, x_new: &[T]) -> Result<AugmentedModel<'_, T>> {
        self.augmented().augment(x_new)
    }
}

impl<'a, T: Scalar> AugmentedModel<'a, T> {
    pub fn base(&self) -> &'a GpModel<T> {
        self.base
    }

    /// Pending inputs in unit-cube coordinates.
    pub fn pending(&self) -> &Matrix<T> {
        &self.pending
    }

    pub fn augment(&self, x_new: &[T]) -> Result<Self> {
        self.augment_unit(&self.base.bounds().to_unit(x_new))
    }

    /// Adds a unit-cube point. Cost is quadratic in the current design size.
    pub fn augment_unit(&self, u: &[T]) -> Result<Self> {
        assert_eq!(u.len(), self.base.dim(), "dimension mismatch");
        let tol = T::of(AUGMENT_DUPLICATE_TOLERANCE);
        if self.nearest_distance(u) <= tol {
            return Err(Error::Duplicate {
                tolerance: AUGMENT_DUPLICATE_TOLERANCE,
            });
        }
        let kernel = self.base.kernel();
        let cross = self.cross_cov(u);
        let diag = kernel.scale + kernel.nugget();
        let chol = cholesky_append(&self.chol, &cross, diag).map_err(|e| Error::Numerical {
            context: "augment".into(),
            pivot: e.pivot,
            jitter: kernel.jitter.f64(),
        })?;
        let mut pending = self.pending.clone();
        pending.push_row(u);
        Ok(Self {
            base: self.base,
            pending,
            chol,
        })
    }

    fn cross_cov(&self, u: &[T]) -> Vec<T> {
        let kernel = self.base.kernel();
        let mut k = self.base.cross_cov(u);
        k.extend(self.pending.rows().map(|r| kernel.eval(r, u)));
        k
    }

    /// Scaled distance from `u` to the nearest design or pending point.
    pub fn nearest_distance(&self, u: &[T]) -> T {
        self.base
            .unit_inputs()
            .rows()
            .chain(self.pending.rows())
            .map(|r| sq_dist(r, u))
            .fold(T::infinity(), T::min)
            .sqrt()
    }

    /// Predictive mean (base model) and standard deviation conditioned on
    /// the pending inputs, original units.
    pub fn predict_unit(&self, u: &[T]) -> (T, T) {
        let mean = self.base.predict_mean_unit(u);
        let mut k = self.cross_cov(u);
        let var = posterior_variance(self.base.kernel(), &self.chol, &mut k);
        (mean, self.base.output_std() * var.sqrt())
    }

    pub fn predict_point(&self, x: &[T]) -> (T, T) {
        self.predict_unit(&self.base.bounds().to_unit(x))
    }

    pub fn predict(&self, xq: &Matrix<T>) -> PredictiveDist<T> {
        let bounds = self.base.bounds();
        let out_of_bounds = xq.rows().any(|r| !bounds.contains(r));
        let (mean, sd) = xq.rows().map(|r| self.predict_point(r)).unzip();
        PredictiveDist {
            mean,
            sd,
            out_of_bounds,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Bounds;
    use crate::gp::{Dataset, KernelFamily, KernelSpec};

    fn model() -> GpModel<f64> {
        let x = Matrix::from_rows(&[[0.1, 0.2], [0.8, 0.3], [0.4, 0.9], [0.6, 0.6]]);
        let y = vec![1.0, -0.5, 2.0, 0.3];
        let d = Dataset::new(x, y, Bounds::unit(2)).unwrap();
        let k = KernelSpec::new(KernelFamily::SquaredExponential, vec![0.3, 0.4], 1.2).unwrap();
        GpModel::with_kernel(&d, k).unwrap()
    }

    #[test]
    fn variance_collapses_at_new_point() {
        let m = model();
        let a = m.augment(&[0.5, 0.1]).unwrap();
        let (_, sd) = a.predict_point(&[0.5, 0.1]);
        let k = m.kernel();
        let bound = k.jitter * k.scale * m.output_std().powi(2) * 1.01;
        assert!(sd * sd <= bound, "{} > {}", sd * sd, bound);
    }

    #[test]
    fn mean_is_bitwise_unchanged() {
        let m = model();
        let a = m.augment(&[0.5, 0.1]).unwrap().augment(&[0.2, 0.7]).unwrap();
        for q in [[0.3, 0.3], [0.9, 0.9], [0.05, 0.5]] {
            assert_eq!(a.predict_point(&q).0, m.predict_point(&q).0);
            assert!(a.predict_point(&q).1 <= m.predict_point(&q).1 + 1e-10);
        }
    }

    #[test]
    fn duplicates_rejected() {
        let m = model();
        assert!(matches!(m.augment(&[0.1, 0.2]), Err(Error::Duplicate { .. })));
        let a = m.augment(&[0.5, 0.5]).unwrap();
        assert!(matches!(a.augment(&[0.5, 0.5 + 1e-9]), Err(Error::Duplicate { .. })));
    }
}
