//! Gaussian-process surrogates.

mod augment;
mod fit;
mod kernel;
mod model;

pub use augment::{AugmentedModel, AUGMENT_DUPLICATE_TOLERANCE};
pub use fit::{fit, log_likelihood_gradient, FitConfig};
pub use kernel::{KernelFamily, KernelSpec, DEFAULT_JITTER};
pub use model::{
    log_likelihood, ucb, Dataset, GpModel, PredictiveDist, DATASET_MIN_SEPARATION, MAX_JITTER,
};

use crate::Scalar;

/// Read access shared by fitted and augmented models.
pub trait Surrogate<T: Scalar>: Sync {
    fn model(&self) -> &GpModel<T>;

    /// Mean and standard deviation at a unit-cube point, original units.
    fn predict_unit(&self, u: &[T]) -> (T, T);

    /// Scaled distance from `u` to the nearest design (or pending) point.
    fn nearest_distance(&self, u: &[T]) -> T;
}

impl<T: Scalar> Surrogate<T> for GpModel<T> {
    fn model(&self) -> &GpModel<T> {
        self
    }

    fn predict_unit(&self, u: &[T]) -> (T, T) {
        GpModel::predict_unit(self, u)
    }

    fn nearest_distance(&self, u: &[T]) -> T {
        self.unit_inputs()
            .rows()
            .map(|r| crate::linalg::sq_dist(r, u))
            .fold(T::infinity(), T::min)
            .sqrt()
    }
}

impl<T: Scalar> Surrogate<T> for AugmentedModel<'_, T> {
    fn model(&self) -> &GpModel<T> {
        self.base()
    }

    fn predict_unit(&self, u: &[T]) -> (T, T) {
        AugmentedModel::predict_unit(self, u)
    }

    fn nearest_distance(&self, u: &[T]) -> T {
        AugmentedModel::nearest_distance(self, u)
    }
}
