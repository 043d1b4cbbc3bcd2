use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::KernelSpec;
use crate::domain::Bounds;
use crate::linalg::{
    cholesky, cholesky_log_det, cholesky_solve, dot, solve_lower_in_place, sq_dist, Matrix,
};
use crate::{Error, Result, Scalar};

/// Largest jitter tried before a factorization failure is reported.
pub const MAX_JITTER: f64 = 1e-3;

/// Minimum scaled distance between two design rows.
pub const DATASET_MIN_SEPARATION: f64 = 1e-12;

const PAR_PREDICT_THRESHOLD: usize = 2048;

/// Paired design inputs and scalar responses over a bounded domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Dataset<T> {
    inputs: Matrix<T>,
    outputs: Vec<T>,
    bounds: Bounds<T>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(inputs: Matrix<T>, outputs: Vec<T>, bounds: Bounds<T>) -> Result<Self> {
        let mut ds = Self {
            inputs: Matrix::zeros(0, bounds.dim()),
            outputs: Vec::with_capacity(outputs.len()),
            bounds,
        };
        if inputs.nrows() != outputs.len() {
            return Err(Error::InvalidData(format!(
                "{} input rows but {} outputs",
                inputs.nrows(),
                outputs.len()
            )));
        }
        if inputs.nrows() == 0 {
            return Err(Error::InvalidData("dataset needs at least one point".into()));
        }
        for (x, &y) in inputs.rows().zip(&outputs) {
            ds.push(x, y)?;
        }
        Ok(ds)
    }

    /// Appends one observation, enforcing the dataset invariants.
    pub fn push(&mut self, x: &[T], y: T) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::InvalidData(format!(
                "input has {} coordinates, expected {}",
                x.len(),
                self.dim()
            )));
        }
        if !self.bounds.contains(x) {
            return Err(Error::InvalidData(format!("input {x:?} outside bounds")));
        }
        if !y.is_finite() {
            return Err(Error::InvalidData(format!("non-finite output {y} at {x:?}")));
        }
        let u = self.bounds.to_unit(x);
        let tol = T::of(DATASET_MIN_SEPARATION);
        for (i, r) in self.inputs.rows().enumerate() {
            if sq_dist(&self.bounds.to_unit(r), &u).sqrt() <= tol {
                return Err(Error::InvalidData(format!("input {x:?} duplicates row {i}")));
            }
        }
        self.inputs.push_row(x);
        self.outputs.push(y);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn inputs(&self) -> &Matrix<T> {
        &self.inputs
    }

    pub fn outputs(&self) -> &[T] {
        &self.outputs
    }

    pub fn bounds(&self) -> &Bounds<T> {
        &self.bounds
    }

    pub fn unit_inputs(&self) -> Matrix<T> {
        self.bounds.to_unit_rows(&self.inputs)
    }

    /// Mean and standard deviation used to standardize the outputs. The
    /// deviation falls back to 1 for a single point or constant outputs.
    pub fn output_moments(&self) -> (T, T) {
        let n = T::of_usize(self.len());
        let mean = self.outputs.iter().copied().sum::<T>() / n;
        let var = self
            .outputs
            .iter()
            .map(|&y| (y - mean) * (y - mean))
            .sum::<T>()
            / n;
        let sd = var.sqrt();
        let sd = if self.len() < 2 || !(sd > T::zero()) || sd <= mean.abs() * T::epsilon() {
            T::one()
        } else {
            sd
        };
        (mean, sd)
    }

    pub fn standardized_outputs(&self) -> Vec<T> {
        let (m, s) = self.output_moments();
        self.outputs.iter().map(|&y| (y - m) / s).collect()
    }
}

/// Pointwise Gaussian predictive distribution in original output units.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveDist<T> {
    pub mean: Vec<T>,
    pub sd: Vec<T>,
    /// Some query lay outside the model's input bounds.
    pub out_of_bounds: bool,
}

/// `mean + delta·sd` elementwise.
pub fn ucb<T: Scalar>(dist: &PredictiveDist<T>, delta: T) -> Result<Vec<T>> {
    if !(delta >= T::zero()) {
        return Err(Error::ParameterDomain(format!("delta must be nonnegative, got {delta}")));
    }
    Ok(dist
        .mean
        .iter()
        .zip(&dist.sd)
        .map(|(&m, &s)| if s == T::zero() { m } else { m + delta * s })
        .collect())
}

/// Fitted zero-mean GP over unit-cube inputs and standardized outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(
    bound = "T: Scalar",
    into = "GpModelRecord<T>",
    try_from = "GpModelRecord<T>"
)]
pub struct GpModel<T: Scalar> {
    kernel: KernelSpec<T>,
    bounds: Bounds<T>,
    inputs: Matrix<T>,
    outputs: Vec<T>,
    output_mean: T,
    output_std: T,
    chol: Matrix<T>,
    alpha: Vec<T>,
    log_likelihood: T,
}

/// Persisted form: the scaled dataset and hyperparameters. The factorization
/// is rebuilt on load.
#[derive(Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct GpModelRecord<T> {
    bounds: Bounds<T>,
    inputs: Matrix<T>,
    outputs: Vec<T>,
    output_mean: T,
    output_std: T,
    kernel: KernelSpec<T>,
}

impl<T: Scalar> From<GpModel<T>> for GpModelRecord<T> {
    fn from(m: GpModel<T>) -> Self {
        Self {
            bounds: m.bounds,
            inputs: m.inputs,
            outputs: m.outputs,
            output_mean: m.output_mean,
            output_std: m.output_std,
            kernel: m.kernel,
        }
    }
}

impl<T: Scalar> TryFrom<GpModelRecord<T>> for GpModel<T> {
    type Error = Error;
    fn try_from(r: GpModelRecord<T>) -> Result<Self> {
        if r.inputs.nrows() != r.outputs.len() || r.inputs.ncols() != r.bounds.dim() {
            return Err(Error::InvalidData("model record shape mismatch".into()));
        }
        if r.kernel.dim() != r.bounds.dim() {
            return Err(Error::InvalidData("kernel dimension mismatch".into()));
        }
        if !(r.output_std > T::zero()) {
            return Err(Error::InvalidData("output_std must be positive".into()));
        }
        r.kernel.validate()?;
        GpModel::assemble(
            r.kernel,
            r.bounds,
            r.inputs,
            r.outputs,
            r.output_mean,
            r.output_std,
        )
    }
}

/// Correlation matrix of unit-cube rows.
pub(crate) fn correlation_matrix<T: Scalar>(kernel: &KernelSpec<T>, x: &Matrix<T>) -> Matrix<T> {
    let n = x.nrows();
    let mut r = Matrix::zeros(n, n);
    for i in 0..n {
        r[(i, i)] = T::one();
        for j in 0..i {
            let v = kernel.correlation(x.row(i), x.row(j));
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    r
}

/// Cholesky factor of `τ²(R + jitter·I)`, escalating the jitter by 10× up to
/// [`MAX_JITTER`]. Returns the factor and the jitter that succeeded.
pub(crate) fn factorize<T: Scalar>(
    kernel: &KernelSpec<T>,
    corr: &Matrix<T>,
    context: &str,
) -> Result<(Matrix<T>, T)> {
    let n = corr.nrows();
    let max = T::of(MAX_JITTER) * T::of(1.0 + 1e-9);
    let mut jitter = kernel.jitter;
    loop {
        let mut k = corr.map(|v| v * kernel.scale);
        let nug = kernel.scale * jitter;
        for i in 0..n {
            k[(i, i)] = k[(i, i)] + nug;
        }
        match cholesky(&k) {
            Ok(l) => return Ok((l, jitter)),
            Err(e) => {
                let next = if jitter > T::zero() {
                    jitter * T::of(10.0)
                } else {
                    T::of(super::kernel::DEFAULT_JITTER)
                };
                if next > max {
                    return Err(Error::Numerical {
                        context: format!("{context} (n = {n}, scale = {})", kernel.scale),
                        pivot: e.pivot,
                        jitter: jitter.f64(),
                    });
                }
                jitter = next;
            }
        }
    }
}

/// Zero-mean MVN log-likelihood of the standardized outputs under `kernel`,
/// with inputs mapped to the unit cube. Uses `kernel.jitter` as is.
pub fn log_likelihood<T: Scalar>(dataset: &Dataset<T>, kernel: &KernelSpec<T>) -> Result<T> {
    kernel.validate()?;
    if kernel.dim() != dataset.dim() {
        return Err(Error::InvalidData("kernel dimension mismatch".into()));
    }
    let x = dataset.unit_inputs();
    let y = dataset.standardized_outputs();
    let corr = correlation_matrix(kernel, &x);
    let mut k = corr.map(|v| v * kernel.scale);
    for i in 0..k.nrows() {
        k[(i, i)] = k[(i, i)] + kernel.nugget();
    }
    let l = cholesky(&k).map_err(|e| Error::Numerical {
        context: "log_likelihood".into(),
        pivot: e.pivot,
        jitter: kernel.jitter.f64(),
    })?;
    Ok(gaussian_log_density(&l, &y))
}

pub(crate) fn gaussian_log_density<T: Scalar>(l: &Matrix<T>, y: &[T]) -> T {
    let alpha = cholesky_solve(l, y);
    let n = T::of_usize(y.len());
    let half = T::of(0.5);
    -half * dot(y, &alpha) - half * cholesky_log_det(l)
        - half * n * T::of((2.0 * std::f64::consts::PI).ln())
}

impl<T: Scalar> GpModel<T> {
    /// Conditions a GP with fixed hyperparameters on `dataset`. Jitter is
    /// escalated from `kernel.jitter` if the factorization fails.
    pub fn with_kernel(dataset: &Dataset<T>, kernel: KernelSpec<T>) -> Result<Self> {
        kernel.validate()?;
        if kernel.dim() != dataset.dim() {
            return Err(Error::InvalidData(format!(
                "kernel has {} lengthscales for {}-dimensional data",
                kernel.dim(),
                dataset.dim()
            )));
        }
        let (mean, sd) = dataset.output_moments();
        Self::assemble(
            kernel,
            dataset.bounds().clone(),
            dataset.unit_inputs(),
            dataset.standardized_outputs(),
            mean,
            sd,
        )
    }

    fn assemble(
        mut kernel: KernelSpec<T>,
        bounds: Bounds<T>,
        inputs: Matrix<T>,
        outputs: Vec<T>,
        output_mean: T,
        output_std: T,
    ) -> Result<Self> {
        let corr = correlation_matrix(&kernel, &inputs);
        let (chol, jitter) = factorize(&kernel, &corr, "GP factorization")?;
        kernel.jitter = jitter;
        let alpha = cholesky_solve(&chol, &outputs);
        let log_likelihood = gaussian_log_density(&chol, &outputs);
        Ok(Self {
            kernel,
            bounds,
            inputs,
            outputs,
            output_mean,
            output_std,
            chol,
            alpha,
            log_likelihood,
        })
    }

    /// Hyperparameters, with the jitter actually used.
    pub fn kernel(&self) -> &KernelSpec<T> {
        &self.kernel
    }

    pub fn bounds(&self) -> &Bounds<T> {
        &self.bounds
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    /// Design inputs in unit-cube coordinates.
    pub fn unit_inputs(&self) -> &Matrix<T> {
        &self.inputs
    }

    pub fn standardized_outputs(&self) -> &[T] {
        &self.outputs
    }

    pub fn output_mean(&self) -> T {
        self.output_mean
    }

    pub fn output_std(&self) -> T {
        self.output_std
    }

    pub fn chol(&self) -> &Matrix<T> {
        &self.chol
    }

    pub fn alpha(&self) -> &[T] {
        &self.alpha
    }

    /// Log-likelihood of the standardized outputs at the fitted hyperparameters.
    pub fn log_likelihood(&self) -> T {
        self.log_likelihood
    }

    /// Training data in original units.
    pub fn dataset(&self) -> Dataset<T> {
        let x = self.bounds.from_unit_rows(&self.inputs);
        let y = self
            .outputs
            .iter()
            .map(|&v| self.output_mean + self.output_std * v)
            .collect();
        Dataset {
            inputs: x,
            outputs: y,
            bounds: self.bounds.clone(),
        }
    }

    pub(crate) fn cross_cov(&self, u: &[T]) -> Vec<T> {
        self.inputs.rows().map(|r| self.kernel.eval(r, u)).collect()
    }

    /// Predictive mean at a unit-cube point, original units.
    #[inline]
    pub fn predict_mean_unit(&self, u: &[T]) -> T {
        let mut s = T::zero();
        for (r, &a) in self.inputs.rows().zip(&self.alpha) {
            s = s + self.kernel.eval(r, u) * a;
        }
        self.output_mean + self.output_std * s
    }

    /// Predictive mean and standard deviation at a unit-cube point, original
    /// units. The mean is bitwise identical to [`Self::predict_mean_unit`].
    pub fn predict_unit(&self, u: &[T]) -> (T, T) {
        let mean = self.predict_mean_unit(u);
        let mut v = self.cross_cov(u);
        let var = posterior_variance(&self.kernel, &self.chol, &mut v);
        (mean, self.output_std * var.sqrt())
    }

    pub fn predict_point(&self, x: &[T]) -> (T, T) {
        self.predict_unit(&self.bounds.to_unit(x))
    }

    /// Predictive distribution at the rows of `xq` (original units).
    pub fn predict(&self, xq: &Matrix<T>) -> PredictiveDist<T> {
        assert_eq!(xq.ncols(), self.dim(), "query dimension mismatch");
        let out_of_bounds = xq.rows().any(|r| !self.bounds.contains(r));
        let f = |r: &[T]| self.predict_point(r);
        let pairs: Vec<(T, T)> = if xq.nrows() >= PAR_PREDICT_THRESHOLD {
            xq.as_slice()
                .par_chunks(self.dim())
                .map(f)
                .collect()
        } else {
            xq.rows().map(f).collect()
        };
        let (mean, sd) = pairs.into_iter().unzip();
        PredictiveDist {
            mean,
            sd,
            out_of_bounds,
        }
    }

    /// Predictive means only, original units.
    pub fn predict_mean(&self, xq: &Matrix<T>) -> Vec<T> {
        assert_eq!(xq.ncols(), self.dim(), "query dimension mismatch");
        let f = |r: &[T]| self.predict_mean_unit(&self.bounds.to_unit(r));
        if xq.nrows() >= PAR_PREDICT_THRESHOLD {
            xq.as_slice().par_chunks(self.dim()).map(f).collect()
        } else {
            xq.rows().map(f).collect()
        }
    }
}

/// `τ² − kᵀ(LLᵀ)⁻¹k` clamped at 0, in standardized units. Overwrites `k`.
#[inline]
pub(crate) fn posterior_variance<T: Scalar>(kernel: &KernelSpec<T>, l: &Matrix<T>, k: &mut [T]) -> T {
    let n = k.len();
    solve_lower_in_place(l, n, k);
    (kernel.scale - dot(k, k)).max(T::zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::KernelFamily;
    use approx::assert_relative_eq;

    fn line_dataset() -> Dataset<f64> {
        let xs: Vec<f64> = (0..6).map(|i| i as f64 * 0.2).collect();
        let x = Matrix::from_vec(6, 1, xs.clone());
        let y = xs.iter().map(|v| (3.0 * v).sin()).collect();
        Dataset::new(x, y, Bounds::unit(1)).unwrap()
    }

    #[test]
    fn dataset_invariants() {
        let b = Bounds::unit(1);
        assert!(Dataset::new(Matrix::from_vec(1, 1, vec![2.0]), vec![0.0], b.clone()).is_err());
        assert!(Dataset::new(Matrix::from_vec(2, 1, vec![0.5, 0.5]), vec![0.0, 1.0], b.clone()).is_err());
        assert!(Dataset::new(Matrix::zeros(0, 1), vec![], b.clone()).is_err());
        assert!(Dataset::new(Matrix::from_vec(1, 1, vec![0.5]), vec![f64::NAN], b).is_err());
    }

    #[test]
    fn standardization_fallbacks() {
        let b = Bounds::unit(1);
        let d = Dataset::new(Matrix::from_vec(1, 1, vec![0.5]), vec![3.0], b.clone()).unwrap();
        assert_eq!(d.output_moments(), (3.0, 1.0));
        let d = Dataset::new(Matrix::from_vec(2, 1, vec![0.1, 0.5]), vec![3.0, 3.0], b).unwrap();
        assert_eq!(d.output_moments(), (3.0, 1.0));
    }

    #[test]
    fn single_point_log_likelihood() {
        let d = Dataset::new(Matrix::from_vec(1, 1, vec![0.5]), vec![0.0], Bounds::unit(1)).unwrap();
        let k = KernelSpec::new(KernelFamily::SquaredExponential, vec![1.0], 1.0).unwrap();
        let ll = log_likelihood(&d, &k).unwrap();
        let expect = -0.5 * (1.0f64 + 1e-6).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert_relative_eq!(ll, expect, epsilon = 1e-14);
        assert_relative_eq!(ll, -0.918_938_533_7, epsilon = 1e-6);
    }

    #[test]
    fn interpolates_training_points() {
        let d = line_dataset();
        let k = KernelSpec::new(KernelFamily::SquaredExponential, vec![0.1], 1.0).unwrap();
        let m = GpModel::with_kernel(&d, k).unwrap();
        let p = m.predict(d.inputs());
        let (_, s) = d.output_moments();
        let nugget = m.kernel().nugget();
        for i in 0..d.len() {
            // the residual at a training input is exactly nugget·α_i
            let resid = (p.mean[i] - d.outputs()[i]).abs();
            let expect = nugget * m.alpha()[i].abs() * s;
            assert!((resid - expect).abs() <= 1e-9 * expect + 1e-13, "{resid} vs {expect}");
            assert!(p.sd[i] <= 1e-2 * s);
        }
        assert!(!p.out_of_bounds);
    }

    #[test]
    fn out_of_bounds_flag() {
        let d = line_dataset();
        let k = KernelSpec::new(KernelFamily::Matern32, vec![0.3], 1.0).unwrap();
        let m = GpModel::with_kernel(&d, k).unwrap();
        let p = m.predict(&Matrix::from_vec(1, 1, vec![1.5]));
        assert!(p.out_of_bounds);
    }

    #[test]
    fn prior_reversion_far_away() {
        let d = line_dataset();
        let k = KernelSpec::new(KernelFamily::SquaredExponential, vec![0.01], 2.0).unwrap();
        let m = GpModel::with_kernel(&d, k).unwrap();
        // 0.5 lengthscales would be 50 lengthscales from the nearest input
        let (_, sd) = m.predict_point(&[0.9]);
        assert_relative_eq!(sd, 2f64.sqrt() * m.output_std(), max_relative = 0.01);
    }

    #[test]
    fn ucb_arithmetic() {
        let dist = PredictiveDist {
            mean: vec![2800.0, 1.0],
            sd: vec![10.0, 0.0],
            out_of_bounds: false,
        };
        let u = ucb(&dist, 1.645).unwrap();
        assert_relative_eq!(u[0], 2816.45, epsilon = 1e-9);
        assert_eq!(u[1], 1.0);
        assert_eq!(ucb(&dist, 0.0).unwrap(), dist.mean);
        assert!(ucb(&dist, -1.0).is_err());
    }

    #[test]
    fn serde_roundtrip_is_bitwise() {
        let d = line_dataset();
        let k = KernelSpec::new(KernelFamily::Matern32, vec![0.37], 1.3).unwrap();
        let m = GpModel::with_kernel(&d, k).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: GpModel<f64> = serde_json::from_str(&s).unwrap();
        for u in [0.05, 0.33, 0.71] {
            assert_eq!(m.predict_unit(&[u]), back.predict_unit(&[u]));
        }
    }
}
