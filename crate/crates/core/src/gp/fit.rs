use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kernel::{
    correlation_log_theta_factor, scaled_sq_dist, KernelFamily, KernelSpec, DEFAULT_JITTER,
};
use super::model::{correlation_matrix, factorize, Dataset, GpModel};
use crate::linalg::{cholesky_inverse, cholesky_log_det, cholesky_solve, dot, Matrix};
use crate::optimize::{minimize_box, MinimizeOptions};
use crate::sampling::lhs;
use crate::{Error, Result, Scalar};

/// Multi-start maximum-likelihood settings. Bounds are in unit-cube units
/// for lengthscales and standardized units for the scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub restarts: usize,
    pub lengthscale_bounds: (f64, f64),
    pub scale_bounds: (f64, f64),
    pub jitter: f64,
    pub max_iter: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            lengthscale_bounds: (1e-2, 10.0),
            scale_bounds: (1e-2, 1e2),
            jitter: DEFAULT_JITTER,
            max_iter: 100,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |(a, b): (f64, f64)| a > 0.0 && a.is_finite() && b.is_finite() && a <= b;
        if self.restarts == 0 {
            return Err(Error::Config("fit.restarts must be at least 1".into()));
        }
        if !ok(self.lengthscale_bounds) || !ok(self.scale_bounds) {
            return Err(Error::Config("fit bounds must satisfy 0 < lo <= hi".into()));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::Config("fit.jitter must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Negative log-likelihood and its gradient with respect to
/// `(log θ_1, …, log θ_d, log τ²)`. Returns `None` when the covariance cannot
/// be factorized.
pub(crate) fn nll_and_gradient<T: Scalar>(
    x: &Matrix<T>,
    y: &[T],
    family: KernelFamily,
    jitter: T,
    log_params: &[T],
) -> Option<(T, Vec<T>)> {
    let d = x.ncols();
    let n = x.nrows();
    let kernel = KernelSpec {
        family,
        lengthscales: log_params[..d].iter().map(|v| v.exp()).collect(),
        scale: log_params[d].exp(),
        jitter,
    };
    let corr = correlation_matrix(&kernel, x);
    let (l, _) = factorize(&kernel, &corr, "likelihood").ok()?;
    let alpha = cholesky_solve(&l, y);
    let half = T::of(0.5);
    let yay = dot(y, &alpha);
    let nll = half * yay
        + half * cholesky_log_det(&l)
        + half * T::of_usize(n) * T::of((2.0 * std::f64::consts::PI).ln());

    let kinv = cholesky_inverse(&l);
    let theta = &kernel.lengthscales;
    let mut grad = vec![T::zero(); d + 1];
    for a in 0..n {
        let xa = x.row(a);
        for b in 0..a {
            let xb = x.row(b);
            let w = alpha[a] * alpha[b] - kinv[(a, b)];
            let r2 = scaled_sq_dist(theta, xa, xb);
            let c = w * kernel.scale * correlation_log_theta_factor(family, r2);
            for j in 0..d {
                let dj = (xa[j] - xb[j]) / theta[j];
                grad[j] = grad[j] - c * dj * dj;
            }
        }
    }
    grad[d] = -half * (yay - T::of_usize(n));
    if !nll.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return None;
    }
    Some((nll, grad))
}

/// Log-likelihood of `dataset` under `kernel` and its gradient in
/// `(log θ, log τ²)`, on unit-cube inputs and standardized outputs.
pub fn log_likelihood_gradient<T: Scalar>(
    dataset: &Dataset<T>,
    kernel: &KernelSpec<T>,
) -> Result<(T, Vec<T>)> {
    kernel.validate()?;
    let mut p: Vec<T> = kernel.lengthscales.iter().map(|t| t.ln()).collect();
    p.push(kernel.scale.ln());
    let (nll, g) = nll_and_gradient(
        &dataset.unit_inputs(),
        &dataset.standardized_outputs(),
        kernel.family,
        kernel.jitter,
        &p,
    )
    .ok_or_else(|| Error::Numerical {
        context: "log_likelihood_gradient".into(),
        pivot: 0,
        jitter: kernel.jitter.f64(),
    })?;
    Ok((-nll, g.into_iter().map(|v| -v).collect()))
}

/// Maximum-likelihood fit: box-constrained quasi-Newton over log
/// hyperparameters from an LHS of `config.restarts` starting points.
pub fn fit<T: Scalar, R: Rng + ?Sized>(
    dataset: &Dataset<T>,
    family: KernelFamily,
    config: &FitConfig,
    rng: &mut R,
) -> Result<GpModel<T>> {
    config.validate()?;
    if dataset.len() < 2 {
        return Err(Error::InvalidData(format!(
            "fitting needs at least 2 points, got {}",
            dataset.len()
        )));
    }
    let d = dataset.dim();
    let x = dataset.unit_inputs();
    let y = dataset.standardized_outputs();
    let jitter = T::of(config.jitter);

    let mut lo = vec![T::of(config.lengthscale_bounds.0.ln()); d];
    let mut hi = vec![T::of(config.lengthscale_bounds.1.ln()); d];
    lo.push(T::of(config.scale_bounds.0.ln()));
    hi.push(T::of(config.scale_bounds.1.ln()));

    let starts: Matrix<T> = lhs(config.restarts, d + 1, rng);
    let opts = MinimizeOptions {
        max_iter: config.max_iter,
        gtol: T::of(1e-5),
        ftol: T::of(1e-10),
        ..Default::default()
    };

    let mut best: Option<(T, Vec<T>)> = None;
    for s in starts.rows() {
        let x0: Vec<T> = (0..=d).map(|j| lo[j] + s[j] * (hi[j] - lo[j])).collect();
        let objective = |p: &[T]| {
            nll_and_gradient(&x, &y, family, jitter, p)
                .unwrap_or_else(|| (T::infinity(), vec![T::zero(); d + 1]))
        };
        let m = minimize_box(objective, &x0, &lo, &hi, &opts);
        if m.value.is_finite() && best.as_ref().is_none_or(|(v, _)| m.value < *v) {
            best = Some((m.value, m.x));
        }
    }

    let Some((_, p)) = best else {
        return Err(Error::Numerical {
            context: format!("hyperparameter search: no start factorizable (n = {})", dataset.len()),
            pivot: 0,
            jitter: super::model::MAX_JITTER,
        });
    };
    let kernel = KernelSpec {
        family,
        lengthscales: p[..d].iter().map(|v| v.exp()).collect(),
        scale: p[d].exp(),
        jitter,
    };
    GpModel::with_kernel(dataset, kernel)
}
