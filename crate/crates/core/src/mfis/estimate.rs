use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gmm::{fit_gmm_scaled, BiasDistribution, CovarianceType, GmmSettings};
use crate::domain::Bounds;
use crate::gp::GpModel;
use crate::limit::LimitState;
use crate::linalg::Matrix;
use crate::rng::{stage, substream};
use crate::sampling::{Density, InputDistribution};
use crate::{Error, Result, Scalar};

const SURROGATE_BLOCK: usize = 65_536;
const PAR_CLASSIFY_THRESHOLD: usize = 1024;

/// Multifidelity importance-sampling settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MfisConfig {
    /// Surrogate samples drawn from the nominal distribution.
    pub m_surrogate: usize,
    /// High-fidelity evaluations drawn from the bias distribution.
    pub m_star: usize,
    #[serde(default = "default_max_clusters")]
    pub max_clusters: usize,
    #[serde(default = "default_cv_folds")]
    pub cv_folds: usize,
    #[serde(default)]
    pub covariance_type: CovarianceType,
    /// Confidence multiplier of the failure classifier; 0 uses the mean.
    #[serde(default)]
    pub classifier_delta: f64,
    /// Predicted failures beyond this are subsampled before the mixture fit.
    #[serde(default = "default_max_fit_points")]
    pub max_fit_points: usize,
}

fn default_max_clusters() -> usize {
    10
}

fn default_cv_folds() -> usize {
    5
}

fn default_max_fit_points() -> usize {
    5000
}

impl MfisConfig {
    pub fn new(m_surrogate: usize, m_star: usize) -> Self {
        Self {
            m_surrogate,
            m_star,
            max_clusters: default_max_clusters(),
            cv_folds: default_cv_folds(),
            covariance_type: CovarianceType::Diagonal,
            classifier_delta: 0.0,
            max_fit_points: default_max_fit_points(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_star < 1 || self.m_surrogate < self.m_star {
            return Err(Error::Config(format!(
                "need m_surrogate >= m_star >= 1, got {} and {}",
                self.m_surrogate, self.m_star
            )));
        }
        if self.max_clusters < 1 {
            return Err(Error::Config("max_clusters must be at least 1".into()));
        }
        if self.cv_folds < 2 {
            return Err(Error::Config("cv_folds must be at least 2".into()));
        }
        if !(self.classifier_delta >= 0.0 && self.classifier_delta.is_finite()) {
            return Err(Error::Config("classifier_delta must be finite and non-negative".into()));
        }
        if self.max_fit_points < 2 {
            return Err(Error::Config("max_fit_points must be at least 2".into()));
        }
        Ok(())
    }

    pub fn gmm_settings(&self) -> GmmSettings {
        GmmSettings {
            max_components: self.max_clusters,
            cv_folds: self.cv_folds,
            covariance_type: self.covariance_type,
        }
    }
}

/// Importance-sampling estimate of a failure probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfisEstimate {
    pub alpha_hat: f64,
    /// Sample standard deviation of the weighted indicators over `√M★`.
    pub std_error: f64,
    /// Normal-approximation 95% interval, clamped at zero.
    pub ci95: (f64, f64),
    pub n_failures_observed: u64,
    pub m_star: u64,
    /// Largest importance weight among observed failures.
    pub max_weight: f64,
    /// No failure contributed to the estimate.
    pub no_failures: bool,
}

impl MfisEstimate {
    /// Estimate reported when the surrogate finds nothing to sample around.
    pub fn zero(m_star: u64) -> Self {
        Self {
            alpha_hat: 0.0,
            std_error: 0.0,
            ci95: (0.0, 0.0),
            n_failures_observed: 0,
            m_star,
            max_weight: 0.0,
            no_failures: true,
        }
    }

    /// Share of high-fidelity draws that failed.
    pub fn failure_proportion(&self) -> f64 {
        if self.m_star == 0 {
            0.0
        } else {
            self.n_failures_observed as f64 / self.m_star as f64
        }
    }
}

/// Rows of `x` the surrogate predicts to fail, with `delta` standard
/// deviations added toward failure.
pub fn classify_failures<T: Scalar>(
    model: &GpModel<T>,
    x: &Matrix<T>,
    limit: &LimitState<T>,
    delta: T,
) -> Matrix<T> {
    let idx = failure_indices(model, x, limit, delta);
    x.select_rows(&idx)
}

/// Indices behind [`classify_failures`].
pub fn failure_indices<T: Scalar>(model: &GpModel<T>, x: &Matrix<T>, limit: &LimitState<T>, delta: T) -> Vec<usize> {
    let bounds = model.bounds();
    let kernel = model.kernel();
    // no posterior sd exceeds the prior sd
    let sd_cap = (kernel.scale + kernel.nugget()).sqrt() * model.output_std();
    let test = |row: &[T]| {
        let u = bounds.to_unit(row);
        let mean = model.predict_mean_unit(&u);
        if limit.fails(mean) {
            return true;
        }
        if delta <= T::zero() || !limit.fails(limit.toward_failure(mean, delta * sd_cap)) {
            return false;
        }
        let (_, sd) = model.predict_unit(&u);
        limit.fails(limit.toward_failure(mean, delta * sd))
    };
    let d = x.ncols().max(1);
    let flags: Vec<bool> = if x.nrows() >= PAR_CLASSIFY_THRESHOLD {
        x.as_slice().par_chunks(d).map(test).collect()
    } else {
        x.rows().map(test).collect()
    };
    flags.iter().enumerate().filter(|(_, &f)| f).map(|(i, _)| i).collect()
}

/// Importance-sampling estimate from responses `values` at `xstar` drawn
/// from `bias`, reweighted to `nominal`.
pub fn mfis_estimate<T, F, B>(
    values: &[T],
    xstar: &Matrix<T>,
    nominal: &F,
    bias: &B,
    limit: &LimitState<T>,
) -> Result<MfisEstimate>
where
    T: Scalar,
    F: Density<T> + ?Sized,
    B: Density<T> + ?Sized,
{
    let m = xstar.nrows();
    if values.len() != m {
        return Err(Error::InvalidData(format!("{} responses for {m} samples", values.len())));
    }
    if m == 0 {
        return Err(Error::InvalidData("importance sampling needs at least one sample".into()));
    }
    let mut terms = vec![0.0f64; m];
    let mut n_failures = 0u64;
    let mut max_weight = 0.0f64;
    for (i, (x, &y)) in xstar.rows().zip(values).enumerate() {
        let ln_b = bias.ln_density(x);
        if !(ln_b > T::neg_infinity()) {
            return Err(Error::SupportViolation { index: i });
        }
        if !limit.fails(y) {
            continue;
        }
        n_failures += 1;
        let ln_f = nominal.ln_density(x);
        if ln_f == T::neg_infinity() {
            continue;
        }
        let w = (ln_f - ln_b).exp().f64();
        terms[i] = w;
        max_weight = max_weight.max(w);
    }
    let mf = m as f64;
    let sum: f64 = terms.iter().sum();
    let alpha_hat = sum / mf;
    let std_error = if m > 1 {
        let ss: f64 = terms.iter().map(|t| (t - alpha_hat) * (t - alpha_hat)).sum();
        (ss / (mf - 1.0)).sqrt() / mf.sqrt()
    } else {
        0.0
    };
    let half = 1.96 * std_error;
    Ok(MfisEstimate {
        alpha_hat,
        std_error,
        ci95: ((alpha_hat - half).max(0.0), alpha_hat + half),
        n_failures_observed: n_failures,
        m_star: m as u64,
        max_weight,
        no_failures: alpha_hat == 0.0,
    })
}

/// Everything the pipeline produced before the high-fidelity stage.
#[derive(Clone, Debug)]
pub struct BiasFit<T: Scalar> {
    /// `None` when fewer than two surrogate failures were found.
    pub bias: Option<BiasDistribution<T>>,
    pub n_surrogate_failures: usize,
    pub cv_scores: Vec<f64>,
}

/// Scaling box for the mixture: the nominal support when bounded, else the
/// bounding box of the predicted failures.
fn scaling_box<T: Scalar>(nominal: &InputDistribution<T>, failures: &Matrix<T>) -> Result<Bounds<T>> {
    if let Some(b) = nominal.support_box() {
        return Ok(b);
    }
    let d = failures.ncols();
    let mut lo = vec![T::infinity(); d];
    let mut hi = vec![T::neg_infinity(); d];
    for r in failures.rows() {
        for j in 0..d {
            lo[j] = lo[j].min(r[j]);
            hi[j] = hi[j].max(r[j]);
        }
    }
    for j in 0..d {
        if !(hi[j] > lo[j]) {
            hi[j] = lo[j] + T::one();
        }
    }
    Bounds::new(lo, hi)
}

/// Surrogate classification over `m_surrogate` nominal draws, then the
/// cross-validated mixture fit.
pub fn fit_bias<T: Scalar>(
    model: &GpModel<T>,
    nominal: &InputDistribution<T>,
    limit: &LimitState<T>,
    config: &MfisConfig,
    seed: u64,
    repetition: u64,
) -> Result<BiasFit<T>> {
    config.validate()?;
    if nominal.dim() != model.dim() {
        return Err(Error::Config("nominal distribution and model differ in dimension".into()));
    }
    let mut rng = substream(seed, repetition, stage::MFIS_SURROGATE);
    let delta = T::of(config.classifier_delta);
    let mut failures = Matrix::zeros(0, model.dim());
    let mut remaining = config.m_surrogate;
    while remaining > 0 {
        let b = remaining.min(SURROGATE_BLOCK);
        let x = nominal.sample(b, &mut rng)?;
        for i in failure_indices(model, &x, limit, delta) {
            failures.push_row(x.row(i));
        }
        remaining -= b;
    }
    let n_found = failures.nrows();
    if n_found < 2 {
        return Ok(BiasFit {
            bias: None,
            n_surrogate_failures: n_found,
            cv_scores: Vec::new(),
        });
    }
    let mut grng = substream(seed, repetition, stage::MFIS_GMM);
    if n_found > config.max_fit_points {
        let mut keep = sample_indices(&mut grng, n_found, config.max_fit_points).into_vec();
        keep.sort_unstable();
        failures = failures.select_rows(&keep);
    }
    let scaling = scaling_box(nominal, &failures)?;
    let fit = fit_gmm_scaled(&failures, &scaling, &config.gmm_settings(), &mut grng)?;
    Ok(BiasFit {
        bias: Some(fit.bias),
        n_surrogate_failures: n_found,
        cv_scores: fit.cv_scores,
    })
}

/// `m_star` draws from the bias distribution for high-fidelity evaluation.
pub fn draw_biased<T: Scalar>(bias: &BiasDistribution<T>, m_star: usize, seed: u64, repetition: u64) -> Matrix<T> {
    let mut rng = substream(seed, repetition, stage::MFIS_BIASED);
    bias.sample(m_star, &mut rng)
}

#[derive(Clone, Debug)]
pub struct MfisOutcome<T: Scalar> {
    pub estimate: MfisEstimate,
    pub bias: Option<BiasDistribution<T>>,
    pub n_surrogate_failures: usize,
}

/// Full pipeline against an in-process simulator. High-fidelity
/// evaluations run in parallel.
pub fn run_mfis<T, S>(
    model: &GpModel<T>,
    nominal: &InputDistribution<T>,
    limit: &LimitState<T>,
    simulator: S,
    config: &MfisConfig,
    seed: u64,
    repetition: u64,
) -> Result<MfisOutcome<T>>
where
    T: Scalar,
    S: Fn(&[T]) -> T + Sync,
{
    let fit = fit_bias(model, nominal, limit, config, seed, repetition)?;
    let Some(bias) = fit.bias else {
        return Ok(MfisOutcome {
            estimate: MfisEstimate::zero(0),
            bias: None,
            n_surrogate_failures: fit.n_surrogate_failures,
        });
    };
    let xstar = draw_biased(&bias, config.m_star, seed, repetition);
    let d = xstar.ncols();
    let values: Vec<T> = xstar.as_slice().par_chunks(d).map(&simulator).collect();
    if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Simulator {
            input: xstar.row(i).iter().map(|v| v.f64()).collect(),
            value: v.f64(),
        });
    }
    let estimate = mfis_estimate(&values, &xstar, nominal, &bias, limit)?;
    Ok(MfisOutcome {
        estimate,
        bias: Some(bias),
        n_surrogate_failures: fit.n_surrogate_failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{Dataset, KernelFamily, KernelSpec};
    use crate::sampling::{mc_failure, Marginal};

    fn linear_model() -> GpModel<f64> {
        let xs = vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
        let y = xs.iter().map(|x| x * 2.0).collect();
        let d = Dataset::new(Matrix::from_vec(6, 1, xs), y, Bounds::unit(1)).unwrap();
        GpModel::with_kernel(&d, KernelSpec::new(KernelFamily::SquaredExponential, vec![0.5], 1.0).unwrap()).unwrap()
    }

    #[test]
    fn mean_below_threshold_gives_empty_set() {
        let m = linear_model();
        let x = Matrix::from_fn(50, 1, |i, _| i as f64 / 49.0);
        let f = classify_failures(&m, &x, &LimitState::above(5.0), 0.0);
        assert_eq!(f.nrows(), 0);
    }

    #[test]
    fn ucb_set_contains_mean_set() {
        let m = linear_model();
        let x = Matrix::from_fn(400, 1, |i, _| i as f64 / 399.0);
        for limit in [LimitState::above(1.3), LimitState::below(0.7)] {
            let a = failure_indices(&m, &x, &limit, 0.0);
            let b = failure_indices(&m, &x, &limit, 1.645);
            assert!(a.iter().all(|i| b.contains(i)));
            assert!(b.len() >= a.len());
            // the shortcut matches a direct evaluation
            let p = m.predict(&x);
            let direct: Vec<usize> = (0..400)
                .filter(|&i| limit.fails(limit.toward_failure(p.mean[i], 1.645 * p.sd[i])))
                .collect();
            assert_eq!(b, direct);
        }
    }

    #[test]
    fn unit_weights_reproduce_monte_carlo_bitwise() {
        let nominal = InputDistribution::independent(vec![
            Marginal::normal(0.0, 1.0).unwrap(),
            Marginal::normal(0.0, 1.0).unwrap(),
        ])
        .unwrap();
        let x = nominal.sample(5000, &mut substream(1, 0, 0)).unwrap();
        let y: Vec<f64> = x.rows().map(|r| r[0] + r[1]).collect();
        let limit = LimitState::above(1.5);
        let est = mfis_estimate(&y, &x, &nominal, &nominal, &limit).unwrap();
        let mc = mc_failure(&y, &limit, y.len()).unwrap();
        assert_eq!(est.alpha_hat.to_bits(), mc.alpha_hat.to_bits());
        assert_eq!(est.max_weight, 1.0);
        assert_eq!(est.n_failures_observed, mc.n_failures);
    }

    #[test]
    fn no_failures_flags_and_zero_interval() {
        let nominal = InputDistribution::uniform(&Bounds::unit(1));
        let x = Matrix::from_vec(3, 1, vec![0.1, 0.2, 0.3]);
        let est = mfis_estimate(&[0.0, 0.0, 0.0], &x, &nominal, &nominal, &LimitState::above(1.0)).unwrap();
        assert_eq!(est.alpha_hat, 0.0);
        assert_eq!(est.ci95, (0.0, 0.0));
        assert!(est.no_failures);
    }

    #[test]
    fn zero_bias_density_is_a_support_violation() {
        let nominal = InputDistribution::uniform(&Bounds::unit(1));
        let bias = InputDistribution::uniform(&Bounds::new(vec![0.0], vec![0.5]).unwrap());
        let x = Matrix::from_vec(2, 1, vec![0.1, 0.7]);
        let r = mfis_estimate(&[1.0, 1.0], &x, &nominal, &bias, &LimitState::above(0.5));
        assert_eq!(r, Err(Error::SupportViolation { index: 1 }));
    }

    #[test]
    fn config_invariants() {
        assert!(MfisConfig::new(10, 20).validate().is_err());
        assert!(MfisConfig::new(10, 0).validate().is_err());
        assert!(MfisConfig::new(1000, 100).validate().is_ok());
    }
}
