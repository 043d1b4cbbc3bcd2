use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::Bounds;
use crate::linalg::{cholesky, cholesky_log_det, dot, solve_lower, Matrix};
use crate::normal;
use crate::rng::{standard_normal, uniform};
use crate::{Error, Result, Scalar};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Anything with a (log-)density in original input units.
pub trait Density<T: Scalar>: Sync {
    /// `ln f(x)`; `-inf` outside the support.
    fn ln_density(&self, x: &[T]) -> T;

    fn density(&self, x: &[T]) -> T {
        self.ln_density(x).exp()
    }
}

/// One-dimensional input marginal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Scalar", deny_unknown_fields)]
pub enum Marginal<T> {
    Uniform { lo: T, hi: T },
    /// Normal(mean, sd²) restricted to `[lo, hi]`; bounds may be infinite.
    TruncatedNormal { mean: T, sd: T, lo: T, hi: T },
}

impl<T: Scalar> Marginal<T> {
    pub fn uniform(lo: T, hi: T) -> Result<Self> {
        let m = Marginal::Uniform { lo, hi };
        m.validate()?;
        Ok(m)
    }

    pub fn truncated_normal(mean: T, sd: T, lo: T, hi: T) -> Result<Self> {
        let m = Marginal::TruncatedNormal { mean, sd, lo, hi };
        m.validate()?;
        Ok(m)
    }

    pub fn normal(mean: T, sd: T) -> Result<Self> {
        Self::truncated_normal(mean, sd, T::neg_infinity(), T::infinity())
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Marginal::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::ParameterDomain(format!(
                        "uniform needs finite lo < hi, got [{lo}, {hi}]"
                    )));
                }
            }
            Marginal::TruncatedNormal { mean, sd, lo, hi } => {
                if !(mean.is_finite() && sd.is_finite() && sd > T::zero()) {
                    return Err(Error::ParameterDomain(format!(
                        "truncated normal needs finite mean and sd > 0, got ({mean}, {sd})"
                    )));
                }
                if lo.is_nan() || hi.is_nan() || !(lo < hi) {
                    return Err(Error::ParameterDomain(format!(
                        "truncated normal needs lo < hi, got [{lo}, {hi}]"
                    )));
                }
                if !(self.tn_mass() > 0.0) {
                    return Err(Error::ParameterDomain(format!(
                        "truncation [{lo}, {hi}] holds no probability mass"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn support(&self) -> (T, T) {
        match *self {
            Marginal::Uniform { lo, hi } | Marginal::TruncatedNormal { lo, hi, .. } => (lo, hi),
        }
    }

    fn standardized(&self) -> (f64, f64, f64, f64) {
        match *self {
            Marginal::TruncatedNormal { mean, sd, lo, hi } => {
                let (m, s) = (mean.f64(), sd.f64());
                (m, s, (lo.f64() - m) / s, (hi.f64() - m) / s)
            }
            Marginal::Uniform { .. } => unreachable!("standardized() on a uniform marginal"),
        }
    }

    /// `Φ(b̃) − Φ(ã)`, computed on the side with less cancellation.
    fn tn_mass(&self) -> f64 {
        let (_, _, a, b) = self.standardized();
        if a > 0.0 {
            normal::cdf_f64(-a) - normal::cdf_f64(-b)
        } else {
            normal::cdf_f64(b) - normal::cdf_f64(a)
        }
    }

    pub fn ln_pdf(&self, x: T) -> T {
        let (lo, hi) = self.support();
        if !(x >= lo && x <= hi) {
            return T::neg_infinity();
        }
        match *self {
            Marginal::Uniform { lo, hi } => -(hi - lo).ln(),
            Marginal::TruncatedNormal { .. } => {
                let (m, s, _, _) = self.standardized();
                let z = (x.f64() - m) / s;
                T::of(-0.5 * z * z - LN_SQRT_2PI - s.ln() - self.tn_mass().ln())
            }
        }
    }

    pub fn pdf(&self, x: T) -> T {
        let (lo, hi) = self.support();
        if !(x >= lo && x <= hi) {
            return T::zero();
        }
        match *self {
            Marginal::Uniform { lo, hi } => T::one() / (hi - lo),
            Marginal::TruncatedNormal { .. } => {
                let (m, s, _, _) = self.standardized();
                T::of(normal::pdf_f64((x.f64() - m) / s) / (s * self.tn_mass()))
            }
        }
    }

    pub fn cdf(&self, x: T) -> T {
        let (lo, hi) = self.support();
        if x <= lo {
            return T::zero();
        }
        if x >= hi {
            return T::one();
        }
        match *self {
            Marginal::Uniform { lo, hi } => (x - lo) / (hi - lo),
            Marginal::TruncatedNormal { .. } => {
                let (m, s, a, b) = self.standardized();
                let z = (x.f64() - m) / s;
                let v = if a > 0.0 {
                    (normal::cdf_f64(-a) - normal::cdf_f64(-z))
                        / (normal::cdf_f64(-a) - normal::cdf_f64(-b))
                } else {
                    (normal::cdf_f64(z) - normal::cdf_f64(a)) / (normal::cdf_f64(b) - normal::cdf_f64(a))
                };
                T::of(v.clamp(0.0, 1.0))
            }
        }
    }

    /// Inverse CDF for `u ∈ [0, 1)`.
    pub fn ppf(&self, u: T) -> T {
        match *self {
            Marginal::Uniform { lo, hi } => lo + u * (hi - lo),
            Marginal::TruncatedNormal { lo, hi, .. } => {
                let (m, s, a, b) = self.standardized();
                let u = u.f64();
                let z = if a > 0.0 {
                    let (qa, qb) = (normal::cdf_f64(-a), normal::cdf_f64(-b));
                    -normal::ppf_f64(qa - u * (qa - qb))
                } else {
                    let (pa, pb) = (normal::cdf_f64(a), normal::cdf_f64(b));
                    normal::ppf_f64(pa + u * (pb - pa))
                };
                T::of(m + s * z).max(lo).min(hi)
            }
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        self.ppf(uniform(rng))
    }
}

/// Multivariate normal, optionally restricted to a box. The density inside
/// the box is the untruncated one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", try_from = "MvnRecord<T>", into = "MvnRecord<T>")]
pub struct Mvn<T> {
    mean: Vec<T>,
    cov: Matrix<T>,
    support: Option<Bounds<T>>,
    chol: Matrix<T>,
    log_norm: T,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
struct MvnRecord<T> {
    mean: Vec<T>,
    cov: Matrix<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    support: Option<Bounds<T>>,
}

impl<T: Scalar> From<Mvn<T>> for MvnRecord<T> {
    fn from(m: Mvn<T>) -> Self {
        Self {
            mean: m.mean,
            cov: m.cov,
            support: m.support,
        }
    }
}

impl<T: Scalar> TryFrom<MvnRecord<T>> for Mvn<T> {
    type Error = Error;
    fn try_from(r: MvnRecord<T>) -> Result<Self> {
        Mvn::new(r.mean, r.cov, r.support)
    }
}

impl<T: Scalar> Mvn<T> {
    pub fn new(mean: Vec<T>, cov: Matrix<T>, support: Option<Bounds<T>>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov.nrows() != d || cov.ncols() != d {
            return Err(Error::ParameterDomain("MVN mean/covariance shape mismatch".into()));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::ParameterDomain("MVN mean must be finite".into()));
        }
        let scale = cov.as_slice().iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if !cov.is_symmetric(scale * T::of(1e-12)) {
            return Err(Error::ParameterDomain("MVN covariance must be symmetric".into()));
        }
        if let Some(b) = &support {
            if b.dim() != d {
                return Err(Error::ParameterDomain("MVN support dimension mismatch".into()));
            }
        }
        let chol = cholesky(&cov).map_err(|e| {
            Error::ParameterDomain(format!("MVN covariance not positive definite (pivot {})", e.pivot))
        })?;
        let log_norm = -T::of_usize(d) * T::of(LN_SQRT_2PI) - T::of(0.5) * cholesky_log_det(&chol);
        Ok(Self {
            mean,
            cov,
            support,
            chol,
            log_norm,
        })
    }

    /// Restricted to `mean ± k` marginal standard deviations.
    pub fn with_sd_box(mean: Vec<T>, cov: Matrix<T>, k: T) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d {
            return Err(Error::ParameterDomain("MVN mean/covariance shape mismatch".into()));
        }
        let sd: Vec<T> = (0..d).map(|j| cov[(j, j)].sqrt()).collect();
        let lo = (0..d).map(|j| mean[j] - k * sd[j]).collect();
        let hi = (0..d).map(|j| mean[j] + k * sd[j]).collect();
        let b = Bounds::new(lo, hi)?;
        Self::new(mean, cov, Some(b))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix<T> {
        &self.cov
    }

    pub fn support(&self) -> Option<&Bounds<T>> {
        self.support.as_ref()
    }

    /// Marginal normals truncated to the support box (covariances dropped).
    pub fn marginals(&self) -> Vec<Marginal<T>> {
        (0..self.dim())
            .map(|j| {
                let (lo, hi) = match &self.support {
                    Some(b) => (b.lo()[j], b.hi()[j]),
                    None => (T::neg_infinity(), T::infinity()),
                };
                Marginal::TruncatedNormal {
                    mean: self.mean[j],
                    sd: self.cov[(j, j)].sqrt(),
                    lo,
                    hi,
                }
            })
            .collect()
    }

    fn ln_density(&self, x: &[T]) -> T {
        if let Some(b) = &self.support {
            if !b.contains(x) {
                return T::neg_infinity();
            }
        }
        let r: Vec<T> = x.iter().zip(&self.mean).map(|(&a, &m)| a - m).collect();
        let z = solve_lower(&self.chol, &r);
        self.log_norm - T::of(0.5) * dot(&z, &z)
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let d = self.dim();
        let z: Vec<T> = (0..d).map(|_| standard_normal(rng)).collect();
        (0..d)
            .map(|i| self.mean[i] + dot(&self.chol.row(i)[..=i], &z[..=i]))
            .collect()
    }
}

/// Nominal input distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Scalar")]
pub enum InputDistribution<T> {
    Independent { marginals: Vec<Marginal<T>> },
    MultivariateNormal(Mvn<T>),
}

/// Rejection sampling gives up below this acceptance rate.
const MIN_ACCEPTANCE: f64 = 0.01;
const MIN_PROPOSALS_BEFORE_GIVING_UP: usize = 10_000;

impl<T: Scalar> InputDistribution<T> {
    pub fn independent(marginals: Vec<Marginal<T>>) -> Result<Self> {
        let d = Self::Independent { marginals };
        d.validate()?;
        Ok(d)
    }

    /// Uniform over a box.
    pub fn uniform(bounds: &Bounds<T>) -> Self {
        Self::Independent {
            marginals: bounds
                .lo()
                .iter()
                .zip(bounds.hi())
                .map(|(&lo, &hi)| Marginal::Uniform { lo, hi })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Independent { marginals } => {
                if marginals.is_empty() {
                    return Err(Error::ParameterDomain("distribution needs at least one marginal".into()));
                }
                marginals.iter().try_for_each(Marginal::validate)
            }
            Self::MultivariateNormal(_) => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Independent { marginals } => marginals.len(),
            Self::MultivariateNormal(m) => m.dim(),
        }
    }

    /// Per-dimension marginals used for inverse-CDF warping.
    pub fn marginals(&self) -> Vec<Marginal<T>> {
        match self {
            Self::Independent { marginals } => marginals.clone(),
            Self::MultivariateNormal(m) => m.marginals(),
        }
    }

    /// Bounding box of the support, if finite.
    pub fn support_box(&self) -> Option<Bounds<T>> {
        match self {
            Self::Independent { marginals } => {
                let (lo, hi): (Vec<T>, Vec<T>) = marginals.iter().map(Marginal::support).unzip();
                Bounds::new(lo, hi).ok()
            }
            Self::MultivariateNormal(m) => m.support().cloned(),
        }
    }

    /// Componentwise inverse-CDF map of a `[0, 1)^d` design.
    pub fn warp(&self, design: &Matrix<T>) -> Result<Matrix<T>> {
        let margs = self.marginals();
        if design.ncols() != margs.len() {
            return Err(Error::InvalidData("design dimension mismatch".into()));
        }
        if let Some(v) = design
            .as_slice()
            .iter()
            .find(|&&v| !(v >= T::zero() && v < T::one()))
        {
            return Err(Error::ParameterDomain(format!("design value {v} outside [0, 1)")));
        }
        let mut out = design.clone();
        for i in 0..out.nrows() {
            for (v, m) in out.row_mut(i).iter_mut().zip(&margs) {
                *v = m.ppf(*v);
            }
        }
        Ok(out)
    }

    /// `n` iid draws.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Matrix<T>> {
        let d = self.dim();
        let mut out = Matrix::zeros(0, d);
        match self {
            Self::Independent { marginals } => {
                let mut row = vec![T::zero(); d];
                for _ in 0..n {
                    for (v, m) in row.iter_mut().zip(marginals) {
                        *v = m.sample(rng);
                    }
                    out.push_row(&row);
                }
            }
            Self::MultivariateNormal(m) => {
                let mut proposals = 0usize;
                while out.nrows() < n {
                    let x = m.draw(rng);
                    proposals += 1;
                    if m.support().is_none_or(|b| b.contains(&x)) {
                        out.push_row(&x);
                    } else if proposals >= MIN_PROPOSALS_BEFORE_GIVING_UP
                        && (out.nrows() as f64) < MIN_ACCEPTANCE * proposals as f64
                    {
                        return Err(Error::Config(format!(
                            "MVN support box rejects {} of {proposals} proposals",
                            proposals - out.nrows()
                        )));
                    }
                }
            }
        }
        Ok(out)
    }
}

impl<T: Scalar> Density<T> for InputDistribution<T> {
    fn ln_density(&self, x: &[T]) -> T {
        match self {
            Self::Independent { marginals } => marginals
                .iter()
                .zip(x)
                .map(|(m, &v)| m.ln_pdf(v))
                .sum(),
            Self::MultivariateNormal(m) => m.ln_density(x),
        }
    }

    fn density(&self, x: &[T]) -> T {
        match self {
            Self::Independent { marginals } => marginals
                .iter()
                .zip(x)
                .fold(T::one(), |p, (m, &v)| p * m.pdf(v)),
            Self::MultivariateNormal(m) => m.ln_density(x).exp(),
        }
    }
}
