use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::Bounds;
use crate::linalg::{cholesky, cholesky_log_det, solve_lower, solve_lower_in_place, sq_dist, symmetric_eigen, Matrix};
use crate::rng::{standard_normal, uniform};
use crate::sampling::Density;
use crate::{Error, Result, Scalar};

/// Floor on covariance eigenvalues, in scaled coordinates.
pub const COVARIANCE_FLOOR: f64 = 1e-6;
/// EM stops once the mean per-point log-likelihood gains less than this.
pub const EM_TOLERANCE: f64 = 1e-6;
pub const EM_MAX_ITER: usize = 200;
pub const EM_RESTARTS: usize = 3;
/// Held-out scores closer than this count as tied; the smaller κ wins.
const CV_TIE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceType {
    #[default]
    Diagonal,
    Full,
}

/// Gaussian mixture over `[0,1]^d`-scaled coordinates, exposed as a density
/// in original units.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "BiasRecord<T>", into = "BiasRecord<T>", bound = "T: Scalar")]
pub struct BiasDistribution<T: Scalar> {
    weights: Vec<T>,
    means: Matrix<T>,
    covariances: Vec<Matrix<T>>,
    covariance_type: CovarianceType,
    scaling: Bounds<T>,
    chols: Vec<Matrix<T>>,
    // ln w_k − ½ ln|C_k| − (d/2) ln 2π − Σ ln width
    log_norms: Vec<T>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
struct BiasRecord<T> {
    weights: Vec<T>,
    means: Matrix<T>,
    covariances: Vec<Matrix<T>>,
    covariance_type: CovarianceType,
    scaling: Bounds<T>,
}

impl<T: Scalar> TryFrom<BiasRecord<T>> for BiasDistribution<T> {
    type Error = Error;

    fn try_from(r: BiasRecord<T>) -> Result<Self> {
        Self::new(r.weights, r.means, r.covariances, r.covariance_type, r.scaling)
    }
}

impl<T: Scalar> From<BiasDistribution<T>> for BiasRecord<T> {
    fn from(b: BiasDistribution<T>) -> Self {
        Self {
            weights: b.weights,
            means: b.means,
            covariances: b.covariances,
            covariance_type: b.covariance_type,
            scaling: b.scaling,
        }
    }
}

impl<T: Scalar> BiasDistribution<T> {
    /// Means and covariances are in the coordinates `scaling.to_unit` maps to.
    pub fn new(
        weights: Vec<T>,
        means: Matrix<T>,
        covariances: Vec<Matrix<T>>,
        covariance_type: CovarianceType,
        scaling: Bounds<T>,
    ) -> Result<Self> {
        let k = weights.len();
        let d = scaling.dim();
        if k == 0 {
            return Err(Error::ParameterDomain("mixture needs at least one component".into()));
        }
        if means.nrows() != k || means.ncols() != d || covariances.len() != k {
            return Err(Error::ParameterDomain(format!(
                "mixture shapes disagree: {k} weights, {}x{} means, {} covariances, d = {d}",
                means.nrows(),
                means.ncols(),
                covariances.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
            return Err(Error::ParameterDomain("mixture weights must be finite and non-negative".into()));
        }
        let total: T = weights.iter().copied().sum();
        if (total - T::one()).abs() > T::of(1e-12).max(T::epsilon() * T::of(8.0)) {
            return Err(Error::ParameterDomain(format!("mixture weights sum to {total}, not 1")));
        }
        if means.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::ParameterDomain("mixture means must be finite".into()));
        }
        let ln_width: T = scaling.lo().iter().zip(scaling.hi()).map(|(&a, &b)| (b - a).ln()).sum();
        let half_ln_2pi = T::of(0.5 * (2.0 * std::f64::consts::PI).ln());
        let mut chols = Vec::with_capacity(k);
        let mut log_norms = Vec::with_capacity(k);
        for (c, &w) in covariances.iter().zip(&weights) {
            if c.nrows() != d || c.ncols() != d || !c.is_symmetric(T::of(1e-12)) {
                return Err(Error::ParameterDomain("covariance blocks must be symmetric d×d".into()));
            }
            if covariance_type == CovarianceType::Diagonal {
                for i in 0..d {
                    for j in 0..d {
                        if i != j && c[(i, j)] != T::zero() {
                            return Err(Error::ParameterDomain("diagonal covariance has off-diagonal entries".into()));
                        }
                    }
                }
            }
            let l = cholesky(c).map_err(|e| Error::Numerical {
                context: "mixture covariance".into(),
                pivot: e.pivot,
                jitter: 0.0,
            })?;
            log_norms.push(w.ln() - T::of(0.5) * cholesky_log_det(&l) - T::of_usize(d) * half_ln_2pi - ln_width);
            chols.push(l);
        }
        Ok(Self {
            weights,
            means,
            covariances,
            covariance_type,
            scaling,
            chols,
            log_norms,
        })
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.scaling.dim()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn means(&self) -> &Matrix<T> {
        &self.means
    }

    pub fn covariances(&self) -> &[Matrix<T>] {
        &self.covariances
    }

    pub fn covariance_type(&self) -> CovarianceType {
        self.covariance_type
    }

    pub fn scaling(&self) -> &Bounds<T> {
        &self.scaling
    }

    /// Component `k`'s log-density (weight included) at a scaled point.
    fn ln_component_scaled(&self, k: usize, u: &[T]) -> T {
        let diff: Vec<T> = u.iter().zip(self.means.row(k)).map(|(&a, &b)| a - b).collect();
        let z = solve_lower(&self.chols[k], &diff);
        self.log_norms[k] - T::of(0.5) * z.iter().map(|&v| v * v).sum::<T>()
    }

    /// Weighted per-component densities at `x` (original units).
    pub fn component_densities(&self, x: &[T]) -> Vec<T> {
        let u = self.scaling.to_unit(x);
        (0..self.n_components()).map(|k| self.ln_component_scaled(k, &u).exp()).collect()
    }

    /// `n` draws in original units.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Matrix<T> {
        let d = self.dim();
        let mut cum = Vec::with_capacity(self.weights.len());
        let mut acc = T::zero();
        for &w in &self.weights {
            acc = acc + w;
            cum.push(acc);
        }
        let last_positive = self.weights.iter().rposition(|&w| w > T::zero()).unwrap_or(0);
        let mut out = Matrix::zeros(0, d);
        let mut z = vec![T::zero(); d];
        let mut u = vec![T::zero(); d];
        for _ in 0..n {
            let r = uniform::<T, _>(rng) * acc;
            let k = cum.iter().position(|&c| r < c).unwrap_or(last_positive);
            for v in z.iter_mut() {
                *v = standard_normal(rng);
            }
            let l = &self.chols[k];
            for (i, ui) in u.iter_mut().enumerate() {
                let li = l.row(i);
                *ui = self.means[(k, i)] + (0..=i).map(|j| li[j] * z[j]).sum::<T>();
            }
            out.push_row(&self.scaling.from_unit(&u));
        }
        out
    }
}

impl<T: Scalar> Density<T> for BiasDistribution<T> {
    fn ln_density(&self, x: &[T]) -> T {
        let u = self.scaling.to_unit(x);
        let lc: Vec<T> = (0..self.n_components()).map(|k| self.ln_component_scaled(k, &u)).collect();
        log_sum_exp(&lc)
    }
}

/// `f★(x)` in original units.
pub fn gmm_density<T: Scalar>(bias: &BiasDistribution<T>, x: &[T]) -> T {
    bias.density(x)
}

pub fn gmm_sample<T: Scalar, R: Rng + ?Sized>(bias: &BiasDistribution<T>, n: usize, rng: &mut R) -> Matrix<T> {
    bias.sample(n, rng)
}

fn log_sum_exp<T: Scalar>(v: &[T]) -> T {
    let m = v.iter().copied().fold(T::neg_infinity(), T::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<T>().ln()
}

/// Settings for [`fit_gmm`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmmSettings {
    pub max_components: usize,
    pub cv_folds: usize,
    pub covariance_type: CovarianceType,
}

/// Result of a mixture fit, with the model-selection record.
#[derive(Clone, Debug)]
pub struct GmmFit<T: Scalar> {
    pub bias: BiasDistribution<T>,
    /// Mean held-out log-likelihood per candidate κ (index 0 is κ = 1).
    pub cv_scores: Vec<f64>,
    /// Mean per-point training log-likelihood after each EM iteration of the
    /// final fit's best restart.
    pub em_trace: Vec<f64>,
}

/// Mixture fit in scaled coordinates. `points` are in original units and
/// `scaling` maps them to the unit cube.
pub fn fit_gmm_scaled<T: Scalar, R: Rng + ?Sized>(
    points: &Matrix<T>,
    scaling: &Bounds<T>,
    settings: &GmmSettings,
    rng: &mut R,
) -> Result<GmmFit<T>> {
    let n = points.nrows();
    if n < 2 {
        return Err(Error::InsufficientFailures { found: n });
    }
    if settings.max_components == 0 {
        return Err(Error::Config("max_clusters must be at least 1".into()));
    }
    if points.ncols() != scaling.dim() {
        return Err(Error::InvalidData("points and scaling differ in dimension".into()));
    }
    let u = scaling.to_unit_rows(points);
    let k_max = settings.max_components.min(n / 2).max(1);
    let folds = settings.cv_folds.clamp(2, n);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let fold_of: Vec<usize> = {
        let mut f = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            f[i] = pos % folds;
        }
        f
    };
    let seeds: Vec<u64> = (0..k_max).map(|_| rng.random()).collect();

    let cv_scores: Vec<f64> = if k_max == 1 {
        vec![0.0]
    } else {
        (1..=k_max)
            .into_par_iter()
            .map(|k| {
                let mut krng = ChaCha8Rng::seed_from_u64(seeds[k - 1]);
                let mut total = 0.0;
                for f in 0..folds {
                    let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
                    let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
                    let em = em_best(&u.select_rows(&train), k, settings.covariance_type, &mut krng);
                    total += em.total_ll(&u.select_rows(&test));
                }
                total / n as f64
            })
            .collect()
    };

    let mut best_k = 1;
    for k in 2..=k_max {
        if cv_scores[k - 1] > cv_scores[best_k - 1] + CV_TIE_TOLERANCE {
            best_k = k;
        }
    }
    let em = em_best(&u, best_k, settings.covariance_type, rng);
    let bias = BiasDistribution::new(em.weights, em.means, em.covs, settings.covariance_type, scaling.clone())?;
    Ok(GmmFit {
        bias,
        cv_scores,
        em_trace: em.trace,
    })
}

/// Mixture fit scaled by the bounding box of `points`; a zero-width side
/// keeps unit width.
pub fn fit_gmm<T: Scalar, R: Rng + ?Sized>(
    points: &Matrix<T>,
    settings: &GmmSettings,
    rng: &mut R,
) -> Result<GmmFit<T>> {
    if points.nrows() < 2 {
        return Err(Error::InsufficientFailures { found: points.nrows() });
    }
    let d = points.ncols();
    let mut lo = vec![T::infinity(); d];
    let mut hi = vec![T::neg_infinity(); d];
    for r in points.rows() {
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
    fit_gmm_scaled(points, &Bounds::new(lo, hi)?, settings, rng)
}

/// One EM solution in scaled coordinates.
#[derive(Clone, Debug)]
pub(crate) struct EmResult<T: Scalar> {
    pub weights: Vec<T>,
    pub means: Matrix<T>,
    pub covs: Vec<Matrix<T>>,
    pub trace: Vec<f64>,
}

impl<T: Scalar> EmResult<T> {
    /// Summed log-likelihood of the rows of `u`.
    fn total_ll(&self, u: &Matrix<T>) -> f64 {
        let p = prepare(&self.weights, &self.means, &self.covs);
        mean_ll(&p, u) * u.nrows() as f64
    }

    fn final_ll(&self) -> f64 {
        self.trace.last().copied().unwrap_or(f64::NEG_INFINITY)
    }
}

struct Prepared<'a, T: Scalar> {
    chols: Vec<Matrix<T>>,
    log_norms: Vec<T>,
    means: &'a Matrix<T>,
}

fn prepare<'a, T: Scalar>(weights: &[T], means: &'a Matrix<T>, covs: &[Matrix<T>]) -> Prepared<'a, T> {
    let d = means.ncols();
    let half_ln_2pi = T::of(0.5 * (2.0 * std::f64::consts::PI).ln());
    let mut chols = Vec::with_capacity(weights.len());
    let mut log_norms = Vec::with_capacity(weights.len());
    for (c, &w) in covs.iter().zip(weights) {
        let l = cholesky(c).expect("floored covariance is positive definite");
        log_norms.push(w.ln() - T::of(0.5) * cholesky_log_det(&l) - T::of_usize(d) * half_ln_2pi);
        chols.push(l);
    }
    Prepared { chols, log_norms, means }
}

/// Log mixture density; per-component log joint densities land in `lc`.
fn ln_joint_into<T: Scalar>(p: &Prepared<'_, T>, u: &[T], lc: &mut [T], z: &mut [T]) -> T {
    let d = u.len();
    for (k, out) in lc.iter_mut().enumerate() {
        for ((zj, &uj), &mj) in z.iter_mut().zip(u).zip(p.means.row(k)) {
            *zj = uj - mj;
        }
        solve_lower_in_place(&p.chols[k], d, z);
        *out = p.log_norms[k] - T::of(0.5) * z.iter().map(|&v| v * v).sum::<T>();
    }
    log_sum_exp(lc)
}

/// Mean per-point log-likelihood of the rows of `u`.
fn mean_ll<T: Scalar>(p: &Prepared<'_, T>, u: &Matrix<T>) -> f64 {
    let mut lc = vec![T::zero(); p.chols.len()];
    let mut z = vec![T::zero(); u.ncols()];
    u.rows().map(|r| ln_joint_into(p, r, &mut lc, &mut z).f64()).sum::<f64>() / u.nrows() as f64
}

/// Sample covariance about `mean` with weights `r`, eigenvalues clipped
/// from below at the floor. Clipping is the exact constrained maximizer, so
/// EM stays monotone.
fn floored_covariance<T: Scalar>(
    u: &Matrix<T>,
    r: &[T],
    total: T,
    mean: &[T],
    kind: CovarianceType,
) -> Matrix<T> {
    let d = u.ncols();
    let floor = T::of(COVARIANCE_FLOOR);
    let mut c = Matrix::zeros(d, d);
    for (row, &ri) in u.rows().zip(r) {
        if ri == T::zero() {
            continue;
        }
        for a in 0..d {
            let da = row[a] - mean[a];
            match kind {
                CovarianceType::Diagonal => c[(a, a)] = c[(a, a)] + ri * da * da,
                CovarianceType::Full => {
                    for b in 0..=a {
                        c[(a, b)] = c[(a, b)] + ri * da * (row[b] - mean[b]);
                    }
                }
            }
        }
    }
    for a in 0..d {
        for b in 0..=a {
            let v = if total > T::zero() { c[(a, b)] / total } else { T::zero() };
            c[(a, b)] = v;
            c[(b, a)] = v;
        }
    }
    match kind {
        CovarianceType::Diagonal => {
            for a in 0..d {
                c[(a, a)] = c[(a, a)].max(floor);
            }
            c
        }
        CovarianceType::Full => {
            let (w, v) = symmetric_eigen(&c);
            if w.iter().all(|&x| x >= floor) && cholesky(&c).is_ok() {
                return c;
            }
            let w: Vec<T> = w.into_iter().map(|x| x.max(floor)).collect();
            symmetrize(Matrix::from_fn(d, d, |i, j| {
                (0..d).map(|k| v[(i, k)] * w[k] * v[(j, k)]).sum()
            }))
        }
    }
}

fn symmetrize<T: Scalar>(mut m: Matrix<T>) -> Matrix<T> {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = (m[(i, j)] + m[(j, i)]) * T::of(0.5);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// k-means++ seeding: indices of `k` rows of `u`.
fn kmeans_pp<T: Scalar, R: Rng + ?Sized>(u: &Matrix<T>, k: usize, rng: &mut R) -> Vec<usize> {
    let n = u.nrows();
    let mut centers = vec![rng.random_range(0..n)];
    let mut d2: Vec<T> = u.rows().map(|r| sq_dist(r, u.row(centers[0]))).collect();
    while centers.len() < k {
        let total: T = d2.iter().copied().sum();
        let next = if total > T::zero() {
            let target = uniform::<T, _>(rng) * total;
            let mut acc = T::zero();
            let mut pick = n - 1;
            for (i, &v) in d2.iter().enumerate() {
                acc = acc + v;
                if target < acc {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(next);
        for (i, r) in u.rows().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, u.row(next)));
        }
    }
    centers
}

/// M-step from responsibilities `resp` (n×k).
fn m_step<T: Scalar>(
    u: &Matrix<T>,
    resp: &Matrix<T>,
    kind: CovarianceType,
    prev: Option<&EmResult<T>>,
) -> (Vec<T>, Matrix<T>, Vec<Matrix<T>>) {
    let (n, d) = (u.nrows(), u.ncols());
    let k = resp.ncols();
    let mut weights = Vec::with_capacity(k);
    let mut means = Matrix::zeros(k, d);
    let mut covs = Vec::with_capacity(k);
    for c in 0..k {
        let r: Vec<T> = (0..n).map(|i| resp[(i, c)]).collect();
        let nk: T = r.iter().copied().sum();
        weights.push(nk / T::of_usize(n));
        if nk > T::zero() {
            for (row, &ri) in u.rows().zip(&r) {
                for j in 0..d {
                    means[(c, j)] = means[(c, j)] + ri * row[j];
                }
            }
            for j in 0..d {
                means[(c, j)] = means[(c, j)] / nk;
            }
            covs.push(floored_covariance(u, &r, nk, means.row(c), kind));
        } else if let Some(p) = prev {
            // empty component: parameters are irrelevant at zero weight
            means.row_mut(c).copy_from_slice(p.means.row(c));
            covs.push(p.covs[c].clone());
        } else {
            covs.push(floored_covariance(u, &r, nk, means.row(c), kind));
        }
    }
    let total: T = weights.iter().copied().sum();
    for w in weights.iter_mut() {
        *w = *w / total;
    }
    (weights, means, covs)
}

/// One EM run with `k` components from a k-means++ start.
pub(crate) fn em<T: Scalar, R: Rng + ?Sized>(
    u: &Matrix<T>,
    k: usize,
    kind: CovarianceType,
    rng: &mut R,
) -> EmResult<T> {
    let n = u.nrows();
    let centers = kmeans_pp(u, k, rng);
    let mut resp = Matrix::zeros(n, k);
    for (i, r) in u.rows().enumerate() {
        let mut best = 0;
        let mut bd = T::infinity();
        for (c, &ci) in centers.iter().enumerate() {
            let dd = sq_dist(r, u.row(ci));
            if dd < bd {
                bd = dd;
                best = c;
            }
        }
        resp[(i, best)] = T::one();
    }
    let (mut weights, mut means, covs) = m_step(u, &resp, kind, None);
    // seeds that captured no points start at their own location
    for (c, &ci) in centers.iter().enumerate() {
        if weights[c] == T::zero() {
            means.row_mut(c).copy_from_slice(u.row(ci));
            weights[c] = T::one() / T::of_usize(n);
        }
    }
    let total: T = weights.iter().copied().sum();
    for w in weights.iter_mut() {
        *w = *w / total;
    }

    let mut trace = Vec::new();
    let mut lc = vec![T::zero(); k];
    let mut z = vec![T::zero(); u.ncols()];
    let mut current = EmResult {
        weights,
        means,
        covs,
        trace: Vec::new(),
    };
    for _ in 0..EM_MAX_ITER {
        let p = prepare(&current.weights, &current.means, &current.covs);
        let mut ll = 0.0;
        for (i, r) in u.rows().enumerate() {
            let lse = ln_joint_into(&p, r, &mut lc, &mut z);
            ll += lse.f64();
            for c in 0..k {
                resp[(i, c)] = (lc[c] - lse).exp();
            }
        }
        let ll = ll / n as f64;
        let converged = trace.last().is_some_and(|&prev: &f64| (ll - prev).abs() < EM_TOLERANCE);
        trace.push(ll);
        if converged {
            break;
        }
        let (w, m, c) = m_step(u, &resp, kind, Some(&current));
        current.weights = w;
        current.means = m;
        current.covs = c;
    }
    // the last trace entry scores the returned parameters
    let ll = mean_ll(&prepare(&current.weights, &current.means, &current.covs), u);
    if trace.last() != Some(&ll) {
        trace.push(ll);
    }
    current.trace = trace;
    current
}

/// Best of [`EM_RESTARTS`] runs by final training log-likelihood.
pub(crate) fn em_best<T: Scalar, R: Rng + ?Sized>(
    u: &Matrix<T>,
    k: usize,
    kind: CovarianceType,
    rng: &mut R,
) -> EmResult<T> {
    let mut best: Option<EmResult<T>> = None;
    for _ in 0..EM_RESTARTS {
        let r = em(u, k, kind, rng);
        if best.as_ref().is_none_or(|b| r.final_ll() > b.final_ll()) {
            best = Some(r);
        }
    }
    best.expect("at least one restart")
}
