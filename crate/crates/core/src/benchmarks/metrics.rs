use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::Bounds;
use crate::gp::GpModel;
use crate::limit::LimitState;
use crate::linalg::{sq_dist, Matrix};
use crate::mfis::failure_indices;
use crate::sampling::{lhs, McEstimate};
use crate::{Error, Result, Scalar};

const PAR_EVAL_THRESHOLD: usize = 1024;
/// Block length of the streamed LHS scans.
pub const SCAN_BLOCK: usize = 1 << 18;

/// A dense test design with true pass/fail labels.
#[derive(Clone, Debug)]
pub struct LabeledTestSet<T: Scalar> {
    inputs: Matrix<T>,
    labels: Vec<bool>,
    bounds: Bounds<T>,
}

impl<T: Scalar> LabeledTestSet<T> {
    /// Labels `inputs` (original units, inside `bounds`) with `truth`.
    pub fn new<F>(inputs: Matrix<T>, bounds: Bounds<T>, truth: F, limit: &LimitState<T>) -> Self
    where
        F: Fn(&[T]) -> T + Sync,
    {
        let d = inputs.ncols().max(1);
        let label = |r: &[T]| limit.fails(truth(r));
        let labels = if inputs.nrows() >= PAR_EVAL_THRESHOLD {
            inputs.as_slice().par_chunks(d).map(label).collect()
        } else {
            inputs.rows().map(label).collect()
        };
        Self { inputs, labels, bounds }
    }

    /// `n`-point LHS over `bounds`, labeled by `truth`.
    pub fn lhs<F, R>(n: usize, bounds: &Bounds<T>, truth: F, limit: &LimitState<T>, rng: &mut R) -> Self
    where
        F: Fn(&[T]) -> T + Sync,
        R: Rng + ?Sized,
    {
        let x = bounds.from_unit_rows(&lhs(n, bounds.dim(), rng));
        Self::new(x, bounds.clone(), truth, limit)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn inputs(&self) -> &Matrix<T> {
        &self.inputs
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn bounds(&self) -> &Bounds<T> {
        &self.bounds
    }

    pub fn n_failures(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    /// True failure volume: failing fraction times box volume.
    pub fn true_volume(&self) -> f64 {
        self.n_failures() as f64 / self.len().max(1) as f64 * self.bounds.volume().f64()
    }
}

/// Confusion counts and volume statistics of a surrogate classifier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub true_positive: u64,
    pub false_negative: u64,
    pub true_negative: u64,
    pub false_positive: u64,
    /// `None` when the test set has no true failures.
    pub sensitivity: Option<f64>,
    /// `None` when the test set has no true passes.
    pub specificity: Option<f64>,
    pub predicted_volume: f64,
    pub true_volume: f64,
    /// `None` when the true volume is zero.
    pub relative_volume_error: Option<f64>,
    pub n_test: u64,
}

impl ClassificationReport {
    pub fn from_labels(truth: &[bool], predicted: &[bool], box_volume: f64) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::InvalidData(format!(
                "{} labels against {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let (mut tp, mut fneg, mut tn, mut fp) = (0u64, 0u64, 0u64, 0u64);
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t, p) {
                (true, true) => tp += 1,
                (true, false) => fneg += 1,
                (false, false) => tn += 1,
                (false, true) => fp += 1,
            }
        }
        let n = truth.len() as u64;
        let frac = |k: u64| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        let ratio = |a: u64, b: u64| (a + b > 0).then(|| a as f64 / (a + b) as f64);
        let predicted_volume = frac(tp + fp) * box_volume;
        let true_volume = frac(tp + fneg) * box_volume;
        Ok(Self {
            true_positive: tp,
            false_negative: fneg,
            true_negative: tn,
            false_positive: fp,
            sensitivity: ratio(tp, fneg),
            specificity: ratio(tn, fp),
            predicted_volume,
            true_volume,
            relative_volume_error: (true_volume > 0.0)
                .then(|| (predicted_volume - true_volume).abs() / true_volume),
            n_test: n,
        })
    }
}

/// Scores `model` on `test`, predicting failure where the mean shifted
/// `delta` standard deviations toward failure crosses the threshold.
pub fn classify_report<T: Scalar>(
    model: &GpModel<T>,
    test: &LabeledTestSet<T>,
    limit: &LimitState<T>,
    delta: T,
) -> ClassificationReport {
    let mut predicted = vec![false; test.len()];
    for i in failure_indices(model, &test.inputs, limit, delta) {
        predicted[i] = true;
    }
    ClassificationReport::from_labels(&test.labels, &predicted, test.bounds.volume().f64())
        .expect("one prediction per test point")
}

/// Sizes of the connected components of `points` (unit-cube coordinates)
/// when points closer than `radius` are linked, largest first.
pub fn failure_components<T: Scalar>(points: &Matrix<T>, radius: T) -> Vec<usize> {
    let n = points.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let r2 = radius * radius;
    // sort along the first axis so the inner loop can stop early
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points[(a, 0)].partial_cmp(&points[(b, 0)]).unwrap_or(std::cmp::Ordering::Equal));
    for (ai, &a) in order.iter().enumerate() {
        for &b in &order[ai + 1..] {
            if points[(b, 0)] - points[(a, 0)] > radius {
                break;
            }
            if sq_dist(points.row(a), points.row(b)) <= r2 {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut sizes = vec![0usize; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        sizes[r] += 1;
    }
    let mut out: Vec<usize> = sizes.into_iter().filter(|&s| s > 0).collect();
    out.sort_unstable_by(|a, b| b.cmp(a));
    out
}

/// Result of a streamed uniform scan.
#[derive(Clone, Debug)]
pub struct FailureScan<T: Scalar> {
    pub estimate: McEstimate,
    /// Failing points in unit-cube coordinates, if requested.
    pub failures: Matrix<T>,
    pub box_volume: f64,
}

impl<T: Scalar> FailureScan<T> {
    pub fn volume(&self) -> f64 {
        self.estimate.alpha_hat * self.box_volume
    }
}

/// Failure fraction of `f` over `bounds` from `n` points laid out as
/// consecutive LHS blocks of [`SCAN_BLOCK`] points. Blocks are drawn
/// serially and evaluated in parallel.
pub fn scan_failures<T, F, R>(
    f: F,
    bounds: &Bounds<T>,
    limit: &LimitState<T>,
    n: usize,
    keep_failures: bool,
    rng: &mut R,
) -> Result<FailureScan<T>>
where
    T: Scalar,
    F: Fn(&[T]) -> T + Sync,
    R: Rng + ?Sized,
{
    if n == 0 {
        return Err(Error::Config("scan needs at least one point".into()));
    }
    let d = bounds.dim();
    let mut failures = Matrix::zeros(0, d);
    let mut count = 0u64;
    let mut remaining = n;
    while remaining > 0 {
        let b = remaining.min(SCAN_BLOCK);
        let u: Matrix<T> = lhs(b, d, rng);
        let flags: Vec<bool> = u
            .as_slice()
            .par_chunks(d)
            .map(|r| limit.fails(f(&bounds.from_unit(r))))
            .collect();
        for (i, &fl) in flags.iter().enumerate() {
            if fl {
                count += 1;
                if keep_failures {
                    failures.push_row(u.row(i));
                }
            }
        }
        remaining -= b;
    }
    Ok(FailureScan {
        estimate: McEstimate::from_counts(count, n as u64)?,
        failures,
        box_volume: bounds.volume().f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{Dataset, KernelFamily, KernelSpec};
    use crate::rng::substream;

    #[test]
    fn perfect_and_empty_classifiers() {
        let truth = [true, false, true, false, false];
        let r = ClassificationReport::from_labels(&truth, &truth, 10.0).unwrap();
        assert_eq!((r.sensitivity, r.specificity), (Some(1.0), Some(1.0)));
        assert_eq!(r.relative_volume_error, Some(0.0));
        let none = [false; 5];
        let r = ClassificationReport::from_labels(&truth, &none, 10.0).unwrap();
        assert_eq!((r.sensitivity, r.specificity), (Some(0.0), Some(1.0)));
        assert_eq!(r.true_positive + r.false_negative + r.true_negative + r.false_positive, 5);
        let r = ClassificationReport::from_labels(&none, &none, 10.0).unwrap();
        assert_eq!(r.sensitivity, None);
        assert_eq!(r.relative_volume_error, None);
    }

    #[test]
    fn constant_model_below_threshold() {
        let x = Matrix::from_vec(4, 1, vec![0.0, 0.3, 0.6, 1.0]);
        let d = Dataset::new(x, vec![0.0; 4], Bounds::unit(1)).unwrap();
        let m = GpModel::with_kernel(&d, KernelSpec::new(KernelFamily::SquaredExponential, vec![0.3], 1.0).unwrap())
            .unwrap();
        let limit = LimitState::above(0.5);
        let test = LabeledTestSet::lhs(200, &Bounds::unit(1), |x: &[f64]| x[0], &limit, &mut substream(1, 0, 0));
        let r = classify_report(&m, &test, &limit, 0.0);
        assert_eq!(r.sensitivity, Some(0.0));
        assert_eq!(r.specificity, Some(1.0));
        assert_eq!(r.n_test, 200);
    }

    #[test]
    fn components_of_separated_blobs() {
        let mut pts = Matrix::zeros(0, 2);
        for c in [[0.1, 0.1], [0.5, 0.5], [0.9, 0.1]] {
            for k in 0..10 {
                pts.push_row(&[c[0] + 0.003 * k as f64, c[1]]);
            }
        }
        assert_eq!(failure_components(&pts, 0.05), vec![10, 10, 10]);
        assert_eq!(failure_components(&pts, 1.0), vec![30]);
    }

    #[test]
    fn scan_counts_a_half_space() {
        let limit = LimitState::above(0.75);
        let s = scan_failures(|x: &[f64]| x[0], &Bounds::unit(2), &limit, 100_000, true, &mut substream(2, 0, 0))
            .unwrap();
        assert!((s.estimate.alpha_hat - 0.25).abs() < 1e-4);
        assert_eq!(s.failures.nrows() as u64, s.estimate.n_failures);
    }
}
