use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ecl::ecl;
use crate::gp::{GpModel, Surrogate};
use crate::limit::LimitState;
use crate::linalg::Matrix;
use crate::optimize::{central_difference, minimize_box, MinimizeOptions};
use crate::sampling::lhs;
use crate::{Error, Result, Scalar};

/// Finite-difference step for the continuous stage (unit-cube units).
pub const LOCAL_FD_STEP: f64 = 1e-6;
/// Iteration cap of the continuous stage.
pub const LOCAL_MAX_ITER: usize = 200;

const PAR_SCORE_THRESHOLD: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerStrategy {
    /// Fresh candidate LHS, argmax, then a continuous local ascent.
    #[default]
    TwoStage,
    /// One candidate pool per design; argmax only, chosen points removed.
    SingleCandidateSet,
    /// Fresh candidate LHS per pick; argmax only.
    FreshCandidateSets,
}

/// One selected design point, in unit-cube coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Acquisition<T> {
    pub unit: Vec<T>,
    pub value: T,
    /// Best stage-1 candidate and its ECL.
    pub candidate_unit: Vec<T>,
    pub candidate_value: T,
    /// The continuous stage beat the best candidate.
    pub improved: bool,
    /// The ECL surface was identically zero over the candidates.
    pub degenerate: bool,
    /// The duplicate policy replaced the optimizer's choice.
    pub reverted: bool,
}

/// ECL of every row of `candidates` (unit coordinates).
pub fn score_candidates<T: Scalar, S: Surrogate<T>>(
    model: &S,
    limit: &LimitState<T>,
    candidates: &Matrix<T>,
) -> Vec<T> {
    let f = |u: &[T]| {
        let (m, s) = model.predict_unit(u);
        ecl(m, s, limit)
    };
    if candidates.nrows() >= PAR_SCORE_THRESHOLD {
        candidates
            .as_slice()
            .par_chunks(candidates.ncols())
            .map(f)
            .collect()
    } else {
        candidates.rows().map(f).collect()
    }
}

/// Index of the largest score; the lowest index wins ties.
fn argmax<T: Scalar>(scores: &[T]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Stage 1 over a given candidate set, optionally followed by stage 2.
fn choose<T: Scalar, S: Surrogate<T>>(
    model: &S,
    limit: &LimitState<T>,
    candidates: &Matrix<T>,
    scores: &[T],
    local: bool,
) -> Acquisition<T> {
    let best = argmax(scores);
    if scores[best] <= T::zero() {
        // flat criterion: explore the candidate farthest from the design
        let dist: Vec<T> = candidates.rows().map(|u| model.nearest_distance(u)).collect();
        let far = argmax(&dist);
        let u = candidates.row(far).to_vec();
        return Acquisition {
            unit: u.clone(),
            value: scores[far],
            candidate_unit: u,
            candidate_value: scores[far],
            improved: false,
            degenerate: true,
            reverted: false,
        };
    }
    let start = candidates.row(best).to_vec();
    let mut acq = Acquisition {
        unit: start.clone(),
        value: scores[best],
        candidate_unit: start,
        candidate_value: scores[best],
        improved: false,
        degenerate: false,
        reverted: false,
    };
    if local {
        let (u, v) = local_ascent(model, limit, &acq.candidate_unit);
        if v > acq.candidate_value {
            acq.unit = u;
            acq.value = v;
            acq.improved = true;
        }
    }
    acq
}

/// Box-constrained ascent of ECL over the unit cube from `start`.
pub fn local_ascent<T: Scalar, S: Surrogate<T>>(
    model: &S,
    limit: &LimitState<T>,
    start: &[T],
) -> (Vec<T>, T) {
    let d = start.len();
    let h = T::of(LOCAL_FD_STEP);
    let mut neg = |u: &[T]| {
        let (m, s) = model.predict_unit(u);
        -ecl(m, s, limit)
    };
    let objective = |u: &[T]| {
        let v = neg(u);
        let g = central_difference(&mut neg, u, h);
        (v, g)
    };
    let opts = MinimizeOptions {
        max_iter: LOCAL_MAX_ITER,
        gtol: T::of(1e-10),
        ftol: T::of(1e-12),
        ..Default::default()
    };
    let m = minimize_box(objective, start, &vec![T::zero(); d], &vec![T::one(); d], &opts);
    (m.x, -m.value)
}

/// Two-stage entropy optimization: argmax ECL over a fresh LHS of
/// `n_candidates`, then a continuous local ascent from the winner.
pub fn entropy_opt<T: Scalar, S: Surrogate<T>, R: Rng + ?Sized>(
    model: &S,
    limit: &LimitState<T>,
    n_candidates: usize,
    rng: &mut R,
) -> Acquisition<T> {
    let cands = lhs(n_candidates, model.model().dim(), rng);
    let scores = score_candidates(model, limit, &cands);
    choose(model, limit, &cands, &scores, true)
}

/// Settings shared by the batch selectors.
#[derive(Clone, Copy, Debug)]
pub struct BatchSettings<T> {
    pub n_batch: usize,
    pub n_candidates: usize,
    pub duplicate_tolerance: T,
    pub strategy: OptimizerStrategy,
}

/// Greedy batch: picks one point at a time against a variance-only update
/// of `model`. `pool` holds the shared candidate set (unit coordinates) for
/// the single-candidate-set strategy; chosen rows are removed from it.
pub fn select_batch<T: Scalar, R: Rng + ?Sized>(
    model: &GpModel<T>,
    limit: &LimitState<T>,
    settings: &BatchSettings<T>,
    rng: &mut R,
    mut pool: Option<&mut Matrix<T>>,
) -> Result<Vec<Acquisition<T>>> {
    let d = model.dim();
    let tol = settings.duplicate_tolerance;
    let mut aug = model.augmented();
    let mut out = Vec::with_capacity(settings.n_batch);
    for _ in 0..settings.n_batch {
        let (cands, local) = match settings.strategy {
            OptimizerStrategy::TwoStage => (lhs(settings.n_candidates, d, rng), true),
            OptimizerStrategy::FreshCandidateSets => (lhs(settings.n_candidates, d, rng), false),
            OptimizerStrategy::SingleCandidateSet => {
                let p = pool
                    .as_deref()
                    .expect("single-candidate-set strategy needs a pool");
                if p.nrows() == 0 {
                    return Err(Error::AcquisitionExhausted("candidate pool is empty".into()));
                }
                (p.clone(), false)
            }
        };
        let scores = score_candidates(&aug, limit, &cands);
        let mut acq = choose(&aug, limit, &cands, &scores, local);

        if aug.nearest_distance(&acq.unit) <= tol {
            acq.reverted = true;
            if aug.nearest_distance(&acq.candidate_unit) > tol {
                acq.unit = acq.candidate_unit.clone();
                acq.value = acq.candidate_value;
            } else {
                let mut order: Vec<usize> = (0..cands.nrows()).collect();
                order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal));
                let Some(&i) = order
                    .iter()
                    .find(|&&i| aug.nearest_distance(cands.row(i)) > tol)
                else {
                    return Err(Error::AcquisitionExhausted(format!(
                        "all {} candidates duplicate existing points",
                        cands.nrows()
                    )));
                };
                acq.unit = cands.row(i).to_vec();
                acq.value = scores[i];
            }
        }

        if let Some(p) = pool.as_deref_mut() {
            if settings.strategy == OptimizerStrategy::SingleCandidateSet {
                let keep: Vec<usize> = (0..p.nrows()).filter(|&i| p.row(i) != acq.unit.as_slice()).collect();
                *p = p.select_rows(&keep);
            }
        }
        aug = aug.augment_unit(&acq.unit)?;
        out.push(acq);
    }
    Ok(out)
}

/// Greedy batch with the two-stage optimizer.
pub fn entropy_batch<T: Scalar, R: Rng + ?Sized>(
    model: &GpModel<T>,
    limit: &LimitState<T>,
    n_batch: usize,
    n_candidates: usize,
    duplicate_tolerance: T,
    rng: &mut R,
) -> Result<Vec<Acquisition<T>>> {
    let settings = BatchSettings {
        n_batch,
        n_candidates,
        duplicate_tolerance,
        strategy: OptimizerStrategy::TwoStage,
    };
    select_batch(model, limit, &settings, rng, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Bounds;
    use crate::gp::{Dataset, KernelFamily, KernelSpec};
    use crate::rng::substream;

    fn model_1d() -> GpModel<f64> {
        let xs = vec![0.0, 0.25, 0.5, 0.75, 1.0];
        let y = xs.iter().map(|x| 2.0 * x).collect();
        let d = Dataset::new(Matrix::from_vec(5, 1, xs), y, Bounds::unit(1)).unwrap();
        let k = KernelSpec::new(KernelFamily::SquaredExponential, vec![0.3], 1.0).unwrap();
        GpModel::with_kernel(&d, k).unwrap()
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[0.1, 0.3, 0.3, 0.2]), 1);
    }

    #[test]
    fn single_crossing_dominates_candidates() {
        let m = model_1d();
        let l = LimitState::above(0.9);
        let mut rng = substream(11, 0, 0);
        let cands: Matrix<f64> = lhs(10, 1, &mut rng);
        let scores = score_candidates(&m, &l, &cands);
        let acq = choose(&m, &l, &cands, &scores, true);
        let z = |u: &[f64]| {
            let (mu, s) = m.predict_unit(u);
            (mu - 0.9).abs() / s
        };
        for c in cands.rows() {
            assert!(z(&acq.unit) <= z(c) + 1e-12);
        }
        assert!(acq.value >= acq.candidate_value);
    }

    #[test]
    fn lone_candidate_is_forced() {
        let m = model_1d();
        let l = LimitState::above(0.9);
        let s = BatchSettings {
            n_batch: 1,
            n_candidates: 1,
            duplicate_tolerance: 1e-8,
            strategy: OptimizerStrategy::FreshCandidateSets,
        };
        let mut r1 = substream(2, 0, 0);
        let got = select_batch(&m, &l, &s, &mut r1, None).unwrap();
        let cand: Matrix<f64> = lhs(1, 1, &mut substream(2, 0, 0));
        assert_eq!(got[0].unit, cand.row(0));
    }

    #[test]
    fn batch_of_one_equals_entropy_opt() {
        let m = model_1d();
        let l = LimitState::above(0.9);
        let a = entropy_opt(&m, &l, 10, &mut substream(5, 0, 0));
        let b = entropy_batch(&m, &l, 1, 10, 1e-8, &mut substream(5, 0, 0)).unwrap();
        assert_eq!(a, b[0]);
    }

    #[test]
    fn degenerate_surface_flags() {
        let x = Matrix::from_vec(3, 1, vec![0.0, 0.5, 1.0]);
        let d = Dataset::new(x, vec![0.0, 0.0, 0.0], Bounds::unit(1)).unwrap();
        let k = KernelSpec::new(KernelFamily::SquaredExponential, vec![0.2], 1.0).unwrap();
        let m = GpModel::with_kernel(&d, k).unwrap();
        // sd > 0 between points, but the threshold is so far away that ECL underflows
        let l = LimitState::above(1e6);
        let acq = entropy_opt(&m, &l, 8, &mut substream(1, 0, 0));
        assert!(acq.degenerate);
        assert_eq!(acq.value, 0.0);
        assert_eq!(acq.unit, acq.candidate_unit);
    }

    #[test]
    fn single_set_never_repeats() {
        let m = model_1d();
        let l = LimitState::above(0.9);
        let mut pool: Matrix<f64> = lhs(20, 1, &mut substream(8, 0, 0));
        let s = BatchSettings {
            n_batch: 5,
            n_candidates: 20,
            duplicate_tolerance: 1e-8,
            strategy: OptimizerStrategy::SingleCandidateSet,
        };
        let got = select_batch(&m, &l, &s, &mut substream(8, 0, 1), Some(&mut pool)).unwrap();
        assert_eq!(pool.nrows(), 15);
        for i in 0..got.len() {
            for j in 0..i {
                assert_ne!(got[i].unit, got[j].unit);
            }
        }
    }

    #[test]
    fn exhausted_pool_errors() {
        let m = model_1d();
        let l = LimitState::above(0.9);
        let mut pool: Matrix<f64> = lhs(2, 1, &mut substream(8, 0, 0));
        let s = BatchSettings {
            n_batch: 3,
            n_candidates: 2,
            duplicate_tolerance: 1e-8,
            strategy: OptimizerStrategy::SingleCandidateSet,
        };
        let r = select_batch(&m, &l, &s, &mut substream(8, 0, 1), Some(&mut pool));
        assert!(matches!(r, Err(Error::AcquisitionExhausted(_))));
    }
}
