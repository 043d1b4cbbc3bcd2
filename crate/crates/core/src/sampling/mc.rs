use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distribution::InputDistribution;
use crate::limit::LimitState;
use crate::{Error, Result, Scalar};

/// Direct Monte Carlo failure-probability estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub alpha_hat: f64,
    /// `alpha_hat (1 − alpha_hat) / n_samples`.
    pub variance: f64,
    pub n_samples: u64,
    pub n_failures: u64,
}

impl McEstimate {
    pub fn from_counts(n_failures: u64, n_samples: u64) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::ParameterDomain("Monte Carlo needs at least one sample".into()));
        }
        if n_failures > n_samples {
            return Err(Error::ParameterDomain(format!(
                "{n_failures} failures out of {n_samples} samples"
            )));
        }
        let m = n_samples as f64;
        let alpha_hat = n_failures as f64 / m;
        Ok(Self {
            alpha_hat,
            variance: alpha_hat * (1.0 - alpha_hat) / m,
            n_samples,
            n_failures,
        })
    }

    pub fn std_error(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Estimate from responses at iid draws. `n_total` is the sample count;
/// `values` may hold fewer entries if the rest are known not to fail.
pub fn mc_failure<T: Scalar>(values: &[T], limit: &LimitState<T>, n_total: usize) -> Result<McEstimate> {
    if values.len() > n_total {
        return Err(Error::ParameterDomain(format!(
            "{} values for {n_total} samples",
            values.len()
        )));
    }
    let fails = values.iter().filter(|&&y| limit.fails(y)).count();
    McEstimate::from_counts(fails as u64, n_total as u64)
}

/// Streaming Monte Carlo oracle: draws `m` inputs from `dist` in blocks and
/// counts failures of `f`. Blocks are drawn serially and evaluated in
/// parallel, so the result does not depend on the thread count.
pub fn monte_carlo<T, R, F>(
    dist: &InputDistribution<T>,
    f: F,
    limit: &LimitState<T>,
    m: usize,
    rng: &mut R,
) -> Result<McEstimate>
where
    T: Scalar,
    R: Rng + ?Sized,
    F: Fn(&[T]) -> T + Sync,
{
    const BLOCK: usize = 1 << 16;
    if m == 0 {
        return Err(Error::ParameterDomain("Monte Carlo needs at least one sample".into()));
    }
    let d = dist.dim();
    let mut fails = 0u64;
    let mut done = 0;
    while done < m {
        let n = BLOCK.min(m - done);
        let x = dist.sample(n, rng)?;
        fails += x
            .as_slice()
            .par_chunks(d)
            .filter(|r| limit.fails(f(r)))
            .count() as u64;
        done += n;
    }
    McEstimate::from_counts(fails, m as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Bounds;
    use crate::rng::substream;

    #[test]
    fn arithmetic() {
        let l = LimitState::above(1.0);
        let e = mc_failure(&[0.0, 2.0, 0.5, 0.9], &l, 4).unwrap();
        assert_eq!(e.alpha_hat, 0.25);
        assert_eq!(e.variance, 0.046875);
        let e = mc_failure(&[3.0, 2.0], &l, 2).unwrap();
        assert_eq!((e.alpha_hat, e.variance), (1.0, 0.0));
        let e = mc_failure(&[0.0, 0.0], &l, 2).unwrap();
        assert_eq!((e.alpha_hat, e.variance), (0.0, 0.0));
        assert!(mc_failure::<f64>(&[], &l, 0).is_err());
    }

    #[test]
    fn streaming_oracle_on_a_box() {
        let dist = InputDistribution::uniform(&Bounds::unit(2));
        let l = LimitState::above(0.9);
        let e = monte_carlo(&dist, |x: &[f64]| x[0], &l, 200_000, &mut substream(4, 0, 0)).unwrap();
        assert!((e.alpha_hat - 0.1).abs() < 4.0 * e.std_error());
    }
}
