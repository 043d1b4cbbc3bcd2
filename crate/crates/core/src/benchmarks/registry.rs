use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::functions::{
    branin, hartmann6, ishigami, multimodal2d, spacesuit_standin, SPACESUIT_COV, SPACESUIT_MEAN,
};
use crate::acquisition::SamplingDomain;
use crate::domain::Bounds;
use crate::limit::LimitState;
use crate::linalg::Matrix;
use crate::sampling::{InputDistribution, Marginal, Mvn};
use crate::{Error, Result, Scalar};

/// Built-in simulators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    Branin,
    Ishigami,
    Hartmann6,
    Multimodal2d,
    SpacesuitStandin,
}

impl Benchmark {
    pub const ALL: [Benchmark; 5] = [
        Benchmark::Branin,
        Benchmark::Ishigami,
        Benchmark::Hartmann6,
        Benchmark::Multimodal2d,
        Benchmark::SpacesuitStandin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Branin => "branin",
            Self::Ishigami => "ishigami",
            Self::Hartmann6 => "hartmann6",
            Self::Multimodal2d => "multimodal2d",
            Self::SpacesuitStandin => "spacesuit_standin",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Self::Branin | Self::Multimodal2d => 2,
            Self::Ishigami => 3,
            Self::Hartmann6 => 6,
            Self::SpacesuitStandin => 4,
        }
    }

    pub fn evaluate<T: Scalar>(self, x: &[T]) -> T {
        match self {
            Self::Branin => branin(x),
            Self::Ishigami => ishigami(x),
            Self::Hartmann6 => hartmann6(x),
            Self::Multimodal2d => multimodal2d(x),
            Self::SpacesuitStandin => spacesuit_standin(x),
        }
    }

    /// Evaluates every row.
    pub fn evaluate_rows<T: Scalar>(self, x: &Matrix<T>) -> Vec<T> {
        x.rows().map(|r| self.evaluate(r)).collect()
    }

    pub fn spec<T: Scalar>(self) -> BenchmarkSpec<T> {
        let cube = |lo: f64, hi: f64, d| Bounds::cube(T::of(lo), T::of(hi), d).expect("valid box");
        let (bounds, limit, n_initial, n_total, batch, vol, q) = match self {
            Self::Branin => (
                Bounds::new(vec![T::of(-5.0), T::zero()], vec![T::of(10.0), T::of(15.0)]).expect("valid box"),
                LimitState::above(T::of(206.0)),
                10,
                30,
                5,
                Some(2.1783),
                Some(0.9903),
            ),
            Self::Ishigami => (
                cube(-PI, PI, 3),
                LimitState::below(T::of(-10.244)),
                30,
                200,
                10,
                Some(0.0250),
                Some(0.9999),
            ),
            Self::Hartmann6 => (
                Bounds::unit(6),
                LimitState::above(T::of(2.63)),
                60,
                500,
                10,
                Some(0.0011),
                Some(0.9989),
            ),
            Self::Multimodal2d => (
                Bounds::new(vec![T::of(-4.0), T::of(-3.0)], vec![T::of(7.0), T::of(8.0)]).expect("valid box"),
                LimitState::above(T::zero()),
                20,
                40,
                5,
                None,
                None,
            ),
            Self::SpacesuitStandin => (
                spacesuit_mvn::<T>().support().expect("boxed").clone(),
                LimitState::above(T::of(2800.0)),
                40,
                100,
                10,
                None,
                None,
            ),
        };
        BenchmarkSpec {
            benchmark: self,
            bounds,
            limit,
            n_initial,
            n_total,
            batch_size: batch,
            reference_volume: vol,
            reference_quantile: q,
        }
    }

    /// Input distribution of the reliability study: uniform on the box for the
    /// tabulated benchmarks, the truncated normals of the importance-sampling
    /// studies via [`Self::mfis_distribution`].
    pub fn nominal<T: Scalar>(self) -> InputDistribution<T> {
        match self {
            Self::SpacesuitStandin => InputDistribution::MultivariateNormal(spacesuit_mvn()),
            _ => InputDistribution::uniform(&self.spec::<T>().bounds),
        }
    }

    /// Importance-sampling input distribution where one is defined.
    pub fn mfis_distribution<T: Scalar>(self) -> Option<InputDistribution<T>> {
        match self {
            Self::Ishigami => Some(ishigami_mfis_distribution()),
            Self::Hartmann6 => Some(hartmann_mfis_distribution()),
            Self::SpacesuitStandin => Some(self.nominal()),
            _ => None,
        }
    }

    /// Where adaptive designs for this benchmark live.
    pub fn design_domain<T: Scalar>(self) -> SamplingDomain<T> {
        SamplingDomain::Box {
            bounds: self.spec::<T>().bounds,
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown benchmark {s:?}")))
    }
}

/// Tabulated configuration of a benchmark.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkSpec<T: Scalar> {
    pub benchmark: Benchmark,
    pub bounds: Bounds<T>,
    pub limit: LimitState<T>,
    pub n_initial: usize,
    pub n_total: usize,
    pub batch_size: usize,
    /// Failure-region volume in original units.
    pub reference_volume: Option<f64>,
    /// `1 −` failure fraction under uniform inputs.
    pub reference_quantile: Option<f64>,
}

impl<T: Scalar> BenchmarkSpec<T> {
    pub fn name(&self) -> &'static str {
        self.benchmark.name()
    }

    pub fn evaluate(&self, x: &[T]) -> T {
        self.benchmark.evaluate(x)
    }

    pub fn reference_fraction(&self) -> Option<f64> {
        self.reference_quantile.map(|q| 1.0 - q)
    }
}

/// Looks a benchmark up by its registered name.
pub fn benchmark_spec<T: Scalar>(name: &str) -> Result<BenchmarkSpec<T>> {
    Ok(name.parse::<Benchmark>()?.spec())
}

pub fn ishigami_mfis_distribution<T: Scalar>() -> InputDistribution<T> {
    let (lo, hi) = (T::of(-PI), T::of(PI));
    InputDistribution::Independent {
        marginals: vec![
            Marginal::truncated_normal(T::of(-1.0), T::one(), lo, hi).expect("valid marginal"),
            Marginal::truncated_normal(T::of(1.5), T::of(1.5), lo, hi).expect("valid marginal"),
            Marginal::uniform(lo, hi).expect("valid marginal"),
        ],
    }
}

pub fn hartmann_mfis_distribution<T: Scalar>() -> InputDistribution<T> {
    let m = Marginal::truncated_normal(T::of(0.5), T::of(0.1), T::zero(), T::one()).expect("valid marginal");
    InputDistribution::Independent {
        marginals: vec![m; 6],
    }
}

/// Correlated 4d normal of the spacesuit study, boxed at five marginal
/// standard deviations.
pub fn spacesuit_mvn<T: Scalar>() -> Mvn<T> {
    let mean = SPACESUIT_MEAN.iter().map(|&v| T::of(v)).collect();
    let cov = Matrix::from_fn(4, 4, |i, j| T::of(SPACESUIT_COV[i][j]));
    Mvn::with_sd_box(mean, cov, T::of(5.0)).expect("valid covariance")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_roundtrip() {
        for b in Benchmark::ALL {
            assert_eq!(b.name().parse::<Benchmark>().unwrap(), b);
            let s: BenchmarkSpec<f64> = b.spec();
            assert_eq!(s.bounds.dim(), b.dim());
            assert!(s.n_initial >= 2 && s.n_total >= s.n_initial);
            assert_eq!((s.n_total - s.n_initial) % s.batch_size, 0);
        }
        assert!(matches!("rosenbrock".parse::<Benchmark>(), Err(Error::Config(_))));
    }

    #[test]
    fn tabulated_values() {
        let b: BenchmarkSpec<f64> = benchmark_spec("branin").unwrap();
        assert_eq!((b.n_initial, b.n_total, b.limit.threshold), (10, 30, 206.0));
        assert_eq!(b.reference_volume, Some(2.1783));
        let i: BenchmarkSpec<f64> = benchmark_spec("ishigami").unwrap();
        assert_eq!((i.n_initial, i.n_total), (30, 200));
        assert_eq!(i.reference_quantile, Some(0.9999));
        let h: BenchmarkSpec<f64> = benchmark_spec("hartmann6").unwrap();
        assert_eq!((h.n_initial, h.n_total, h.limit.threshold), (60, 500, 2.63));
    }

    #[test]
    fn spacesuit_box_is_five_sd() {
        let m = spacesuit_mvn::<f64>();
        let b = m.support().unwrap();
        assert!((b.hi()[3] - (1.0 + 5.0 * 0.00016f64.sqrt())).abs() < 1e-12);
    }
}
