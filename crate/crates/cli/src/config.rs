use std::path::Path;

use ecl_core::acquisition::{DesignConfig, SamplingDomain};
use ecl_core::benchmarks::Benchmark;
use ecl_core::mfis::MfisConfig;
use ecl_core::sampling::InputDistribution;
use ecl_core::{Bounds, LimitState};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// A simulator that runs outside this process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalSpec {
    pub bounds: Bounds<f64>,
    pub limit: LimitState<f64>,
}

/// The JSON experiment document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub benchmark: Option<Benchmark>,
    #[serde(default)]
    pub external: Option<ExternalSpec>,
    #[serde(default)]
    pub design: Option<DesignConfig>,
    #[serde(default)]
    pub mfis: Option<MfisConfig>,
    /// Input distribution for oracle and importance-sampling runs, and for
    /// warped baselines.
    #[serde(default)]
    pub distribution: Option<InputDistribution<f64>>,
    /// Overrides the benchmark's limit state.
    #[serde(default)]
    pub limit: Option<LimitState<f64>>,
    #[serde(default = "one")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    /// Dense LHS used to score designs.
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    #[serde(default = "default_oracle_samples")]
    pub oracle_samples: usize,
    /// Score the design every this many acquisitions; 0 scores only the
    /// initial and final designs.
    #[serde(default = "one")]
    pub report_every: usize,
    /// Warp the baseline LHS through `distribution`.
    #[serde(default)]
    pub warp: bool,
    /// Method label written to results.csv.
    #[serde(default)]
    pub method: Option<String>,
}

fn one() -> usize {
    1
}

fn default_test_size() -> usize {
    100_000
}

fn default_oracle_samples() -> usize {
    1_000_000
}

/// Command-line overrides.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub reps: Option<usize>,
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        if let Some(s) = overrides.seed {
            cfg.seed = s;
        }
        if let Some(r) = overrides.reps {
            cfg.repetitions = r;
        }
        cfg.resolve()?;
        Ok(cfg)
    }

    /// Fills defaults from the benchmark and validates everything.
    pub fn resolve(&mut self) -> Result<(), CliError> {
        match (&self.benchmark, &self.external) {
            (Some(_), Some(_)) => return Err(config_error("give either benchmark or external, not both")),
            (None, None) => return Err(config_error("config needs a benchmark or an external simulator")),
            _ => {}
        }
        if self.repetitions == 0 {
            return Err(config_error("repetitions must be at least 1"));
        }
        if self.repetitions > u32::MAX as usize {
            return Err(config_error("repetitions must fit in 32 bits"));
        }
        if self.limit.is_none() {
            self.limit = Some(match (&self.benchmark, &self.external) {
                (Some(b), _) => b.spec::<f64>().limit,
                (_, Some(e)) => e.limit.clone(),
                _ => unreachable!(),
            });
        }
        let limit = self.limit.as_ref().expect("resolved");
        if !limit.threshold.is_finite() {
            return Err(config_error("limit threshold must be finite"));
        }
        let d = self.dim();
        let mut design = match (self.design.take(), &self.benchmark) {
            (Some(d), _) => d,
            (None, Some(b)) => {
                let s = b.spec::<f64>();
                DesignConfig::new(s.n_initial, s.n_total)
            }
            (None, None) => return Err(config_error("external mode needs a design section")),
        };
        design.seed = self.seed;
        design.validate()?;
        self.design = Some(design);

        if self.distribution.is_none() {
            if let Some(b) = self.benchmark {
                self.distribution = Some(b.mfis_distribution().unwrap_or_else(|| b.nominal()));
            }
        }
        if let Some(dist) = &self.distribution {
            dist.validate()?;
            if dist.dim() != d {
                return Err(config_error(format!(
                    "distribution has dimension {}, problem has {d}",
                    dist.dim()
                )));
            }
        }
        if self.warp && self.distribution.as_ref().and_then(|x| x.support_box()).is_none() {
            return Err(config_error("warp needs a distribution with bounded support"));
        }
        if let Some(m) = &self.mfis {
            m.validate()?;
        }
        if self.test_size == 0 {
            return Err(config_error("test_size must be at least 1"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match (&self.benchmark, &self.external) {
            (Some(b), _) => b.dim(),
            (_, Some(e)) => e.bounds.dim(),
            _ => 0,
        }
    }

    pub fn bounds(&self) -> Bounds<f64> {
        match (&self.benchmark, &self.external) {
            (Some(b), _) => b.spec::<f64>().bounds,
            (_, Some(e)) => e.bounds.clone(),
            _ => unreachable!("resolved config"),
        }
    }

    pub fn limit(&self) -> &LimitState<f64> {
        self.limit.as_ref().expect("resolved config")
    }

    pub fn design(&self) -> &DesignConfig {
        self.design.as_ref().expect("resolved config")
    }

    pub fn domain(&self) -> SamplingDomain<f64> {
        SamplingDomain::Box { bounds: self.bounds() }
    }

    pub fn baseline_domain(&self) -> SamplingDomain<f64> {
        match (&self.distribution, self.warp) {
            (Some(d), true) => SamplingDomain::Warped { distribution: d.clone() },
            _ => self.domain(),
        }
    }

    pub fn simulator(&self) -> Result<Benchmark, CliError> {
        self.benchmark
            .ok_or_else(|| config_error("this command needs an in-process benchmark"))
    }

    pub fn method_or(&self, default: &str) -> String {
        self.method.clone().unwrap_or_else(|| default.to_string())
    }

    pub fn write_echo(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}
