use std::io::{self, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::select::{select_batch, Acquisition, BatchSettings, OptimizerStrategy};
use crate::domain::Bounds;
use crate::gp::{fit, Dataset, FitConfig, GpModel, KernelFamily, AUGMENT_DUPLICATE_TOLERANCE};
use crate::limit::LimitState;
use crate::linalg::Matrix;
use crate::rng::{stage, substream};
use crate::sampling::{lhs, InputDistribution};
use crate::{Error, Result, Scalar};

/// Adaptive-design budget and optimizer settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub n_initial: usize,
    pub n_total: usize,
    /// Candidate-set size; `None` means `10·d`.
    #[serde(default)]
    pub n_candidates: Option<usize>,
    #[serde(default = "one")]
    pub batch_size: usize,
    #[serde(default)]
    pub strategy: OptimizerStrategy,
    #[serde(default = "default_duplicate_tolerance")]
    pub duplicate_tolerance: f64,
    #[serde(default)]
    pub kernel: KernelFamily,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

fn default_duplicate_tolerance() -> f64 {
    AUGMENT_DUPLICATE_TOLERANCE
}

impl DesignConfig {
    pub fn new(n_initial: usize, n_total: usize) -> Self {
        Self {
            n_initial,
            n_total,
            n_candidates: None,
            batch_size: 1,
            strategy: OptimizerStrategy::TwoStage,
            duplicate_tolerance: AUGMENT_DUPLICATE_TOLERANCE,
            kernel: KernelFamily::SquaredExponential,
            fit: FitConfig::default(),
            seed: 0,
        }
    }

    pub fn candidates_for(&self, d: usize) -> usize {
        self.n_candidates.unwrap_or(10 * d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_initial < 2 {
            return Err(Error::Config(format!("n_initial must be at least 2, got {}", self.n_initial)));
        }
        if self.n_total < self.n_initial {
            return Err(Error::Config(format!(
                "n_total ({}) is below n_initial ({})",
                self.n_total, self.n_initial
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.n_total - self.n_initial).is_multiple_of(self.batch_size) {
            return Err(Error::Config(format!(
                "n_total - n_initial ({}) is not a multiple of batch_size ({})",
                self.n_total - self.n_initial,
                self.batch_size
            )));
        }
        if self.n_candidates == Some(0) {
            return Err(Error::Config("n_candidates must be at least 1".into()));
        }
        if !(self.duplicate_tolerance >= AUGMENT_DUPLICATE_TOLERANCE && self.duplicate_tolerance < 1.0) {
            return Err(Error::Config(format!(
                "duplicate_tolerance must lie in [{AUGMENT_DUPLICATE_TOLERANCE:e}, 1)"
            )));
        }
        self.fit.validate()
    }
}

/// Where the design lives and how its initial LHS is laid out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Scalar")]
pub enum SamplingDomain<T> {
    /// Uniform LHS over a box.
    Box { bounds: Bounds<T> },
    /// LHS warped through the marginals of a distribution with bounded
    /// support; the support box is the design domain.
    Warped { distribution: InputDistribution<T> },
}

impl<T: Scalar> SamplingDomain<T> {
    pub fn bounds(&self) -> Result<Bounds<T>> {
        match self {
            Self::Box { bounds } => Ok(bounds.clone()),
            Self::Warped { distribution } => distribution.support_box().ok_or_else(|| {
                Error::Config("warped design needs a distribution with bounded support".into())
            }),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Box { bounds } => bounds.dim(),
            Self::Warped { distribution } => distribution.dim(),
        }
    }

    /// `n`-point initial design in original units.
    pub fn initial_design<R: rand::Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Matrix<T>> {
        let u = lhs(n, self.dim(), rng);
        match self {
            Self::Box { bounds } => Ok(bounds.from_unit_rows(&u)),
            Self::Warped { distribution } => distribution.warp(&u),
        }
    }
}

/// One acquisition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TraceRecord<T> {
    /// Zero-based acquisition index.
    pub iteration: usize,
    /// Zero-based batch (round) index.
    pub batch: usize,
    /// Chosen input, original units.
    pub x: Vec<T>,
    pub ecl: T,
    pub candidate_ecl: T,
    pub improved: bool,
    pub reverted: bool,
    pub degenerate: bool,
    /// Hyperparameters refit after the batch completed.
    pub lengthscales: Vec<T>,
    pub scale: T,
    /// Wall-clock seconds spent selecting this point.
    pub seconds: f64,
}

/// Per-acquisition log of a design run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DesignTrace<T> {
    pub records: Vec<TraceRecord<T>>,
}

impl<T: Scalar> DesignTrace<T> {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn csv_header(d: usize, with_seconds: bool) -> Vec<String> {
        let mut h = vec!["iteration".to_string(), "batch".to_string()];
        h.extend((1..=d).map(|j| format!("x{j}")));
        h.extend(
            ["ecl", "candidate_ecl", "improved", "reverted", "degenerate"]
                .iter()
                .map(|s| s.to_string()),
        );
        h.extend((1..=d).map(|j| format!("lengthscale{j}")));
        h.push("scale".into());
        if with_seconds {
            h.push("seconds".into());
        }
        h
    }

    pub fn csv_fields(r: &TraceRecord<T>, with_seconds: bool) -> Vec<String> {
        let f = |v: T| format!("{:.16e}", v.f64());
        let mut row = vec![r.iteration.to_string(), r.batch.to_string()];
        row.extend(r.x.iter().map(|&v| f(v)));
        row.push(f(r.ecl));
        row.push(f(r.candidate_ecl));
        row.extend([r.improved, r.reverted, r.degenerate].map(|b| u8::from(b).to_string()));
        row.extend(r.lengthscales.iter().map(|&v| f(v)));
        row.push(f(r.scale));
        if with_seconds {
            row.push(format!("{:.6}", r.seconds));
        }
        row
    }

    /// Comma-separated, one header row then one row per acquisition.
    pub fn write_csv<W: Write>(&self, d: usize, with_seconds: bool, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", Self::csv_header(d, with_seconds).join(","))?;
        for r in &self.records {
            writeln!(w, "{}", Self::csv_fields(r, with_seconds).join(","))?;
        }
        Ok(())
    }
}

/// Resumable state of one adaptive design. Serializable so an external
/// simulator can run between [`Designer::propose`] and [`Designer::observe`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Designer<T: Scalar> {
    config: DesignConfig,
    limit: LimitState<T>,
    domain: SamplingDomain<T>,
    bounds: Bounds<T>,
    repetition: u64,
    dataset: Option<Dataset<T>>,
    model: Option<GpModel<T>>,
    pool: Option<Matrix<T>>,
    round: usize,
    trace: DesignTrace<T>,
    pending: Vec<(Acquisition<T>, f64)>,
}

impl<T: Scalar> Designer<T> {
    pub fn new(
        config: DesignConfig,
        limit: LimitState<T>,
        domain: SamplingDomain<T>,
        repetition: u64,
    ) -> Result<Self> {
        config.validate()?;
        let bounds = domain.bounds()?;
        if repetition > u32::MAX as u64 {
            return Err(Error::Config("repetition index must fit in 32 bits".into()));
        }
        Ok(Self {
            config,
            limit,
            domain,
            bounds,
            repetition,
            dataset: None,
            model: None,
            pool: None,
            round: 0,
            trace: DesignTrace::default(),
            pending: Vec::new(),
        })
    }

    pub fn config(&self) -> &DesignConfig {
        &self.config
    }

    pub fn limit(&self) -> &LimitState<T> {
        &self.limit
    }

    pub fn bounds(&self) -> &Bounds<T> {
        &self.bounds
    }

    pub fn repetition(&self) -> u64 {
        self.repetition
    }

    pub fn dataset(&self) -> Option<&Dataset<T>> {
        self.dataset.as_ref()
    }

    pub fn model(&self) -> Option<&GpModel<T>> {
        self.model.as_ref()
    }

    pub fn trace(&self) -> &DesignTrace<T> {
        &self.trace
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// Current design size.
    pub fn len(&self) -> usize {
        self.dataset.as_ref().map_or(0, Dataset::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_complete(&self) -> bool {
        self.len() >= self.config.n_total
    }

    /// Inputs awaiting responses: the initial design before it is observed,
    /// otherwise the last proposed batch.
    pub fn awaiting(&self) -> Result<Option<Matrix<T>>> {
        if self.dataset.is_none() {
            return self.initial_inputs().map(Some);
        }
        if self.pending.is_empty() {
            return Ok(None);
        }
        let mut m = Matrix::zeros(0, self.bounds.dim());
        for (a, _) in &self.pending {
            m.push_row(&self.bounds.from_unit(&a.unit));
        }
        Ok(Some(m))
    }

    /// The initial design (original units); identical on every call.
    pub fn initial_inputs(&self) -> Result<Matrix<T>> {
        let mut rng = substream(self.config.seed, self.repetition, stage::INITIAL_DESIGN);
        self.domain.initial_design(self.config.n_initial, &mut rng)
    }

    fn check_responses(x: &Matrix<T>, y: &[T]) -> Result<()> {
        if x.nrows() != y.len() {
            return Err(Error::InvalidData(format!(
                "{} responses for {} inputs",
                y.len(),
                x.nrows()
            )));
        }
        for (r, &v) in x.rows().zip(y) {
            if !v.is_finite() {
                return Err(Error::Simulator {
                    input: r.iter().map(|v| v.f64()).collect(),
                    value: v.f64(),
                });
            }
        }
        Ok(())
    }

    /// Supplies responses at [`Self::initial_inputs`] and fits the first model.
    pub fn observe_initial(&mut self, y: &[T]) -> Result<()> {
        if self.dataset.is_some() {
            return Err(Error::InvalidData("initial design already observed".into()));
        }
        let x = self.initial_inputs()?;
        Self::check_responses(&x, y)?;
        self.dataset = Some(Dataset::new(x, y.to_vec(), self.bounds.clone())?);
        self.refit()
    }

    fn refit(&mut self) -> Result<()> {
        let ds = self.dataset.as_ref().expect("dataset present");
        let mut rng = substream(
            self.config.seed,
            self.repetition,
            stage::HYPERPARAMETERS + ds.len() as u64,
        );
        self.model = Some(fit(ds, self.config.kernel, &self.config.fit, &mut rng)?);
        Ok(())
    }

    /// Selects the next batch and returns it in original units. Calling it
    /// again before [`Self::observe`] returns the same batch.
    pub fn propose(&mut self) -> Result<Matrix<T>> {
        if !self.pending.is_empty() {
            return Ok(self.awaiting()?.expect("pending batch"));
        }
        let model = self
            .model
            .as_ref()
            .ok_or_else(|| Error::InvalidData("initial design not observed yet".into()))?;
        if self.is_complete() {
            return Err(Error::InvalidData("design budget already spent".into()));
        }
        let d = self.bounds.dim();
        let n_candidates = self.config.candidates_for(d);
        if self.config.strategy == OptimizerStrategy::SingleCandidateSet && self.pool.is_none() {
            let mut prng = substream(self.config.seed, self.repetition, stage::CANDIDATE_POOL);
            self.pool = Some(lhs(n_candidates, d, &mut prng));
        }
        let mut rng = substream(self.config.seed, self.repetition, self.round as u64);
        let settings = BatchSettings {
            n_batch: self.config.batch_size,
            n_candidates,
            duplicate_tolerance: T::of(self.config.duplicate_tolerance),
            strategy: self.config.strategy,
        };
        let t0 = Instant::now();
        let batch = select_batch(model, &self.limit, &settings, &mut rng, self.pool.as_mut())?;
        let per_pick = t0.elapsed().as_secs_f64() / batch.len() as f64;
        self.pending = batch.into_iter().map(|a| (a, per_pick)).collect();
        Ok(self.awaiting()?.expect("pending batch"))
    }

    /// Supplies responses for the last proposed batch, then refits.
    pub fn observe(&mut self, y: &[T]) -> Result<()> {
        let x = self
            .awaiting()?
            .filter(|_| !self.pending.is_empty())
            .ok_or_else(|| Error::InvalidData("no batch is pending".into()))?;
        Self::check_responses(&x, y)?;
        let ds = self.dataset.as_mut().expect("dataset present");
        for (r, &v) in x.rows().zip(y) {
            ds.push(r, v)?;
        }
        self.refit()?;
        let kernel = self.model.as_ref().expect("model present").kernel().clone();
        let first = self.trace.len();
        for (k, ((a, secs), r)) in self.pending.drain(..).zip(x.rows()).enumerate() {
            self.trace.records.push(TraceRecord {
                iteration: first + k,
                batch: self.round,
                x: r.to_vec(),
                ecl: a.value,
                candidate_ecl: a.candidate_value,
                improved: a.improved,
                reverted: a.reverted,
                degenerate: a.degenerate,
                lengthscales: kernel.lengthscales.clone(),
                scale: kernel.scale,
                seconds: secs,
            });
        }
        self.round += 1;
        Ok(())
    }

    pub fn into_outcome(self) -> Result<DesignOutcome<T>> {
        match (self.dataset, self.model) {
            (Some(dataset), Some(model)) => Ok(DesignOutcome {
                dataset,
                model,
                trace: self.trace,
            }),
            _ => Err(Error::InvalidData("design has no observations".into())),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DesignOutcome<T: Scalar> {
    pub dataset: Dataset<T>,
    pub model: GpModel<T>,
    pub trace: DesignTrace<T>,
}

/// Runs a full adaptive design against an in-process simulator.
/// `observer` sees the designer after the initial fit and after every batch.
pub fn run_design<T, F, O>(
    mut simulator: F,
    domain: SamplingDomain<T>,
    config: &DesignConfig,
    limit: &LimitState<T>,
    repetition: u64,
    mut observer: O,
) -> Result<DesignOutcome<T>>
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
    O: FnMut(&Designer<T>),
{
    let mut designer = Designer::new(config.clone(), limit.clone(), domain, repetition)?;
    let x0 = designer.initial_inputs()?;
    let y0: Vec<T> = x0.rows().map(&mut simulator).collect();
    designer.observe_initial(&y0)?;
    observer(&designer);
    while !designer.is_complete() {
        let x = designer.propose()?;
        let y: Vec<T> = x.rows().map(&mut simulator).collect();
        designer.observe(&y)?;
        observer(&designer);
    }
    designer.into_outcome()
}
