use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Instant;

use ecl_core::acquisition::{run_design, DesignConfig, DesignTrace, Designer, SamplingDomain};
use ecl_core::benchmarks::{classify_report, Benchmark, ClassificationReport, LabeledTestSet};
use ecl_core::gp::GpModel;
use ecl_core::mfis::{run_mfis, MfisConfig};
use ecl_core::rng::{stage, substream};
use ecl_core::sampling::{monte_carlo, InputDistribution};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::results::{fmt_float, OrderedWriter, Row, SideTable};
use crate::CliError;

/// Settings shared by every subcommand.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out: PathBuf,
    pub workers: usize,
    pub resume: bool,
}

/// Runs `job` for each repetition on a pool of `workers` threads and hands
/// results to `sink` on the calling thread as they finish. On failure the
/// error of the lowest repetition is returned.
fn run_parallel<O, F, S>(workers: usize, reps: Vec<usize>, job: F, mut sink: S) -> Result<(), CliError>
where
    O: Send,
    F: Fn(usize) -> Result<O, CliError> + Sync,
    S: FnMut(usize, O) -> Result<(), CliError>,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    let (tx, rx) = mpsc::channel();
    let (pool, reps_ref, job) = (&pool, &reps, &job);
    let mut failure: Option<(usize, CliError)> = None;
    std::thread::scope(|s| {
        s.spawn(move || {
            pool.install(|| {
                reps_ref.par_iter().with_max_len(1).for_each_with(tx, |tx, &r| {
                    let _ = tx.send((r, job(r)));
                })
            })
        });
        for (r, res) in rx {
            let res = res.and_then(|o| if failure.is_none() { sink(r, o) } else { Ok(()) });
            if let Err(e) = res {
                if failure.as_ref().is_none_or(|(fr, _)| r < *fr) {
                    failure = Some((r, e));
                }
            }
        }
    });
    match failure {
        Some((_, e)) => Err(e),
        None => Ok(()),
    }
}

fn pending(reps: usize, done: &BTreeSet<usize>) -> Vec<usize> {
    (0..reps).filter(|r| !done.contains(r)).collect()
}

fn report_rows(rep: usize, n: usize, method: &str, r: &ClassificationReport) -> Vec<Row> {
    vec![
        Row::new(rep, n, method, "sensitivity", r.sensitivity),
        Row::new(rep, n, method, "specificity", r.specificity),
        Row::new(rep, n, method, "predicted_volume", Some(r.predicted_volume)),
        Row::new(rep, n, method, "relative_volume_error", r.relative_volume_error),
    ]
}

/// The shared dense test design, identical across repetitions so that
/// methods are compared on the same points.
pub fn test_set(cfg: &ExperimentConfig, bench: Benchmark) -> LabeledTestSet<f64> {
    let mut rng = substream(cfg.seed, 0, stage::TEST_SET);
    LabeledTestSet::lhs(cfg.test_size, &cfg.bounds(), |x: &[f64]| bench.evaluate(x), cfg.limit(), &mut rng)
}

pub fn model_path(out: &Path, stem: &str, reps: usize, rep: usize) -> PathBuf {
    if reps == 1 {
        out.join(format!("{stem}.json"))
    } else {
        out.join(format!("{stem}-rep{rep}.json"))
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string(value).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn trace_header(d: usize) -> Vec<String> {
    let mut h = vec!["repetition".to_string()];
    h.extend(DesignTrace::<f64>::csv_header(d, false));
    h
}

const TIMING_HEADER: [&str; 4] = ["repetition", "phase", "iteration", "seconds"];

struct DesignRep {
    n_final: usize,
    rows: Vec<Row>,
    trace: Vec<Vec<String>>,
    timing: Vec<Vec<String>>,
}

struct DesignJob<'a> {
    cfg: &'a ExperimentConfig,
    design: DesignConfig,
    bench: Benchmark,
    test: LabeledTestSet<f64>,
    method: &'a str,
    domain: SamplingDomain<f64>,
    out: &'a Path,
}

fn design_rep(job: &DesignJob<'_>, rep: usize) -> Result<DesignRep, CliError> {
    let DesignJob {
        cfg,
        design,
        bench,
        test,
        method,
        out,
        ..
    } = job;
    let (bench, method) = (*bench, *method);
    let limit = cfg.limit();
    let started = Instant::now();
    let mut rows = Vec::new();
    let mut last_bucket: Option<usize> = None;
    let every = cfg.report_every;
    let outcome = run_design(
        |x: &[f64]| bench.evaluate(x),
        job.domain.clone(),
        design,
        limit,
        rep as u64,
        |d: &Designer<f64>| {
            let acquired = d.len() - design.n_initial;
            let bucket = acquired.checked_div(every).unwrap_or(usize::MAX);
            let due = acquired == 0 || d.is_complete() || (every > 0 && last_bucket != Some(bucket));
            if due {
                last_bucket = Some(bucket);
                let model = d.model().expect("fitted");
                let r = classify_report(model, test, limit, 0.0);
                rows.extend(report_rows(rep, d.len(), method, &r));
            }
        },
    )?;
    let total = started.elapsed().as_secs_f64();
    let n_final = outcome.dataset.len();
    rows.push(Row::new(rep, n_final, method, "true_volume", Some(test.true_volume())));
    write_json(&model_path(out, "model", cfg.repetitions, rep), &outcome.model)?;
    let trace = outcome
        .trace
        .records
        .iter()
        .map(|r| {
            let mut f = vec![rep.to_string()];
            f.extend(DesignTrace::csv_fields(r, false));
            f
        })
        .collect();
    let mut timing: Vec<Vec<String>> = outcome
        .trace
        .records
        .iter()
        .map(|r| vec![rep.to_string(), "select".into(), r.iteration.to_string(), format!("{:.6}", r.seconds)])
        .collect();
    timing.push(vec![rep.to_string(), "total".into(), String::new(), format!("{total:.6}")]);
    Ok(DesignRep {
        n_final,
        rows,
        trace,
        timing,
    })
}

fn design_like(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    design: DesignConfig,
    method: &str,
    domain: SamplingDomain<f64>,
    with_trace: bool,
) -> Result<(), CliError> {
    let bench = cfg.simulator()?;
    let reps = cfg.repetitions;
    let (mut writer, done) = OrderedWriter::open(&opts.out.join("results.csv"), method, reps, opts.resume)?;
    let mut side = if with_trace {
        Some((
            SideTable::open(&opts.out.join("trace.csv"), &trace_header(cfg.dim()), &done, reps)?,
            SideTable::open(
                &opts.out.join("timing.csv"),
                &TIMING_HEADER.map(String::from),
                &done,
                reps,
            )?,
        ))
    } else {
        None
    };
    let job = DesignJob {
        cfg,
        design,
        bench,
        test: test_set(cfg, bench),
        method,
        domain,
        out: &opts.out,
    };
    run_parallel(
        opts.workers,
        pending(reps, &done),
        |rep| design_rep(&job, rep),
        |rep, r| {
            if let Some((trace, timing)) = side.as_mut() {
                trace.submit(rep, r.trace)?;
                timing.submit(rep, r.timing)?;
            }
            writer.submit(rep, r.n_final, r.rows)
        },
    )
}

pub fn cmd_design(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<(), CliError> {
    let method = cfg.method_or("ecl");
    design_like(cfg, opts, cfg.design().clone(), &method, cfg.domain(), true)
}

/// Size-N space-filling design with no acquisitions.
pub fn cmd_baseline(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<(), CliError> {
    let mut design = cfg.design().clone();
    design.n_initial = design.n_total;
    design.batch_size = 1;
    let method = cfg.method_or("lhs");
    design_like(cfg, opts, design, &method, cfg.baseline_domain(), false)
}

fn distribution(cfg: &ExperimentConfig) -> Result<&InputDistribution<f64>, CliError> {
    cfg.distribution
        .as_ref()
        .ok_or_else(|| CliError::Config("no input distribution configured".into()))
}

pub fn cmd_oracle(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<(), CliError> {
    let bench = cfg.simulator()?;
    if cfg.oracle_samples == 0 {
        return Err(CliError::Config("oracle_samples must be at least 1".into()));
    }
    let dist = distribution(cfg)?;
    let bounds = cfg.bounds();
    let uniform_box = *dist == InputDistribution::uniform(&bounds);
    let method = cfg.method_or("mc");
    let reps = cfg.repetitions;
    let (mut writer, done) = OrderedWriter::open(&opts.out.join("results.csv"), &method, reps, opts.resume)?;
    let m = cfg.oracle_samples;
    run_parallel(
        opts.workers,
        pending(reps, &done),
        |rep| {
            let mut rng = substream(cfg.seed, rep as u64, stage::ORACLE);
            let est = monte_carlo(dist, |x: &[f64]| bench.evaluate(x), cfg.limit(), m, &mut rng)?;
            let mut rows = vec![
                Row::new(rep, m, &method, "alpha_hat", Some(est.alpha_hat)),
                Row::new(rep, m, &method, "std_error", Some(est.std_error())),
                Row::new(rep, m, &method, "n_failures", Some(est.n_failures as f64)),
            ];
            if uniform_box {
                rows.push(Row::new(rep, m, &method, "volume", Some(est.alpha_hat * bounds.volume())));
            }
            Ok(rows)
        },
        |rep, rows| writer.submit(rep, m, rows),
    )
}

/// Where the surrogate for repetition `rep` lives: an explicit path (with an
/// optional `{rep}` placeholder) or the design command's output.
fn surrogate_path(opts: &RunOptions, model: Option<&Path>, reps: usize, rep: usize) -> PathBuf {
    match model {
        Some(p) => PathBuf::from(p.to_string_lossy().replace("{rep}", &rep.to_string())),
        None => {
            let single = opts.out.join("model.json");
            if reps == 1 || single.exists() {
                single
            } else {
                model_path(&opts.out, "model", reps, rep)
            }
        }
    }
}

pub fn load_model(path: &Path) -> Result<GpModel<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read model {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn cmd_mfis(cfg: &ExperimentConfig, opts: &RunOptions, model: Option<&Path>) -> Result<(), CliError> {
    let bench = cfg.simulator()?;
    let mcfg: &MfisConfig = cfg
        .mfis
        .as_ref()
        .ok_or_else(|| CliError::Config("mfis section missing from config".into()))?;
    let dist = distribution(cfg)?;
    let method = cfg.method_or("mfis");
    let reps = cfg.repetitions;
    let paths: Vec<PathBuf> = (0..reps).map(|r| surrogate_path(opts, model, reps, r)).collect();
    let (mut writer, done) = OrderedWriter::open(&opts.out.join("results.csv"), &method, reps, opts.resume)?;
    for r in pending(reps, &done) {
        let m = load_model(&paths[r])?;
        if m.dim() != cfg.dim() {
            return Err(CliError::Config(format!("{} has dimension {}", paths[r].display(), m.dim())));
        }
    }
    run_parallel(
        opts.workers,
        pending(reps, &done),
        |rep| {
            let model = load_model(&paths[rep])?;
            let o = run_mfis(
                &model,
                dist,
                cfg.limit(),
                |x: &[f64]| bench.evaluate(x),
                mcfg,
                cfg.seed,
                rep as u64,
            )?;
            if let Some(b) = &o.bias {
                write_json(&model_path(&opts.out, "bias", reps, rep), b)?;
            }
            let e = o.estimate;
            if e.no_failures {
                eprintln!("warning: repetition {rep}: surrogate found no failures, reporting alpha_hat = 0");
            }
            let n = mcfg.m_star;
            Ok(vec![
                Row::new(rep, n, &method, "alpha_hat", Some(e.alpha_hat)),
                Row::new(rep, n, &method, "std_error", Some(e.std_error)),
                Row::new(rep, n, &method, "ci95_lo", Some(e.ci95.0)),
                Row::new(rep, n, &method, "ci95_hi", Some(e.ci95.1)),
                Row::new(rep, n, &method, "failure_proportion", Some(e.failure_proportion())),
                Row::new(rep, n, &method, "n_failures_observed", Some(e.n_failures_observed as f64)),
                Row::new(rep, n, &method, "max_weight", Some(e.max_weight)),
                Row::new(rep, n, &method, "n_surrogate_failures", Some(o.n_surrogate_failures as f64)),
                Row::new(rep, n, &method, "no_failures", Some(if e.no_failures { 1.0 } else { 0.0 })),
            ])
        },
        |rep, rows| writer.submit(rep, mcfg.m_star, rows),
    )
}

/// Formats an input row for pending.csv and friends.
pub fn float_fields(x: &[f64]) -> Vec<String> {
    x.iter().map(|&v| fmt_float(v)).collect()
}
