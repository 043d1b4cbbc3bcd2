use std::fs;
use std::path::Path;

use ecl_core::acquisition::{DesignTrace, Designer};
use ecl_core::linalg::Matrix;

use crate::commands::float_fields;
use crate::config::ExperimentConfig;
use crate::CliError;

pub const STATE: &str = "state.json";
pub const PENDING: &str = "pending.csv";
pub const RESPONSES: &str = "responses.csv";

/// What a call to [`step`] left behind.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    /// `pending.csv` holds inputs to evaluate.
    Awaiting { n: usize },
    /// The design is finished; `model.json` and `trace.csv` are written.
    Complete,
}

fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write_pending(path: &Path, x: &Matrix<f64>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io(path, e))?;
    let header: Vec<String> = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
    w.write_record(&header).map_err(|e| io(path, e))?;
    for r in x.rows() {
        w.write_record(float_fields(r)).map_err(|e| io(path, e))?;
    }
    w.flush().map_err(|e| io(path, e))
}

/// Reads `x1..xd,y` rows and checks that the inputs are exactly `expected`,
/// in order. Returns the responses.
fn read_responses(path: &Path, expected: &Matrix<f64>) -> Result<Vec<f64>, CliError> {
    let d = expected.ncols();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| io(path, e))?;
    let bad = |msg: String| CliError::Config(format!("{}: {msg}", path.display()));
    let mut y = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| io(path, e))?;
        if rec.len() != d + 1 {
            return Err(bad(format!("row {} has {} fields, expected {}", i + 1, rec.len(), d + 1)));
        }
        if i >= expected.nrows() {
            return Err(bad(format!("more than the {} requested rows", expected.nrows())));
        }
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("row {}: {e}", i + 1)));
        for j in 0..d {
            if parse(&rec[j])?.to_bits() != expected[(i, j)].to_bits() {
                return Err(bad(format!("row {} does not match the pending inputs", i + 1)));
            }
        }
        y.push(parse(&rec[d])?);
    }
    if y.len() != expected.nrows() {
        return Err(bad(format!("{} responses for {} pending inputs", y.len(), expected.nrows())));
    }
    Ok(y)
}

fn save_state(path: &Path, designer: &Designer<f64>) -> Result<(), CliError> {
    let tmp = path.with_extension("json.tmp");
    let text = serde_json::to_string(designer).map_err(|e| io(path, e))?;
    fs::write(&tmp, text).map_err(|e| io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io(path, e))
}

/// Advances an externally evaluated design by one round: consumes
/// `responses.csv` if present, then writes the next `pending.csv` or the
/// finished model.
pub fn step(cfg: &ExperimentConfig, out: &Path) -> Result<Status, CliError> {
    if cfg.repetitions != 1 {
        return Err(CliError::Config("external mode runs a single repetition".into()));
    }
    let state_path = out.join(STATE);
    let pending_path = out.join(PENDING);
    let responses_path = out.join(RESPONSES);
    let mut designer: Designer<f64> = if state_path.exists() {
        let text = fs::read_to_string(&state_path).map_err(|e| io(&state_path, e))?;
        let d: Designer<f64> = serde_json::from_str(&text).map_err(|e| io(&state_path, e))?;
        if d.config() != cfg.design() || d.limit() != cfg.limit() || d.bounds() != &cfg.bounds() {
            return Err(CliError::Config(format!("{} was created with a different config", state_path.display())));
        }
        d
    } else {
        Designer::new(cfg.design().clone(), cfg.limit().clone(), cfg.domain(), 0)?
    };

    if responses_path.exists() {
        let x = designer
            .awaiting()?
            .ok_or_else(|| CliError::Config("responses given but nothing is pending".into()))?;
        let y = read_responses(&responses_path, &x)?;
        if designer.model().is_none() {
            designer.observe_initial(&y)?;
        } else {
            designer.observe(&y)?;
        }
        let archive = out.join(format!("responses-{:04}.csv", designer.round()));
        fs::rename(&responses_path, &archive).map_err(|e| io(&archive, e))?;
    }

    let status = if designer.is_complete() {
        let d = designer.bounds().dim();
        let mut w = csv::Writer::from_path(out.join("trace.csv")).map_err(|e| io(out, e))?;
        w.write_record(DesignTrace::<f64>::csv_header(d, true)).map_err(|e| io(out, e))?;
        for r in &designer.trace().records {
            w.write_record(DesignTrace::csv_fields(r, true)).map_err(|e| io(out, e))?;
        }
        w.flush().map_err(|e| io(out, e))?;
        let model = designer.model().expect("complete design has a model");
        let p = out.join("model.json");
        fs::write(&p, serde_json::to_string(model).map_err(|e| io(&p, e))?).map_err(|e| io(&p, e))?;
        if pending_path.exists() {
            fs::remove_file(&pending_path).map_err(|e| io(&pending_path, e))?;
        }
        Status::Complete
    } else {
        let x = if designer.model().is_none() {
            designer.initial_inputs()?
        } else {
            designer.propose()?
        };
        write_pending(&pending_path, &x)?;
        Status::Awaiting { n: x.nrows() }
    };
    save_state(&state_path, &designer)?;
    Ok(status)
}
