use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::CliError;

pub const SCHEMA_LINE: &str = "# ecl-results v1";
pub const HEADER: [&str; 5] = ["repetition", "n", "method", "metric", "value"];
/// Metric that marks a repetition as fully written.
pub const COMPLETED: &str = "completed";

/// One long-format result row. `value` is `None` for undefined metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub repetition: usize,
    pub n: usize,
    pub method: String,
    pub metric: String,
    pub value: Option<f64>,
}

impl Row {
    pub fn new(repetition: usize, n: usize, method: &str, metric: &str, value: Option<f64>) -> Self {
        Self {
            repetition,
            n,
            method: method.to_string(),
            metric: metric.to_string(),
            value,
        }
    }

    fn fields(&self) -> [String; 5] {
        [
            self.repetition.to_string(),
            self.n.to_string(),
            self.method.clone(),
            self.metric.clone(),
            self.value.map(fmt_float).unwrap_or_default(),
        ]
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Parses a results file back into rows.
pub fn read_rows(path: &Path) -> Result<Vec<Row>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    let headers = rdr.headers().map_err(|e| io_err(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(io_err(path, "unexpected header"));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| io_err(path, e));
        let value = match &rec[4] {
            "" => None,
            s => Some(s.parse::<f64>().map_err(|e| io_err(path, e))?),
        };
        out.push(Row {
            repetition: parse_usize(&rec[0])?,
            n: parse_usize(&rec[1])?,
            method: rec[2].to_string(),
            metric: rec[3].to_string(),
            value,
        });
    }
    Ok(out)
}

/// Appends repetitions to `results.csv` in repetition order, whatever order
/// they finish in.
pub struct OrderedWriter {
    path: PathBuf,
    method: String,
    next: usize,
    end: usize,
    pending: BTreeMap<usize, Vec<Row>>,
    skip: BTreeSet<usize>,
}

impl OrderedWriter {
    /// Prepares the file for `method`. Without `resume`, earlier rows of the
    /// same method are dropped; with it, completed repetitions are kept and
    /// their indices returned for skipping. Other methods' rows stay.
    pub fn open(path: &Path, method: &str, reps: usize, resume: bool) -> Result<(Self, BTreeSet<usize>), CliError> {
        let existing = if path.exists() { read_rows(path)? } else { Vec::new() };
        let done: BTreeSet<usize> = if resume {
            existing
                .iter()
                .filter(|r| r.method == method && r.metric == COMPLETED && r.repetition < reps)
                .map(|r| r.repetition)
                .collect()
        } else {
            BTreeSet::new()
        };
        let keep: Vec<&Row> = existing
            .iter()
            .filter(|r| r.method != method || done.contains(&r.repetition))
            .collect();
        let tmp = path.with_extension("csv.tmp");
        {
            let mut file = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
            file.write_all(format!("{SCHEMA_LINE}\n").as_bytes())
                .map_err(|e| io_err(&tmp, e))?;
            let mut w = csv::Writer::from_writer(file);
            w.write_record(HEADER).map_err(|e| io_err(&tmp, e))?;
            for r in keep {
                w.write_record(r.fields()).map_err(|e| io_err(&tmp, e))?;
            }
            w.flush().map_err(|e| io_err(&tmp, e))?;
        }
        fs::rename(&tmp, path).map_err(|e| io_err(path, e))?;
        let mut me = Self {
            path: path.to_path_buf(),
            method: method.to_string(),
            next: 0,
            end: reps,
            pending: BTreeMap::new(),
            skip: done.clone(),
        };
        me.advance_past_skipped();
        Ok((me, done))
    }

    fn advance_past_skipped(&mut self) {
        while self.skip.contains(&self.next) {
            self.next += 1;
        }
    }

    /// Queues the rows of repetition `rep` (a completion marker is added) and
    /// writes whatever is now in order.
    pub fn submit(&mut self, rep: usize, n: usize, mut rows: Vec<Row>) -> Result<(), CliError> {
        rows.push(Row::new(rep, n, &self.method, COMPLETED, Some(1.0)));
        self.pending.insert(rep, rows);
        let file = fs::OpenOptions::new()
            .append(true)
            .open(&self.path)
            .map_err(|e| io_err(&self.path, e))?;
        let mut w = csv::Writer::from_writer(file);
        while self.next < self.end {
            let Some(rows) = self.pending.remove(&self.next) else {
                break;
            };
            for r in rows {
                w.write_record(r.fields()).map_err(|e| io_err(&self.path, e))?;
            }
            self.next += 1;
            self.advance_past_skipped();
        }
        w.flush().map_err(|e| io_err(&self.path, e))
    }
}

/// Side table (trace, timing) keyed by a leading repetition column. Rows of
/// repetitions not in `keep` are discarded on open.
pub struct SideTable {
    path: PathBuf,
    next: usize,
    end: usize,
    pending: BTreeMap<usize, Vec<Vec<String>>>,
    skip: BTreeSet<usize>,
}

impl SideTable {
    pub fn open(path: &Path, header: &[String], keep: &BTreeSet<usize>, reps: usize) -> Result<Self, CliError> {
        let mut kept: Vec<csv::StringRecord> = Vec::new();
        if !keep.is_empty() && path.exists() {
            let mut rdr = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
            for rec in rdr.records() {
                let rec = rec.map_err(|e| io_err(path, e))?;
                if rec.get(0).and_then(|s| s.parse::<usize>().ok()).is_some_and(|r| keep.contains(&r)) {
                    kept.push(rec);
                }
            }
        }
        let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
        w.write_record(header).map_err(|e| io_err(path, e))?;
        for r in &kept {
            w.write_record(r).map_err(|e| io_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))?;
        let mut me = Self {
            path: path.to_path_buf(),
            next: 0,
            end: reps,
            pending: BTreeMap::new(),
            skip: keep.clone(),
        };
        while me.skip.contains(&me.next) {
            me.next += 1;
        }
        Ok(me)
    }

    pub fn submit(&mut self, rep: usize, rows: Vec<Vec<String>>) -> Result<(), CliError> {
        self.pending.insert(rep, rows);
        let file = fs::OpenOptions::new()
            .append(true)
            .open(&self.path)
            .map_err(|e| io_err(&self.path, e))?;
        let mut w = csv::Writer::from_writer(file);
        while self.next < self.end {
            let Some(rows) = self.pending.remove(&self.next) else {
                break;
            };
            for r in rows {
                w.write_record(&r).map_err(|e| io_err(&self.path, e))?;
            }
            self.next += 1;
            while self.skip.contains(&self.next) {
                self.next += 1;
            }
        }
        w.flush().map_err(|e| io_err(&self.path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_roundtrip() {
        for v in [0.1, 1.0 / 3.0, 2.1783e-300, -7.5e300, f64::MIN_POSITIVE] {
            assert_eq!(fmt_float(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn writes_in_order_and_resumes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("results.csv");
        let (mut w, done) = OrderedWriter::open(&p, "ecl", 3, false).unwrap();
        assert!(done.is_empty());
        w.submit(1, 10, vec![Row::new(1, 10, "ecl", "sensitivity", Some(0.5))]).unwrap();
        // rep 1 is held back until rep 0 arrives
        assert_eq!(read_rows(&p).unwrap().len(), 0);
        w.submit(0, 10, vec![Row::new(0, 10, "ecl", "sensitivity", None)]).unwrap();
        let rows = read_rows(&p).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].repetition, 0);
        assert_eq!(rows[0].value, None);

        let (_, done) = OrderedWriter::open(&p, "ecl", 3, true).unwrap();
        assert_eq!(done.into_iter().collect::<Vec<_>>(), vec![0, 1]);
        let (_, done) = OrderedWriter::open(&p, "lhs", 3, true).unwrap();
        assert!(done.is_empty());
        assert_eq!(read_rows(&p).unwrap().len(), 4);
        let (_, _) = OrderedWriter::open(&p, "ecl", 3, false).unwrap();
        assert!(read_rows(&p).unwrap().is_empty());
    }
}
