use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;

fn ecl() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ecl"))
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p
}

fn run(args: &[&str], config: &Path, out: &Path) -> i32 {
    let o = ecl()
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap();
    if !o.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&o.stderr));
    }
    o.status.code().unwrap()
}

fn read(p: impl AsRef<Path>) -> String {
    fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn branin(x: &[f64]) -> f64 {
    let pi = std::f64::consts::PI;
    let (a, b, c) = (1.0, 5.1 / (4.0 * pi * pi), 5.0 / pi);
    let (r, s, t) = (6.0, 10.0, 1.0 / (8.0 * pi));
    a * (x[1] - b * x[0] * x[0] + c * x[0] - r).powi(2) + s * (1.0 - t) * x[0].cos() + s
}

const SMALL_BRANIN: &str = r#"{"benchmark": "branin", "repetitions": 3, "seed": 11, "test_size": 5000,
  "design": {"n_initial": 10, "n_total": 20, "batch_size": 5}}"#;

#[test]
fn config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let bad = write_config(dir.path(), "bad.json", r#"{"benchmark": "branin", "colour": 3}"#);
    assert_eq!(run(&["design"], &bad, &out), 2);
    let unknown = write_config(dir.path(), "unknown.json", r#"{"benchmark": "rosenbrock"}"#);
    assert_eq!(run(&["design"], &unknown, &out), 2);
    assert_eq!(run(&["design"], &dir.path().join("missing.json"), &out), 2);
    let m0 = write_config(dir.path(), "m0.json", r#"{"benchmark": "branin", "oracle_samples": 0}"#);
    assert_eq!(run(&["oracle"], &m0, &out), 2);
    let indiv = write_config(
        dir.path(),
        "indiv.json",
        r#"{"benchmark": "branin", "design": {"n_initial": 10, "n_total": 23, "batch_size": 5}}"#,
    );
    assert_eq!(run(&["design"], &indiv, &out), 2);
    let both = write_config(
        dir.path(),
        "both.json",
        r#"{"benchmark": "branin", "external": {"bounds": {"lo": [0], "hi": [1]},
            "limit": {"threshold": 1, "direction": 1}}}"#,
    );
    assert_eq!(run(&["design"], &both, &out), 2);
}

#[test]
fn empty_loop_gives_one_report() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"benchmark": "branin", "test_size": 2000, "design": {"n_initial": 10, "n_total": 10}}"#,
    );
    assert_eq!(run(&["design"], &cfg, &out), 0);
    let trace = read(out.join("trace.csv"));
    assert_eq!(trace.lines().count(), 1, "header only");
    let results = read(out.join("results.csv"));
    let sens: Vec<&str> = results.lines().filter(|l| l.contains(",sensitivity,")).collect();
    assert_eq!(sens.len(), 1);
    assert!(sens[0].starts_with("0,10,ecl,"));
    assert!(out.join("model.json").exists());
    assert!(out.join("config.json").exists());
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL_BRANIN);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run(&["design", "--workers", "1"], &cfg, &a), 0);
    assert_eq!(run(&["design", "--workers", "8"], &cfg, &b), 0);
    for f in ["results.csv", "trace.csv", "model-rep0.json", "model-rep2.json", "config.json"] {
        assert_eq!(read(a.join(f)), read(b.join(f)), "{f}");
    }
}

#[test]
fn seed_flag_overrides_config() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL_BRANIN);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run(&["design", "--reps", "1"], &cfg, &a), 0);
    assert_eq!(run(&["design", "--reps", "1", "--seed", "12"], &cfg, &b), 0);
    assert_ne!(read(a.join("trace.csv")), read(b.join("trace.csv")));
    assert!(read(b.join("config.json")).contains("\"seed\": 12"));
}

#[test]
fn resume_after_interruption_matches_full_run() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL_BRANIN);
    let full = dir.path().join("full");
    assert_eq!(run(&["design"], &cfg, &full), 0);
    let expected = read(full.join("results.csv"));

    // Cut the table inside repetition 2, before its completion marker.
    let part = dir.path().join("part");
    fs::create_dir_all(&part).unwrap();
    let lines: Vec<&str> = expected.lines().collect();
    let last_done = lines.iter().rposition(|l| l.starts_with("1,") && l.contains(",completed,")).unwrap();
    let cut = lines[..last_done + 3].join("\n") + "\n";
    fs::write(part.join("results.csv"), cut).unwrap();
    fs::copy(full.join("trace.csv"), part.join("trace.csv")).unwrap();
    fs::copy(full.join("timing.csv"), part.join("timing.csv")).unwrap();
    assert_eq!(run(&["design", "--resume"], &cfg, &part), 0);
    assert_eq!(read(part.join("results.csv")), expected);
    assert_eq!(read(part.join("trace.csv")), read(full.join("trace.csv")));

    // Growing the repetition count only runs the new ones.
    let grow = dir.path().join("grow");
    assert_eq!(run(&["design", "--reps", "2"], &cfg, &grow), 0);
    assert_eq!(run(&["design", "--resume"], &cfg, &grow), 0);
    assert_eq!(read(grow.join("results.csv")), expected);
}

#[test]
fn baseline_equals_design_without_acquisitions() {
    let dir = TempDir::new().unwrap();
    let base_cfg = write_config(
        dir.path(),
        "base.json",
        r#"{"benchmark": "branin", "test_size": 3000, "seed": 5, "design": {"n_initial": 10, "n_total": 30}}"#,
    );
    let full_cfg = write_config(
        dir.path(),
        "full.json",
        r#"{"benchmark": "branin", "test_size": 3000, "seed": 5, "method": "lhs",
            "design": {"n_initial": 30, "n_total": 30}}"#,
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run(&["baseline"], &base_cfg, &a), 0);
    assert_eq!(run(&["design"], &full_cfg, &b), 0);
    assert_eq!(read(a.join("results.csv")), read(b.join("results.csv")));
    assert_eq!(read(a.join("model.json")), read(b.join("model.json")));
}

#[test]
fn methods_share_one_results_file() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"benchmark": "branin", "test_size": 3000, "oracle_samples": 20000,
            "design": {"n_initial": 10, "n_total": 15}}"#,
    );
    let out = dir.path().join("out");
    assert_eq!(run(&["design"], &cfg, &out), 0);
    assert_eq!(run(&["baseline"], &cfg, &out), 0);
    assert_eq!(run(&["oracle"], &cfg, &out), 0);
    let results = read(out.join("results.csv"));
    assert!(results.starts_with("# ecl-results v1\nrepetition,n,method,metric,value\n"));
    for m in [",ecl,", ",lhs,", ",mc,"] {
        assert!(results.contains(m), "{m}");
    }
    for line in results.lines().skip(2) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f.len(), 5);
        if !f[4].is_empty() {
            let v: f64 = f[4].parse().unwrap();
            assert_eq!(format!("{v:.16e}"), f[4]);
        }
    }
    // rerunning one method replaces only its own rows
    assert_eq!(run(&["oracle"], &cfg, &out), 0);
    assert_eq!(read(out.join("results.csv")), results);
}

#[test]
fn mfis_with_no_predicted_failures_reports_zero() {
    let dir = TempDir::new().unwrap();
    let design = write_config(
        dir.path(),
        "d.json",
        r#"{"benchmark": "branin", "test_size": 1000, "design": {"n_initial": 10, "n_total": 10}}"#,
    );
    let out = dir.path().join("out");
    assert_eq!(run(&["design"], &design, &out), 0);
    let mfis = write_config(
        dir.path(),
        "m.json",
        r#"{"benchmark": "branin", "limit": {"threshold": 1e6, "direction": 1},
            "mfis": {"m_surrogate": 10000, "m_star": 100}}"#,
    );
    let model = out.join("model.json");
    assert_eq!(run(&["mfis", "--model", model.to_str().unwrap()], &mfis, &out), 0);
    let results = read(out.join("results.csv"));
    assert!(results.contains("0,100,mfis,alpha_hat,0.0000000000000000e0"));
    assert!(results.contains("0,100,mfis,no_failures,1.0000000000000000e0"));
    assert!(!out.join("bias.json").exists());
}

#[test]
fn mfis_without_model_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "m.json",
        r#"{"benchmark": "branin", "mfis": {"m_surrogate": 1000, "m_star": 100}}"#,
    );
    assert_eq!(run(&["mfis"], &cfg, &dir.path().join("out")), 2);
}

fn external_config(dir: &Path) -> PathBuf {
    write_config(
        dir,
        "ext.json",
        r#"{"external": {"bounds": {"lo": [-5, 0], "hi": [10, 15]},
                         "limit": {"threshold": 206, "direction": 1}},
            "seed": 3,
            "design": {"n_initial": 10, "n_total": 20, "batch_size": 5}}"#,
    )
}

fn answer_pending(out: &Path, f: impl Fn(&[f64]) -> f64) {
    let pending = read(out.join("pending.csv"));
    let mut text = String::from("x1,x2,y\n");
    for line in pending.lines().skip(1) {
        let x: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        text += &format!("{line},{:.17e}\n", f(&x));
    }
    fs::write(out.join("responses.csv"), text).unwrap();
}

#[test]
fn external_round_trip_matches_in_process_design() {
    let dir = TempDir::new().unwrap();
    let cfg = external_config(dir.path());
    let out = dir.path().join("ext");
    let mut rounds = 0;
    loop {
        assert_eq!(run(&["design"], &cfg, &out), 0);
        if !out.join("pending.csv").exists() {
            break;
        }
        answer_pending(&out, branin);
        rounds += 1;
        assert!(rounds < 10);
    }
    // initial design plus two batches of five
    assert_eq!(rounds, 3);
    assert_eq!(read(out.join("trace.csv")).lines().count(), 11);
    assert!(out.join("responses-0001.csv").exists());

    let inproc = write_config(
        dir.path(),
        "in.json",
        r#"{"benchmark": "branin", "seed": 3, "test_size": 100,
            "design": {"n_initial": 10, "n_total": 20, "batch_size": 5}}"#,
    );
    let b = dir.path().join("in");
    assert_eq!(run(&["design"], &inproc, &b), 0);
    assert_eq!(read(out.join("model.json")), read(b.join("model.json")));
}

#[test]
fn external_rejects_mismatched_or_failed_responses() {
    let dir = TempDir::new().unwrap();
    let cfg = external_config(dir.path());
    let out = dir.path().join("ext");
    assert_eq!(run(&["design"], &cfg, &out), 0);
    // waiting without responses is not an error
    assert_eq!(run(&["design"], &cfg, &out), 0);

    let pending = read(out.join("pending.csv"));
    let mut text = String::from("x1,x2,y\n");
    for line in pending.lines().skip(1) {
        text += &format!("{line}1,0.0\n");
    }
    fs::write(out.join("responses.csv"), text).unwrap();
    assert_eq!(run(&["design"], &cfg, &out), 2);

    answer_pending(&out, |x| if x[0] > 5.0 { f64::NAN } else { branin(x) });
    assert_eq!(run(&["design"], &cfg, &out), 3);
}
