//! Acceptance suite: runs the shipped fixtures through the harness and prints one
//! PASS/FAIL line per criterion.
//!
//! Criterion 10 (deformation) is known to fail: the family is dilation covariant, so
//! ‖P(t) − P(0)‖ on L²_w does not tend to zero. The main test reports it without asserting;
//! `deformation_strict` asserts it and is ignored by default.

use bdmfio_cli::report::{CriterionResult, Report};
use bdmfio_cli::{run, RunOptions, RunOutput, Status};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(format!("{name}.json"))
        .to_string_lossy()
        .into_owned()
}

fn run_fixture(subcommand: &str, name: &str, out: &Path) -> (RunOutput, Duration) {
    let opts = RunOptions {
        config: fixture(name),
        out_dir: out.to_path_buf(),
        jobs: None,
        no_timestamp: true,
        tolerance_scale: 1.0,
    };
    let start = Instant::now();
    let o = run(subcommand, &opts);
    (o, start.elapsed())
}

/// Outcome of one criterion.
struct Verdict {
    passed: bool,
    notes: Vec<String>,
}

impl Verdict {
    fn new() -> Self {
        Self {
            passed: true,
            notes: vec![],
        }
    }

    fn require(&mut self, ok: bool, note: impl Into<String>) {
        if !ok {
            self.passed = false;
            self.notes.push(note.into());
        }
    }

    /// At least `count` criteria under `anchor`, all passing, each satisfying `bound`.
    fn anchor(
        &mut self,
        report: Option<&Report>,
        anchor: &str,
        count: usize,
        bound: impl Fn(&CriterionResult) -> bool,
    ) {
        let Some(r) = report else {
            self.require(false, format!("{anchor}: no report"));
            return;
        };
        let items: Vec<_> = r.criteria.iter().filter(|c| c.anchor == anchor).collect();
        self.require(
            items.len() >= count,
            format!("{anchor}: {} of {count} checks", items.len()),
        );
        for c in items {
            self.require(c.passed, format!("{anchor} [{}]: {}", c.subject, c.detail));
            self.require(
                bound(c),
                format!(
                    "{anchor} [{}]: threshold {:?} too loose",
                    c.subject, c.threshold
                ),
            );
        }
    }

    fn budget(&mut self, took: Duration, limit_s: u64) {
        self.require(
            took <= Duration::from_secs(limit_s),
            format!("runtime {:.1}s over {limit_s}s", took.as_secs_f64()),
        );
    }

    fn line(&self, id: usize, name: &str, took: Duration) -> String {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        let mut s = format!(
            "criterion {id:>2} {tag}: {name} ({:.1}s)",
            took.as_secs_f64()
        );
        for n in &self.notes {
            s.push_str("\n      ");
            s.push_str(n);
        }
        s
    }
}

fn at_most(tol: f64) -> impl Fn(&CriterionResult) -> bool {
    move |c| c.threshold.is_some_and(|t| t <= tol)
}

fn at_least(tol: f64) -> impl Fn(&CriterionResult) -> bool {
    move |c| c.threshold.is_some_and(|t| t >= tol)
}

fn any(_: &CriterionResult) -> bool {
    true
}

fn deformation_verdict(out: &Path) -> (Verdict, Duration) {
    let (o, took) = run_fixture("deform", "deform", out);
    let mut v = Verdict::new();
    let r = o.report.as_ref();
    v.anchor(r, "deformation P(0) identity", 1, at_most(1e-6));
    v.anchor(r, "deformation monotone decrease", 1, any);
    v.anchor(r, "deformation final ratio", 1, at_most(0.1));
    v.anchor(r, "deformation leak ratio", 1, at_most(0.05));
    v.anchor(r, "Schur bound domination", 1, any);
    v.budget(took, 180);
    (v, took)
}

fn bin_run(subcommand: &str, name: &str, out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_bdmfio"))
        .args([
            subcommand,
            "--config",
            &fixture(name),
            "--no-timestamp",
            "--out-dir",
        ])
        .arg(out)
        .output()
        .expect("binary runs")
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            (
                PathBuf::from(p.file_name().unwrap()),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn acceptance() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    let mut lines = vec![];
    let mut failed = vec![];
    let mut record = |id: usize, name: &str, v: &Verdict, took: Duration, expected_fail: bool| {
        lines.push(v.line(id, name, took));
        if !v.passed && !expected_fail {
            failed.push(id);
        }
    };

    // 1. admissibility
    let (o, took) = run_fixture("check-admissible", "admissible", out);
    let mut v = Verdict::new();
    let r = o.report.as_ref();
    v.anchor(r, "admissibility", 2, any);
    v.anchor(r, "admissibility residual", 2, at_most(1e-8));
    v.anchor(r, "admissibility symplecticity rejection", 1, any);
    v.budget(took, 10);
    record(1, "admissibility suite", &v, took, false);

    // 2. transmission
    let (o, took) = run_fixture("check-transmission", "transmission", out);
    let mut v = Verdict::new();
    let r = o.report.as_ref();
    v.anchor(r, "transmission symmetry", 4, any);
    v.anchor(r, "H-projection reconstruction", 3, at_most(1e-6));
    let (bad, _) = run_fixture("check-transmission", "transmission-abs-xi", out);
    v.require(
        bad.status == Status::CriterionFailure,
        "|xi| was not rejected",
    );
    v.budget(took, 10);
    record(2, "transmission suite", &v, took, false);

    // 3 and 4 share the dirac run
    let (o, took) = run_fixture("dirac", "dirac", out);
    let r = o.report.as_ref();
    let mut v = Verdict::new();
    v.anchor(r, "Dirac closed form", 1, at_most(1e-6));
    v.anchor(r, "Dirac order", 2, at_most(0.3));
    v.budget(took, 30);
    record(
        3,
        "Dirac-action closed forms and order sweep",
        &v,
        took,
        false,
    );
    let mut v = Verdict::new();
    v.anchor(r, "derivative induction", 6, at_most(1e-6));
    record(4, "derivative induction identity", &v, took, false);

    // 5 and 6 share the truncate run
    let (o, took) = run_fixture("truncate", "truncate", out);
    let r = o.report.as_ref();
    let mut v = Verdict::new();
    for a in [
        "transpose weak pairing",
        "transpose regular part",
        "transpose boundary atom",
        "transpose equality",
    ] {
        v.anchor(r, a, 1, at_most(1e-8));
    }
    record(5, "transpose anomaly", &v, took, false);
    let mut v = Verdict::new();
    v.anchor(r, "conjugated derivative pointwise", 1, at_most(1e-4));
    v.anchor(r, "derivative loss growth", 1, at_least(2.0));
    v.anchor(r, "H1 to H0 stability", 1, at_most(0.1));
    record(6, "derivative-loss counterexample", &v, took, false);

    // 7. symbol defect
    let (o, took) = run_fixture("defect-sweep", "defect", out);
    let r = o.report.as_ref();
    let mut v = Verdict::new();
    v.anchor(r, "symbol-defect slope", 2, at_most(0.3));
    v.anchor(r, "symbol-defect exact", 1, at_most(1e-6));
    record(7, "boundary-symbol defect", &v, took, false);

    // 8. composition
    let (o, took) = run_fixture("compose-cases", "compose", out);
    let r = o.report.as_ref();
    let mut v = Verdict::new();
    v.anchor(r, "composition order and type", 12, any);
    v.anchor(r, "multiplicativity slope", 1, any);
    v.anchor(r, "associativity", 1, at_most(1e-8));
    record(8, "composition suite", &v, took, false);

    // 9. parametrix
    let (o, took) = run_fixture("parametrix", "parametrix", out);
    let mut v = Verdict::new();
    v.anchor(o.report.as_ref(), "parametrix residual", 3, at_most(1e-8));
    record(9, "parametrix", &v, took, false);

    // 10. deformation (expected to fail, see module docs)
    let (v, took) = deformation_verdict(out);
    record(10, "deformation experiment (known failure)", &v, took, true);

    // 11. index and section independence
    let (o, took_i) = run_fixture("index", "index", out);
    let r = o.report.as_ref();
    let mut v = Verdict::new();
    v.anchor(r, "ellipticity", 3, any);
    v.anchor(r, "index value", 3, any);
    v.anchor(r, "index svd gap", 3, at_least(10.0));
    v.anchor(r, "index stability", 3, any);
    let (o, took_s) = run_fixture("independence", "independence", out);
    let r = o.report.as_ref();
    v.anchor(r, "section independence", 2, any);
    v.anchor(r, "section homotopy obstruction", 1, any);
    v.budget(took_i + took_s, 300);
    record(
        11,
        "index and section independence",
        &v,
        took_i + took_s,
        false,
    );

    // 12. determinism of the binary
    let start = Instant::now();
    let mut v = Verdict::new();
    for (sub, name) in [("dirac", "dirac"), ("defect-sweep", "defect")] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let (ra, rb) = (bin_run(sub, name, a.path()), bin_run(sub, name, b.path()));
        v.require(
            ra.status.success() && rb.status.success(),
            format!("{name}: runs failed"),
        );
        let (fa, fb) = (files(a.path()), files(b.path()));
        v.require(
            fa.len() == 2,
            format!("{name}: expected JSON and CSV, got {}", fa.len()),
        );
        v.require(fa == fb, format!("{name}: outputs differ"));
    }
    record(12, "determinism", &v, start.elapsed(), false);

    for l in &lines {
        println!("{l}");
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}

#[test]
#[ignore = "known failure: the deformation family is dilation covariant"]
fn deformation_strict() {
    let tmp = tempfile::tempdir().unwrap();
    let (v, took) = deformation_verdict(tmp.path());
    println!("{}", v.line(10, "deformation experiment", took));
    assert!(v.passed);
}

#[test]
fn criterion_failure_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin_run("check-transmission", "transmission-abs-xi", tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("transmission symmetry"), "{err}");
}

#[test]
fn config_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    // subcommand does not match the config
    let o = bin_run("dirac", "transmission", tmp.path());
    assert_eq!(o.status.code(), Some(2));
    // missing file
    let o = bin_run("dirac", "no-such-config", tmp.path());
    assert_eq!(o.status.code(), Some(2));
    // unknown field
    let bad = tmp.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"schema_version": 1, "name": "x", "experiment": {"subcommand": "egorov", "bogus": 1}}"#,
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_bdmfio"))
        .args(["egorov", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("config error"));
}
