//! Report model: criteria verdicts, subcommand results and deterministic JSON/CSV output.

use serde::Serialize;
use serde_json::Value;
use std::path::{Path, PathBuf};

/// Version of the report layout.
pub const REPORT_VERSION: u32 = 1;

/// One declared criterion and its verdict.
#[derive(Clone, Debug, Serialize)]
pub struct CriterionResult {
    /// Stable identifier of the checked property, e.g. "symbol-defect slope".
    pub anchor: String,
    /// What was measured (fixture label).
    pub subject: String,
    pub passed: bool,
    pub value: Option<f64>,
    pub threshold: Option<f64>,
    pub detail: String,
}

/// Collects criteria for one run.
#[derive(Debug, Default)]
pub struct Criteria {
    pub items: Vec<CriterionResult>,
}

impl Criteria {
    /// Passes when `value ≤ threshold`.
    pub fn at_most(&mut self, anchor: &str, subject: &str, value: f64, threshold: f64) {
        self.items.push(CriterionResult {
            anchor: anchor.into(),
            subject: subject.into(),
            passed: value <= threshold,
            value: Some(value),
            threshold: Some(threshold),
            detail: format!("{value:e} <= {threshold:e}"),
        });
    }

    /// Passes when `value ≥ threshold`.
    pub fn at_least(&mut self, anchor: &str, subject: &str, value: f64, threshold: f64) {
        self.items.push(CriterionResult {
            anchor: anchor.into(),
            subject: subject.into(),
            passed: value >= threshold,
            value: Some(value),
            threshold: Some(threshold),
            detail: format!("{value:e} >= {threshold:e}"),
        });
    }

    pub fn check(&mut self, anchor: &str, subject: &str, passed: bool, detail: impl Into<String>) {
        self.items.push(CriterionResult {
            anchor: anchor.into(),
            subject: subject.into(),
            passed,
            value: None,
            threshold: None,
            detail: detail.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.items.iter().all(|c| c.passed)
    }

    /// "anchor [subject]: detail" for every failing criterion.
    pub fn failures(&self) -> Vec<String> {
        self.items
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{} [{}]: {}", c.anchor, c.subject, c.detail))
            .collect()
    }
}

/// Top-level JSON report.
#[derive(Debug, Serialize)]
pub struct Report {
    pub report_version: u32,
    pub tool_version: String,
    pub subcommand: String,
    pub config_name: String,
    /// Seconds since the Unix epoch; omitted with --no-timestamp.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
    pub modes: usize,
    pub seed: u64,
    pub tolerance_scale: f64,
    pub passed: bool,
    pub criteria: Vec<CriterionResult>,
    pub failures: Vec<String>,
    pub results: Value,
}

/// Rows of an optional CSV table.
#[derive(Debug, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: vec![],
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

/// Shortest round-trip text of a float, as in the JSON report.
pub fn num(v: f64) -> String {
    serde_json::to_string(&v).unwrap_or_else(|_| "null".into())
}

/// Writes `report` as pretty JSON and `table` as CSV; returns the paths written.
pub fn write(
    report: &Report,
    table: Option<&Table>,
    dir: &Path,
    json_name: &str,
    csv_name: &str,
) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut out = vec![];
    let jp = dir.join(json_name);
    let mut text = serde_json::to_string_pretty(report).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(&jp, text)?;
    out.push(jp);
    let cp = dir.join(csv_name);
    if let Some(t) = table {
        let mut w = csv::Writer::from_path(&cp)?;
        w.write_record(&t.header)?;
        for r in &t.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        out.push(cp);
    } else if cp.is_file() {
        // a table left by an earlier run of the same config would be stale
        std::fs::remove_file(&cp)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn criteria_verdicts_and_failure_lines() {
        let mut c = Criteria::default();
        c.at_most("residual", "a", 1e-9, 1e-8);
        c.at_least("gap", "b", 5.0, 10.0);
        c.check("class", "c", true, "ok");
        assert!(!c.passed());
        assert_eq!(c.failures(), vec!["gap [b]: 5e0 >= 1e1".to_string()]);
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-300, -2.5e17] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn stale_table_is_removed() {
        let tmp = tempfile::tempdir().unwrap();
        let report = Report {
            report_version: REPORT_VERSION,
            tool_version: "0".into(),
            subcommand: "dirac".into(),
            config_name: "r".into(),
            timestamp: None,
            modes: 8,
            seed: 0,
            tolerance_scale: 1.0,
            passed: true,
            criteria: vec![],
            failures: vec![],
            results: Value::Null,
        };
        let mut t = Table::new(&["x"]);
        t.push(vec![num(1.0)]);
        let written = write(&report, Some(&t), tmp.path(), "r.json", "r.csv").unwrap();
        assert_eq!(written.len(), 2);
        assert_eq!(
            std::fs::read_to_string(tmp.path().join("r.csv")).unwrap(),
            "x\n1.0\n"
        );
        let json = std::fs::read_to_string(tmp.path().join("r.json")).unwrap();
        assert!(json.ends_with("}\n") && !json.contains("timestamp"));
        write(&report, None, tmp.path(), "r.json", "r.csv").unwrap();
        assert!(!tmp.path().join("r.csv").exists());
    }
}
