//! Experiment harness for `bdmfio`: loads a versioned JSON config, runs one subcommand and
//! writes a JSON report (plus CSV where the subcommand has a table).

pub mod commands;
pub mod config;
pub mod fixtures;
pub mod report;

use bdmfio::normal_ops::NormalOptions;
use commands::Context;
use report::Report;
use std::path::PathBuf;

/// Subcommand names in the order they are listed.
pub const SUBCOMMANDS: [&str; 11] = [
    "check-admissible",
    "check-transmission",
    "dirac",
    "truncate",
    "defect-sweep",
    "compose-cases",
    "parametrix",
    "egorov",
    "deform",
    "index",
    "independence",
];

/// Process exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass = 0,
    CriterionFailure = 1,
    ConfigError = 2,
}

/// Command-line settings shared by every subcommand.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub config: String,
    pub out_dir: PathBuf,
    /// Worker threads; `None` uses the rayon default.
    pub jobs: Option<usize>,
    pub no_timestamp: bool,
    pub tolerance_scale: f64,
}

/// What a run produced.
#[derive(Debug)]
pub struct RunOutput {
    pub status: Status,
    pub report: Option<Report>,
    pub files: Vec<PathBuf>,
    /// Human-readable diagnostics (config errors or failing criteria).
    pub messages: Vec<String>,
}

fn config_error(msg: String) -> RunOutput {
    RunOutput {
        status: Status::ConfigError,
        report: None,
        files: vec![],
        messages: vec![msg],
    }
}

/// Loads the config, runs `subcommand` and writes its reports.
pub fn run(subcommand: &str, opts: &RunOptions) -> RunOutput {
    if !SUBCOMMANDS.contains(&subcommand) {
        return config_error(format!("unknown subcommand {subcommand:?}"));
    }
    if !(opts.tolerance_scale > 0.0 && opts.tolerance_scale.is_finite()) {
        return config_error(format!(
            "--tolerance-scale must be positive, got {}",
            opts.tolerance_scale
        ));
    }
    let cfg = match config::load(&opts.config, subcommand) {
        Ok(c) => c,
        Err(e) => return config_error(e.to_string()),
    };
    let ctx = Context {
        opts: NormalOptions {
            modes: cfg.modes,
            ..Default::default()
        },
        seed: cfg.seed,
        scale: opts.tolerance_scale,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = opts.jobs {
        pool = pool.num_threads(j.max(1));
    }
    let out = match pool.build() {
        Ok(p) => p.install(|| commands::dispatch(&cfg.experiment, &ctx)),
        Err(e) => return config_error(format!("cannot start worker pool: {e}")),
    };
    let passed = out.criteria.passed();
    let failures = out.criteria.failures();
    let report = Report {
        report_version: report::REPORT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        subcommand: subcommand.into(),
        config_name: cfg.name.clone(),
        timestamp: if opts.no_timestamp {
            None
        } else {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .ok()
                .map(|d| d.as_secs())
        },
        modes: cfg.modes,
        seed: cfg.seed,
        tolerance_scale: opts.tolerance_scale,
        passed,
        criteria: out.criteria.items,
        failures: failures.clone(),
        results: out.results,
    };
    let json_name = cfg
        .output
        .json
        .clone()
        .unwrap_or_else(|| format!("{}.json", cfg.name));
    let csv_name = cfg
        .output
        .csv
        .clone()
        .unwrap_or_else(|| format!("{}.csv", cfg.name));
    let files = match report::write(
        &report,
        out.table.as_ref(),
        &opts.out_dir,
        &json_name,
        &csv_name,
    ) {
        Ok(f) => f,
        Err(e) => {
            return config_error(format!(
                "cannot write reports to {}: {e}",
                opts.out_dir.display()
            ))
        }
    };
    RunOutput {
        status: if passed {
            Status::Pass
        } else {
            Status::CriterionFailure
        },
        report: Some(report),
        files,
        messages: failures,
    }
}
