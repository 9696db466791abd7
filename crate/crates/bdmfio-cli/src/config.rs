//! Versioned experiment configuration and fixture resolution.
//!
//! A config is a JSON document. Any object of the form `{"$fixture": "name"}` is replaced by the
//! contents of `name.json` (or `name` verbatim), searched in the config's directory and then in
//! each directory of `BDMFIO_FIXTURES`.

use crate::fixtures::{BlockRef, ChartRef, HFunction, PhaseRef, PointRef, SectionRef, SymbolRef};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::{Path, PathBuf};

/// Config schema version understood by this build.
pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable holding extra fixture directories.
pub const FIXTURE_ENV: &str = "BDMFIO_FIXTURES";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("fixture {0:?} not found in the search path")]
    MissingFixture(String),
    #[error("fixture references nest deeper than {0} levels")]
    FixtureDepth(usize),
    #[error("unsupported schema_version {found}, expected {SCHEMA_VERSION}")]
    Version { found: u32 },
    #[error("config is for subcommand {found:?}, not {requested:?}")]
    SubcommandMismatch { found: String, requested: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Top-level experiment config.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Stem of the report files.
    pub name: String,
    /// Seed of randomized fixtures.
    #[serde(default)]
    pub seed: u64,
    /// Half-line modes N.
    #[serde(default = "default_modes")]
    pub modes: usize,
    #[serde(default)]
    pub output: OutputPaths,
    pub experiment: Experiment,
}

fn default_modes() -> usize {
    64
}

/// Report file names relative to the output directory; defaults are `<name>.json`/`<name>.csv`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    pub json: Option<String>,
    pub csv: Option<String>,
}

/// Subcommand-specific parameters, tagged by `subcommand`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Experiment {
    CheckAdmissible(AdmissibleConfig),
    CheckTransmission(TransmissionConfig),
    Dirac(DiracConfig),
    Truncate(TruncateConfig),
    DefectSweep(DefectConfig),
    ComposeCases(ComposeConfig),
    Parametrix(ParametrixConfig),
    Egorov(EgorovConfig),
    Deform(DeformConfig),
    Index(IndexConfig),
    Independence(IndependenceConfig),
}

impl Experiment {
    pub fn subcommand(&self) -> &'static str {
        match self {
            Experiment::CheckAdmissible(_) => "check-admissible",
            Experiment::CheckTransmission(_) => "check-transmission",
            Experiment::Dirac(_) => "dirac",
            Experiment::Truncate(_) => "truncate",
            Experiment::DefectSweep(_) => "defect-sweep",
            Experiment::ComposeCases(_) => "compose-cases",
            Experiment::Parametrix(_) => "parametrix",
            Experiment::Egorov(_) => "egorov",
            Experiment::Deform(_) => "deform",
            Experiment::Index(_) => "index",
            Experiment::Independence(_) => "independence",
        }
    }
}

/// Expected outcome of a pass/fail check.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum Expect {
    Pass,
    Fail,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmissibleCase {
    pub chart: ChartRef,
    pub expect: Expect,
    /// Criteria that must fail when `expect` is `fail`; empty means any.
    #[serde(default)]
    pub failing: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmissibleConfig {
    pub cases: Vec<AdmissibleCase>,
    /// Largest residual accepted on passing charts.
    #[serde(default = "tight")]
    pub max_residual: f64,
}

fn tight() -> f64 {
    1e-8
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmissionCase {
    pub symbol: SymbolRef,
    pub expect: Expect,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmissionConfig {
    #[serde(default)]
    pub symbols: Vec<TransmissionCase>,
    #[serde(default)]
    pub projections: Vec<HFunction>,
    #[serde(default = "default_projection_tol")]
    pub projection_tolerance: f64,
}

fn default_projection_tol() -> f64 {
    1e-6
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderCase {
    pub symbol: SymbolRef,
    pub phase: PhaseRef,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiracConfig {
    /// Sup-norm tolerance of r⁺Op(1/(1+iξ_n))δ₀ = e^{−x}.
    #[serde(default = "default_projection_tol")]
    pub closed_form_tolerance: f64,
    pub sweep: Vec<f64>,
    pub x_prime: Vec<f64>,
    pub max_jet: usize,
    #[serde(default = "default_slack")]
    pub slope_slack: f64,
    pub order_cases: Vec<OrderCase>,
    /// Highest j of the ξ-multiplication induction identity.
    pub induction_max_j: usize,
    /// Random Schwartz fixtures besides e^{−x}, drawn from the config seed.
    pub induction_random: usize,
    #[serde(default = "default_projection_tol")]
    pub induction_tolerance: f64,
}

fn default_slack() -> f64 {
    0.3
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransposeConfig {
    pub point: PointRef,
    /// Symbol of the boundary-free transpose equality.
    pub regular_symbol: SymbolRef,
    #[serde(default = "tight")]
    pub tolerance: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivativeLossConfig {
    pub profile: bdmfio::geometry::ProfileFn,
    pub point: PointRef,
    pub coarse_modes: usize,
    pub fine_modes: usize,
    pub step: f64,
    pub pointwise_tolerance: f64,
    pub min_growth: f64,
    pub max_change: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncateConfig {
    pub transpose: TransposeConfig,
    pub derivative_loss: DerivativeLossConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum DefectExpect {
    /// Slope at most m − 1 + slack.
    Decay,
    /// Defect at most `exact_tolerance` at every sweep point.
    Exact,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefectCase {
    pub symbol: SymbolRef,
    pub phase: PhaseRef,
    pub expect: DefectExpect,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefectConfig {
    pub x_prime: Vec<f64>,
    pub direction: Vec<f64>,
    pub sweep: Vec<f64>,
    #[serde(default = "default_slack")]
    pub slope_slack: f64,
    #[serde(default = "default_projection_tol")]
    pub exact_tolerance: f64,
    pub cases: Vec<DefectCase>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockPair {
    pub left: BlockRef,
    pub right: BlockRef,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssociativityConfig {
    pub points: Vec<PointRef>,
    pub triples: Vec<[BlockRef; 3]>,
    #[serde(default = "tight")]
    pub tolerance: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComposeConfig {
    pub x_prime: Vec<f64>,
    pub direction: Vec<f64>,
    pub sweep: Vec<f64>,
    /// Composition cases to verify (1..=12).
    pub cases: Vec<usize>,
    #[serde(default = "default_slack")]
    pub slope_slack: f64,
    pub multiplicativity: Vec<BlockPair>,
    pub associativity: AssociativityConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParametrixCase {
    /// σ_∂ of a block at a frozen point.
    Block { block: BlockRef, point: PointRef },
    /// Boundary symbol of the flat phase x′ξ′ + f x_nξ_n at η′ = 0: u ↦ u(f x_n).
    FlatDilation { factor: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParametrixConfig {
    pub cases: Vec<ParametrixCase>,
    #[serde(default = "tight")]
    pub tolerance: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgorovCase {
    pub fio: BlockRef,
    pub operator: BlockRef,
    pub point: PointRef,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgorovConfig {
    pub cases: Vec<EgorovCase>,
    #[serde(default = "tight")]
    pub tolerance: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyRef {
    pub name: String,
    pub phase: PhaseRef,
    pub x_prime: Vec<f64>,
    pub eta_prime: Vec<f64>,
    pub t_grid: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeformConfig {
    pub family: FamilyRef,
    #[serde(default = "default_projection_tol")]
    pub identity_tolerance: f64,
    /// ‖P(t_last) − P(0)‖ must fall below this multiple of ‖P(0)‖.
    pub final_ratio: f64,
    /// ‖r⁺A(t_last)e⁻‖ must fall below this multiple of its first value.
    pub leak_ratio: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexCase {
    pub label: String,
    pub chart: ChartRef,
    pub section: SectionRef,
    pub point: PointRef,
    /// Coefficients of rank-one perturbations that must leave the index unchanged.
    #[serde(default)]
    pub rank_one: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexConfig {
    pub cases: Vec<IndexCase>,
    pub expected_index: i64,
    pub min_gap: f64,
    #[serde(default = "default_tau")]
    pub tau_rel: f64,
}

fn default_tau() -> f64 {
    1e-6
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum ProbeExpect {
    /// Same homotopy class, index difference 0.
    Zero,
    /// Different winding numbers; the probe must refuse.
    Obstructed,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeCase {
    pub label: String,
    pub chart: ChartRef,
    pub first: SectionRef,
    pub second: SectionRef,
    pub point: PointRef,
    pub expect: ProbeExpect,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndependenceConfig {
    pub cases: Vec<ProbeCase>,
    #[serde(default = "default_tau")]
    pub tau_rel: f64,
}

/// Directories searched for fixtures referenced from `config_path`.
pub fn search_path(config_path: &Path) -> Vec<PathBuf> {
    let mut dirs = vec![];
    if let Some(d) = config_path.parent() {
        dirs.push(if d.as_os_str().is_empty() {
            PathBuf::from(".")
        } else {
            d.to_path_buf()
        });
    }
    if let Some(v) = std::env::var_os(FIXTURE_ENV) {
        dirs.extend(std::env::split_paths(&v));
    }
    dirs
}

/// Locates a config or fixture file: the path itself, then `name` and `name.json` in `dirs`.
pub fn locate(name: &str, dirs: &[PathBuf]) -> Option<PathBuf> {
    let p = Path::new(name);
    if p.is_file() {
        return Some(p.to_path_buf());
    }
    if p.is_absolute() {
        return None;
    }
    dirs.iter()
        .flat_map(|d| [d.join(name), d.join(format!("{name}.json"))])
        .find(|c| c.is_file())
}

fn read_json(path: &Path) -> Result<Value, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ConfigError::Json {
        path: path.to_path_buf(),
        source,
    })
}

const MAX_DEPTH: usize = 16;

fn resolve(v: Value, dirs: &[PathBuf], depth: usize) -> Result<Value, ConfigError> {
    if depth > MAX_DEPTH {
        return Err(ConfigError::FixtureDepth(MAX_DEPTH));
    }
    match v {
        Value::Object(map) => {
            if map.len() == 1 {
                if let Some(Value::String(name)) = map.get("$fixture") {
                    let path = locate(name, dirs)
                        .ok_or_else(|| ConfigError::MissingFixture(name.clone()))?;
                    return resolve(read_json(&path)?, dirs, depth + 1);
                }
            }
            map.into_iter()
                .map(|(k, v)| resolve(v, dirs, depth).map(|v| (k, v)))
                .collect::<Result<_, _>>()
                .map(Value::Object)
        }
        Value::Array(a) => a
            .into_iter()
            .map(|v| resolve(v, dirs, depth))
            .collect::<Result<_, _>>()
            .map(Value::Array),
        other => Ok(other),
    }
}

/// Reads, resolves and validates a config for `subcommand`.
pub fn load(config: &str, subcommand: &str) -> Result<ExperimentConfig, ConfigError> {
    let env_dirs = search_path(Path::new(""));
    let path =
        locate(config, &env_dirs).ok_or_else(|| ConfigError::MissingFixture(config.to_string()))?;
    let raw = read_json(&path)?;
    let resolved = resolve(raw, &search_path(&path), 0)?;
    if let Some(v) = resolved.get("schema_version").and_then(Value::as_u64) {
        if v != SCHEMA_VERSION as u64 {
            return Err(ConfigError::Version { found: v as u32 });
        }
    }
    let cfg: ExperimentConfig =
        serde_json::from_value(resolved).map_err(|source| ConfigError::Json {
            path: path.clone(),
            source,
        })?;
    let found = cfg.experiment.subcommand();
    if found != subcommand {
        return Err(ConfigError::SubcommandMismatch {
            found: found.into(),
            requested: subcommand.into(),
        });
    }
    if cfg.modes < 8 {
        return Err(ConfigError::Invalid(format!(
            "modes must be at least 8, got {}",
            cfg.modes
        )));
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(&p, text).unwrap();
        p
    }

    const EGOROV: &str =
        r#"{"schema_version": 1, "name": "e", "experiment": {"$fixture": "parts/egorov"}}"#;

    #[test]
    fn fixture_references_resolve_relative_to_the_config() {
        let tmp = tempfile::tempdir().unwrap();
        write(
            tmp.path(),
            "parts/egorov.json",
            r#"{"subcommand": "egorov", "cases": []}"#,
        );
        let cfg = write(tmp.path(), "e.json", EGOROV);
        let c = load(cfg.to_str().unwrap(), "egorov").unwrap();
        assert_eq!(c.modes, 64);
        assert_eq!(c.seed, 0);
        assert_eq!(c.experiment.subcommand(), "egorov");
    }

    #[test]
    fn missing_fixture_and_wrong_subcommand_are_errors() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = write(tmp.path(), "e.json", EGOROV);
        assert!(matches!(
            load(cfg.to_str().unwrap(), "egorov"),
            Err(ConfigError::MissingFixture(_))
        ));
        write(
            tmp.path(),
            "parts/egorov.json",
            r#"{"subcommand": "egorov", "cases": []}"#,
        );
        assert!(matches!(
            load(cfg.to_str().unwrap(), "dirac"),
            Err(ConfigError::SubcommandMismatch { .. })
        ));
    }

    #[test]
    fn version_and_cycles_are_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = write(
            tmp.path(),
            "v.json",
            r#"{"schema_version": 2, "name": "v", "experiment": {"subcommand": "egorov", "cases": []}}"#,
        );
        assert!(matches!(
            load(cfg.to_str().unwrap(), "egorov"),
            Err(ConfigError::Version { found: 2 })
        ));
        write(tmp.path(), "loop.json", r#"{"$fixture": "loop"}"#);
        let cfg = write(
            tmp.path(),
            "c.json",
            r#"{"schema_version": 1, "name": "c", "experiment": {"$fixture": "loop"}}"#,
        );
        assert!(matches!(
            load(cfg.to_str().unwrap(), "egorov"),
            Err(ConfigError::FixtureDepth(_))
        ));
    }
}
