//! Command implementations behind the `fedstpa` binary.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
//!
//! `run` writes two files into the output directory, one line per round as
//! it completes:
//!
//! - `rounds.jsonl`: one JSON object per round with the fields `round`,
//!   `selected`, `malicious_selected`, `benign_kept`, `alpha`, `eta`,
//!   `discarded`, `test_error_pct` (`alpha`/`eta` are `null` for rules
//!   other than `stpa`)
//! - `summary.csv`: `round,test_error_pct,alpha,eta,benign_kept,malicious_selected,discarded`
//!
//! Floats are written in shortest round-trip form.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregation::AggregationRule;
use crate::data;
use crate::error::Error;
use crate::simulation::{final_stats, malicious_count, Experiment, RoundLog, ScenarioConfig};

/// Environment variable overriding the config file's seed.
pub const SEED_ENV: &str = "BB_SEED";

/// Rounds averaged for the final-error statistics.
pub const FINAL_WINDOW: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Runtime(Error::Config(_)) => 2,
            Self::Runtime(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// File names inside the output directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(default = "default_jsonl")]
    pub jsonl: PathBuf,
    #[serde(default = "default_csv")]
    pub csv: PathBuf,
}

fn default_jsonl() -> PathBuf {
    "rounds.jsonl".into()
}

fn default_csv() -> PathBuf {
    "summary.csv".into()
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            jsonl: default_jsonl(),
            csv: default_csv(),
        }
    }
}

/// A run config: every [`ScenarioConfig`] field at the top level, plus an
/// optional `output` object.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfigFile {
    pub scenario: ScenarioConfig,
    pub output: OutputPaths,
}

impl RunConfigFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| CliError::Usage("config: expected a JSON object".into()))?;
        let output = match obj.remove("output") {
            Some(v) => serde_json::from_value(v).map_err(|e| CliError::Usage(format!("config output: {e}")))?,
            None => OutputPaths::default(),
        };
        let scenario: ScenarioConfig =
            serde_json::from_value(value).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        scenario
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(Self { scenario, output })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

/// Seed precedence: file < `BB_SEED` < `--seed`.
pub fn resolve_seed(file_seed: u64, env: Option<&str>, flag: Option<u64>) -> CliResult<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        None => Ok(file_seed),
    }
}

#[derive(Serialize)]
struct CsvRow {
    round: usize,
    test_error_pct: f64,
    alpha: Option<f64>,
    eta: Option<f64>,
    benign_kept: usize,
    malicious_selected: usize,
    discarded: bool,
}

impl From<&RoundLog> for CsvRow {
    fn from(l: &RoundLog) -> Self {
        Self {
            round: l.round,
            test_error_pct: l.test_error_pct,
            alpha: l.alpha,
            eta: l.eta,
            benign_kept: l.benign_kept,
            malicious_selected: l.malicious_selected,
            discarded: l.discarded,
        }
    }
}

/// Runs one experiment and streams its logs into `out_dir`.
pub fn run_to_dir(cfg: &ScenarioConfig, output: &OutputPaths, out_dir: &Path) -> CliResult<Vec<RoundLog>> {
    let mut exp = Experiment::new(cfg.clone())?;
    fs::create_dir_all(out_dir).map_err(Error::from)?;
    let mut jsonl = BufWriter::new(File::create(out_dir.join(&output.jsonl)).map_err(Error::from)?);
    let mut csv = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(out_dir.join(&output.csv))
        .map_err(Error::from)?;
    csv.write_record([
        "round",
        "test_error_pct",
        "alpha",
        "eta",
        "benign_kept",
        "malicious_selected",
        "discarded",
    ])
    .map_err(Error::from)?;
    csv.flush().map_err(Error::from)?;

    let logs = exp.run_with(|log| {
        serde_json::to_writer(&mut jsonl, log)?;
        jsonl.write_all(b"\n")?;
        jsonl.flush()?;
        csv.serialize(CsvRow::from(log))?;
        csv.flush()?;
        Ok(())
    })?;
    Ok(logs)
}

pub fn cmd_run(config: &Path, seed: Option<u64>, out: &Path) -> CliResult<()> {
    let mut file = RunConfigFile::load(config)?;
    let env = std::env::var(SEED_ENV).ok();
    file.scenario.seed = resolve_seed(file.scenario.seed, env.as_deref(), seed)?;
    let logs = run_to_dir(&file.scenario, &file.output, out)?;
    if let Some((mean, std)) = final_stats(&logs, FINAL_WINDOW) {
        println!(
            "{} / {}: final test error {mean:.3} ± {std:.3} % over the last {} rounds",
            file.scenario.rule.name(),
            file.scenario.attack.name(),
            logs.len().min(FINAL_WINDOW)
        );
    }
    Ok(())
}

/// One row of the sweep summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub fraction: f64,
    pub rule: String,
    pub attack: String,
    pub mean_final_error: f64,
    pub std_final_error: f64,
}

/// Config for one sweep point: `n_malicious = round(fraction * n_clients)`.
/// Krum's `f` tracks the malicious count, as the server is assumed to know it.
pub fn sweep_point(base: &ScenarioConfig, fraction: f64) -> ScenarioConfig {
    let mut cfg = base.clone();
    cfg.n_malicious = malicious_count(fraction, cfg.n_clients);
    if let AggregationRule::Krum { m, .. } = cfg.rule {
        cfg.rule = AggregationRule::Krum { f: cfg.n_malicious, m };
    }
    cfg
}

pub fn cmd_sweep(config: &Path, fractions: &[f64], seed: Option<u64>, out: &Path) -> CliResult<Vec<SweepRow>> {
    if fractions.is_empty() {
        return Err(CliError::Usage("--fractions needs at least one value".into()));
    }
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f < 0.5)) {
        return Err(CliError::Usage(format!("fraction {f} outside (0, 0.5)")));
    }
    let mut file = RunConfigFile::load(config)?;
    let env = std::env::var(SEED_ENV).ok();
    file.scenario.seed = resolve_seed(file.scenario.seed, env.as_deref(), seed)?;
    let points: Vec<ScenarioConfig> = fractions.iter().map(|&f| sweep_point(&file.scenario, f)).collect();
    for p in &points {
        p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    }

    let mut rows = Vec::with_capacity(fractions.len());
    for (&fraction, cfg) in fractions.iter().zip(&points) {
        let dir = out.join(format!("fraction_{fraction}"));
        let logs = run_to_dir(cfg, &file.output, &dir)?;
        let (mean, std) = final_stats(&logs, FINAL_WINDOW).unwrap_or((f64::NAN, f64::NAN));
        rows.push(SweepRow {
            fraction,
            rule: cfg.rule.name().into(),
            attack: cfg.attack.name().into(),
            mean_final_error: mean,
            std_final_error: std,
        });
    }
    let mut w = csv::Writer::from_path(out.join("sweep.csv")).map_err(Error::from)?;
    for r in &rows {
        w.serialize(r).map_err(Error::from)?;
    }
    w.flush().map_err(Error::from)?;
    Ok(rows)
}

/// Parameters of `gen-data --kind blobs`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobParams {
    pub n_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    pub spread: f64,
    pub seed: u64,
}

pub fn cmd_gen_data(p: &BlobParams, out: &Path) -> CliResult<()> {
    if p.samples_per_class == 0 {
        return Err(CliError::Usage("samples per class must be positive".into()));
    }
    let ds = data::generate_blobs(p.n_classes, p.dim, p.samples_per_class, p.spread, p.seed)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    data::write_dataset(&ds, out)?;
    Ok(())
}
