//! Experiment runner behind the `cpr-sim` binary.
//!
//! A run expands its mode into one or more conditions, writes each
//! condition's files into its own directory under the output root, and
//! finishes with a `manifest.json` listing every produced file with its
//! SHA-256 digest.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, ValueEnum};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use cpr_core::config::AblationFlags;
use cpr_core::engine::{
    apply_settings, condition_key, grid_cells, run_condition, run_trial, value_text, ConditionSummary, SweepAxis, TrialResult,
};
use cpr_core::llm::{GenerationBackend, HttpBackend, MockBackend};
use cpr_core::output::write_run_dir;
use cpr_core::SimulationConfig;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MATRIX_FILE: &str = "survival_matrix.csv";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] cpr_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("thread pool: {0}")]
    Pool(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// One trial.
    Single,
    /// `--trials` independent trials of one configuration.
    Condition,
    /// Every cell of the `--sweep` grid.
    Sweep,
    /// The full model against its three reduced variants.
    Ablation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Mock(PathBuf),
    Http(String),
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(path) = s.strip_prefix("mock:") {
            if path.is_empty() {
                return Err("mock backend needs a script path".into());
            }
            return Ok(Self::Mock(PathBuf::from(path)));
        }
        if let Some(rest) = s.strip_prefix("http:") {
            // `http:http://host/v1` and the bare `http://host/v1` both arrive here.
            let url = if rest.starts_with("//") {
                format!("http:{rest}")
            } else {
                rest.to_string()
            };
            if url.is_empty() {
                return Err("http backend needs an endpoint url".into());
            }
            return Ok(Self::Http(url));
        }
        Err(format!("expected mock:<path> or http:<url>, got {s:?}"))
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Mock(p) => write!(f, "mock:{}", p.display()),
            Self::Http(u) => write!(f, "http:{u}"),
        }
    }
}

fn parse_key_value(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(format!("expected key=value, got {s:?}")),
    }
}

fn parse_value(text: &str) -> Value {
    serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_string()))
}

fn parse_axis(s: &str) -> Result<SweepAxis, String> {
    let (key, values) = parse_key_value(s)?;
    let values: Vec<Value> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).map(parse_value).collect();
    if values.is_empty() {
        return Err(format!("sweep axis {key} has no values"));
    }
    Ok(SweepAxis { key, values })
}

#[derive(Debug, Parser)]
#[command(name = "cpr-sim", version, about = "Run common-pool resource society experiments")]
struct Args {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Single)]
    mode: Mode,
    /// Trials per condition (ignored in single mode).
    #[arg(long, default_value_t = 100)]
    trials: u64,
    /// Base seed; overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Config override, applied after loading. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_key_value)]
    set: Vec<(String, String)>,
    /// Sweep axis as a comma-separated value list. Repeatable; sweep mode only.
    #[arg(long = "sweep", value_name = "KEY=V1,V2,...", value_parser = parse_axis)]
    sweep: Vec<SweepAxis>,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Generation backend for LLM agents: mock:<script> or http:<url>.
    #[arg(long)]
    backend: Option<BackendSpec>,
    /// Worker threads for trial-level parallelism (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub mode: Mode,
    pub config_path: PathBuf,
    pub overrides: Vec<(String, String)>,
    pub sweep: Vec<SweepAxis>,
    pub out: PathBuf,
    pub trials: u64,
    pub seed: Option<u64>,
    pub backend: Option<BackendSpec>,
    pub jobs: Option<usize>,
}

/// Parse command-line arguments (including the program name).
pub fn parse_cli<I, T>(argv: I) -> Result<ExperimentSpec, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = Args::try_parse_from(argv)?;
    let usage = |msg: &str| Args::command().error(ErrorKind::ArgumentConflict, msg);
    match args.mode {
        Mode::Sweep if args.sweep.is_empty() => {
            return Err(Args::command().error(ErrorKind::MissingRequiredArgument, "--mode sweep needs at least one --sweep axis"))
        }
        Mode::Sweep => {}
        _ if !args.sweep.is_empty() => return Err(usage("--sweep is only valid with --mode sweep")),
        _ => {}
    }
    if args.trials == 0 {
        return Err(Args::command().error(ErrorKind::InvalidValue, "--trials must be at least 1"));
    }
    if args.jobs == Some(0) {
        return Err(Args::command().error(ErrorKind::InvalidValue, "--jobs must be at least 1"));
    }
    Ok(ExperimentSpec {
        mode: args.mode,
        config_path: args.config,
        overrides: args.set,
        sweep: args.sweep,
        out: args.out,
        trials: if args.mode == Mode::Single { 1 } else { args.trials },
        seed: args.seed,
        backend: args.backend,
        jobs: args.jobs,
    })
}

/// Load the config file, apply `--set` overrides and `--seed`, then validate.
pub fn load_config(spec: &ExperimentSpec) -> Result<SimulationConfig, CliError> {
    let text = fs::read_to_string(&spec.config_path).map_err(io_err(&spec.config_path))?;
    let mut config = SimulationConfig::from_json_str(&text)?;
    for (k, v) in &spec.overrides {
        config.apply_override(k, v)?;
    }
    if let Some(seed) = spec.seed {
        config.seed = seed;
    }
    if let Some(BackendSpec::Http(url)) = &spec.backend {
        config.llm.endpoint = url.clone();
    }
    config.validate()?;
    Ok(config)
}

fn build_backend(spec: &ExperimentSpec, config: &SimulationConfig) -> Result<Option<Box<dyn GenerationBackend>>, CliError> {
    Ok(match &spec.backend {
        None => None,
        Some(BackendSpec::Mock(path)) => Some(Box::new(MockBackend::from_path(path)?)),
        Some(BackendSpec::Http(_)) => Some(Box::new(HttpBackend::new(config.llm.clone()))),
    })
}

/// The four ablation variants: name and (social learning, group decision).
pub const ABLATION_VARIANTS: [(&str, bool, bool); 4] =
    [("All", true, true), ("OSL", true, false), ("OGD", false, true), ("Neither", false, false)];

struct Cell {
    name: String,
    dir: PathBuf,
    settings: Vec<(String, Value)>,
    config: SimulationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellReport {
    pub name: String,
    /// Directory relative to the output root; empty for the root itself.
    pub dir: String,
    pub settings: Vec<(String, Value)>,
    pub ablation: AblationFlags,
    pub trials: usize,
    pub mean_survival: f64,
    pub censored: usize,
    pub aborted_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub mode: Mode,
    pub seed: u64,
    pub trials: u64,
    pub backend: Option<String>,
    pub overrides: Vec<(String, String)>,
    pub cells: Vec<CellReport>,
    pub files: Vec<FileEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub out: PathBuf,
    pub manifest: Manifest,
}

impl RunReport {
    pub fn aborted_trials(&self) -> usize {
        self.manifest.cells.iter().map(|c| c.aborted_trials).sum()
    }

    /// 0 when every trial of every cell completed.
    pub fn exit_code(&self) -> u8 {
        u8::from(self.aborted_trials() > 0)
    }
}

fn expand_cells(spec: &ExperimentSpec, base: &SimulationConfig) -> Result<Vec<Cell>, CliError> {
    let override_settings: Vec<(String, Value)> = spec.overrides.iter().map(|(k, v)| (k.clone(), parse_value(v))).collect();
    let root = |name: String| Cell {
        name,
        dir: PathBuf::new(),
        settings: override_settings.clone(),
        config: base.clone(),
    };
    Ok(match spec.mode {
        Mode::Single | Mode::Condition => {
            let key = condition_key(&override_settings);
            vec![root(if key.is_empty() { "base".into() } else { key })]
        }
        Mode::Ablation => ABLATION_VARIANTS
            .iter()
            .map(|&(name, sl, gd)| {
                let mut config = base.clone();
                config.ablation.social_learning = sl;
                config.ablation.group_decision = gd;
                Cell {
                    name: name.into(),
                    dir: PathBuf::from(name),
                    settings: vec![
                        ("ablation.social_learning".into(), Value::Bool(sl)),
                        ("ablation.group_decision".into(), Value::Bool(gd)),
                    ],
                    config,
                }
            })
            .collect(),
        Mode::Sweep => grid_cells(&spec.sweep)
            .into_iter()
            .map(|settings| {
                let config = apply_settings(base, &settings)?;
                let key = condition_key(&settings);
                Ok(Cell {
                    name: key.clone(),
                    dir: PathBuf::from(key),
                    settings,
                    config,
                })
            })
            .collect::<Result<_, CliError>>()?,
    })
}

fn run_cell(cell: &Cell, spec: &ExperimentSpec, backend: Option<&dyn GenerationBackend>) -> Result<Vec<TrialResult>, CliError> {
    Ok(match spec.mode {
        Mode::Single => vec![run_trial(&cell.config, 0, backend)?],
        _ => run_condition(&cell.config, spec.trials, backend)?.trials,
    })
}

/// Mean survival with the first sweep axis down the rows and the remaining
/// axes (joined as a condition key) across the columns.
fn write_matrix(path: &Path, axes: &[SweepAxis], cells: &[CellReport]) -> Result<(), CliError> {
    let Some((rows, rest)) = axes.split_first() else { return Ok(()) };
    let columns = grid_cells(rest);
    let header: Vec<String> = std::iter::once(rows.key.clone())
        .chain(columns.iter().map(|c| if c.is_empty() { "mean_survival".into() } else { condition_key(c) }))
        .collect();
    let mut text = header.join(",") + "\n";
    for rv in &rows.values {
        let mut line = vec![value_text(rv)];
        for col in &columns {
            let mut settings = vec![(rows.key.clone(), rv.clone())];
            settings.extend(col.iter().cloned());
            let key = condition_key(&settings);
            let mean = cells.iter().find(|c| c.name == key).map(|c| c.mean_survival.to_string()).unwrap_or_default();
            line.push(mean);
        }
        text += &(line.join(",") + "\n");
    }
    fs::write(path, text).map_err(io_err(path))
}

fn relative(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

fn file_entry(root: &Path, path: &Path) -> Result<FileEntry, CliError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(FileEntry {
        path: relative(root, path),
        sha256: hex::encode(Sha256::digest(&bytes)),
        bytes: bytes.len() as u64,
    })
}

/// Run every cell of `spec`, write its files and the manifest.
///
/// Trials that hit a backend failure are kept (partial logs) and counted in
/// the report; see [`RunReport::exit_code`].
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunReport, CliError> {
    let base = load_config(spec)?;
    let backend = build_backend(spec, &base)?;
    let cells = expand_cells(spec, &base)?;
    fs::create_dir_all(&spec.out).map_err(io_err(&spec.out))?;

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = spec.jobs {
        builder = builder.num_threads(jobs);
    }
    let pool = builder.build().map_err(|e| CliError::Pool(e.to_string()))?;

    let mut reports = Vec::with_capacity(cells.len());
    let mut written = Vec::new();
    for cell in &cells {
        let trials = pool.install(|| run_cell(cell, spec, backend.as_deref()))?;
        let summary = ConditionSummary::from_trials(&trials)
            .ok_or_else(|| cpr_core::Error::Precondition("condition produced no trials".into()))?;
        let dir = spec.out.join(&cell.dir);
        written.extend(write_run_dir(&dir, &cell.name, &trials, &summary)?);
        reports.push(CellReport {
            name: cell.name.clone(),
            dir: relative(&spec.out, &dir),
            settings: cell.settings.clone(),
            ablation: cell.config.ablation,
            trials: trials.len(),
            mean_survival: summary.survival.mean,
            censored: summary.censored,
            aborted_trials: trials.iter().filter(|t| t.aborted.is_some()).count(),
        });
    }

    if spec.mode == Mode::Sweep {
        let path = spec.out.join(MATRIX_FILE);
        write_matrix(&path, &spec.sweep, &reports)?;
        written.push(path);
    }

    let mut files = written.iter().map(|p| file_entry(&spec.out, p)).collect::<Result<Vec<_>, _>>()?;
    files.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        mode: spec.mode,
        seed: base.seed,
        trials: spec.trials,
        backend: spec.backend.as_ref().map(ToString::to_string),
        overrides: spec.overrides.clone(),
        cells: reports,
        files,
    };
    let path = spec.out.join(MANIFEST_FILE);
    let body = serde_json::to_string_pretty(&manifest).map_err(cpr_core::Error::from)? + "\n";
    fs::write(&path, body).map_err(io_err(&path))?;
    Ok(RunReport {
        out: spec.out.clone(),
        manifest,
    })
}
