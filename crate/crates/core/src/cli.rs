//! Command-line pipeline: `synth`, `ingest`, `matrix`, `place`, `evaluate`.
//!
//! Stages talk through files in the output directory:
//!
//! | stage    | reads                         | writes                              |
//! |----------|-------------------------------|-------------------------------------|
//! | ingest   | dataset CSV                   | `households.csv`                    |
//! | matrix   | `households.csv`              | `matrix.dmat`                       |
//! | place    | `households.csv`, matrix      | `plan.json`, `plan.geojson`         |
//! | evaluate | plan, matrix, baseline CSVs   | `report.json`, `report.csv`, `households.geojson` |
//!
//! Exit codes: 1 config/usage, 2 ingest, 3 distance, 4 solve, 5 evaluate.

use std::fmt::Display;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::distance::{decode_matrix, save_matrix, DistanceMatrix, Provider, ProviderSpec};
use crate::evaluate::{
    compare_matrices, households_geojson, load_facilities, nearest_facility_stats, penalty_report,
    write_report_csv, CityBox, EvaluationReport, WeightMode,
};
use crate::geo::GeoPoint;
use crate::hierarchy::{place_two_level, plan_geojson, HierarchyParams, PlacementPlan, PlanDocument};
use crate::ingest::{
    load_households, prepare, write_households, ColumnSchema, Household, IngestConfig, SampleSize,
    WeightingMode,
};
use crate::synth::{generate, SynthParams};

pub const HOUSEHOLDS_FILE: &str = "households.csv";
pub const MATRIX_FILE: &str = "matrix.dmat";
pub const PLAN_FILE: &str = "plan.json";
pub const PLAN_GEOJSON_FILE: &str = "plan.geojson";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const REPORT_CSV_FILE: &str = "report.csv";
pub const HOUSEHOLDS_GEOJSON_FILE: &str = "households.geojson";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Distance,
    Solve,
    Evaluate,
}

impl Stage {
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Config => 1,
            Stage::Ingest => 2,
            Stage::Distance => 3,
            Stage::Solve => 4,
            Stage::Evaluate => 5,
        }
    }
}

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub stage: Stage,
    pub message: String,
}

impl CliError {
    pub fn new(stage: Stage, message: impl Into<String>) -> Self {
        Self {
            stage,
            message: message.into(),
        }
    }
}

fn at<E: Display>(stage: Stage, context: impl Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::new(stage, format!("{context}: {e}"))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: Option<PathBuf>,
    pub schema: ColumnSchema,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub banks: Option<PathBuf>,
    pub pantries: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Defaults to `direct` when ingest weighting is direct, else `duplicated`.
    pub weight_mode: Option<WeightMode>,
    pub cities: Vec<CityBox>,
    pub households_geojson: bool,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            weight_mode: None,
            cities: Vec::new(),
            households_geojson: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub ingest: IngestConfig,
    pub provider: ProviderSpec,
    pub hierarchy: HierarchyParams,
    pub baseline: BaselineConfig,
    pub evaluation: EvaluationConfig,
    pub synth: SynthParams,
    pub output_dir: PathBuf,
    /// Copied into every seeded component.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            ingest: IngestConfig::default(),
            provider: ProviderSpec::default(),
            hierarchy: HierarchyParams::default(),
            baseline: BaselineConfig::default(),
            evaluation: EvaluationConfig::default(),
            synth: SynthParams::default(),
            output_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Parses a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(at(Stage::Config, path.display()))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(at(Stage::Config, path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.dataset.path.as_mut().map(rebase);
        cfg.baseline.banks.as_mut().map(rebase);
        cfg.baseline.pantries.as_mut().map(rebase);
        rebase(&mut cfg.output_dir);
        Ok(cfg)
    }

    pub fn propagate_seed(&mut self) {
        self.ingest.seed = self.seed;
        self.hierarchy.seed = self.seed;
        self.synth.seed = self.seed;
    }

    /// SHA-256 of the effective config, ignoring where outputs go.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        hex::encode(digest)
    }

    pub fn provenance(&self) -> Value {
        json!({
            "generator": concat!("foodloc ", env!("CARGO_PKG_VERSION")),
            "config_hash": self.hash(),
            "seed": self.seed,
        })
    }

    fn comments(&self) -> Vec<String> {
        vec![
            concat!("generator=foodloc ", env!("CARGO_PKG_VERSION")).to_string(),
            format!("config_hash={}", self.hash()),
            format!("seed={}", self.seed),
        ]
    }

    fn out(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}

#[derive(Debug, Parser)]
#[command(name = "foodloc", version, about = "Food bank and pantry placement with two-level K-Medoids")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for sampling, synthesis and the solvers.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Recompute outputs that are already cached.
    #[arg(long, global = true)]
    pub force: bool,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic household dataset.
    Synth(SynthArgs),
    /// Filter, sample and weight the dataset.
    Ingest(IngestArgs),
    /// Build or reuse the household distance matrix.
    Matrix,
    /// Place banks and pantries.
    Place(PlaceArgs),
    /// Compare the placement against a baseline.
    Evaluate(EvaluateArgs),
    /// ingest, matrix, place and (with a baseline) evaluate.
    Run,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub points_per_cluster: Option<usize>,
    #[arg(long)]
    pub spread_m: Option<f64>,
    /// Defaults to the configured dataset path, else `<out-dir>/synthetic.csv`.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// A count or `all`.
    #[arg(long)]
    pub sample_size: Option<String>,
    #[arg(long, value_parser = ["none", "duplicate", "direct"])]
    pub weighting: Option<String>,
}

#[derive(Debug, Args)]
pub struct PlaceArgs {
    #[arg(long)]
    pub k_banks: Option<usize>,
    #[arg(long)]
    pub k_pantries_total: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub baseline_banks: Option<PathBuf>,
    #[arg(long)]
    pub baseline_pantries: Option<PathBuf>,
}

/// Effective config: defaults, then the config file, then flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::new(Stage::Config, "--threads must be at least 1"));
        }
        cfg.provider.max_in_flight = cfg.provider.max_in_flight.min(t);
    }
    match &cli.command {
        Command::Synth(a) => {
            if let Some(v) = a.clusters {
                cfg.synth.clusters = v;
            }
            if let Some(v) = a.points_per_cluster {
                cfg.synth.points_per_cluster = v;
            }
            if let Some(v) = a.spread_m {
                cfg.synth.spread_m = v;
            }
        }
        Command::Ingest(a) => {
            if let Some(p) = &a.input {
                cfg.dataset.path = Some(p.clone());
            }
            if let Some(s) = &a.sample_size {
                cfg.ingest.sample_size = match s.as_str() {
                    "all" => SampleSize::All,
                    n => SampleSize::Count(n.parse().map_err(at(Stage::Config, "--sample-size"))?),
                };
            }
            if let Some(w) = &a.weighting {
                cfg.ingest.weighting_mode = match w.as_str() {
                    "none" => WeightingMode::None,
                    "duplicate" => WeightingMode::Duplicate,
                    _ => WeightingMode::Direct,
                };
            }
        }
        Command::Place(a) => {
            if let Some(k) = a.k_banks {
                cfg.hierarchy.k_banks = k;
            }
            if let Some(k) = a.k_pantries_total {
                cfg.hierarchy.k_pantries_total = k;
            }
        }
        Command::Evaluate(a) => {
            if let Some(p) = &a.baseline_banks {
                cfg.baseline.banks = Some(p.clone());
            }
            if let Some(p) = &a.baseline_pantries {
                cfg.baseline.pantries = Some(p.clone());
            }
        }
        Command::Matrix | Command::Run => {}
    }
    cfg.propagate_seed();
    Ok(cfg)
}

fn create(path: &Path, stage: Stage) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(at(stage, dir.display()))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(at(stage, path.display()))
}

fn write_json(path: &Path, value: &impl Serialize, stage: Stage) -> Result<(), CliError> {
    let mut w = create(path, stage)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(at(stage, path.display()))?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(at(stage, path.display()))
}

pub fn cmd_synth(cfg: &RunConfig, output: Option<&Path>) -> Result<PathBuf, CliError> {
    let households = generate(&cfg.synth).map_err(at(Stage::Config, "synth"))?;
    let path = output
        .map(Path::to_path_buf)
        .or_else(|| cfg.dataset.path.clone())
        .unwrap_or_else(|| cfg.out("synthetic.csv"));
    let mut w = create(&path, Stage::Config)?;
    write_households(&mut w, &households, &cfg.comments())
        .and_then(|_| w.flush())
        .map_err(at(Stage::Config, path.display()))?;
    log::info!("wrote {} synthetic households to {}", households.len(), path.display());
    Ok(path)
}

pub fn cmd_ingest(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let input = cfg
        .dataset
        .path
        .as_deref()
        .ok_or_else(|| CliError::new(Stage::Ingest, "no dataset path configured"))?;
    let raw = load_households(input, &cfg.dataset.schema).map_err(at(Stage::Ingest, input.display()))?;
    let prepared = prepare(&raw, &cfg.ingest).map_err(at(Stage::Ingest, input.display()))?;
    if prepared.is_empty() {
        return Err(CliError::new(Stage::Ingest, "no households left after filtering"));
    }
    let path = cfg.out(HOUSEHOLDS_FILE);
    let mut w = create(&path, Stage::Ingest)?;
    write_households(&mut w, &prepared, &cfg.comments())
        .and_then(|_| w.flush())
        .map_err(at(Stage::Ingest, path.display()))?;
    log::info!("{} -> {} households in {}", raw.len(), prepared.len(), path.display());
    Ok(path)
}

fn read_prepared(cfg: &RunConfig, stage: Stage) -> Result<Vec<Household>, CliError> {
    let path = cfg.out(HOUSEHOLDS_FILE);
    load_households(&path, &ColumnSchema::prepared()).map_err(at(stage, path.display()))
}

fn household_points(households: &[Household]) -> Vec<GeoPoint> {
    households.iter().map(|h| h.location).collect()
}

/// Loads the cached matrix if it is intact and matches `households` and `spec`.
fn valid_cache(path: &Path, households: &[Household], spec: &ProviderSpec) -> Option<DistanceMatrix> {
    let bytes = fs::read(path).ok()?;
    let (m, _) = decode_matrix(&bytes)
        .map_err(|e| log::warn!("ignoring cache {}: {e}", path.display()))
        .ok()?;
    let points = household_points(households);
    (m.sources() == points.as_slice() && m.destinations() == points.as_slice() && m.provider_tag() == spec.tag())
        .then_some(m)
}

pub fn cmd_matrix(cfg: &RunConfig, force: bool) -> Result<PathBuf, CliError> {
    let households = read_prepared(cfg, Stage::Distance)?;
    let path = cfg.out(MATRIX_FILE);
    if !force && valid_cache(&path, &households, &cfg.provider).is_some() {
        log::info!("cache hit: {}", path.display());
        return Ok(path);
    }
    let provider = Provider::new(cfg.provider.clone()).map_err(at(Stage::Distance, "provider"))?;
    let points = household_points(&households);
    let m = provider
        .build_matrix(&points, &points)
        .map_err(at(Stage::Distance, "matrix"))?;
    save_matrix(&m, &path, Some(cfg.provenance())).map_err(at(Stage::Distance, path.display()))?;
    log::info!("wrote {}x{} matrix to {}", m.rows(), m.cols(), path.display());
    Ok(path)
}

fn read_matrix(cfg: &RunConfig, households: &[Household], stage: Stage) -> Result<DistanceMatrix, CliError> {
    let path = cfg.out(MATRIX_FILE);
    let bytes = fs::read(&path).map_err(at(stage, path.display()))?;
    let (m, _) = decode_matrix(&bytes).map_err(at(stage, path.display()))?;
    if m.rows() != households.len() || m.cols() != households.len() {
        return Err(CliError::new(
            stage,
            format!(
                "{} is {}x{} but there are {} households; rerun `matrix`",
                path.display(),
                m.rows(),
                m.cols(),
                households.len()
            ),
        ));
    }
    Ok(m)
}

pub fn cmd_place(cfg: &RunConfig) -> Result<PlacementPlan, CliError> {
    let households = read_prepared(cfg, Stage::Solve)?;
    let m = read_matrix(cfg, &households, Stage::Solve)?;
    let view = m.square_view().map_err(at(Stage::Solve, "matrix"))?;
    let weights: Vec<f64> = households.iter().map(|h| h.weight).collect();
    let plan = place_two_level(view, &cfg.hierarchy, &weights).map_err(at(Stage::Solve, "placement"))?;
    let provenance = cfg.provenance();
    write_json(
        &cfg.out(PLAN_FILE),
        &PlanDocument::new(&plan, &households, provenance.clone()),
        Stage::Solve,
    )?;
    write_json(
        &cfg.out(PLAN_GEOJSON_FILE),
        &plan_geojson(&plan, &households, provenance),
        Stage::Solve,
    )?;
    log::info!(
        "placed {} banks and {} pantries; objective {:.1} m",
        plan.banks.len(),
        plan.pantries.len(),
        plan.level2_objective
    );
    Ok(plan)
}

#[derive(Debug, Serialize)]
struct ReportDocument<'a> {
    provenance: Value,
    #[serde(flatten)]
    report: &'a EvaluationReport,
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<EvaluationReport, CliError> {
    let stage = Stage::Evaluate;
    let households = read_prepared(cfg, stage)?;
    let m = read_matrix(cfg, &households, stage)?;
    let plan_path = cfg.out(PLAN_FILE);
    let text = fs::read_to_string(&plan_path).map_err(at(stage, plan_path.display()))?;
    let doc: PlanDocument = serde_json::from_str(&text).map_err(at(stage, plan_path.display()))?;
    let plan = doc.to_plan(&households).map_err(at(stage, plan_path.display()))?;

    let pantries_path = cfg
        .baseline
        .pantries
        .as_deref()
        .ok_or_else(|| CliError::new(stage, "no baseline pantries file configured"))?;
    let baseline = load_facilities("baseline", pantries_path).map_err(at(stage, pantries_path.display()))?;
    let provider = Provider::new(cfg.provider.clone()).map_err(at(stage, "provider"))?;

    let candidate_m = m.select_columns(&plan.pantries);
    let points = household_points(&households);
    let baseline_m = provider
        .build_matrix(&points, &baseline.points())
        .map_err(at(stage, "baseline matrix"))?;
    let mode = cfg.evaluation.weight_mode.unwrap_or(match cfg.ingest.weighting_mode {
        WeightingMode::Direct => WeightMode::Direct,
        _ => WeightMode::Duplicated,
    });
    let mut report = compare_matrices(
        ("candidate", &candidate_m),
        ("baseline", &baseline_m),
        &households,
        &cfg.evaluation.cities,
        mode,
    )
    .map_err(at(stage, "compare"))?;

    if let Some(banks_path) = cfg.baseline.banks.as_deref() {
        let banks = load_facilities("baseline_banks", banks_path).map_err(at(stage, banks_path.display()))?;
        let view = m.square_view().map_err(at(stage, "matrix"))?;
        report.penalty = Some(
            penalty_report(&plan, view, &banks, &baseline, &provider).map_err(at(stage, "penalty"))?,
        );
    }

    let provenance = cfg.provenance();
    write_json(
        &cfg.out(REPORT_JSON_FILE),
        &ReportDocument {
            provenance: provenance.clone(),
            report: &report,
        },
        stage,
    )?;
    let csv_path = cfg.out(REPORT_CSV_FILE);
    let mut w = create(&csv_path, stage)?;
    write_report_csv(&mut w, &report, &cfg.comments())
        .and_then(|_| w.flush())
        .map_err(at(stage, csv_path.display()))?;
    if cfg.evaluation.households_geojson {
        let gj = households_geojson(
            &households,
            &nearest_facility_stats(&candidate_m),
            &nearest_facility_stats(&baseline_m),
            ("candidate", "baseline"),
            provenance,
        );
        write_json(&cfg.out(HOUSEHOLDS_GEOJSON_FILE), &gj, stage)?;
    }
    let o = report.overall();
    log::info!(
        "overall: candidate {:.2} mi, baseline {:.2} mi, saving {:.2} mi",
        o.candidate_avg_mi,
        o.baseline_avg_mi,
        o.saving_abs_mi
    );
    Ok(report)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve_config(&cli)?;
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(at(Stage::Config, "--threads"))?;
    }
    match &cli.command {
        Command::Synth(a) => cmd_synth(&cfg, a.output.as_deref()).map(drop),
        Command::Ingest(_) => cmd_ingest(&cfg).map(drop),
        Command::Matrix => cmd_matrix(&cfg, cli.force).map(drop),
        Command::Place(_) => cmd_place(&cfg).map(drop),
        Command::Evaluate(_) => cmd_evaluate(&cfg).map(drop),
        Command::Run => {
            cmd_ingest(&cfg)?;
            cmd_matrix(&cfg, cli.force)?;
            cmd_place(&cfg)?;
            if cfg.baseline.pantries.is_some() {
                cmd_evaluate(&cfg)?;
            }
            Ok(())
        }
    }
}

/// Parses `args`, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { Stage::Config.exit_code() } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.stage.exit_code()
        }
    }
}
