//! Pipeline orchestration: subcommands over a shared workdir, a JSON config
//! file, and per-run manifests that record input/output content hashes so
//! stale or mismatched artifacts are caught instead of silently reused.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::baseline::{baseline_clustering, BaselineConfig, BaselineError};
use crate::cluster::{dbscan, preprocess_embeddings, DEFAULT_EPS, DEFAULT_MIN_SAMPLES};
use crate::encoder::train::{train, TrainConfig, TrainHistory, TrainSet};
use crate::encoder::{
    encode_all, init_model, Embedding, EncoderError, GraphInput, DEFAULT_MAX_DEGREE,
    EMBEDDING_DIM, N_LAYERS,
};
use crate::eval::{
    adjusted_rand_index, cluster_runtime_prediction, compute_metrics, error_histogram,
    error_stats, shared_subset_compare, ErrorHistogram, EvalReport, JobOutcome,
    SharedSubsetReport,
};
use crate::features::extract_static_features;
use crate::graph::{job_runtime, JobGraph, NODE_FEATURES};
use crate::ingest::{
    build_job_graphs, clean_jobs, parse_task_table, stratified_split, CleanSummary, IngestConfig,
};
use crate::io::{self, ArtifactError, Manifest};
use crate::seeds::derive_seed;
use crate::select::{select_targets, ExtraTreesParams, SelectError, SelectionResult};
use crate::synth::{generate_synthetic_trace, SynthError, SynthSpec};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const JOBS_FILE: &str = "jobs.jsonl";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const CLEAN_SUMMARY_FILE: &str = "clean_summary.json";
pub const REJECTED_FILE: &str = "rejected.csv";
pub const FEATURES_FILE: &str = "features.csv";
pub const SELECTION_FILE: &str = "selection.json";
pub const MODEL_FILE: &str = "model.json";
pub const HISTORY_FILE: &str = "train_history.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.csv";
pub const ENCODER_CLUSTERS_FILE: &str = "clusters_encoder.csv";
pub const ENCODER_CLUSTERS_SIDECAR: &str = "clusters_encoder.json";
pub const BASELINE_CLUSTERS_FILE: &str = "clusters_baseline.csv";
pub const BASELINE_CLUSTERS_SIDECAR: &str = "clusters_baseline.json";
pub const EVAL_ENCODER_FILE: &str = "eval_encoder.json";
pub const EVAL_BASELINE_FILE: &str = "eval_baseline.json";
pub const PREDICTIONS_ENCODER_FILE: &str = "predictions_encoder.csv";
pub const PREDICTIONS_BASELINE_FILE: &str = "predictions_baseline.csv";
pub const HISTOGRAM_ENCODER_FILE: &str = "histogram_encoder.csv";
pub const HISTOGRAM_BASELINE_FILE: &str = "histogram_baseline.csv";
pub const COMPARE_FILE: &str = "compare.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const REPORT_FILE: &str = "report.json";

const STREAM_SPLIT: u64 = 1;
const STREAM_VAL_SPLIT: u64 = 2;
const STREAM_MODEL_INIT: u64 = 3;
const STREAM_TRAIN: u64 = 4;
const STREAM_SELECT: u64 = 5;
const STREAM_SYNTH: u64 = 6;

#[derive(Parser, Debug)]
#[command(name = "tracemine", version, about = "Trace mining pipeline for batch-workload DAGs")]
struct Cli {
    /// Path to the JSON pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Working directory for artifacts (overrides config and environment).
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    /// Master seed (overrides the config's seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Proceed despite manifest mismatches.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Parse and clean a batch_task CSV into job graphs.
    Ingest,
    /// Generate a synthetic trace with known families.
    Synth,
    /// Extract the static feature table from the cleaned jobs.
    Features,
    /// Vote on the encoder's target variables (train split only).
    Select,
    /// Train the graph encoder on the train split.
    Train,
    /// Embed the test split with the trained model.
    Encode,
    /// Density-cluster the embeddings.
    Cluster,
    /// Cluster the test split with the isomorphism+periodicity baseline.
    Baseline,
    /// Score both clusterings with the runtime-prediction protocol.
    Evaluate,
    /// Compare both methods on their shared prediction targets.
    Compare,
    /// Grid the clustering radius and tabulate the outcomes.
    Sweep,
    /// Collate all JSON artifacts into one summary document.
    Report,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<ArtifactError> for CliError {
    fn from(e: ArtifactError) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSettings {
    pub test_fraction: f64,
    pub validation_fraction: f64,
    pub n_bins: usize,
}

impl Default for SplitSettings {
    fn default() -> Self {
        SplitSettings {
            test_fraction: 0.2,
            validation_fraction: 0.25,
            n_bins: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectSettings {
    pub top_k: usize,
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for SelectSettings {
    fn default() -> Self {
        let trees = ExtraTreesParams::default();
        SelectSettings {
            top_k: 5,
            n_trees: trees.n_trees,
            max_depth: trees.max_depth,
            min_leaf: trees.min_leaf,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSettings {
    pub eps: f64,
    pub min_samples: usize,
}

impl Default for ClusterSettings {
    fn default() -> Self {
        ClusterSettings {
            eps: DEFAULT_EPS,
            min_samples: DEFAULT_MIN_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSettings {
    pub histogram_bin_width: f64,
    pub histogram_lo: f64,
    pub histogram_hi: f64,
}

impl Default for EvaluateSettings {
    fn default() -> Self {
        EvaluateSettings {
            histogram_bin_width: 100.0,
            histogram_lo: -1000.0,
            histogram_hi: 1000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub eps_values: Vec<f64>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        // Half-decade grid from 1e-4 to 10^-0.5.
        SweepSettings {
            eps_values: (-8..=-1)
                .map(|half_decades| 10f64.powf(half_decades as f64 / 2.0))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub trace_csv: Option<String>,
    pub workdir: Option<String>,
    pub seed: Option<u64>,
    pub ingest: IngestConfig,
    pub split: SplitSettings,
    pub select: SelectSettings,
    pub train: TrainConfig,
    pub cluster: ClusterSettings,
    pub baseline: BaselineConfig,
    pub evaluate: EvaluateSettings,
    pub sweep: SweepSettings,
    pub synth: Option<SynthSpec>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            trace_csv: None,
            workdir: None,
            seed: None,
            ingest: IngestConfig::default(),
            split: SplitSettings::default(),
            select: SelectSettings::default(),
            train: TrainConfig::default(),
            cluster: ClusterSettings::default(),
            baseline: BaselineConfig::default(),
            evaluate: EvaluateSettings::default(),
            sweep: SweepSettings::default(),
            synth: None,
        }
    }
}

/// Fully resolved run context: flags and environment folded into the config,
/// seeds derived, workdir created.
pub struct Resolved {
    pub workdir: PathBuf,
    pub trace_csv: Option<PathBuf>,
    pub seed: u64,
    pub cfg: PipelineConfig,
    pub force: bool,
}

fn usage(m: impl Into<String>) -> CliError {
    CliError::Usage(m.into())
}

fn data(m: impl Into<String>) -> CliError {
    CliError::Data(m.into())
}

fn internal(m: impl Into<String>) -> CliError {
    CliError::Internal(m.into())
}

fn resolve(cli: &Cli) -> Result<Resolved, CliError> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| usage("--config <path> is required"))?;
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| usage(format!("cannot read {}: {e}", config_path.display())))?;
    let mut cfg: PipelineConfig = serde_json::from_str(&text)
        .map_err(|e| usage(format!("invalid config {}: {e}", config_path.display())))?;

    let seed = cli
        .seed
        .or(cfg.seed)
        .ok_or_else(|| usage("no seed: set \"seed\" in the config or pass --seed"))?;
    let workdir = cli
        .workdir
        .clone()
        .or_else(|| std::env::var_os("TRACEMINE_WORKDIR").map(PathBuf::from))
        .or_else(|| cfg.workdir.as_ref().map(PathBuf::from))
        .ok_or_else(|| usage("no workdir: set \"workdir\" in the config, TRACEMINE_WORKDIR, or --workdir"))?;
    let trace_csv = std::env::var_os("TRACEMINE_TRACE_CSV")
        .map(PathBuf::from)
        .or_else(|| cfg.trace_csv.as_ref().map(PathBuf::from));

    cfg.ingest
        .validate()
        .map_err(|e| usage(format!("ingest config: {e}")))?;
    cfg.train.seed = derive_seed(seed, STREAM_TRAIN);
    cfg.train
        .validate()
        .map_err(|e| usage(format!("train config: {e}")))?;
    let split = &cfg.split;
    if !(split.test_fraction > 0.0 && split.test_fraction < 1.0) {
        return Err(usage("split.test_fraction must lie in (0, 1)"));
    }
    if !(split.validation_fraction > 0.0 && split.validation_fraction < 1.0) {
        return Err(usage("split.validation_fraction must lie in (0, 1)"));
    }
    if split.n_bins < 1 {
        return Err(usage("split.n_bins must be at least 1"));
    }
    if cfg.select.top_k < 1 || cfg.select.n_trees < 1 || cfg.select.max_depth < 1
        || cfg.select.min_leaf < 1
    {
        return Err(usage("select settings must all be at least 1"));
    }
    if !(cfg.cluster.eps > 0.0) || cfg.cluster.min_samples < 1 {
        return Err(usage("cluster.eps must be positive and min_samples at least 1"));
    }
    if !cfg.sweep.eps_values.iter().all(|&e| e > 0.0) {
        return Err(usage("sweep.eps_values must all be positive"));
    }
    if !(cfg.evaluate.histogram_bin_width > 0.0)
        || !(cfg.evaluate.histogram_lo < cfg.evaluate.histogram_hi)
    {
        return Err(usage("evaluate histogram range must be ordered with positive bin width"));
    }
    if !(cfg.baseline.tolerance > 0.0 && cfg.baseline.tolerance < 1.0)
        || cfg.baseline.periods_s.iter().any(|&p| p <= 0)
    {
        return Err(usage("baseline periods must be positive and tolerance in (0, 1)"));
    }

    std::fs::create_dir_all(&workdir)
        .map_err(|e| data(format!("cannot create workdir {}: {e}", workdir.display())))?;
    Ok(Resolved {
        workdir,
        trace_csv,
        seed,
        cfg,
        force: cli.force,
    })
}

/// Hash of the config subset that determines a subcommand's output, so a
/// rerun can tell whether an existing artifact is still valid.
fn fingerprint(res: &Resolved, command: &str) -> String {
    let subset = match command {
        "ingest" => json!({ "ingest": res.cfg.ingest }),
        "synth" => json!({ "synth": res.cfg.synth, "seed": res.seed }),
        "features" => json!({}),
        "select" => json!({ "split": res.cfg.split, "select": res.cfg.select, "seed": res.seed }),
        "train" => json!({ "split": res.cfg.split, "train": res.cfg.train, "seed": res.seed }),
        "encode" => json!({ "split": res.cfg.split, "seed": res.seed }),
        "cluster" => json!({ "cluster": res.cfg.cluster }),
        "baseline" => {
            json!({ "split": res.cfg.split, "baseline": res.cfg.baseline, "seed": res.seed })
        }
        "evaluate" => {
            json!({ "split": res.cfg.split, "evaluate": res.cfg.evaluate, "seed": res.seed })
        }
        "compare" => json!({}),
        "sweep" => json!({
            "split": res.cfg.split,
            "cluster": res.cfg.cluster,
            "sweep": res.cfg.sweep,
            "seed": res.seed
        }),
        "report" => json!({}),
        other => unreachable!("unknown command {other}"),
    };
    io::sha256_hex_bytes(serde_json::to_string(&subset).expect("config serializes").as_bytes())
}

fn producers(file: &str) -> &'static [&'static str] {
    match file {
        JOBS_FILE => &["ingest", "synth"],
        GROUND_TRUTH_FILE => &["synth"],
        CLEAN_SUMMARY_FILE => &["ingest"],
        FEATURES_FILE => &["features"],
        SELECTION_FILE => &["select"],
        MODEL_FILE | HISTORY_FILE => &["train"],
        EMBEDDINGS_FILE => &["encode"],
        ENCODER_CLUSTERS_FILE => &["cluster"],
        BASELINE_CLUSTERS_FILE => &["baseline"],
        EVAL_ENCODER_FILE | EVAL_BASELINE_FILE => &["evaluate"],
        COMPARE_FILE => &["compare"],
        SWEEP_FILE => &["sweep"],
        _ => &[],
    }
}

/// Checks an input artifact exists and still matches its producer's
/// manifest; returns its content hash for the consumer's own manifest.
fn require_artifact(res: &Resolved, file: &str) -> Result<String, CliError> {
    let path = res.workdir.join(file);
    let made_by = producers(file);
    if !path.exists() {
        let hint = made_by
            .iter()
            .map(|p| format!("`tracemine {p}`"))
            .collect::<Vec<_>>()
            .join(" or ");
        return Err(data(format!("missing artifact {file}; run {hint} first")));
    }
    let hash = io::sha256_hex_file(&path)?;
    for producer in made_by {
        let manifest_path = io::manifest_path(&res.workdir, producer);
        if !manifest_path.exists() {
            continue;
        }
        let manifest: Manifest = io::read_json(&manifest_path)?;
        let Some(recorded) = manifest.outputs.get(file) else {
            continue;
        };
        if manifest.config_fingerprint != fingerprint(res, producer) && !res.force {
            return Err(usage(format!(
                "config changed since `{producer}` produced {file}; rerun `tracemine {producer}` or pass --force"
            )));
        }
        if recorded != &hash && !res.force {
            return Err(data(format!(
                "{file} was modified after `{producer}` ran (hash mismatch); rerun `tracemine {producer}` or pass --force"
            )));
        }
        break;
    }
    Ok(hash)
}

fn optional_artifact(res: &Resolved, file: &str) -> Result<Option<String>, CliError> {
    if res.workdir.join(file).exists() {
        require_artifact(res, file).map(Some)
    } else {
        Ok(None)
    }
}

fn write_manifest(
    res: &Resolved,
    command: &str,
    inputs: BTreeMap<String, String>,
    output_files: &[&str],
) -> Result<(), CliError> {
    let mut outputs = BTreeMap::new();
    for file in output_files {
        outputs.insert(
            file.to_string(),
            io::sha256_hex_file(&res.workdir.join(file))?,
        );
    }
    let manifest = Manifest {
        command: command.to_string(),
        tool_version: TOOL_VERSION.to_string(),
        config_fingerprint: fingerprint(res, command),
        inputs,
        outputs,
    };
    io::write_json(&io::manifest_path(&res.workdir, command), &manifest)?;
    Ok(())
}

fn read_jobs_checked(res: &Resolved) -> Result<(Vec<JobGraph>, String), CliError> {
    let hash = require_artifact(res, JOBS_FILE)?;
    let jobs = io::read_jobs(&res.workdir.join(JOBS_FILE))?;
    if jobs.is_empty() {
        return Err(data(format!("{JOBS_FILE} contains no jobs")));
    }
    Ok((jobs, hash))
}

fn test_split(res: &Resolved, jobs: &[JobGraph]) -> (Vec<JobGraph>, Vec<JobGraph>) {
    stratified_split(
        jobs,
        res.cfg.split.test_fraction,
        res.cfg.split.n_bins,
        derive_seed(res.seed, STREAM_SPLIT),
    )
}

fn job_outcomes(jobs: &[JobGraph]) -> Result<Vec<JobOutcome>, CliError> {
    jobs.iter()
        .map(|job| {
            let runtime = job_runtime(job)
                .map_err(|e| data(format!("job {}: {e}", job.job_name)))?;
            let start = job
                .nodes
                .iter()
                .map(|n| n.start_time)
                .min()
                .expect("job_runtime already rejected empty jobs");
            Ok(JobOutcome {
                job_name: job.job_name.clone(),
                runtime_s: runtime as f64,
                start_time: start,
            })
        })
        .collect()
}

fn graph_inputs(jobs: &[JobGraph]) -> Result<Vec<GraphInput>, CliError> {
    jobs.iter()
        .map(|j| {
            GraphInput::from_graph(j).map_err(|e| data(format!("job {}: {e}", j.job_name)))
        })
        .collect()
}

fn encoder_error(e: EncoderError) -> CliError {
    match e {
        EncoderError::DimensionMismatch { .. } | EncoderError::EmptyGraph => data(e.to_string()),
        EncoderError::NonFiniteLoss { .. } | EncoderError::NonFiniteParams { .. } => internal(
            format!("{e}; lower train.learning_rate or check the feature scales"),
        ),
    }
}

fn cmd_ingest(res: &Resolved) -> Result<(), CliError> {
    let trace = res.trace_csv.as_ref().ok_or_else(|| {
        usage("no trace input: set \"trace_csv\" in the config or TRACEMINE_TRACE_CSV")
    })?;
    let trace_hash = io::sha256_hex_file(trace)?;
    let file = std::fs::File::open(trace)
        .map_err(|e| data(format!("cannot open {}: {e}", trace.display())))?;
    let outcome =
        parse_task_table(file, &res.cfg.ingest).map_err(|e| data(format!("ingest: {e}")))?;
    let built = build_job_graphs(&outcome.records);
    let (jobs, summary) = clean_jobs(built, &res.cfg.ingest);

    io::write_jobs(&res.workdir.join(JOBS_FILE), &jobs)?;
    io::write_json(&res.workdir.join(CLEAN_SUMMARY_FILE), &summary)?;
    let rejected_path = res.workdir.join(REJECTED_FILE);
    let mut writer = csv::Writer::from_path(&rejected_path)
        .map_err(|e| data(format!("{}: {e}", rejected_path.display())))?;
    writer
        .write_record(["row", "reason"])
        .and_then(|()| {
            outcome.rejected.iter().try_for_each(|r| {
                writer.write_record([r.row.to_string(), r.reason.clone()])
            })
        })
        .map_err(|e| data(format!("{}: {e}", rejected_path.display())))?;
    writer
        .flush()
        .map_err(|e| data(format!("{}: {e}", rejected_path.display())))?;

    let inputs = BTreeMap::from([(trace.display().to_string(), trace_hash)]);
    write_manifest(res, "ingest", inputs, &[JOBS_FILE, CLEAN_SUMMARY_FILE, REJECTED_FILE])?;
    println!(
        "ingest: {} rows parsed, {} rejected, {} of {} jobs kept",
        outcome.records.len(),
        outcome.rejected.len(),
        summary.surviving_jobs,
        summary.input_jobs
    );
    Ok(())
}

fn cmd_synth(res: &Resolved) -> Result<(), CliError> {
    let spec: &SynthSpec = res
        .cfg
        .synth
        .as_ref()
        .ok_or_else(|| usage("config has no \"synth\" section"))?;
    let output = generate_synthetic_trace(spec, derive_seed(res.seed, STREAM_SYNTH))
        .map_err(|e| match e {
            SynthError::InvalidSpec(_) => usage(format!("synth: {e}")),
            SynthError::TopologyCollision(_) => usage(format!(
                "synth: {e}; widen synth.topology_size_range or lower n_families"
            )),
        })?;
    io::write_jobs(&res.workdir.join(JOBS_FILE), &output.jobs)?;
    io::write_ground_truth(&res.workdir.join(GROUND_TRUTH_FILE), &output.ground_truth)?;
    write_manifest(res, "synth", BTreeMap::new(), &[JOBS_FILE, GROUND_TRUTH_FILE])?;
    println!(
        "synth: {} jobs across {} families written",
        output.jobs.len(),
        spec.n_families
    );
    Ok(())
}

fn cmd_features(res: &Resolved) -> Result<(), CliError> {
    let (jobs, jobs_hash) = read_jobs_checked(res)?;
    let rows = jobs
        .iter()
        .map(|j| {
            extract_static_features(j).map_err(|e| data(format!("job {}: {e}", j.job_name)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    io::write_features(&res.workdir.join(FEATURES_FILE), &rows)?;
    let inputs = BTreeMap::from([(JOBS_FILE.to_string(), jobs_hash)]);
    write_manifest(res, "features", inputs, &[FEATURES_FILE])?;
    println!("features: {} rows written", rows.len());
    Ok(())
}

fn feature_rows_for<'a>(
    jobs: &[JobGraph],
    by_name: &HashMap<&str, &'a crate::features::GraphFeatureVector>,
) -> Result<Vec<&'a crate::features::GraphFeatureVector>, CliError> {
    jobs.iter()
        .map(|j| {
            by_name.get(j.job_name.as_str()).copied().ok_or_else(|| {
                data(format!(
                    "{FEATURES_FILE} has no row for job {}; rerun `tracemine features`",
                    j.job_name
                ))
            })
        })
        .collect()
}

fn cmd_select(res: &Resolved) -> Result<(), CliError> {
    let (jobs, jobs_hash) = read_jobs_checked(res)?;
    let features_hash = require_artifact(res, FEATURES_FILE)?;
    let rows = io::read_features(&res.workdir.join(FEATURES_FILE))?;
    let by_name: HashMap<&str, _> = rows.iter().map(|r| (r.job_name.as_str(), r)).collect();
    let (train_jobs, _) = test_split(res, &jobs);
    let train_rows: Vec<_> = feature_rows_for(&train_jobs, &by_name)?
        .into_iter()
        .cloned()
        .collect();
    let params = ExtraTreesParams {
        n_trees: res.cfg.select.n_trees,
        max_depth: res.cfg.select.max_depth,
        min_leaf: res.cfg.select.min_leaf,
    };
    let result = select_targets(
        &train_rows,
        res.cfg.select.top_k,
        &params,
        derive_seed(res.seed, STREAM_SELECT),
    )
    .map_err(|e| match e {
        SelectError::TooFewSamples { .. } => data(format!("select: {e}")),
        SelectError::Collinear { .. } => data(format!("select: {e}")),
    })?;
    io::write_json(&res.workdir.join(SELECTION_FILE), &result)?;
    let inputs = BTreeMap::from([
        (JOBS_FILE.to_string(), jobs_hash),
        (FEATURES_FILE.to_string(), features_hash),
    ]);
    write_manifest(res, "select", inputs, &[SELECTION_FILE])?;
    println!("select: chose {}", result.chosen_targets.join(", "));
    Ok(())
}

fn cmd_train(res: &Resolved) -> Result<(), CliError> {
    let (jobs, jobs_hash) = read_jobs_checked(res)?;
    let features_hash = require_artifact(res, FEATURES_FILE)?;
    let selection_hash = require_artifact(res, SELECTION_FILE)?;
    let rows = io::read_features(&res.workdir.join(FEATURES_FILE))?;
    let selection: SelectionResult = io::read_json(&res.workdir.join(SELECTION_FILE))?;
    let by_name: HashMap<&str, _> = rows.iter().map(|r| (r.job_name.as_str(), r)).collect();

    let (train_jobs, _) = test_split(res, &jobs);
    let (fit_jobs, val_jobs) = stratified_split(
        &train_jobs,
        res.cfg.split.validation_fraction,
        res.cfg.split.n_bins,
        derive_seed(res.seed, STREAM_VAL_SPLIT),
    );
    let target_matrix = |jobs: &[JobGraph]| -> Result<Vec<Vec<f64>>, CliError> {
        let rows = feature_rows_for(jobs, &by_name)?;
        selection
            .chosen_targets
            .iter()
            .map(|name| {
                rows.iter()
                    .map(|r| {
                        r.get(name).ok_or_else(|| {
                            internal(format!("selection target {name} is not a known feature"))
                        })
                    })
                    .collect()
            })
            .collect()
    };
    let fit_targets = target_matrix(&fit_jobs)?;
    let val_targets = target_matrix(&val_jobs)?;
    let fit_inputs = graph_inputs(&fit_jobs)?;
    let val_inputs = graph_inputs(&val_jobs)?;

    let model = init_model(
        derive_seed(res.seed, STREAM_MODEL_INIT),
        NODE_FEATURES,
        EMBEDDING_DIM,
        N_LAYERS,
        DEFAULT_MAX_DEGREE,
    );
    let (model, history) = train(
        model,
        &TrainSet {
            graphs: &fit_inputs,
            targets: &fit_targets,
        },
        &TrainSet {
            graphs: &val_inputs,
            targets: &val_targets,
        },
        &res.cfg.train,
    )
    .map_err(encoder_error)?;

    io::write_json(&res.workdir.join(MODEL_FILE), &model)?;
    io::write_json(&res.workdir.join(HISTORY_FILE), &history)?;
    let inputs = BTreeMap::from([
        (JOBS_FILE.to_string(), jobs_hash),
        (FEATURES_FILE.to_string(), features_hash),
        (SELECTION_FILE.to_string(), selection_hash),
    ]);
    write_manifest(res, "train", inputs, &[MODEL_FILE, HISTORY_FILE])?;
    println!(
        "train: {} epochs, best validation loss {:.6} at epoch {}",
        history.val_loss.len(),
        history.val_loss[history.best_epoch],
        history.best_epoch
    );
    Ok(())
}

fn cmd_encode(res: &Resolved) -> Result<(), CliError> {
    let (jobs, jobs_hash) = read_jobs_checked(res)?;
    let model_hash = require_artifact(res, MODEL_FILE)?;
    let model = io::read_json(&res.workdir.join(MODEL_FILE))?;
    let (_, test_jobs) = test_split(res, &jobs);
    let inputs_vec = graph_inputs(&test_jobs)?;
    let matrix = encode_all(&model, &inputs_vec).map_err(encoder_error)?;
    let embeddings: Vec<Embedding> = test_jobs
        .iter()
        .zip(matrix)
        .map(|(job, g)| Embedding {
            job_name: job.job_name.clone(),
            g,
        })
        .collect();
    io::write_embeddings(&res.workdir.join(EMBEDDINGS_FILE), &embeddings)?;
    let inputs = BTreeMap::from([
        (JOBS_FILE.to_string(), jobs_hash),
        (MODEL_FILE.to_string(), model_hash),
    ]);
    write_manifest(res, "encode", inputs, &[EMBEDDINGS_FILE])?;
    println!("encode: {} test jobs embedded", embeddings.len());
    Ok(())
}

fn cmd_cluster(res: &Resolved) -> Result<(), CliError> {
    let embeddings_hash = require_artifact(res, EMBEDDINGS_FILE)?;
    let embeddings = io::read_embeddings(&res.workdir.join(EMBEDDINGS_FILE))?;
    if embeddings.len() < 2 {
        return Err(data(format!(
            "{EMBEDDINGS_FILE} has {} rows; need at least 2 to cluster",
            embeddings.len()
        )));
    }
    let matrix: Vec<Vec<f64>> = embeddings.iter().map(|e| e.g.clone()).collect();
    let (points, zero_rows) = preprocess_embeddings(&matrix);
    let clustering = dbscan(&points, res.cfg.cluster.eps, res.cfg.cluster.min_samples);
    let names: Vec<String> = embeddings.iter().map(|e| e.job_name.clone()).collect();
    io::write_clustering(&res.workdir.join(ENCODER_CLUSTERS_FILE), &names, &clustering.labels)?;
    io::write_json(
        &res.workdir.join(ENCODER_CLUSTERS_SIDECAR),
        &json!({
            "method": "encoder",
            "eps": res.cfg.cluster.eps,
            "min_samples": res.cfg.cluster.min_samples,
            "n_clusters": clustering.n_clusters(),
            "noise_count": clustering.noise_count(),
            "cluster_sizes": clustering.cluster_sizes(),
            "zero_rows": zero_rows,
        }),
    )?;
    let inputs = BTreeMap::from([(EMBEDDINGS_FILE.to_string(), embeddings_hash)]);
    write_manifest(res, "cluster", inputs, &[ENCODER_CLUSTERS_FILE, ENCODER_CLUSTERS_SIDECAR])?;
    println!(
        "cluster: {} clusters, {} noise points at eps {}",
        clustering.n_clusters(),
        clustering.noise_count(),
        res.cfg.cluster.eps
    );
    Ok(())
}

fn cmd_baseline(res: &Resolved) -> Result<(), CliError> {
    let (jobs, jobs_hash) = read_jobs_checked(res)?;
    let (_, test_jobs) = test_split(res, &jobs);
    let clustering = baseline_clustering(&test_jobs, &res.cfg.baseline).map_err(|e| match e {
        BaselineError::CanonicalMismatch { .. } => internal(format!("baseline: {e}")),
        BaselineError::Graph(_) => data(format!("baseline: {e}")),
    })?;
    let names: Vec<String> = test_jobs.iter().map(|j| j.job_name.clone()).collect();
    io::write_clustering(&res.workdir.join(BASELINE_CLUSTERS_FILE), &names, &clustering.labels)?;
    io::write_json(
        &res.workdir.join(BASELINE_CLUSTERS_SIDECAR),
        &json!({
            "method": "baseline",
            "periods_s": res.cfg.baseline.periods_s,
            "tolerance": res.cfg.baseline.tolerance,
            "strict_consecutive": res.cfg.baseline.strict_consecutive,
            "n_clusters": clustering.n_clusters(),
            "noise_count": clustering.noise_count(),
            "cluster_sizes": clustering.cluster_sizes(),
        }),
    )?;
    let inputs = BTreeMap::from([(JOBS_FILE.to_string(), jobs_hash)]);
    write_manifest(res, "baseline", inputs, &[BASELINE_CLUSTERS_FILE, BASELINE_CLUSTERS_SIDECAR])?;
    println!(
        "baseline: {} clusters, {} outliers",
        clustering.n_clusters(),
        clustering.noise_count()
    );
    Ok(())
}

/// One method's evaluation artifact: protocol metrics, error histogram, and
/// (when ground truth exists) the adjusted Rand index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodEvaluation {
    pub method: String,
    pub report: EvalReport,
    pub histogram: ErrorHistogram,
    pub ari: Option<f64>,
}

fn evaluate_one(
    res: &Resolved,
    method: &str,
    clusters_file: &str,
    outcomes: &[JobOutcome],
    truth: Option<&HashMap<String, i64>>,
) -> Result<MethodEvaluation, CliError> {
    let (names, labels) = io::read_clustering(&res.workdir.join(clusters_file))?;
    let expected: Vec<&str> = outcomes.iter().map(|o| o.job_name.as_str()).collect();
    if names.len() != expected.len() || names.iter().map(String::as_str).ne(expected) {
        let producer = producers(clusters_file)[0];
        return Err(data(format!(
            "{clusters_file} does not list the current test split; rerun `tracemine {producer}`"
        )));
    }
    let (predictions, skipped) = cluster_runtime_prediction(&labels, outcomes)
        .map_err(|e| data(format!("{method}: {e}")))?;
    let report = compute_metrics(predictions, skipped, &labels)
        .map_err(|e| data(format!("{method}: {e} (no cluster of size >= 2)")))?;
    let errors: Vec<f64> = report
        .predictions
        .iter()
        .map(|p| p.signed_error())
        .collect();
    let histogram = error_histogram(
        &errors,
        res.cfg.evaluate.histogram_bin_width,
        res.cfg.evaluate.histogram_lo,
        res.cfg.evaluate.histogram_hi,
    );
    let ari = truth
        .map(|t| {
            let truth_labels: Vec<i64> = names
                .iter()
                .map(|n| {
                    t.get(n).copied().ok_or_else(|| {
                        data(format!("{GROUND_TRUTH_FILE} has no entry for job {n}"))
                    })
                })
                .collect::<Result<_, _>>()?;
            Ok::<f64, CliError>(adjusted_rand_index(&labels, &truth_labels))
        })
        .transpose()?;
    Ok(MethodEvaluation {
        method: method.to_string(),
        report,
        histogram,
        ari,
    })
}

fn load_truth(res: &Resolved) -> Result<Option<(HashMap<String, i64>, String)>, CliError> {
    match optional_artifact(res, GROUND_TRUTH_FILE)? {
        None => Ok(None),
        Some(hash) => {
            let rows = io::read_ground_truth(&res.workdir.join(GROUND_TRUTH_FILE))?;
            Ok(Some((
                rows.into_iter().map(|l| (l.job_name, l.family)).collect(),
                hash,
            )))
        }
    }
}

fn cmd_evaluate(res: &Resolved) -> Result<(), CliError> {
    let (jobs, jobs_hash) = read_jobs_checked(res)?;
    let encoder_hash = require_artifact(res, ENCODER_CLUSTERS_FILE)?;
    let baseline_hash = require_artifact(res, BASELINE_CLUSTERS_FILE)?;
    let truth = load_truth(res)?;
    let (_, test_jobs) = test_split(res, &jobs);
    let outcomes = job_outcomes(&test_jobs)?;

    let truth_map = truth.as_ref().map(|(m, _)| m);
    let encoder_eval =
        evaluate_one(res, "encoder", ENCODER_CLUSTERS_FILE, &outcomes, truth_map)?;
    let baseline_eval =
        evaluate_one(res, "baseline", BASELINE_CLUSTERS_FILE, &outcomes, truth_map)?;

    io::write_json(&res.workdir.join(EVAL_ENCODER_FILE), &encoder_eval)?;
    io::write_json(&res.workdir.join(EVAL_BASELINE_FILE), &baseline_eval)?;
    io::write_predictions(
        &res.workdir.join(PREDICTIONS_ENCODER_FILE),
        &encoder_eval.report.predictions,
    )?;
    io::write_predictions(
        &res.workdir.join(PREDICTIONS_BASELINE_FILE),
        &baseline_eval.report.predictions,
    )?;
    io::write_histogram(&res.workdir.join(HISTOGRAM_ENCODER_FILE), &encoder_eval.histogram)?;
    io::write_histogram(&res.workdir.join(HISTOGRAM_BASELINE_FILE), &baseline_eval.histogram)?;

    let mut inputs = BTreeMap::from([
        (JOBS_FILE.to_string(), jobs_hash),
        (ENCODER_CLUSTERS_FILE.to_string(), encoder_hash),
        (BASELINE_CLUSTERS_FILE.to_string(), baseline_hash),
    ]);
    if let Some((_, hash)) = truth {
        inputs.insert(GROUND_TRUTH_FILE.to_string(), hash);
    }
    write_manifest(
        res,
        "evaluate",
        inputs,
        &[
            EVAL_ENCODER_FILE,
            EVAL_BASELINE_FILE,
            PREDICTIONS_ENCODER_FILE,
            PREDICTIONS_BASELINE_FILE,
            HISTOGRAM_ENCODER_FILE,
            HISTOGRAM_BASELINE_FILE,
        ],
    )?;
    for eval in [&encoder_eval, &baseline_eval] {
        println!(
            "evaluate {}: MAE {:.4}, MSE {:.4}, {} clusters, outliers {:.2}%",
            eval.method,
            eval.report.stats.mae,
            eval.report.stats.mse,
            eval.report.n_clusters,
            100.0 * eval.report.outlier_proportion
        );
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareDoc {
    pub method_a: String,
    pub method_b: String,
    pub result: SharedSubsetReport,
}

fn cmd_compare(res: &Resolved) -> Result<(), CliError> {
    let encoder_hash = require_artifact(res, EVAL_ENCODER_FILE)?;
    let baseline_hash = require_artifact(res, EVAL_BASELINE_FILE)?;
    let encoder_eval: MethodEvaluation = io::read_json(&res.workdir.join(EVAL_ENCODER_FILE))?;
    let baseline_eval: MethodEvaluation = io::read_json(&res.workdir.join(EVAL_BASELINE_FILE))?;
    let result = shared_subset_compare(
        &encoder_eval.report.predictions,
        &baseline_eval.report.predictions,
    );
    let doc = CompareDoc {
        method_a: "encoder".into(),
        method_b: "baseline".into(),
        result,
    };
    io::write_json(&res.workdir.join(COMPARE_FILE), &doc)?;
    let inputs = BTreeMap::from([
        (EVAL_ENCODER_FILE.to_string(), encoder_hash),
        (EVAL_BASELINE_FILE.to_string(), baseline_hash),
    ]);
    write_manifest(res, "compare", inputs, &[COMPARE_FILE])?;
    match (&doc.result.a, &doc.result.b) {
        (Some(a), Some(b)) => println!(
            "compare: {} shared targets, encoder MAE {:.4} vs baseline MAE {:.4}",
            doc.result.intersection_size, a.mae, b.mae
        ),
        _ => println!("compare: no shared prediction targets"),
    }
    Ok(())
}

fn cmd_sweep(res: &Resolved) -> Result<(), CliError> {
    let embeddings_hash = require_artifact(res, EMBEDDINGS_FILE)?;
    let (jobs, jobs_hash) = read_jobs_checked(res)?;
    let truth = load_truth(res)?;
    let embeddings = io::read_embeddings(&res.workdir.join(EMBEDDINGS_FILE))?;
    if embeddings.len() < 2 {
        return Err(data(format!(
            "{EMBEDDINGS_FILE} has {} rows; need at least 2 to sweep",
            embeddings.len()
        )));
    }
    let (_, test_jobs) = test_split(res, &jobs);
    let outcomes = job_outcomes(&test_jobs)?;
    let names: Vec<&str> = embeddings.iter().map(|e| e.job_name.as_str()).collect();
    if names
        .iter()
        .copied()
        .ne(outcomes.iter().map(|o| o.job_name.as_str()))
    {
        return Err(data(format!(
            "{EMBEDDINGS_FILE} does not list the current test split; rerun `tracemine encode`"
        )));
    }
    let truth_labels: Option<Vec<i64>> = truth
        .as_ref()
        .map(|(t, _)| {
            names
                .iter()
                .map(|n| {
                    t.get(*n).copied().ok_or_else(|| {
                        data(format!("{GROUND_TRUTH_FILE} has no entry for job {n}"))
                    })
                })
                .collect::<Result<_, _>>()
        })
        .transpose()?;

    let matrix: Vec<Vec<f64>> = embeddings.iter().map(|e| e.g.clone()).collect();
    let (points, _) = preprocess_embeddings(&matrix);
    let sweep_path = res.workdir.join(SWEEP_FILE);
    let mut writer = csv::Writer::from_path(&sweep_path)
        .map_err(|e| data(format!("{}: {e}", sweep_path.display())))?;
    writer
        .write_record(["eps", "n_clusters", "noise_count", "noise_proportion", "mae", "ari"])
        .map_err(|e| data(format!("{}: {e}", sweep_path.display())))?;
    for &eps in &res.cfg.sweep.eps_values {
        let clustering = dbscan(&points, eps, res.cfg.cluster.min_samples);
        let mae = cluster_runtime_prediction(&clustering.labels, &outcomes)
            .ok()
            .and_then(|(preds, _)| {
                let errors: Vec<f64> = preds.iter().map(|p| p.signed_error()).collect();
                error_stats(&errors).map(|s| s.mae)
            });
        let ari = truth_labels
            .as_ref()
            .map(|t| adjusted_rand_index(&clustering.labels, t));
        writer
            .write_record([
                eps.to_string(),
                clustering.n_clusters().to_string(),
                clustering.noise_count().to_string(),
                (clustering.noise_count() as f64 / points.len() as f64).to_string(),
                mae.map(|v| v.to_string()).unwrap_or_default(),
                ari.map(|v| v.to_string()).unwrap_or_default(),
            ])
            .map_err(|e| data(format!("{}: {e}", sweep_path.display())))?;
    }
    writer
        .flush()
        .map_err(|e| data(format!("{}: {e}", sweep_path.display())))?;

    let mut inputs = BTreeMap::from([
        (EMBEDDINGS_FILE.to_string(), embeddings_hash),
        (JOBS_FILE.to_string(), jobs_hash),
    ]);
    if let Some((_, hash)) = truth {
        inputs.insert(GROUND_TRUTH_FILE.to_string(), hash);
    }
    write_manifest(res, "sweep", inputs, &[SWEEP_FILE])?;
    println!("sweep: {} radii evaluated", res.cfg.sweep.eps_values.len());
    Ok(())
}

/// The collated summary: per-method protocol metrics plus whichever upstream
/// documents the workdir holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalReport {
    pub tool_version: String,
    pub seed: u64,
    pub encoder: MethodEvaluation,
    pub baseline: MethodEvaluation,
    pub compare: Option<CompareDoc>,
    pub clean_summary: Option<CleanSummary>,
    pub selection: Option<SelectionResult>,
    pub train_history: Option<TrainHistory>,
}

fn optional_json<T: serde::de::DeserializeOwned>(
    res: &Resolved,
    file: &str,
    inputs: &mut BTreeMap<String, String>,
) -> Result<Option<T>, CliError> {
    match optional_artifact(res, file)? {
        None => Ok(None),
        Some(hash) => {
            inputs.insert(file.to_string(), hash);
            Ok(Some(io::read_json(&res.workdir.join(file))?))
        }
    }
}

fn cmd_report(res: &Resolved) -> Result<(), CliError> {
    let mut inputs = BTreeMap::new();
    inputs.insert(
        EVAL_ENCODER_FILE.to_string(),
        require_artifact(res, EVAL_ENCODER_FILE)?,
    );
    inputs.insert(
        EVAL_BASELINE_FILE.to_string(),
        require_artifact(res, EVAL_BASELINE_FILE)?,
    );
    let encoder_eval: MethodEvaluation = io::read_json(&res.workdir.join(EVAL_ENCODER_FILE))?;
    let baseline_eval: MethodEvaluation = io::read_json(&res.workdir.join(EVAL_BASELINE_FILE))?;
    let compare = optional_json::<CompareDoc>(res, COMPARE_FILE, &mut inputs)?;
    let clean_summary = optional_json::<CleanSummary>(res, CLEAN_SUMMARY_FILE, &mut inputs)?;
    let selection = optional_json::<SelectionResult>(res, SELECTION_FILE, &mut inputs)?;
    let train_history = optional_json::<TrainHistory>(res, HISTORY_FILE, &mut inputs)?;

    let report = FinalReport {
        tool_version: TOOL_VERSION.to_string(),
        seed: res.seed,
        encoder: encoder_eval,
        baseline: baseline_eval,
        compare,
        clean_summary,
        selection,
        train_history,
    };
    io::write_json(&res.workdir.join(REPORT_FILE), &report)?;
    write_manifest(res, "report", inputs, &[REPORT_FILE])?;
    println!("report: written to {}", res.workdir.join(REPORT_FILE).display());
    Ok(())
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let res = resolve(cli)?;
    match cli.command {
        Command::Ingest => cmd_ingest(&res),
        Command::Synth => cmd_synth(&res),
        Command::Features => cmd_features(&res),
        Command::Select => cmd_select(&res),
        Command::Train => cmd_train(&res),
        Command::Encode => cmd_encode(&res),
        Command::Cluster => cmd_cluster(&res),
        Command::Baseline => cmd_baseline(&res),
        Command::Evaluate => cmd_evaluate(&res),
        Command::Compare => cmd_compare(&res),
        Command::Sweep => cmd_sweep(&res),
        Command::Report => cmd_report(&res),
    }
}
