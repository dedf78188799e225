//! End-to-end orchestration: build, run, score, report.
//!
//! Every pipeline writes `manifest.json` into its output directory before any
//! other file. The manifest lists every artifact the run will produce and is
//! rewritten with each artifact's digest as soon as that artifact is on disk.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendSpec, DecodingParams, RemoteConfig};
use crate::corpus::{self, RecordKind, SourceRecord, TierMap};
use crate::jsonl;
use crate::metrics::{self, ChainScore, GroupBy, ReportRow, UNDEFINED};
use crate::protocol::{self, EpisodeTranscript, Mode, ProtocolConfig, ProtocolError};
use crate::taskgen::{self, MazeTask};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TASKS_FILE: &str = "tasks.jsonl";
pub const TRANSCRIPTS_FILE: &str = "transcripts.jsonl";
pub const SCORES_FILE: &str = "scores.jsonl";
pub const REPORT_FILE: &str = "report.csv";
pub const PLOT_NOISE_FILE: &str = "plot_noise.csv";
pub const PLOT_TIER_FILE: &str = "plot_tier.csv";
pub const ERRORS_FILE: &str = "errors.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("stage {stage}: {message}")]
    Stage { stage: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("no overlapping (tier, mode, noise) cells across the compared runs")]
    NoOverlap,
}

impl RunError {
    /// Process exit status: 1 for configuration problems, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            _ => 2,
        }
    }

    pub fn stage(stage: &str, message: impl ToString) -> Self {
        RunError::Stage {
            stage: stage.to_string(),
            message: message.to_string(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn default_noise_levels() -> Vec<usize> {
    vec![0, 1, 3, 5]
}

fn default_modes() -> Vec<Mode> {
    vec![Mode::OneRound, Mode::MultiRound]
}

fn default_retries() -> usize {
    2
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs/latest")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub corpus: PathBuf,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_noise_levels")]
    pub noise_levels: Vec<usize>,
    #[serde(default = "default_modes")]
    pub modes: Vec<Mode>,
    #[serde(default = "default_backend")]
    pub backend: BackendSpec,
    /// Label written into scores and reports; defaults to the backend spec.
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default = "default_retries")]
    pub retries: usize,
    #[serde(default)]
    pub params: DecodingParams,
    #[serde(default)]
    pub record_timing: bool,
    /// When set, every record's tier is recomputed from its source tag.
    #[serde(default)]
    pub tiers: Option<TierMap>,
    #[serde(default)]
    pub remote: RemoteConfig,
}

fn default_backend() -> BackendSpec {
    BackendSpec::Oracle
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: PathBuf::new(),
            out_dir: default_out_dir(),
            seed: 0,
            noise_levels: default_noise_levels(),
            modes: default_modes(),
            backend: default_backend(),
            model: None,
            retries: default_retries(),
            params: DecodingParams::default(),
            record_timing: false,
            tiers: None,
            remote: RemoteConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn model_label(&self) -> String {
        self.model.clone().unwrap_or_else(|| self.backend.to_string())
    }

    pub fn protocol(&self) -> ProtocolConfig {
        ProtocolConfig {
            retries: self.retries,
            params: self.params.clone(),
            record_timing: self.record_timing,
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.corpus.as_os_str().is_empty() {
            return Err(RunError::Config("`corpus` is required".into()));
        }
        if self.noise_levels.is_empty() {
            return Err(RunError::Config("`noise_levels` must not be empty".into()));
        }
        if self.modes.is_empty() {
            return Err(RunError::Config("`modes` must not be empty".into()));
        }
        Ok(())
    }

    /// Stable identifier derived from every setting that affects artifacts.
    pub fn run_id(&self) -> String {
        let mut canon = self.clone();
        canon.out_dir = PathBuf::new();
        let json = serde_json::to_string(&canon).expect("config serializes");
        jsonl::sha256_hex(json.as_bytes())[..12].to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub file: String,
    pub stage: String,
    /// SHA-256 of the file, filled in once it has been written.
    pub digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub tool_version: String,
    pub seed: u64,
    pub corpus: PathBuf,
    pub corpus_digest: Option<String>,
    pub tasks_digest: Option<String>,
    /// Backend selector; credentials live only in the environment.
    pub backend: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remote: Option<RemoteConfig>,
    pub model: String,
    pub modes: Vec<Mode>,
    pub noise_levels: Vec<usize>,
    pub retries: usize,
    pub params: DecodingParams,
    pub started_at: u64,
    pub updated_at: u64,
    pub status: RunStatus,
    pub artifacts: Vec<Artifact>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<StageFailure>,
}

fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn new(cfg: &RunConfig) -> Self {
        let planned = [
            (TASKS_FILE, "build"),
            (TRANSCRIPTS_FILE, "run"),
            (SCORES_FILE, "score"),
            (REPORT_FILE, "report"),
            (PLOT_NOISE_FILE, "report"),
            (PLOT_TIER_FILE, "report"),
        ];
        let t = now_secs();
        RunManifest {
            run_id: cfg.run_id(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed,
            corpus: cfg.corpus.clone(),
            corpus_digest: None,
            tasks_digest: None,
            backend: cfg.backend.to_string(),
            remote: matches!(cfg.backend, BackendSpec::Remote).then(|| cfg.remote.clone()),
            model: cfg.model_label(),
            modes: cfg.modes.clone(),
            noise_levels: cfg.noise_levels.clone(),
            retries: cfg.retries,
            params: cfg.params.clone(),
            started_at: t,
            updated_at: t,
            status: RunStatus::Running,
            artifacts: planned
                .iter()
                .map(|(f, s)| Artifact {
                    file: f.to_string(),
                    stage: s.to_string(),
                    digest: None,
                })
                .collect(),
            errors: Vec::new(),
        }
    }

    pub fn load(dir: &Path) -> Result<Self, RunError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| RunError::stage("manifest", format!("{}: {e}", path.display())))
    }

    fn save(&mut self, dir: &Path) -> Result<(), RunError> {
        self.updated_at = now_secs();
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        fs::write(&path, text).map_err(io_err(&path))
    }

    fn record(&mut self, dir: &Path, file: &str) -> Result<(), RunError> {
        let path = dir.join(file);
        let digest = jsonl::file_digest(&path).map_err(io_err(&path))?;
        if let Some(a) = self.artifacts.iter_mut().find(|a| a.file == file) {
            a.digest = Some(digest);
        } else {
            self.artifacts.push(Artifact {
                file: file.to_string(),
                stage: "errors".into(),
                digest: Some(digest),
            });
        }
        self.save(dir)
    }
}

/// Loads the corpus and applies the configured tier map.
pub fn load_records(path: &Path, tiers: Option<&TierMap>) -> Result<Vec<SourceRecord>, RunError> {
    let records = corpus::load_corpus(path, None).map_err(|e| RunError::stage("corpus", e))?;
    match tiers {
        None => Ok(records),
        Some(map) => records
            .into_iter()
            .map(|r| corpus::assign_tier(r, map))
            .collect::<Result<_, _>>()
            .map_err(|e| RunError::stage("corpus", e)),
    }
}

/// One task per (doc_qa record, noise level), records outermost.
///
/// Noise is drawn from every record in the corpus, articles included.
pub fn build_tasks(records: &[SourceRecord], noise_levels: &[usize], seed: u64) -> Result<Vec<MazeTask>, RunError> {
    let source = taskgen::noise_source(records);
    let mut tasks = Vec::new();
    for r in records.iter().filter(|r| r.kind == RecordKind::DocQa) {
        for &n in noise_levels {
            tasks.push(taskgen::build_task(r, n, seed, &source).map_err(|e| RunError::stage("build", e))?);
        }
    }
    if tasks.is_empty() {
        return Err(RunError::stage("build", "corpus contains no doc_qa records"));
    }
    Ok(tasks)
}

/// Runs every task in every mode, modes outermost. Failed episodes are
/// returned separately and contribute nothing to the transcript list.
pub fn run_tasks(
    tasks: &[MazeTask],
    modes: &[Mode],
    backend: &dyn Backend,
    cfg: &ProtocolConfig,
) -> (Vec<EpisodeTranscript>, Vec<StageFailure>) {
    let mut done = Vec::new();
    let mut failed = Vec::new();
    for &mode in modes {
        for (task, res) in tasks.iter().zip(protocol::run_episodes(tasks, mode, backend, cfg)) {
            match res {
                Ok(t) => done.push(t),
                Err(e) => {
                    let task_id = match &e {
                        ProtocolError::Backend { task_id, .. } => task_id.clone(),
                        ProtocolError::Prompt(_) => task.task_id.clone(),
                    };
                    failed.push(StageFailure {
                        stage: "run".into(),
                        task_id: Some(format!("{}:{task_id}", mode.as_str())),
                        message: e.to_string(),
                    })
                }
            }
        }
    }
    (done, failed)
}

pub fn score_transcripts(
    tasks: &[MazeTask],
    transcripts: &[EpisodeTranscript],
    model: &str,
) -> Result<Vec<ChainScore>, RunError> {
    let by_id: HashMap<&str, &MazeTask> = tasks.iter().map(|t| (t.task_id.as_str(), t)).collect();
    transcripts
        .iter()
        .map(|tr| {
            let task = by_id
                .get(tr.task_id.as_str())
                .ok_or_else(|| RunError::stage("score", format!("transcript for unknown task {:?}", tr.task_id)))?;
            metrics::score_episode(task, tr, model).map_err(|e| RunError::stage("score", e))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub manifest: RunManifest,
    pub transcripts: Vec<EpisodeTranscript>,
    pub scores: Vec<ChainScore>,
    pub report: Vec<ReportRow>,
}

/// Runs the whole pipeline with a backend built from the configuration.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineOutput, RunError> {
    cfg.validate()?;
    let backend = cfg
        .backend
        .build(&cfg.remote)
        .map_err(|e| RunError::Config(format!("backend: {e}")))?;
    run_pipeline_with(cfg, backend.as_ref())
}

/// Like [`run_pipeline`] but with a caller-supplied backend.
pub fn run_pipeline_with(cfg: &RunConfig, backend: &dyn Backend) -> Result<PipelineOutput, RunError> {
    cfg.validate()?;
    let dir = cfg.out_dir.as_path();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut manifest = RunManifest::new(cfg);
    manifest.save(dir)?;
    let result = stages(cfg, backend, dir, &mut manifest);
    if let Err(e) = &result {
        let failure = match e {
            RunError::Stage { stage, message } => StageFailure {
                stage: stage.clone(),
                task_id: None,
                message: message.clone(),
            },
            other => StageFailure {
                stage: "pipeline".into(),
                task_id: None,
                message: other.to_string(),
            },
        };
        manifest.status = RunStatus::Failed;
        manifest.errors.push(failure);
        write_errors(dir, &mut manifest)?;
    }
    result
}

fn write_errors(dir: &Path, manifest: &mut RunManifest) -> Result<(), RunError> {
    manifest.save(dir)?;
    let path = dir.join(ERRORS_FILE);
    jsonl::write(&path, &manifest.errors).map_err(|e| RunError::stage("errors", e))?;
    manifest.record(dir, ERRORS_FILE)
}

fn stages(
    cfg: &RunConfig,
    backend: &dyn Backend,
    dir: &Path,
    manifest: &mut RunManifest,
) -> Result<PipelineOutput, RunError> {
    let records = load_records(&cfg.corpus, cfg.tiers.as_ref())?;
    manifest.corpus_digest = Some(corpus::corpus_stats(&records).content_digest);
    manifest.save(dir)?;

    let tasks = build_tasks(&records, &cfg.noise_levels, cfg.seed)?;
    write_jsonl(dir, TASKS_FILE, &tasks, "build")?;
    manifest.record(dir, TASKS_FILE)?;
    manifest.tasks_digest = manifest.artifacts[0].digest.clone();
    manifest.save(dir)?;

    let (transcripts, failures) = run_tasks(&tasks, &cfg.modes, backend, &cfg.protocol());
    write_jsonl(dir, TRANSCRIPTS_FILE, &transcripts, "run")?;
    manifest.record(dir, TRANSCRIPTS_FILE)?;
    if !failures.is_empty() {
        let n = failures.len();
        let first = failures[0].message.clone();
        manifest.errors.extend(failures);
        return Err(RunError::stage("run", format!("{n} episode(s) failed; first: {first}")));
    }

    let model = cfg.model_label();
    let scores = score_transcripts(&tasks, &transcripts, &model)?;
    write_jsonl(dir, SCORES_FILE, &scores, "score")?;
    manifest.record(dir, SCORES_FILE)?;

    let report = metrics::aggregate_scores(&scores, GroupBy::default());
    write_csv(dir, REPORT_FILE, "report", |f| metrics::write_report(f, &report).map_err(|e| e.to_string()))?;
    manifest.record(dir, REPORT_FILE)?;
    for (file, axis) in [(PLOT_NOISE_FILE, PlotAxis::Noise), (PLOT_TIER_FILE, PlotAxis::Tier)] {
        let rows = emit_plot_data(&scores, axis);
        write_csv(dir, file, "report", |f| write_plot_data(f, &rows).map_err(|e| e.to_string()))?;
        manifest.record(dir, file)?;
    }

    manifest.status = RunStatus::Completed;
    manifest.save(dir)?;
    Ok(PipelineOutput {
        manifest: manifest.clone(),
        transcripts,
        scores,
        report,
    })
}

fn write_jsonl<T: Serialize>(dir: &Path, file: &str, items: &[T], stage: &str) -> Result<(), RunError> {
    jsonl::write(&dir.join(file), items).map_err(|e| RunError::stage(stage, e))
}

fn write_csv(
    dir: &Path,
    file: &str,
    stage: &str,
    body: impl FnOnce(&mut fs::File) -> Result<(), String>,
) -> Result<(), RunError> {
    let path = dir.join(file);
    let mut f = fs::File::create(&path).map_err(io_err(&path))?;
    body(&mut f).map_err(|e| RunError::stage(stage, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotAxis {
    Noise,
    Tier,
}

impl std::str::FromStr for PlotAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "noise" => Ok(PlotAxis::Noise),
            "tier" => Ok(PlotAxis::Tier),
            _ => Err(format!("unknown plot axis {s:?}; expected noise | tier")),
        }
    }
}

/// One point of long-format plot data. `series` separates model and mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub series: String,
    pub group: String,
    pub metric: String,
    /// `None` when no task in the group has the metric defined.
    pub mean: Option<f64>,
    pub n: usize,
}

pub const PLOT_HEADER: [&str; 5] = ["series", "group", "metric", "mean", "n"];

/// Per-series means along `axis`, both metrics for every group.
pub fn emit_plot_data(scores: &[ChainScore], axis: PlotAxis) -> Vec<PlotRow> {
    let group_by = GroupBy {
        model: true,
        tier: axis == PlotAxis::Tier,
        mode: true,
        noise: axis == PlotAxis::Noise,
    };
    let mut rows = Vec::new();
    for r in metrics::aggregate_scores(scores, group_by) {
        let series = format!("{}/{}", r.model, r.mode);
        let group = match axis {
            PlotAxis::Noise => r.noise_level.clone(),
            PlotAxis::Tier => r.tier.clone(),
        };
        rows.push(PlotRow {
            series: series.clone(),
            group: group.clone(),
            metric: "multi_hop".into(),
            mean: Some(r.multi_hop_mean),
            n: r.n_tasks,
        });
        rows.push(PlotRow {
            series,
            group,
            metric: "single_wise".into(),
            mean: r.single_wise_mean,
            n: r.n_tasks - r.n_excluded,
        });
    }
    rows
}

fn fmt_mean(m: Option<f64>) -> String {
    m.map_or_else(|| UNDEFINED.to_string(), |v| v.to_string())
}

fn parse_mean(s: &str) -> Result<Option<f64>, String> {
    if s == UNDEFINED {
        Ok(None)
    } else {
        s.parse().map(Some).map_err(|_| format!("bad number {s:?}"))
    }
}

pub fn write_plot_data<W: io::Write>(out: W, rows: &[PlotRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PLOT_HEADER)?;
    for r in rows {
        w.write_record([r.series.clone(), r.group.clone(), r.metric.clone(), fmt_mean(r.mean), r.n.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_plot_data<R: io::Read>(input: R) -> Result<Vec<PlotRow>, String> {
    let mut rd = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        if rec.len() != PLOT_HEADER.len() {
            return Err(format!("expected {} columns, found {}", PLOT_HEADER.len(), rec.len()));
        }
        out.push(PlotRow {
            series: rec[0].to_string(),
            group: rec[1].to_string(),
            metric: rec[2].to_string(),
            mean: parse_mean(&rec[3])?,
            n: rec[4].parse().map_err(|_| format!("bad count {:?}", &rec[4]))?,
        });
    }
    Ok(out)
}

/// A compared run: a label plus its scores.
#[derive(Debug, Clone)]
pub struct RunScores {
    pub label: String,
    pub scores: Vec<ChainScore>,
}

impl RunScores {
    /// Reads `scores.jsonl` from a run directory, labelled by its run id
    /// when a manifest is present and by the directory name otherwise.
    pub fn load(dir: &Path) -> Result<Self, RunError> {
        let scores = jsonl::read(&dir.join(SCORES_FILE)).map_err(|e| RunError::stage("compare", e))?;
        let label = match RunManifest::load(dir) {
            Ok(m) => m.run_id,
            Err(_) => dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| dir.display().to_string()),
        };
        Ok(RunScores { label, scores })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub tier: String,
    pub mode: String,
    pub noise_level: String,
    pub metric: String,
    /// One mean per run, in input order.
    pub means: Vec<Option<f64>>,
    /// `means[0] - means[i]` for each later run.
    pub deltas: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub labels: Vec<String>,
    pub rows: Vec<ComparisonRow>,
    pub plot: Vec<PlotRow>,
}

/// Side-by-side means over the (tier, mode, noise) cells every run has.
pub fn compare_runs(runs: &[RunScores]) -> Result<Comparison, RunError> {
    if runs.len() < 2 {
        return Err(RunError::Config("compare needs at least two runs".into()));
    }
    let group = GroupBy {
        model: false,
        tier: true,
        mode: true,
        noise: true,
    };
    let tables: Vec<BTreeMap<(String, String, String), ReportRow>> = runs
        .iter()
        .map(|r| metrics::aggregate_scores(&r.scores, group).into_iter().map(|row| (row.cell(), row)).collect())
        .collect();
    let shared: BTreeSet<&(String, String, String)> = tables[0]
        .keys()
        .filter(|cell| tables[1..].iter().all(|t| t.contains_key(*cell)))
        .collect();
    if shared.is_empty() {
        return Err(RunError::NoOverlap);
    }
    let mut rows = Vec::new();
    for cell in shared {
        for metric in ["multi_hop", "single_wise"] {
            let means: Vec<Option<f64>> = tables
                .iter()
                .map(|t| {
                    let r = &t[cell];
                    if metric == "multi_hop" {
                        Some(r.multi_hop_mean)
                    } else {
                        r.single_wise_mean
                    }
                })
                .collect();
            let deltas = means[1..]
                .iter()
                .map(|m| match (means[0], m) {
                    (Some(a), Some(b)) => Some(a - b),
                    _ => None,
                })
                .collect();
            rows.push(ComparisonRow {
                tier: cell.0.clone(),
                mode: cell.1.clone(),
                noise_level: cell.2.clone(),
                metric: metric.into(),
                means,
                deltas,
            });
        }
    }

    let mut plot = Vec::new();
    for run in runs {
        let relabelled: Vec<ChainScore> = run
            .scores
            .iter()
            .map(|s| ChainScore {
                model: run.label.clone(),
                ..s.clone()
            })
            .collect();
        plot.extend(emit_plot_data(&relabelled, PlotAxis::Noise));
    }
    Ok(Comparison {
        labels: runs.iter().map(|r| r.label.clone()).collect(),
        rows,
        plot,
    })
}

pub fn write_comparison<W: io::Write>(out: W, cmp: &Comparison) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["tier", "mode", "noise_level", "metric"].map(String::from).to_vec();
    header.extend(cmp.labels.iter().enumerate().map(|(i, l)| format!("run{i}:{l}")));
    header.extend((1..cmp.labels.len()).map(|i| format!("delta_run0_minus_run{i}")));
    w.write_record(&header)?;
    for r in &cmp.rows {
        let mut rec = vec![r.tier.clone(), r.mode.clone(), r.noise_level.clone(), r.metric.clone()];
        rec.extend(r.means.iter().map(|m| fmt_mean(*m)));
        rec.extend(r.deltas.iter().map(|d| fmt_mean(*d)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
