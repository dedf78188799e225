use std::fs::{self, File};
use std::io::{self, Write};
use std::path::Path;

use maze_core::backend::{Backend, BackendSpec};
use maze_core::corpus::{self, RecordKind, TierMap};
use maze_core::dialoguegen::{self, DialogueRecord, Mix, Variant};
use maze_core::infotheory;
use maze_core::jsonl;
use maze_core::metrics::{self, ChainScore};
use maze_core::prompting;
use maze_core::protocol::{EpisodeState, EpisodeTranscript, Mode};
use maze_core::runner::{self, PlotAxis, RunConfig, RunError, RunScores};
use maze_core::taskgen::MazeTask;

use crate::{
    BuildArgs, Command, CompareArgs, ConfigArg, CorpusCmd, DemoArgs, DialogueArgs, DialogueCmd, PipelineArgs,
    RenderArgs, ReportArgs, RunArgs, ScoreArgs,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e.exit_code() {
            1 => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

/// Prints to stdout; a closed pipe (e.g. `| head`) is not an error.
fn say(text: &str) {
    let _ = writeln!(io::stdout().lock(), "{text}");
}

fn tolerate_closed_pipe(res: csv::Result<()>) -> csv::Result<()> {
    match res {
        Err(e) => match e.kind() {
            csv::ErrorKind::Io(io) if io.kind() == io::ErrorKind::BrokenPipe => Ok(()),
            _ => Err(e),
        },
        ok => ok,
    }
}

fn runtime(e: impl ToString) -> CliError {
    CliError::Runtime(e.to_string())
}

fn config_err(e: impl ToString) -> CliError {
    CliError::Config(e.to_string())
}

type Result<T> = std::result::Result<T, CliError>;

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Corpus(CorpusCmd::Stats { path, assign_tiers, out }) => corpus_stats(&path, assign_tiers, out.as_deref()),
        Command::Build(a) => build(a),
        Command::Run(a) => run(a),
        Command::Score(a) => score(a),
        Command::Report(a) => report(a),
        Command::Compare(a) => compare(a),
        Command::Render(a) => render(a),
        Command::Pipeline(a) => pipeline(a),
        Command::Dialogue(a) => dialogue(a),
        Command::DemoEntropy(a) => demo_entropy(a),
    }
}

fn base_config(arg: &ConfigArg) -> Result<RunConfig> {
    match &arg.config {
        Some(p) => Ok(RunConfig::load(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn parse_backend(flag: Option<&str>, cfg: &mut RunConfig) -> Result<()> {
    if let Some(b) = flag {
        cfg.backend = b.parse::<BackendSpec>().map_err(config_err)?;
    }
    Ok(())
}

fn build_backend(cfg: &RunConfig) -> Result<std::sync::Arc<dyn Backend>> {
    cfg.backend.build(&cfg.remote).map_err(|e| config_err(format!("backend: {e}")))
}

fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    }
    File::create(path).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<()> {
    jsonl::write(path, items).map_err(runtime)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    jsonl::read(path).map_err(runtime)
}

fn corpus_stats(path: &Path, assign_tiers: bool, out: Option<&Path>) -> Result<()> {
    let default_map = TierMap::default();
    let records = runner::load_records(path, assign_tiers.then_some(&default_map))?;
    let manifest = corpus::manifest_for(path, &records);
    let text = serde_json::to_string_pretty(&manifest).map_err(runtime)?;
    say(&text);
    if let Some(out) = out {
        writeln!(create(out)?, "{text}").map_err(runtime)?;
    }
    Ok(())
}

fn build(a: BuildArgs) -> Result<()> {
    let mut cfg = base_config(&a.config)?;
    if let Some(c) = a.corpus {
        cfg.corpus = c;
    }
    if let Some(n) = a.noise {
        cfg.noise_levels = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let records = runner::load_records(&cfg.corpus, cfg.tiers.as_ref())?;
    let tasks = runner::build_tasks(&records, &cfg.noise_levels, cfg.seed)?;
    write_jsonl(&a.out, &tasks)?;
    log::info!("wrote {} tasks to {}", tasks.len(), a.out.display());
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let mut cfg = base_config(&a.config)?;
    parse_backend(a.backend.as_deref(), &mut cfg)?;
    if let Some(m) = a.mode {
        cfg.modes = m;
    }
    if let Some(r) = a.retries {
        cfg.retries = r;
    }
    if let Some(t) = a.temperature {
        cfg.params.temperature = t;
    }
    if let Some(t) = a.max_tokens {
        cfg.params.max_tokens = t;
    }
    cfg.record_timing |= a.record_timing;
    let tasks: Vec<MazeTask> = read_jsonl(&a.tasks)?;
    let backend = build_backend(&cfg)?;
    let (transcripts, failures) = runner::run_tasks(&tasks, &cfg.modes, backend.as_ref(), &cfg.protocol());
    write_jsonl(&a.out, &transcripts)?;
    if failures.is_empty() {
        log::info!("wrote {} transcripts to {}", transcripts.len(), a.out.display());
        return Ok(());
    }
    for f in &failures {
        eprintln!("{}: {}", f.task_id.as_deref().unwrap_or("-"), f.message);
    }
    Err(runtime(format!(
        "{} episode(s) failed; {} completed transcripts kept in {}",
        failures.len(),
        transcripts.len(),
        a.out.display()
    )))
}

fn score(a: ScoreArgs) -> Result<()> {
    let tasks: Vec<MazeTask> = read_jsonl(&a.tasks)?;
    let transcripts: Vec<EpisodeTranscript> = read_jsonl(&a.transcripts)?;
    let model = a
        .model
        .or_else(|| transcripts.first().map(|t| t.backend_id.clone()))
        .unwrap_or_else(|| "unknown".into());
    let scores = runner::score_transcripts(&tasks, &transcripts, &model)?;
    write_jsonl(&a.out, &scores)
}

fn report(a: ReportArgs) -> Result<()> {
    let scores: Vec<ChainScore> = read_jsonl(&a.scores)?;
    let rows = metrics::aggregate_scores(&scores, a.group_by);
    match &a.out {
        Some(p) => metrics::write_report(create(p)?, &rows),
        None => tolerate_closed_pipe(metrics::write_report(io::stdout().lock(), &rows)),
    }
    .map_err(runtime)?;
    for (path, axis) in [(&a.plot_noise, PlotAxis::Noise), (&a.plot_tier, PlotAxis::Tier)] {
        if let Some(p) = path {
            runner::write_plot_data(create(p)?, &runner::emit_plot_data(&scores, axis)).map_err(runtime)?;
        }
    }
    Ok(())
}

fn compare(a: CompareArgs) -> Result<()> {
    let runs: Vec<RunScores> = a.runs.iter().map(|d| RunScores::load(d)).collect::<std::result::Result<_, _>>()?;
    let cmp = runner::compare_runs(&runs)?;
    match &a.out {
        Some(p) => runner::write_comparison(create(p)?, &cmp),
        None => tolerate_closed_pipe(runner::write_comparison(io::stdout().lock(), &cmp)),
    }
    .map_err(runtime)?;
    if let Some(p) = &a.plot {
        runner::write_plot_data(create(p)?, &cmp.plot).map_err(runtime)?;
    }
    Ok(())
}

fn render(a: RenderArgs) -> Result<()> {
    let tasks: Vec<MazeTask> = read_jsonl(&a.tasks)?;
    let task = tasks
        .iter()
        .find(|t| t.task_id == a.task)
        .ok_or_else(|| config_err(format!("no task {:?} in {}", a.task, a.tasks.display())))?;
    let prompt = match a.mode {
        Mode::OneRound => prompting::render_one_round(task),
        Mode::MultiRound => {
            let mut state = EpisodeState::new(task, Mode::MultiRound);
            for &i in task.gt_pool_indices().iter().take(a.attempt.saturating_sub(1)) {
                state.finish_round(task, Some(i));
            }
            prompting::render_multi_round(task, &state.background_now, a.attempt)
        }
    }
    .map_err(config_err)?;
    say(&prompt.text);
    Ok(())
}

fn pipeline(a: PipelineArgs) -> Result<()> {
    let mut cfg = base_config(&a.config)?;
    if let Some(c) = a.corpus {
        cfg.corpus = c;
    }
    if let Some(o) = a.out {
        cfg.out_dir = o;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.noise {
        cfg.noise_levels = n;
    }
    if let Some(m) = a.mode {
        cfg.modes = m;
    }
    parse_backend(a.backend.as_deref(), &mut cfg)?;
    if a.model.is_some() {
        cfg.model = a.model;
    }
    if let Some(r) = a.retries {
        cfg.retries = r;
    }
    let out = runner::run_pipeline(&cfg)?;
    say(&format!(
        "run {} complete: {} episodes scored, report in {}",
        out.manifest.run_id,
        out.scores.len(),
        cfg.out_dir.join(runner::REPORT_FILE).display()
    ));
    Ok(())
}

fn dialogue(a: DialogueArgs) -> Result<()> {
    if let Some(DialogueCmd::Combine { mc, article, seed, out }) = a.action {
        return combine(&mc, &article, seed, &out);
    }
    let mut cfg = base_config(&a.config)?;
    parse_backend(a.backend.as_deref(), &mut cfg)?;
    let corpus_path = a.corpus.ok_or_else(|| config_err("--corpus is required"))?;
    let variant = a.variant.ok_or_else(|| config_err("--variant is required (mc | article)"))?;
    let out = a.out.ok_or_else(|| config_err("--out is required"))?;
    if a.max_attempts == 0 {
        return Err(config_err("--max-attempts must be at least 1"));
    }
    let kind = match variant {
        Variant::Mc => RecordKind::DocQa,
        Variant::Article => RecordKind::Article,
    };
    let records = corpus::load_corpus(&corpus_path, Some(kind)).map_err(|e| runtime(format!("corpus: {e}")))?;
    let backend = build_backend(&cfg)?;
    let mut dialogues: Vec<DialogueRecord> = Vec::with_capacity(records.len());
    let mut failed = 0usize;
    for r in &records {
        match dialoguegen::convert_record(r, backend.as_ref(), &cfg.params, a.max_attempts) {
            Ok(d) => {
                if !d.valid {
                    log::warn!("{}: no valid dialogue after {} attempt(s)", d.source_id, d.attempts);
                }
                dialogues.push(d);
            }
            Err(e) => {
                eprintln!("{e}");
                failed += 1;
            }
        }
    }
    write_jsonl(&out, &dialogues)?;
    let valid = dialogues.iter().filter(|d| d.valid).count();
    say(&format!("{valid}/{} dialogues valid", dialogues.len()));
    if failed > 0 {
        return Err(runtime(format!("{failed} record(s) failed; completed dialogues kept in {}", out.display())));
    }
    Ok(())
}

fn combine(mc: &Path, article: &Path, seed: u64, out: &Path) -> Result<()> {
    let mut dialogues: Vec<DialogueRecord> = read_jsonl(mc)?;
    dialogues.extend(read_jsonl::<DialogueRecord>(article)?);
    let export = dialoguegen::export_sft(&dialogues, Mix::Combined, seed).map_err(runtime)?;
    for id in &export.excluded {
        log::warn!("{id}: invalid dialogue left out of the export");
    }
    write_jsonl(out, &export.records)?;
    say(&format!("{} records written, {} excluded", export.records.len(), export.excluded.len()));
    Ok(())
}

fn demo_entropy(a: DemoArgs) -> Result<()> {
    let s = infotheory::demo(a.seed, a.trials);
    say(&serde_json::to_string(&s).map_err(runtime)?);
    if s.max_abs_gap >= 1e-9 || s.min_delta_h < -1e-12 {
        return Err(runtime("entropy identity violated"));
    }
    Ok(())
}
