mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use maze_core::dialoguegen::Variant;
use maze_core::metrics::GroupBy;
use maze_core::protocol::Mode;

/// Evidence-ranking benchmark and dialogue data factory.
#[derive(Parser)]
#[command(name = "maze", version, propagate_version = true)]
struct Cli {
    /// More log output (-v info, -vv debug). Prompt text is never logged.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus inspection.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Build tasks from a corpus.
    Build(BuildArgs),
    /// Run episodes against a backend.
    Run(RunArgs),
    /// Score transcripts against their tasks.
    Score(ScoreArgs),
    /// Aggregate scores into a report and plot data.
    Report(ReportArgs),
    /// Compare two or more pipeline run directories.
    Compare(CompareArgs),
    /// Print the prompt a task produces.
    Render(RenderArgs),
    /// Build, run, score and report in one go, with a run manifest.
    Pipeline(PipelineArgs),
    /// Convert monologue records into doctor-patient dialogues.
    Dialogue(DialogueArgs),
    /// Check the entropy-reduction identity on random joints.
    DemoEntropy(DemoArgs),
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Print record count, tier histogram and content digest.
    Stats {
        path: PathBuf,
        /// Recompute tiers from source tags with the built-in table.
        #[arg(long)]
        assign_tiers: bool,
        /// Also write the manifest to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ConfigArg {
    /// TOML run configuration; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Comma-separated noise levels.
    #[arg(long, value_delimiter = ',')]
    noise: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    tasks: PathBuf,
    /// oracle | uniform_random[:seed] | fixed_wrong | replay:<path> | remote
    #[arg(long)]
    backend: Option<String>,
    /// one | multi; repeat or comma-separate for both.
    #[arg(long, value_delimiter = ',')]
    mode: Option<Vec<Mode>>,
    #[arg(long)]
    retries: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_tokens: Option<u32>,
    /// Record wall-clock time per episode (breaks byte determinism).
    #[arg(long)]
    record_timing: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    tasks: PathBuf,
    #[arg(long)]
    transcripts: PathBuf,
    /// Label for the model column; defaults to the transcripts' backend id.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    scores: PathBuf,
    /// Comma list drawn from model, tier, mode, noise.
    #[arg(long, default_value = "model,tier,mode,noise")]
    group_by: GroupBy,
    /// Report CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Long-format plot data over noise levels.
    #[arg(long)]
    plot_noise: Option<PathBuf>,
    /// Long-format plot data over tiers.
    #[arg(long)]
    plot_tier: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Run directories, each holding scores.jsonl.
    #[arg(required = true, num_args = 2..)]
    runs: Vec<PathBuf>,
    /// Comparison CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long, default_value = "tasks.jsonl")]
    tasks: PathBuf,
    #[arg(long)]
    task: String,
    #[arg(long, default_value = "one")]
    mode: Mode,
    /// Multi-round attempt number (1-based); earlier chain sentences are
    /// appended to the background as an oracle would have.
    #[arg(long, default_value_t = 1)]
    attempt: usize,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    noise: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    mode: Option<Vec<Mode>>,
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    retries: Option<usize>,
}

#[derive(Args)]
#[command(args_conflicts_with_subcommands = true)]
struct DialogueArgs {
    #[command(subcommand)]
    action: Option<DialogueCmd>,
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// mc | article
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    backend: Option<String>,
    /// Generations tried per record before keeping the best invalid one.
    #[arg(long, default_value_t = 3)]
    max_attempts: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum DialogueCmd {
    /// Merge multi-choice and article dialogues into one SFT file.
    Combine {
        #[arg(long)]
        mc: PathBuf,
        #[arg(long)]
        article: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    trials: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
