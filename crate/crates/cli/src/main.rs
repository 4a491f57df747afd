mod commands;
mod config;
mod error;
mod ingest;
mod manifest;
mod report;

use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use nationmood::moodagg::{Granularity, RelativeMode};
use nationmood::smm::FoldMode;

use error::CliError;

const EXIT_HELP: &str = "\
Exit codes:
  0  success
  1  other failure (I/O, internal)
  2  usage error (unknown flag, bad value, invalid config)
  3  missing input file or directory
  4  fingerprint mismatch between a model and its data
  5  invalid input data

On failure one JSON line is written to stderr:
  {\"error\":\"<kind>\",\"code\":<n>,\"message\":\"...\"}";

#[derive(Parser, Debug)]
#[command(name = "nationmood", version, about = "Mood estimation pipeline from sensor logs, self-reports and queries", after_help = EXIT_HELP)]
pub struct Cli {
    /// TOML config; keys namespaced by module (simgen, ingest, smm, qmm).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; every random choice derives from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel stages. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic corpus with oracle files.
    Simulate(SimulateArgs),
    /// Sessionize a corpus and extract sensor features.
    Features(FeaturesArgs),
    /// Train the sensor mood model with cross-validation.
    TrainSmm(TrainSmmArgs),
    /// Train the query mood model, optionally with sensor-model labels.
    TrainQmm(TrainQmmArgs),
    /// Score query sessions with a trained query model.
    Score(ScoreArgs),
    /// Aggregate session scores into nation and prefecture series.
    Aggregate(AggregateArgs),
    /// Day-over-day weekly rhythm statistics.
    AnalyzeRhythm(RhythmArgs),
    /// Correlate relative regional scores with case counts.
    AnalyzeCorrelate(CorrelateArgs),
    /// Event-gap trace of a target window against reference windows.
    AnalyzeEvent(EventArgs),
    /// Consolidated summary of every run found under a directory.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FeaturesArgs {
    /// Corpus directory.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainSmmArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// features.csv from the features stage.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Random-search trials before the final fit (overrides smm.search_budget).
    #[arg(long)]
    pub search: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long, value_parser = parse_fold_mode)]
    pub fold_mode: Option<FoldMode>,
}

#[derive(Args, Debug)]
pub struct TrainQmmArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Sensor mood model used to label sessions without a self-report.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Train on self-reports plus sensor-model labels (needs --model, --features).
    #[arg(long, conflicts_with = "no_smm")]
    pub with_smm: bool,
    /// Train on self-reports only.
    #[arg(long)]
    pub no_smm: bool,
    /// Also run the repeated-split comparison of both variants (needs --features).
    #[arg(long)]
    pub compare: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Query model JSON.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AggregateArgs {
    /// scores.csv from the score stage.
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub profiles: PathBuf,
    #[arg(long, default_value = "daily", value_parser = parse_granularity)]
    pub granularity: Granularity,
    /// Also write series relative to a baseline period.
    #[arg(long, value_parser = parse_relative_mode)]
    pub relative_mode: Option<RelativeMode>,
    #[arg(long, requires = "relative_mode")]
    pub baseline_from: Option<NaiveDate>,
    #[arg(long, requires = "relative_mode")]
    pub baseline_to: Option<NaiveDate>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RhythmArgs {
    /// Daily aggregate CSV.
    #[arg(long)]
    pub points: PathBuf,
    #[arg(long)]
    pub from: NaiveDate,
    #[arg(long)]
    pub to: NaiveDate,
    #[arg(long)]
    pub holidays: Option<PathBuf>,
    #[arg(long, default_value = "nation")]
    pub scope: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CorrelateArgs {
    /// Daily aggregate CSV.
    #[arg(long)]
    pub points: PathBuf,
    #[arg(long)]
    pub cases: PathBuf,
    /// Date whose relative scores and case counts are compared.
    #[arg(long)]
    pub date: NaiveDate,
    #[arg(long)]
    pub baseline_from: NaiveDate,
    #[arg(long)]
    pub baseline_to: NaiveDate,
    #[arg(long, default_value = "ratio", value_parser = parse_relative_mode)]
    pub relative_mode: RelativeMode,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EventArgs {
    /// Sub-daily aggregate CSV.
    #[arg(long)]
    pub points: PathBuf,
    /// Start of the target window (RFC 3339).
    #[arg(long)]
    pub target: String,
    /// Start of a reference window (RFC 3339); repeat for several.
    #[arg(long = "reference", required = true)]
    pub references: Vec<String>,
    #[arg(long, default_value_t = 48.0)]
    pub length_hours: f64,
    /// Bucket length of the points file.
    #[arg(long, default_value = "1h", value_parser = parse_granularity)]
    pub granularity: Granularity,
    /// Instant splitting the trace into pre and post periods (RFC 3339).
    #[arg(long)]
    pub shock: Option<String>,
    /// Post-shock drop of the mean ratio, relative to pre-shock, that counts as detected.
    #[arg(long, default_value_t = 0.05)]
    pub min_drop: f64,
    #[arg(long, default_value = "nation")]
    pub scope: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Directory searched recursively for run artifacts.
    #[arg(long)]
    pub dir: PathBuf,
    /// Defaults to --dir.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_granularity(s: &str) -> Result<Granularity, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_relative_mode(s: &str) -> Result<RelativeMode, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_fold_mode(s: &str) -> Result<FoldMode, String> {
    match s {
        "record" => Ok(FoldMode::Record),
        "user" | "user_disjoint" => Ok(FoldMode::UserDisjoint),
        _ => Err(format!("unknown fold mode {s:?} (record, user)")),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { error::EXIT_USAGE } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli, args) {
        let line = serde_json::json!({ "error": e.kind(), "code": e.code(), "message": e.to_string() });
        eprintln!("{line}");
        std::process::exit(e.code());
    }
}

fn run(cli: Cli, args: Vec<String>) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Other(format!("thread pool: {e}")))?;
    }
    let loaded = config::load(cli.config.as_deref())?;
    let seed = cli.seed.unwrap_or(loaded.config.seed);
    let mut ctx = commands::Context { config: loaded.config, config_sha256: loaded.sha256, seed, args };
    if let Some(p) = &cli.config {
        ctx.args.push(format!("config_file={}", p.display()));
    }
    match cli.command {
        Command::Simulate(a) => commands::simulate(&ctx, a),
        Command::Features(a) => commands::features(&ctx, a),
        Command::TrainSmm(a) => commands::train_smm(&ctx, a),
        Command::TrainQmm(a) => commands::train_qmm(&ctx, a),
        Command::Score(a) => commands::score(&ctx, a),
        Command::Aggregate(a) => commands::aggregate(&ctx, a),
        Command::AnalyzeRhythm(a) => commands::analyze_rhythm(&ctx, a),
        Command::AnalyzeCorrelate(a) => commands::analyze_correlate(&ctx, a),
        Command::AnalyzeEvent(a) => commands::analyze_event(&ctx, a),
        Command::Report(a) => report::report(&ctx, a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_parse() {
        let c = Cli::try_parse_from(["nationmood", "--threads", "2", "aggregate", "--scores", "s", "--profiles", "p", "--granularity", "3h", "--out", "o"]).unwrap();
        assert_eq!(c.threads, Some(2));
        match c.command {
            Command::Aggregate(a) => assert_eq!(a.granularity, Granularity::ThreeHour),
            _ => panic!(),
        }
        assert!(Cli::try_parse_from(["nationmood", "score", "--bogus"]).is_err());
        assert!(Cli::try_parse_from(["nationmood", "train-qmm", "--input", "i", "--out", "o", "--with-smm", "--no-smm"]).is_err());
    }
}
