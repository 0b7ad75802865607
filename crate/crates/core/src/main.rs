use std::io::{BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nlgp::pipeline::{self, load_config, run_stage, PipelineConfig, PipelineError, Stage};
use nlgp::predictor::{serve, NgramModel};

#[derive(Parser)]
#[command(name = "nlgp", version, about = "Notebook corpus, benchmark and evaluation pipeline for intent-guided code prediction")]
struct Cli {
    /// Pipeline configuration file (flat `key = value` lines).
    #[arg(long, global = true, env = "NLGP_CONFIG")]
    config: Option<PathBuf>,
    /// Override a configuration key; may be repeated.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE", value_parser = parse_pair)]
    overrides: Vec<(String, String)>,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert manifest notebooks into cleaned scripts.
    Ingest,
    /// Assign projects to the training or evaluation split.
    Split,
    /// Concatenate the training scripts into one training file.
    Concat,
    /// Train a byte-level BPE tokenizer on the training file.
    BpeTrain,
    /// Crawl package sources for docstring titles.
    Docmap,
    /// Count root-module imports in the training split.
    Modfreq,
    /// Insert docstring comments above resolved calls in training scripts.
    Inject,
    /// Benchmark construction steps.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Train the n-gram backend on the training file.
    TrainLm,
    /// Predict code for every benchmark case.
    Predict(PredictArgs),
    /// Score predictions against benchmark targets and ratings.
    Score(ScoreArgs),
    /// Summarize the outputs of a run.
    Report,
    /// Run every stage in order.
    RunAll,
    /// Print the effective configuration (or the defaults).
    Config {
        #[arg(long)]
        defaults: bool,
    },
    /// Serve an n-gram model over the external-backend protocol on stdin/stdout.
    ServeLm {
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Subcommand, Clone, Copy)]
enum BenchCommand {
    Mine,
    Filter,
    Accept,
    Post,
    Stats,
    Modules,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    benchmark: Option<PathBuf>,
    #[arg(long, value_parser = ["ngram", "extern"])]
    backend: Option<String>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    min: Option<usize>,
    #[arg(long)]
    max: Option<usize>,
    #[arg(long)]
    ctx: Option<usize>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    pred: Option<PathBuf>,
    #[arg(long)]
    bench: Option<PathBuf>,
    #[arg(long)]
    ratings: Option<PathBuf>,
    #[arg(long)]
    call_filter: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))
}

fn push<T: ToString>(overrides: &mut Vec<(String, String)>, key: &str, value: Option<T>) {
    if let Some(v) = value {
        overrides.push((key.to_string(), v.to_string()));
    }
}

fn path_str(p: Option<PathBuf>) -> Option<String> {
    p.map(|p| p.display().to_string())
}

fn stage_of(cmd: &Command) -> Option<Stage> {
    Some(match cmd {
        Command::Ingest => Stage::Ingest,
        Command::Split => Stage::Split,
        Command::Concat => Stage::Concat,
        Command::BpeTrain => Stage::BpeTrain,
        Command::Docmap => Stage::Docmap,
        Command::Modfreq => Stage::Modfreq,
        Command::Inject => Stage::Inject,
        Command::Bench(b) => match b {
            BenchCommand::Mine => Stage::BenchMine,
            BenchCommand::Filter => Stage::BenchFilter,
            BenchCommand::Accept => Stage::BenchAccept,
            BenchCommand::Post => Stage::BenchPost,
            BenchCommand::Stats => Stage::BenchStats,
            BenchCommand::Modules => Stage::BenchModules,
        },
        Command::TrainLm => Stage::TrainLm,
        Command::Predict(_) => Stage::Predict,
        Command::Score(_) => Stage::Score,
        Command::Report => Stage::Report,
        _ => return None,
    })
}

fn serve_model(path: &PathBuf) -> Result<(), PipelineError> {
    let fail = |message: String| PipelineError::StageFailure {
        stage: "serve-lm".into(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|_| PipelineError::MissingInput {
        stage: "serve-lm".into(),
        path: path.clone(),
    })?;
    let model = NgramModel::from_json(&text).map_err(|e| PipelineError::BadInput {
        stage: "serve-lm".into(),
        path: path.clone(),
        message: e.to_string(),
    })?;
    let stdin = std::io::stdin();
    serve(&model, BufReader::new(stdin.lock()), std::io::stdout().lock()).map_err(|e| fail(e.to_string()))
}

fn execute(cli: Cli) -> Result<(), PipelineError> {
    let mut overrides = cli.overrides;
    match &cli.command {
        Command::Predict(a) => {
            push(&mut overrides, "benchmark", path_str(a.benchmark.clone()));
            push(&mut overrides, "backend", a.backend.clone());
            push(&mut overrides, "model", path_str(a.model.clone()));
            push(&mut overrides, "beam_width", a.beam);
            push(&mut overrides, "min_tokens", a.min);
            push(&mut overrides, "max_tokens", a.max);
            push(&mut overrides, "max_context", a.ctx);
        }
        Command::Score(a) => {
            push(&mut overrides, "predictions", path_str(a.pred.clone()));
            push(&mut overrides, "benchmark", path_str(a.bench.clone()));
            push(&mut overrides, "ratings", path_str(a.ratings.clone()));
            push(&mut overrides, "report_dir", path_str(a.out.clone()));
            if a.call_filter {
                push(&mut overrides, "call_filter", Some(true));
            }
        }
        _ => {}
    }
    match &cli.command {
        Command::ServeLm { model } => return serve_model(model),
        Command::Config { defaults: true } => {
            print!("{}", PipelineConfig::default().to_text());
            return Ok(());
        }
        _ => {}
    }
    let cfg = load_config(cli.config.as_deref(), &overrides)?;
    if let Command::Config { .. } = cli.command {
        print!("{}", cfg.to_text());
        return Ok(());
    }
    let mut stdout = std::io::stdout().lock();
    let manifests = match stage_of(&cli.command) {
        Some(stage) => vec![run_stage(stage, &cfg)?],
        None => pipeline::run_all(&cfg)?,
    };
    for m in manifests {
        let outputs: Vec<&str> = m.outputs.keys().map(String::as_str).collect();
        let _ = writeln!(stdout, "{}: {}", m.stage, outputs.join(", "));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("nlgp: cannot size the worker pool: {e}");
        }
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nlgp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
