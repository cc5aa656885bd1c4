//! `benchsynth`: run every stage of directed benchmark synthesis from the
//! command line.

mod commands;
mod config;
mod records;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use config::{ConfigError, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "benchsynth", version, about = "Feature-directed kernel benchmark synthesis")]
struct Cli {
    /// File of `key=value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Global seed; shorthand for `--set seed=N`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct BeamArgs {
    #[arg(long)]
    pub workload_size: Option<usize>,
    #[arg(long)]
    pub beam_width: Option<usize>,
    #[arg(long)]
    pub replace_prob: Option<f64>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub seed_text: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse, check and deduplicate a directory of kernels into a corpus.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Build the vocabulary and frame every corpus kernel as a token sequence.
    Tokenize {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        vocab_out: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Train an infilling model on a tokenized corpus.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Condition generation on target features.
        #[arg(long)]
        directed: bool,
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Fill the fixed seed text `n` times.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        temperature: Option<f64>,
    },
    /// Beam-search towards one feature vector.
    Target {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        space: String,
        /// Comma-separated values.
        #[arg(long, allow_hyphen_values = true)]
        vector: String,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        beam: BeamArgs,
    },
    /// Query-by-committee exploration of the SYNTAX8 space.
    AlLoop {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        /// Target random points instead of the committee's choice.
        #[arg(long)]
        passive: bool,
        #[command(flatten)]
        beam: BeamArgs,
    },
    /// Train and score the device-mapping tree.
    EvalHeuristic {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        eval: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        tree_out: Option<PathBuf>,
    },
    /// Project record features onto two principal components.
    PcaExport {
        /// `name=path` pairs, comma-separated.
        #[arg(long, value_delimiter = ',', required = true)]
        inputs: Vec<String>,
        #[arg(long)]
        space: String,
        #[arg(long)]
        output: PathBuf,
    },
    /// Bundle random samples of named datasets for the labeling study.
    ExportTuring {
        /// `name=path` pairs or bare names resolved as `<data-dir>/<name>.jsonl`.
        #[arg(long, value_delimiter = ',', required = true)]
        datasets: Vec<String>,
        #[arg(long, default_value = ".")]
        data_dir: PathBuf,
        #[arg(long)]
        per_dataset: Option<usize>,
        #[arg(long)]
        output: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Tokenize { .. } => "tokenize",
            Command::Train { .. } => "train",
            Command::Sample { .. } => "sample",
            Command::Target { .. } => "target",
            Command::AlLoop { .. } => "al-loop",
            Command::EvalHeuristic { .. } => "eval-heuristic",
            Command::PcaExport { .. } => "pca-export",
            Command::ExportTuring { .. } => "export-turing",
        }
    }
}

fn build_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)??,
        None => RunConfig::default(),
    };
    for kv in &cli.overrides {
        cfg.apply_override(kv)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = build_config(&cli)?;
    use commands as c;
    match cli.command {
        Command::Ingest { input, output } => c::ingest(cfg.resolve()?, &input, &output),
        Command::Tokenize {
            corpus,
            vocab_out,
            output,
        } => c::tokenize(cfg.resolve()?, &corpus, &vocab_out, &output),
        Command::Train {
            corpus,
            vocab,
            output,
            directed,
            steps,
        } => {
            if directed {
                cfg.model.directed = true;
            }
            if let Some(s) = steps {
                cfg.train_steps = s;
            }
            c::train(cfg.resolve()?, &corpus, &vocab, &output)
        }
        Command::Sample {
            model,
            vocab,
            n,
            output,
            temperature,
        } => {
            if let Some(t) = temperature {
                cfg.beam.temperature = t;
            }
            c::sample(cfg.resolve()?, &model, &vocab, n, &output)
        }
        Command::Target {
            model,
            vocab,
            space,
            vector,
            output,
            beam,
        } => {
            apply_beam(&mut cfg, beam);
            c::target(cfg.resolve()?, &model, &vocab, &space, &vector, &output)
        }
        Command::AlLoop {
            model,
            vocab,
            corpus,
            output,
            log,
            epochs,
            passive,
            beam,
        } => {
            apply_beam(&mut cfg, beam);
            if let Some(e) = epochs {
                cfg.al.epochs = e;
            }
            if passive {
                cfg.al.passive = true;
            }
            c::al_loop(cfg.resolve()?, &model, &vocab, &corpus, &output, &log)
        }
        Command::EvalHeuristic {
            train,
            eval,
            output,
            tree_out,
        } => c::eval_heuristic(cfg.resolve()?, &train, eval.as_deref(), &output, tree_out.as_deref()),
        Command::PcaExport { inputs, space, output } => c::pca_export(cfg.resolve()?, &inputs, &space, &output),
        Command::ExportTuring {
            datasets,
            data_dir,
            per_dataset,
            output,
        } => {
            if let Some(n) = per_dataset {
                cfg.turing_samples = n;
            }
            c::export_turing(cfg.resolve()?, &datasets, &data_dir, &output)
        }
    }
}

fn apply_beam(cfg: &mut RunConfig, a: BeamArgs) {
    let b = &mut cfg.beam;
    b.workload_size = a.workload_size.unwrap_or(b.workload_size);
    b.beam_width = a.beam_width.unwrap_or(b.beam_width);
    b.replace_prob = a.replace_prob.unwrap_or(b.replace_prob);
    b.max_depth = a.max_depth.unwrap_or(b.max_depth);
    b.temperature = a.temperature.unwrap_or(b.temperature);
    if let Some(t) = a.seed_text {
        b.seed_text = t;
    }
}

/// The io error behind `cause`, looking through transparent wrappers.
fn io_cause<'a>(cause: &'a (dyn std::error::Error + 'static)) -> Option<&'a std::io::Error> {
    use benchsynth::{corpus::CorpusError, model::InfillError, tokenizer::TokenizerError};
    if let Some(e) = cause.downcast_ref::<std::io::Error>() {
        return Some(e);
    }
    match (
        cause.downcast_ref::<InfillError>(),
        cause.downcast_ref::<CorpusError>(),
        cause.downcast_ref::<TokenizerError>(),
    ) {
        (Some(InfillError::Io(e)), _, _) | (_, Some(CorpusError::Io(e)), _) | (_, _, Some(TokenizerError::Io(e))) => Some(e),
        _ => None,
    }
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if cause.is::<ConfigError>() {
            return "config";
        }
        if let Some(io) = io_cause(cause) {
            return if io.kind() == std::io::ErrorKind::NotFound {
                "missing_input"
            } else {
                "io"
            };
        }
        if cause.is::<benchsynth::search::SearchError>() {
            return "search";
        }
    }
    "failed"
}

fn emit_error(kind: &str, command: Option<&str>, message: &str) {
    let record = serde_json::json!({
        "error": { "kind": kind, "command": command, "message": message }
    });
    eprintln!("{record}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            emit_error("usage", None, e.to_string().trim());
            return ExitCode::from(2);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let name = cli.command.name();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            emit_error(error_kind(&e), Some(name), &format!("{e:#}"));
            ExitCode::FAILURE
        }
    }
}
