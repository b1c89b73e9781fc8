mod commands;
mod settings;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use settings::Settings;

#[derive(Parser, Debug)]
#[command(name = "sentiaug", version, about = "Explainability-oriented data augmentation for sentiment classifiers")]
struct Cli {
    /// Plain-text `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; component seeds default to it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write split files, vocabulary and (for synthetic data) lexicon and embeddings.
    Prepare(PrepareArgs),
    /// Build an extended dataset with EK or Adv augmentations.
    Augment(AugmentArgs),
    /// Train a classifier and save its checkpoint and history.
    Train(TrainArgs),
    /// Run the genetic word-substitution attack against a checkpoint.
    Attack(AttackArgs),
    /// Explain a split with LIME or cosine similarity.
    Explain(ExplainArgs),
    /// Score explanation logs for coherence and write the summary table.
    Evaluate(EvaluateArgs),
    /// Export or ingest a blinded human-evaluation sheet.
    HumanEval(HumanEvalArgs),
    /// Run the whole pipeline on a synthetic corpus.
    Reproduce(ReproduceArgs),
}

#[derive(Args, Debug, Default)]
pub struct PrepareArgs {
    /// Prefix of an existing `<prefix>.{train,dev,test}.tsv` corpus; synthetic data when absent.
    #[arg(long)]
    pub corpus: Option<String>,
    /// Comma-separated base labels.
    #[arg(long)]
    pub labels: Option<String>,
    #[arg(long)]
    pub min_freq: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct AugmentArgs {
    #[arg(long)]
    pub data: Option<String>,
    #[arg(long)]
    pub labels: Option<String>,
    /// `ek` or `adv`.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub lexicon: Option<String>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Victim checkpoint, required for `adv`.
    #[arg(long)]
    pub checkpoint: Option<String>,
    #[arg(long)]
    pub vocab: Option<String>,
    #[arg(long)]
    pub embeddings: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: Option<String>,
    #[arg(long)]
    pub labels: Option<String>,
    /// Output name, e.g. `base`, `ek` or `adv`.
    #[arg(long)]
    pub name: Option<String>,
    /// `cnn` or `rnn`.
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long)]
    pub vocab: Option<String>,
    #[arg(long)]
    pub embeddings: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct AttackArgs {
    #[arg(long)]
    pub data: Option<String>,
    #[arg(long)]
    pub labels: Option<String>,
    /// `train`, `dev` or `test`.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<String>,
    #[arg(long)]
    pub vocab: Option<String>,
    #[arg(long)]
    pub embeddings: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct ExplainArgs {
    #[arg(long)]
    pub data: Option<String>,
    #[arg(long)]
    pub labels: Option<String>,
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<String>,
    #[arg(long)]
    pub vocab: Option<String>,
    /// `lime` or `cossim`.
    #[arg(long)]
    pub method: Option<String>,
    /// Number of keywords per explanation.
    #[arg(long, short = 't')]
    pub keywords: Option<usize>,
    /// Explain only the first `n` examples; 0 means all.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct EvaluateArgs {
    /// Comma-separated explanation logs named `<model>.<method>.jsonl`.
    #[arg(long)]
    pub explanations: Option<String>,
    #[arg(long)]
    pub lexicon: Option<String>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Directory holding `<model>.ckpt`; enables full-split accuracy.
    #[arg(long)]
    pub models: Option<String>,
    #[arg(long)]
    pub vocab: Option<String>,
    #[arg(long)]
    pub data: Option<String>,
    #[arg(long)]
    pub labels: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct HumanEvalArgs {
    /// `export` or `ingest`.
    #[arg(long)]
    pub mode: Option<String>,
    /// Explanation log of the first model.
    #[arg(long)]
    pub first: Option<String>,
    /// Explanation log of the second model.
    #[arg(long)]
    pub second: Option<String>,
    /// Comma-separated names of the two models.
    #[arg(long)]
    pub names: Option<String>,
    #[arg(long)]
    pub data: Option<String>,
    #[arg(long)]
    pub labels: Option<String>,
    #[arg(long)]
    pub sheet: Option<String>,
    #[arg(long)]
    pub assignment: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct ReproduceArgs {
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long)]
    pub explain_limit: Option<usize>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        let mut message = e.to_string();
        for cause in e.chain().skip(1) {
            let c = cause.to_string();
            if !message.ends_with(&c) {
                message = format!("{message}: {c}");
            }
        }
        eprintln!("error: {message}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    let settings = Settings::load(cli.config.as_deref(), cli.seed, cli.out)?;
    match cli.command {
        Command::Prepare(a) => commands::prepare(settings, a),
        Command::Augment(a) => commands::augment(settings, a),
        Command::Train(a) => commands::train(settings, a),
        Command::Attack(a) => commands::attack(settings, a),
        Command::Explain(a) => commands::explain(settings, a),
        Command::Evaluate(a) => commands::evaluate(settings, a),
        Command::HumanEval(a) => commands::human_eval(settings, a),
        Command::Reproduce(a) => commands::reproduce(settings, a),
    }
}
