//! `kdqe`: train, label, filter and evaluate quality-estimation students.
//!
//! Exit status is 0 on success, 1 on data or runtime errors and 2 on usage
//! errors. Failures print one line, `error: <category>: <message>`.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "kdqe", version, about = "Knowledge distillation for translation quality estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every command.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// `key=value` settings file; flags and KDQE_* variables override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (1 gives byte-identical reruns).
    #[arg(long, global = true)]
    pub threads: Option<String>,
    /// Input TSV files start with a header line.
    #[arg(long, global = true)]
    pub has_header: Option<String>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct TrainKnobs {
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub max_epochs: Option<String>,
    #[arg(long)]
    pub patience: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<String>,
    /// `pearson` or `mse`.
    #[arg(long)]
    pub validation_metric: Option<String>,
    #[arg(long)]
    pub embedding_dim: Option<String>,
    #[arg(long)]
    pub hidden_dim: Option<String>,
    #[arg(long)]
    pub attention_dim: Option<String>,
    #[arg(long)]
    pub max_len: Option<String>,
    /// Words per side, excluding the two special tokens.
    #[arg(long)]
    pub vocab_size: Option<String>,
}

/// Where teacher labels come from.
#[derive(Args, Debug, Clone, Default)]
pub struct TeacherArgs {
    /// TSV of teacher predictions keyed by (source, mt).
    #[arg(long)]
    pub teacher_file: Option<PathBuf>,
    /// Ensemble member model; repeat for each member (at least two).
    #[arg(long = "teacher-model")]
    pub teacher_models: Vec<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build per-side vocabularies from pair files.
    BuildVocab {
        #[arg(long = "data", required = true)]
        data: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        vocab_size: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Train a student on labeled pairs.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        validation: PathBuf,
        /// Model file to write.
        #[arg(long)]
        out: PathBuf,
        /// Vocabulary file from build-vocab; built from the training data otherwise.
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        knobs: TrainKnobs,
        #[command(flatten)]
        common: Common,
    },
    /// Label a pool of pairs with a teacher.
    Label {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        teacher: TeacherArgs,
        /// Replace labels already present in the pool.
        #[arg(long)]
        overwrite_labels: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Drop pairs whose teacher variance is unusually high.
    Filter {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also drop pairs with unusually low variance.
        #[arg(long)]
        two_sided: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Label a pool, filter it and optionally train a student on the result.
    Distill {
        #[arg(long)]
        pool: PathBuf,
        /// Distilled pairs to write.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        teacher: TeacherArgs,
        /// `off`, `one-sided` or `two-sided`.
        #[arg(long)]
        filter: Option<String>,
        #[arg(long)]
        overwrite_labels: Option<String>,
        /// Pairs to remove from the pool before labeling (e.g. dev and test sets).
        #[arg(long = "exclude")]
        exclude: Vec<PathBuf>,
        /// Gold pairs added to the distilled data for student training.
        #[arg(long)]
        train: Option<PathBuf>,
        /// Validation pairs; required with --model-out.
        #[arg(long)]
        validation: Option<PathBuf>,
        /// Train a student on the distilled data and write it here.
        #[arg(long)]
        model_out: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        knobs: TrainKnobs,
        #[command(flatten)]
        common: Common,
    },
    /// Score predictions against labels.
    Evaluate {
        /// Labeled pairs.
        #[arg(long)]
        data: PathBuf,
        /// Prediction TSV keyed by (source, mt).
        #[arg(long, conflicts_with = "model", required_unless_present = "model")]
        predictions: Option<PathBuf>,
        /// Model whose predictions are scored.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Write the report here as well as printing it.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Variance-binned error CSV (needs predictions with variances).
        #[arg(long)]
        bins_out: Option<PathBuf>,
        /// Label and prediction histograms as JSON lines.
        #[arg(long)]
        histogram_out: Option<PathBuf>,
        #[arg(long)]
        bins: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Train students on nested subsets of a labeled pool.
    Sweep {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        validation: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Comma-separated subset sizes.
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long)]
        repeats: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        knobs: TrainKnobs,
        #[command(flatten)]
        common: Common,
    },
    /// Run the synthetic findings suite and write its CSV.
    Bench {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Gold label noise.
        #[arg(long)]
        sigma_gold: Option<f64>,
        /// Teacher label noise.
        #[arg(long)]
        sigma_teacher: Option<f64>,
        /// Small pools and a tiny student, for smoke tests; thresholds are
        /// not meaningful at this scale.
        #[arg(long)]
        quick: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Pick sentences from the documents richest in qualifying sentences.
    SampleCorpus {
        /// `doc_id<TAB>sentence` lines.
        #[arg(long = "in")]
        input: PathBuf,
        /// One sentence per line.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        min_chars: Option<String>,
        #[arg(long)]
        max_chars: Option<String>,
        #[arg(long)]
        top_docs: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Check student gradients against finite differences.
    Gradcheck {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        samples_per_param: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Print the parameter count and single-pair inference latency.
    Efficiency {
        /// Measure this model instead of a freshly initialised one.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        knobs: TrainKnobs,
        #[command(flatten)]
        common: Common,
    },
}

/// A failure with its exit status.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Run(kdqe::Error),
}

impl From<kdqe::Error> for Failure {
    fn from(e: kdqe::Error) -> Self {
        Failure::Run(e)
    }
}

impl Failure {
    fn report(&self) -> (String, u8) {
        match self {
            Failure::Usage(msg) => (format!("usage: {msg}"), 2),
            Failure::Run(e) => (format!("{}: {e}", e.category()), 1),
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("error: usage: {}", one_line(first));
            return ExitCode::from(2);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (msg, code) = f.report();
            eprintln!("error: {}", one_line(&msg));
            ExitCode::from(code)
        }
    }
}
