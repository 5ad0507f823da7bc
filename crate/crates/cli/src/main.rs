//! `sepsis`: command-line front end for the sepsis-xai pipeline.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "sepsis", version, about = "Explainable sepsis prediction pipeline")]
pub struct Cli {
    /// Pipeline configuration (TOML). Flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Global seed applied to every stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Console output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Delimited file or directory of files with one shared header.
    pub input: Option<PathBuf>,
    /// Label column name.
    #[arg(long)]
    pub label: Option<String>,
    /// Input delimiter: auto, csv or psv.
    #[arg(long, value_parser = ["auto", "csv", "psv"])]
    pub input_format: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a table and write it back as normalised CSV with its schema.
    Ingest(InputArgs),
    /// Missing-value profile and the sparsity drop decision per column.
    Profile {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Chained-equation imputation of every missing feature cell.
    Impute {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        max_iterations: Option<usize>,
        /// Apply a saved `imputation_model.json` instead of fitting one.
        #[arg(long, conflicts_with = "max_iterations")]
        apply: Option<PathBuf>,
    },
    /// Seeded train/validation/test split.
    Split {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        train: Option<f64>,
        #[arg(long)]
        validation: Option<f64>,
        #[arg(long)]
        test: Option<f64>,
        /// Plain random split instead of a label-stratified one.
        #[arg(long)]
        no_stratify: bool,
    },
    /// Descriptive statistics and the correlation matrix.
    Eda(InputArgs),
    /// Rank features against the label and select the significant ones.
    Select {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        alpha: Option<f64>,
        /// Do not force-include the clinical feature list.
        #[arg(long)]
        no_whitelist: bool,
        #[arg(long)]
        max_features: Option<usize>,
    },
    /// Fit a model on a complete (imputed) table.
    Train {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_parser = ["glm", "gbt"], default_value = "gbt")]
        model: String,
        /// Comma-separated feature names (default: every non-label column).
        #[arg(long, value_delimiter = ',')]
        features: Option<Vec<String>>,
    },
    /// Grid search on a validation table, then fit the best configuration.
    Tune {
        #[command(flatten)]
        input: InputArgs,
        /// Held-out table used to score the grid.
        #[arg(long)]
        validation: PathBuf,
        #[arg(long, value_parser = ["glm", "gbt"], default_value = "gbt")]
        model: String,
        #[arg(long, value_parser = ["log_loss", "accuracy"])]
        metric: Option<String>,
        #[arg(long, value_delimiter = ',')]
        features: Option<Vec<String>>,
    },
    /// Score a saved model on a labelled table and print the report.
    Evaluate {
        model: PathBuf,
        #[command(flatten)]
        input: InputArgs,
    },
    /// LIME explanations for cases of a table.
    Explain {
        model: PathBuf,
        /// Training table used to fit the discretizer.
        train: PathBuf,
        #[command(flatten)]
        input: InputArgs,
        /// Row ids to explain.
        #[arg(long, value_delimiter = ',')]
        cases: Vec<usize>,
        /// Additional randomly sampled cases.
        #[arg(long)]
        n_cases: Option<usize>,
        /// Surrogate size: a count or `all`.
        #[arg(long)]
        k: Option<String>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Full pipeline from raw table to explained report.
    Run {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_parser = ["glm", "gbt", "both"])]
        model: Option<String>,
        #[arg(long)]
        tune: bool,
        /// Impute the whole table before splitting.
        #[arg(long)]
        paper_faithful: bool,
    },
    /// Write a seeded synthetic dataset and its ground truth.
    Synth {
        /// Defaults follow the library's `SynthSpec`.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        missing_rate: Option<f64>,
        #[arg(long)]
        correlation: Option<f64>,
        #[arg(long)]
        prevalence: Option<f64>,
        #[arg(long)]
        signal: Option<f64>,
        /// Write pipe-delimited `.psv` instead of CSV.
        #[arg(long)]
        psv: bool,
    },
    /// Saved-model utilities.
    Model {
        #[command(subcommand)]
        action: ModelAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum ModelAction {
    /// Print coefficients or tree structures.
    Inspect { model: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
