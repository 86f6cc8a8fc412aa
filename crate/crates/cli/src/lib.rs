//! Command-line front end for the stacking sentiment classifier.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 training
//! failure.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use log::error;

use cse_core::synth::SynthConfig;
use cse_core::{CsvSchema, FeatureSet};

pub use config::ExperimentConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "cse", version, about = "Stacking ensemble sentiment classifier")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split, fit features, train one model and write a bundle.
    Train(ConfigArgs),
    /// Score a saved bundle on a labeled corpus.
    Evaluate(EvaluateCmd),
    /// Predict labels for a CSV file or a single text.
    Predict(PredictCmd),
    /// Cross-validated grid search over the `[grid]` section.
    GridSearch {
        #[command(flatten)]
        config: ConfigArgs,
        /// Enumerate the cells without training.
        #[arg(long)]
        dry_run: bool,
    },
    /// Train every model on every feature set over one shared split.
    Compare(ConfigArgs),
    /// k-fold cross-validation of the configured model.
    Folds(ConfigArgs),
    /// Write the synthetic benchmark corpus and embeddings.
    Synth {
        #[arg(long, default_value = "data")]
        out: PathBuf,
        #[arg(long)]
        n_docs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Probability that a clause matches the document label.
        #[arg(long)]
        clause_fidelity: Option<f64>,
        /// Weight of the label centroid in each embedding.
        #[arg(long)]
        emb_signal: Option<f64>,
        #[arg(long)]
        emb_noise: Option<f64>,
    },
}

/// A config file plus command-line overrides.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// `tfidf` or `tfidf+emb`.
    #[arg(long)]
    pub features: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Sets the split, fold and model seeds together.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Stratify both the split and the folds.
    #[arg(long)]
    pub stratified: Option<bool>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// `key=value` hyperparameter override, repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    pub params: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(p) = &self.corpus {
            cfg.data.corpus = Some(p.clone());
        }
        if let Some(p) = &self.embeddings {
            cfg.data.embeddings = Some(p.clone());
        }
        if let Some(f) = &self.features {
            cfg.features.set = f.clone();
        }
        if let Some(m) = &self.model {
            cfg.model.kind = m.clone();
        }
        if let Some(s) = self.seed {
            cfg.split.seed = s;
            cfg.folds.seed = s;
            cfg.model.seed = s;
        }
        if let Some(s) = self.stratified {
            cfg.split.stratified = s;
            cfg.folds.stratified = s;
        }
        if let Some(k) = self.folds {
            cfg.folds.k = k;
        }
        for kv in &self.params {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--param expects KEY=VALUE, got {kv:?}")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("--param {k}: {v:?} is not a number")))?;
            cfg.params.insert(k.trim().to_string(), config::toml_number(v));
        }
        if let Some(o) = &self.out {
            cfg.output.dir = o.clone();
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct BundleArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Must match the bundle's feature set when given.
    #[arg(long)]
    pub features: Option<String>,
    #[arg(long, default_value = "text")]
    pub text_col: String,
    #[arg(long, default_value = "label")]
    pub label_col: String,
}

#[derive(Debug, Args)]
pub struct EvaluateCmd {
    #[command(flatten)]
    pub bundle: BundleArgs,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value = "weighted")]
    pub averaging: String,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["input", "text"]))]
pub struct PredictCmd {
    #[command(flatten)]
    pub bundle: BundleArgs,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub text: Option<String>,
    /// Directory for predictions.tsv; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn feature_set(s: &Option<String>) -> Result<Option<FeatureSet>, CliError> {
    s.as_deref().map(|f| f.parse().map_err(CliError::Config)).transpose()
}

fn schema(b: &BundleArgs) -> CsvSchema {
    CsvSchema {
        text_col: b.text_col.clone(),
        label_col: b.label_col.clone(),
    }
}

pub fn execute(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Train(a) => {
            let out = commands::cmd_train(&a.resolve()?)?;
            println!("wrote {}", out.bundle_path.display());
            print!("{}", cse_core::eval::report::classification_report(&out.report));
        }
        Command::Evaluate(e) => {
            let report = commands::cmd_evaluate(&commands::EvaluateArgs {
                bundle: e.bundle.bundle.clone(),
                corpus: e.corpus.clone(),
                embeddings: e.bundle.embeddings.clone(),
                features: feature_set(&e.bundle.features)?,
                schema: schema(&e.bundle),
                out_dir: e.out.clone(),
                averaging: e.averaging.parse().map_err(CliError::Config)?,
            })?;
            print!("{}", cse_core::eval::report::classification_report(&report));
        }
        Command::Predict(p) => {
            let input = match (&p.input, &p.text) {
                (Some(path), _) => commands::PredictInput::File(path.clone()),
                (None, Some(t)) => commands::PredictInput::Text(t.clone()),
                (None, None) => return Err(CliError::Config("pass --input or --text".into())),
            };
            commands::cmd_predict(&commands::PredictArgs {
                bundle: p.bundle.bundle.clone(),
                input,
                embeddings: p.bundle.embeddings.clone(),
                features: feature_set(&p.bundle.features)?,
                schema: schema(&p.bundle),
                out_dir: p.out.clone(),
            })?;
        }
        Command::GridSearch { config, dry_run } => {
            let cfg = config.resolve()?;
            let out = commands::cmd_grid_search(&cfg, *dry_run)?;
            match &out.result {
                Some(r) => println!(
                    "{} cells, {} training runs, best cell {} (score {:.4})",
                    out.n_cells,
                    out.training_runs,
                    r.best,
                    r.best_cell().score
                ),
                None => println!("{} cells", out.n_cells),
            }
        }
        Command::Compare(a) => {
            let rows = commands::cmd_compare(&a.resolve()?)?;
            print!("{}", cse_core::eval::report::comparison_table(&rows));
        }
        Command::Folds(a) => {
            let cv = commands::cmd_folds(&a.resolve()?)?;
            print!("{}", cse_core::eval::report::cv_summary(&cv));
        }
        Command::Synth {
            out,
            n_docs,
            seed,
            clause_fidelity,
            emb_signal,
            emb_noise,
        } => {
            let d = SynthConfig::default();
            let cfg = SynthConfig {
                n_docs: n_docs.unwrap_or(d.n_docs),
                seed: seed.unwrap_or(d.seed),
                clause_fidelity: clause_fidelity.unwrap_or(d.clause_fidelity),
                emb_signal: emb_signal.unwrap_or(d.emb_signal),
                emb_noise: emb_noise.unwrap_or(d.emb_noise),
                ..d
            };
            std::fs::create_dir_all(out).map_err(|e| CliError::data("creating output directory", e))?;
            let (c, e) = commands::cmd_synth(out, &cfg)?;
            println!("wrote {} and {}", c.display(), e.display());
        }
    }
    Ok(())
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
