//! Experiment configuration (TOML) with command-line overrides.
//!
//! Relative paths are resolved against the working directory, so a config
//! written by `grid-search` can be fed straight back to `train`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cse_core::eval::{Averaging, GridSpec, Selection};
use cse_core::{FeatureSet, Hyperparams, ModelKind, TfidfConfig};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub corpus: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    #[serde(default = "default_text_col")]
    pub text_col: String,
    #[serde(default = "default_label_col")]
    pub label_col: String,
}

fn default_text_col() -> String {
    "text".into()
}

fn default_label_col() -> String {
    "label".into()
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            corpus: None,
            embeddings: None,
            text_col: default_text_col(),
            label_col: default_label_col(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesSection {
    pub set: String,
    pub min_df: usize,
    pub ngram_max: usize,
    /// Standardize the embedding block with train-split statistics.
    pub standardize: bool,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        Self {
            set: FeatureSet::TfidfEmb.as_str().into(),
            min_df: 1,
            ngram_max: 1,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub test_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            seed: 42,
            stratified: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FoldsSection {
    pub k: usize,
    pub stratified: bool,
    pub seed: u64,
}

impl Default for FoldsSection {
    fn default() -> Self {
        Self {
            k: 5,
            stratified: true,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub kind: String,
    pub seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            kind: ModelKind::Cse.as_str().into(),
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub selection: String,
    /// Parameter name to candidate values, enumerated in file order.
    pub params: toml::Table,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            selection: Selection::Accuracy.as_str().into(),
            params: toml::Table::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSection {
    pub models: Vec<String>,
    pub feature_sets: Vec<String>,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self {
            models: ModelKind::ALL.iter().map(|m| m.as_str().to_string()).collect(),
            feature_sets: vec![FeatureSet::Tfidf.as_str().into(), FeatureSet::TfidfEmb.as_str().into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub averaging: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            averaging: Averaging::Weighted.as_str().into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub data: DataSection,
    pub features: FeaturesSection,
    pub split: SplitSection,
    pub folds: FoldsSection,
    pub model: ModelSection,
    /// Hyperparameter overrides keyed by grid name (`logreg__C`, ...).
    pub params: toml::Table,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    pub compare: CompareSection,
    pub output: OutputSection,
}

fn number(key: &str, v: &toml::Value) -> Result<f64, CliError> {
    match v {
        toml::Value::Integer(i) => Ok(*i as f64),
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Boolean(b) => Ok(f64::from(u8::from(*b))),
        other => Err(CliError::Config(format!("{key} must be a number, got {other}"))),
    }
}

/// Integer-valued floats are written as TOML integers so configs stay tidy.
pub fn toml_number(v: f64) -> toml::Value {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        toml::Value::Integer(v as i64)
    } else {
        toml::Value::Float(v)
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Canonical TOML text; its hash identifies the experiment.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn feature_set(&self) -> Result<FeatureSet, CliError> {
        self.features.set.parse().map_err(CliError::Config)
    }

    pub fn model_kind(&self) -> Result<ModelKind, CliError> {
        self.model.kind.parse().map_err(CliError::Config)
    }

    pub fn averaging(&self) -> Result<Averaging, CliError> {
        self.output.averaging.parse().map_err(CliError::Config)
    }

    pub fn tfidf(&self) -> Result<TfidfConfig, CliError> {
        if self.features.min_df == 0 || self.features.ngram_max == 0 {
            return Err(CliError::Config("features.min_df and features.ngram_max must be >= 1".into()));
        }
        Ok(TfidfConfig {
            min_df: self.features.min_df,
            ngram_max: self.features.ngram_max,
        })
    }

    pub fn corpus_path(&self) -> Result<&Path, CliError> {
        self.data
            .corpus
            .as_deref()
            .ok_or_else(|| CliError::Config("no corpus given (set data.corpus or pass --corpus)".into()))
    }

    /// Hyperparameters for `kind`: defaults, then `[params]`, seeded from the
    /// model seed. Known keys of other models are skipped; unknown keys are
    /// rejected.
    pub fn hyperparams(&self, kind: ModelKind) -> Result<Hyperparams, CliError> {
        let mut h = Hyperparams {
            seed: self.model.seed,
            ..Hyperparams::default()
        };
        for (key, value) in &self.params {
            let v = number(key, value)?;
            // Shared configs (e.g. for compare) carry keys of other models.
            if Hyperparams::KEYS.contains(&key.as_str()) && !kind.valid_keys().contains(&key.as_str()) {
                continue;
            }
            h.set_for(kind, key, v).map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(h)
    }

    /// Like [`ExperimentConfig::hyperparams`] but every key must belong to
    /// `kind`.
    pub fn strict_hyperparams(&self, kind: ModelKind) -> Result<Hyperparams, CliError> {
        let valid = kind.valid_keys();
        for key in self.params.keys() {
            if !valid.contains(&key.as_str()) {
                return Err(CliError::Config(format!(
                    "unknown parameter {key:?} for {kind}; valid keys: {}",
                    valid.join(", ")
                )));
            }
        }
        self.hyperparams(kind)
    }

    pub fn grid(&self) -> Result<(GridSpec, Selection), CliError> {
        let g = self
            .grid
            .as_ref()
            .ok_or_else(|| CliError::Config("config has no [grid] section".into()))?;
        let mut params = Vec::new();
        for (key, values) in &g.params {
            let list = match values {
                toml::Value::Array(a) => a.iter().map(|v| number(key, v)).collect::<Result<Vec<_>, _>>()?,
                v => vec![number(key, v)?],
            };
            params.push((key.clone(), list));
        }
        let selection = g.selection.parse().map_err(CliError::Config)?;
        Ok((GridSpec::new(params), selection))
    }

    /// Config that trains the given grid cell: `[params]` updated with the
    /// cell values and the grid removed.
    pub fn with_cell(&self, cell: &[(String, f64)]) -> Self {
        let mut c = self.clone();
        for (k, v) in cell {
            c.params.insert(k.clone(), toml_number(*v));
        }
        c.grid = None;
        c
    }

    pub fn compare_plan(&self) -> Result<(Vec<ModelKind>, Vec<FeatureSet>), CliError> {
        let models = self
            .compare
            .models
            .iter()
            .map(|m| m.parse().map_err(CliError::Config))
            .collect::<Result<Vec<ModelKind>, _>>()?;
        let sets = self
            .compare
            .feature_sets
            .iter()
            .map(|s| s.parse().map_err(CliError::Config))
            .collect::<Result<Vec<FeatureSet>, _>>()?;
        if models.is_empty() || sets.is_empty() {
            return Err(CliError::Config("compare needs at least one model and one feature set".into()));
        }
        Ok((models, sets))
    }

    /// Checks cross-field invariants before any data is touched.
    pub fn validate(&self) -> Result<(), CliError> {
        let set = self.feature_set()?;
        self.model_kind()?;
        self.averaging()?;
        self.tfidf()?;
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return Err(CliError::Config(format!(
                "split.test_fraction must be in (0, 1), got {}",
                self.split.test_fraction
            )));
        }
        if self.folds.k < 2 {
            return Err(CliError::Config(format!("folds.k must be >= 2, got {}", self.folds.k)));
        }
        if set.uses_embeddings() && self.data.embeddings.is_none() {
            return Err(CliError::Config(format!(
                "feature set {set} needs embeddings (set data.embeddings or pass --embeddings)"
            )));
        }
        Ok(())
    }
}
