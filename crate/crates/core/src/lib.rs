//! Sentiment classification with a stacking ensemble over hybrid TF-IDF and
//! sentence-embedding features.

pub mod bundle;
pub mod corpus;
pub mod embedding;
pub mod eval;
pub mod features;
pub mod label;
pub mod learners;
pub mod rng;
pub mod stacking;
pub mod synth;
pub mod text;

pub use bundle::{BundleError, ModelBundle, TrainingProvenance};
pub use corpus::{CorpusError, CsvSchema, Document, FoldPlan, LabeledCorpus, Provenance, SplitPlan};
pub use eval::{EvalError, MetricsReport};
pub use embedding::{DenseScaler, DenseVector, EmbeddingError, EmbeddingTable, FusedVector, Pooling};
pub use features::{FeatureError, FeaturePipeline, FeatureSet, Matrix};
pub use label::{Label, ProbDist, N_CLASSES};
pub use learners::{train_model, Classifier, Hyperparams, LearnerError, ModelKind, TrainedModel};
pub use stacking::{StackingEnsemble, StackingError};
pub use text::{SparseVector, TfidfConfig, TfidfError, TfidfModel};
