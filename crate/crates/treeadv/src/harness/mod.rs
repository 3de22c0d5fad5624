//! Experiment harness: dataset ingestion, synthetic generation, nested
//! crossvalidation over the classifier zoo, attack evaluation and report
//! generation.

mod cv;
mod dataset;
mod experiment;

pub use cv::{
    crossvalidate, derive_seed, evaluate_accuracy, grid, select_hyperparameters,
    stratified_folds, train_classifier, ClassifierKind, CvOutcome, FoldModel, HyperParams,
};
pub use dataset::{
    contains_subtree, default_alphabet, load_dataset, random_tree_bounded, save_dataset,
    synth_generate, Dataset, SynthSpec,
};
pub use experiment::{
    attack_points, run_experiment, AttackMethod, AttackRecord, DataSource, ExperimentConfig,
    Report, ReportMetadata, ReportRow, CSV_HEADER,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("i/o error: {0}")]
    Io(String),
    #[error("malformed record on line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("class labels must cover 1..={max} but {missing} is missing")]
    LabelGap { missing: usize, max: usize },
    #[error("motif symbol {symbol:?} is not in the declared alphabet")]
    MotifNotInAlphabet { symbol: String },
    #[error("class {class} is absent from a training fold")]
    ClassMissingFromFold { class: usize },
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
    #[error(transparent)]
    Kernel(#[from] crate::kernels::KernelError),
    #[error(transparent)]
    Attack(#[from] crate::attacks::AttackError),
}
