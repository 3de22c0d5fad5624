//! Tree classifiers behind one black-box prediction interface.
//!
//! Seven variants exist: kernel SVMs over the linear, RBF, ST, SST and PT
//! kernels (trained by SMO on clipped Gram matrices), recursive neural
//! networks trained by Adam on the crossentropy loss, and tree echo state
//! networks whose recursive weights stay frozen after random
//! initialization.
//!
//! Attack code never touches a model directly: it goes through
//! [`ClassifierHandle`], which exposes only `Tree -> label` and counts
//! every query. Trained models are immutable, so concurrent prediction is
//! safe; the query counter is atomic.

mod embedding;
mod recnet;
mod svm;
mod tes;

pub use embedding::{embed, EmbeddingParams, SymbolParams};
pub use recnet::{recnet_embed, recnet_loss, recnet_loss_and_grads, recnet_train, RecNetGrads,
    RecNetModel};
pub use svm::{svm_predict, svm_train, BinarySvm, SvmClassifier, SvmModel};
pub use tes::{tes_train, TesModel};

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trees::Tree;

/// Class labels are 1-based indices.
pub type ClassLabel = usize;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("unknown symbol {0:?}: no parameters were trained for it")]
    UnknownSymbol(String),
    #[error("training set contains a single class")]
    SingleClass,
    #[error("training set is empty")]
    EmptyTraining,
    #[error("labels/gram size mismatch: {labels} labels for {gram} rows")]
    SizeMismatch { labels: usize, gram: usize },
    #[error("kernel row has length {got}, expected {expected}")]
    RowLengthMismatch { expected: usize, got: usize },
    #[error("training diverged at iteration {iteration} (loss {loss})")]
    Diverged { iteration: usize, loss: f64 },
    #[error("kernel evaluation failed: {0}")]
    Kernel(#[from] crate::kernels::KernelError),
    #[error("model i/o failed: {0}")]
    Io(String),
    #[error("malformed model file: {0}")]
    Malformed(String),
}

/// A label oracle. Implementations must be deterministic: the same tree
/// always yields the same label.
pub trait Classifier: Send + Sync {
    fn predict(&self, tree: &Tree) -> Result<ClassLabel, ModelError>;
}

impl<F> Classifier for F
where
    F: Fn(&Tree) -> ClassLabel + Send + Sync,
{
    fn predict(&self, tree: &Tree) -> Result<ClassLabel, ModelError> {
        Ok(self(tree))
    }
}

/// The only view attacks get of a model: `predict` plus a monotone query
/// counter that increments by exactly one per call.
pub struct ClassifierHandle<'a> {
    model: &'a dyn Classifier,
    queries: AtomicU64,
}

impl<'a> ClassifierHandle<'a> {
    pub fn new(model: &'a dyn Classifier) -> Self {
        ClassifierHandle { model, queries: AtomicU64::new(0) }
    }

    pub fn predict(&self, tree: &Tree) -> Result<ClassLabel, ModelError> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        self.model.predict(tree)
    }

    pub fn query_count(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }
}

/// Any trained classifier, as stored on disk and used by the harness.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum TrainedModel {
    Svm(SvmClassifier),
    RecNet(RecNetModel),
    Tes(TesModel),
}

impl Classifier for TrainedModel {
    fn predict(&self, tree: &Tree) -> Result<ClassLabel, ModelError> {
        match self {
            TrainedModel::Svm(m) => m.predict(tree),
            TrainedModel::RecNet(m) => m.predict(tree),
            TrainedModel::Tes(m) => m.predict(tree),
        }
    }
}

/// Writes a model as a JSON container: kind tag, hyperparameters, alphabet
/// and parameter arrays in decimal. Loading reproduces predictions exactly
/// because the encoding round-trips every float.
pub fn save_model(model: &TrainedModel, path: &Path) -> Result<(), ModelError> {
    let text =
        serde_json::to_string_pretty(model).map_err(|e| ModelError::Io(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| ModelError::Io(e.to_string()))
}

pub fn load_model(path: &Path) -> Result<TrainedModel, ModelError> {
    let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| ModelError::Malformed(e.to_string()))
}

/// Index of the largest decision value; ties go to the smallest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
