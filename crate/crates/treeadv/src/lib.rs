//! Adversarial edit attacks on tree-structured data.
//!
//! This crate implements the full pipeline for attacking tree classifiers
//! through tree edits:
//!
//! * [`trees`] — ordered labeled trees, 1-based preorder indexing, parsing
//!   and serialization of the `a(b(c,d),e)` notation.
//! * [`edits`] — the three edit primitives (delete, relabel, insert) and
//!   sequential edit-script application.
//! * [`ted`] — the tree edit distance under unit costs, computed by the
//!   Zhang-Shasha dynamic program, plus backtracing of a co-optimal,
//!   sequentially applicable edit script.
//! * [`kernels`] — the double-centering (linear), RBF, subtree, subset-tree
//!   and partial-tree kernels, Gram-matrix assembly and the clip eigenvalue
//!   correction.
//! * [`models`] — kernel SVMs (SMO solver), recursive neural networks and
//!   tree echo state networks behind one black-box prediction interface.
//! * [`attacks`] — the random baseline attack and the backtracing attack,
//!   plus the success / distance-ratio evaluation.
//! * [`harness`] — dataset ingestion, synthetic data generation, nested
//!   crossvalidation and report generation.
//!
//! Attacks see classifiers only through [`models::ClassifierHandle`], a
//! label oracle with query accounting; no gradients or parameters cross
//! that boundary.

pub mod attacks;
pub mod edits;
pub mod harness;
pub mod kernels;
pub mod models;
pub mod ted;
pub mod trees;

pub use edits::{apply_edit, apply_script, random_edit, EditScript, TreeEdit};
pub use ted::{backtrace, pairwise_ted, ted};
pub use trees::{Label, NodeIndex, Tree};
