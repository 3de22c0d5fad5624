//! Recursive tree embedding shared by the neural models.
//!
//! A tree is mapped bottom-up through per-symbol affine maps and a logistic
//! squashing: `G(x(T_1..T_m)) = sigm(W^x * sum_i G(T_i) + b^x)`. A leaf
//! uses the empty sum, so its embedding is `sigm(b^x)`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::trees::Tree;

use super::ModelError;

/// Weights of one alphabet symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolParams {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

/// Per-symbol recursive parameters. The map is ordered so that iteration
/// (initialization, gradient updates) is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingParams {
    pub dim: usize,
    pub symbols: BTreeMap<String, SymbolParams>,
}

impl EmbeddingParams {
    pub fn get(&self, label: &str) -> Result<&SymbolParams, ModelError> {
        self.symbols.get(label).ok_or_else(|| ModelError::UnknownSymbol(label.to_string()))
    }

    pub fn alphabet(&self) -> impl Iterator<Item = &str> {
        self.symbols.keys().map(String::as_str)
    }
}

pub(crate) fn sigm(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

/// Embeds a tree; entries are strictly inside (0, 1).
pub fn embed(params: &EmbeddingParams, tree: &Tree) -> Result<DVector<f64>, ModelError> {
    let mut child_sum = DVector::zeros(params.dim);
    for child in &tree.children {
        child_sum += embed(params, child)?;
    }
    let sp = params.get(tree.label.as_str())?;
    let pre = &sp.w * child_sum + &sp.b;
    Ok(pre.map(sigm))
}

/// Forward pass retaining per-node child sums and activations, in an arena
/// ordered so that parents precede their children (needed for backprop).
pub(crate) struct ForwardPass {
    pub nodes: Vec<NodeState>,
}

pub(crate) struct NodeState {
    pub label: String,
    pub parent: Option<usize>,
    pub child_sum: DVector<f64>,
    pub activation: DVector<f64>,
}

pub(crate) fn forward(params: &EmbeddingParams, tree: &Tree) -> Result<ForwardPass, ModelError> {
    let mut nodes = Vec::with_capacity(tree.size());
    forward_walk(params, tree, None, &mut nodes)?;
    Ok(ForwardPass { nodes })
}

fn forward_walk(
    params: &EmbeddingParams,
    tree: &Tree,
    parent: Option<usize>,
    nodes: &mut Vec<NodeState>,
) -> Result<usize, ModelError> {
    let me = nodes.len();
    nodes.push(NodeState {
        label: tree.label.as_str().to_string(),
        parent,
        child_sum: DVector::zeros(params.dim),
        activation: DVector::zeros(params.dim),
    });
    let mut child_sum = DVector::zeros(params.dim);
    for child in &tree.children {
        let c = forward_walk(params, child, Some(me), nodes)?;
        child_sum += &nodes[c].activation;
    }
    let sp = params.get(&nodes[me].label)?;
    let activation = (&sp.w * &child_sum + &sp.b).map(sigm);
    nodes[me].child_sum = child_sum;
    nodes[me].activation = activation;
    Ok(me)
}
