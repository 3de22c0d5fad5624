//! Recursive neural network classifier.
//!
//! Trees are embedded by the shared recursive map (see
//! [`super::embedding`]) and classified by a linear output layer, one
//! output per class. Training minimizes the mean crossentropy by
//! full-batch Adam until the loss drops below 0.01 or the iteration cap
//! is reached; gradients flow through the structure, with each node's
//! embedding feeding only its parent's child sum.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::trees::Tree;

use super::embedding::{embed, forward, EmbeddingParams, SymbolParams};
use super::{argmax, ClassLabel, Classifier, ModelError};

const ADAM_LR: f64 = 1e-3;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const LOSS_TARGET: f64 = 0.01;
const ITERATION_CAP: usize = 20_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecNetModel {
    pub embedding: EmbeddingParams,
    /// Output layer, one row per entry of `classes`.
    pub output_weights: DMatrix<f64>,
    pub output_bias: DVector<f64>,
    pub classes: Vec<ClassLabel>,
    pub converged: bool,
    pub final_loss: f64,
    pub iterations: usize,
    /// Mean crossentropy per iteration; not persisted.
    #[serde(default, skip)]
    pub loss_history: Vec<f64>,
}

impl RecNetModel {
    pub fn predict(&self, tree: &Tree) -> Result<ClassLabel, ModelError> {
        let g = embed(&self.embedding, tree)?;
        let z = &self.output_weights * g + &self.output_bias;
        Ok(self.classes[argmax(z.as_slice())])
    }
}

impl Classifier for RecNetModel {
    fn predict(&self, tree: &Tree) -> Result<ClassLabel, ModelError> {
        RecNetModel::predict(self, tree)
    }
}

/// Embeds a tree with the given recursive parameters.
pub fn recnet_embed(params: &EmbeddingParams, tree: &Tree) -> Result<DVector<f64>, ModelError> {
    embed(params, tree)
}

/// Gradients with the same shapes as the parameters.
#[derive(Debug, Clone)]
pub struct RecNetGrads {
    pub symbols: BTreeMap<String, SymbolParams>,
    pub output_weights: DMatrix<f64>,
    pub output_bias: DVector<f64>,
}

impl RecNetGrads {
    fn zeros(embedding: &EmbeddingParams, n_classes: usize) -> Self {
        let dim = embedding.dim;
        RecNetGrads {
            symbols: embedding
                .symbols
                .keys()
                .map(|k| {
                    (k.clone(), SymbolParams {
                        w: DMatrix::zeros(dim, dim),
                        b: DVector::zeros(dim),
                    })
                })
                .collect(),
            output_weights: DMatrix::zeros(n_classes, dim),
            output_bias: DVector::zeros(n_classes),
        }
    }
}

/// Mean crossentropy of the classifier on `data`.
pub fn recnet_loss(
    embedding: &EmbeddingParams,
    output_weights: &DMatrix<f64>,
    output_bias: &DVector<f64>,
    classes: &[ClassLabel],
    data: &[(Tree, ClassLabel)],
) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for (tree, label) in data {
        let g = embed(embedding, tree)?;
        let z = output_weights * g + output_bias;
        let target = class_index(classes, *label);
        total += crossentropy(z.as_slice(), target);
    }
    Ok(total / data.len() as f64)
}

/// Mean crossentropy and its analytic gradients.
pub fn recnet_loss_and_grads(
    embedding: &EmbeddingParams,
    output_weights: &DMatrix<f64>,
    output_bias: &DVector<f64>,
    classes: &[ClassLabel],
    data: &[(Tree, ClassLabel)],
) -> Result<(f64, RecNetGrads), ModelError> {
    let mut grads = RecNetGrads::zeros(embedding, classes.len());
    let mut total = 0.0;
    let scale = 1.0 / data.len() as f64;
    for (tree, label) in data {
        let pass = forward(embedding, tree)?;
        let root = &pass.nodes[0];
        let z = output_weights * &root.activation + output_bias;
        let target = class_index(classes, *label);
        total += crossentropy(z.as_slice(), target);

        let mut dz = softmax(z.as_slice());
        dz[target] -= 1.0;
        let dz = DVector::from_vec(dz) * scale;
        grads.output_weights += &dz * root.activation.transpose();
        grads.output_bias += &dz;

        // upstream gradient per node: the root gets it from the output
        // layer, every other node from its parent's child sum
        let mut downstream: Vec<DVector<f64>> = Vec::with_capacity(pass.nodes.len());
        for (idx, node) in pass.nodes.iter().enumerate() {
            let dg = match node.parent {
                None => output_weights.transpose() * &dz,
                Some(p) => downstream[p].clone(),
            };
            let da = dg.zip_map(&node.activation, |g, a| g * a * (1.0 - a));
            let sg = grads.symbols.get_mut(&node.label).expect("symbol seen in forward");
            sg.w += &da * node.child_sum.transpose();
            sg.b += &da;
            let sp = embedding.get(&node.label)?;
            downstream.push(sp.w.transpose() * &da);
            debug_assert_eq!(downstream.len(), idx + 1);
        }
    }
    Ok((total / data.len() as f64, grads))
}

fn class_index(classes: &[ClassLabel], label: ClassLabel) -> usize {
    classes.iter().position(|&c| c == label).expect("label seen during setup")
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn crossentropy(z: &[f64], target: usize) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    lse - z[target]
}

struct Adam {
    symbols: BTreeMap<String, (SymbolParams, SymbolParams)>,
    output: (DMatrix<f64>, DMatrix<f64>),
    bias: (DVector<f64>, DVector<f64>),
    t: usize,
}

impl Adam {
    fn new(embedding: &EmbeddingParams, n_classes: usize) -> Self {
        let z = || RecNetGrads::zeros(embedding, n_classes);
        let (a, b) = (z(), z());
        Adam {
            symbols: a
                .symbols
                .into_iter()
                .zip(b.symbols)
                .map(|((k, m), (_, v))| (k, (m, v)))
                .collect(),
            output: (a.output_weights, b.output_weights),
            bias: (a.output_bias, b.output_bias),
            t: 0,
        }
    }

    fn update(
        &mut self,
        embedding: &mut EmbeddingParams,
        output_weights: &mut DMatrix<f64>,
        output_bias: &mut DVector<f64>,
        grads: &RecNetGrads,
    ) {
        self.t += 1;
        let t = self.t;
        for (key, sp) in embedding.symbols.iter_mut() {
            let g = &grads.symbols[key];
            let (m, v) = self.symbols.get_mut(key).unwrap();
            adam_step(sp.w.as_mut_slice(), g.w.as_slice(), m.w.as_mut_slice(), v.w.as_mut_slice(), t);
            adam_step(sp.b.as_mut_slice(), g.b.as_slice(), m.b.as_mut_slice(), v.b.as_mut_slice(), t);
        }
        adam_step(
            output_weights.as_mut_slice(),
            grads.output_weights.as_slice(),
            self.output.0.as_mut_slice(),
            self.output.1.as_mut_slice(),
            t,
        );
        adam_step(
            output_bias.as_mut_slice(),
            grads.output_bias.as_slice(),
            self.bias.0.as_mut_slice(),
            self.bias.1.as_mut_slice(),
            t,
        );
    }
}

fn adam_step(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], t: usize) {
    let bc1 = 1.0 - ADAM_BETA1.powi(t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(t as i32);
    for i in 0..p.len() {
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        p[i] -= ADAM_LR * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}

/// Symmetric uniform weights scaled by `1/sqrt(dim)`, zero biases.
fn init_embedding<R: Rng + ?Sized>(
    labels: &BTreeSet<String>,
    dim: usize,
    rng: &mut R,
) -> EmbeddingParams {
    let scale = 1.0 / (dim as f64).sqrt();
    let symbols = labels
        .iter()
        .map(|l| {
            let w = DMatrix::from_iterator(
                dim,
                dim,
                (0..dim * dim).map(|_| rng.random_range(-scale..scale)),
            );
            (l.clone(), SymbolParams { w, b: DVector::zeros(dim) })
        })
        .collect();
    EmbeddingParams { dim, symbols }
}

/// Trains a recursive network with full-batch Adam. Stops once the mean
/// crossentropy drops below 0.01; hitting the 20000-iteration cap leaves
/// `converged` false so callers can report the warning.
pub fn recnet_train<R: Rng + ?Sized>(
    data: &[(Tree, ClassLabel)],
    dim: usize,
    rng: &mut R,
) -> Result<RecNetModel, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyTraining);
    }
    let mut labels = BTreeSet::new();
    for (tree, _) in data {
        for (_, node) in tree.preorder() {
            labels.insert(node.label.as_str().to_string());
        }
    }
    let mut classes: Vec<ClassLabel> = data.iter().map(|&(_, l)| l).collect();
    classes.sort_unstable();
    classes.dedup();

    let mut embedding = init_embedding(&labels, dim, rng);
    let scale = 1.0 / (dim as f64).sqrt();
    let mut output_weights = DMatrix::from_iterator(
        classes.len(),
        dim,
        (0..classes.len() * dim).map(|_| rng.random_range(-scale..scale)),
    );
    let mut output_bias = DVector::zeros(classes.len());

    let mut adam = Adam::new(&embedding, classes.len());
    let mut loss_history = Vec::new();
    let mut converged = false;
    let mut final_loss = f64::INFINITY;
    let mut iterations = 0;
    for iter in 1..=ITERATION_CAP {
        let (loss, grads) =
            recnet_loss_and_grads(&embedding, &output_weights, &output_bias, &classes, data)?;
        if !loss.is_finite() {
            return Err(ModelError::Diverged { iteration: iter, loss });
        }
        loss_history.push(loss);
        final_loss = loss;
        iterations = iter;
        if loss < LOSS_TARGET {
            converged = true;
            break;
        }
        adam.update(&mut embedding, &mut output_weights, &mut output_bias, &grads);
    }

    Ok(RecNetModel {
        embedding,
        output_weights,
        output_bias,
        classes,
        converged,
        final_loss,
        iterations,
        loss_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(s: &str) -> Tree {
        Tree::parse(s).unwrap()
    }

    /// Ten trees whose class is the identity of the root label.
    fn root_label_task() -> Vec<(Tree, ClassLabel)> {
        vec![
            (t("p(a)"), 1),
            (t("p(b,a)"), 1),
            (t("p(a(b))"), 1),
            (t("p(b(a),a)"), 1),
            (t("p"), 1),
            (t("q(a)"), 2),
            (t("q(b,a)"), 2),
            (t("q(a(b))"), 2),
            (t("q(b(a),a)"), 2),
            (t("q"), 2),
        ]
    }

    #[test]
    fn learns_root_label_identity() {
        let data = root_label_task();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = recnet_train(&data, 10, &mut rng).unwrap();
        assert!(model.converged, "loss {} after {} iters", model.final_loss, model.iterations);
        assert!(model.final_loss < 0.01);
        for (tree, label) in &data {
            assert_eq!(model.predict(tree).unwrap(), *label);
        }
    }

    #[test]
    fn single_example_converges_immediately() {
        let data = vec![(t("a(b)"), 1)];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = recnet_train(&data, 4, &mut rng).unwrap();
        assert!(model.converged);
        assert!(model.final_loss < 0.01);
    }

    #[test]
    fn loss_curve_decreases_over_averaged_windows() {
        let data = root_label_task();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let model = recnet_train(&data, 10, &mut rng).unwrap();
        let h = &model.loss_history;
        let windows: Vec<f64> = h
            .chunks(50)
            .filter(|c| c.len() == 50)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect();
        for w in windows.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "window means increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn same_seed_reproduces_training() {
        let data = root_label_task();
        let a = recnet_train(&data, 6, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = recnet_train(&data, 6, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.output_weights, b.output_weights);
        assert_eq!(a.final_loss, b.final_loss);
    }

    #[test]
    fn unknown_symbol_at_prediction_names_it() {
        let data = vec![(t("a"), 1), (t("b"), 2)];
        let model = recnet_train(&data, 4, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let err = model.predict(&t("zz(a)")).unwrap_err();
        assert_eq!(err, ModelError::UnknownSymbol("zz".into()));
    }
}
