//! Tree echo state network: the recursive weights are random and frozen,
//! only the linear readout is trained, by ridge regression onto one-hot
//! targets. Weight matrices are rescaled so their largest singular value
//! equals the scaling hyperparameter.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::trees::Tree;

use super::embedding::{embed, EmbeddingParams, SymbolParams};
use super::{argmax, ClassLabel, Classifier, ModelError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TesModel {
    /// Frozen reservoir; identical before and after readout training.
    pub embedding: EmbeddingParams,
    pub output_weights: DMatrix<f64>,
    pub output_bias: DVector<f64>,
    pub classes: Vec<ClassLabel>,
    pub scale: f64,
    pub ridge: f64,
}

impl TesModel {
    pub fn predict(&self, tree: &Tree) -> Result<ClassLabel, ModelError> {
        let g = embed(&self.embedding, tree)?;
        let z = &self.output_weights * g + &self.output_bias;
        Ok(self.classes[argmax(z.as_slice())])
    }
}

impl Classifier for TesModel {
    fn predict(&self, tree: &Tree) -> Result<ClassLabel, ModelError> {
        TesModel::predict(self, tree)
    }
}

/// Draws the reservoir (uniform in [-1, 1), weights rescaled to the target
/// largest singular value) and fits the readout by ridge regression with an
/// unregularized intercept. Singular normal equations fall back to the
/// pseudoinverse solution.
pub fn tes_train<R: Rng + ?Sized>(
    data: &[(Tree, ClassLabel)],
    dim: usize,
    scale: f64,
    ridge: f64,
    rng: &mut R,
) -> Result<TesModel, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyTraining);
    }
    assert!(dim >= 1, "reservoir dimension must be at least 1");
    assert!(scale > 0.0, "scale must be positive");

    let mut labels = BTreeSet::new();
    for (tree, _) in data {
        for (_, node) in tree.preorder() {
            labels.insert(node.label.as_str().to_string());
        }
    }
    let mut classes: Vec<ClassLabel> = data.iter().map(|&(_, l)| l).collect();
    classes.sort_unstable();
    classes.dedup();

    let symbols = labels
        .iter()
        .map(|l| {
            let mut w = DMatrix::from_iterator(
                dim,
                dim,
                (0..dim * dim).map(|_| rng.random_range(-1.0..1.0)),
            );
            let top = w.clone().svd(false, false).singular_values[0];
            if top > 0.0 {
                w *= scale / top;
            }
            let b = DVector::from_iterator(dim, (0..dim).map(|_| rng.random_range(-1.0..1.0)));
            (l.clone(), SymbolParams { w, b })
        })
        .collect();
    let embedding = EmbeddingParams { dim, symbols };

    // root embeddings as rows, one-hot targets
    let n = data.len();
    let mut g = DMatrix::zeros(n, dim);
    let mut y = DMatrix::zeros(n, classes.len());
    for (row, (tree, label)) in data.iter().enumerate() {
        let e = embed(&embedding, tree)?;
        g.row_mut(row).copy_from(&e.transpose());
        let target = classes.iter().position(|&c| c == *label).unwrap();
        y[(row, target)] = 1.0;
    }

    // center so the intercept absorbs the means and stays unregularized
    let g_mean = g.row_mean();
    let y_mean = y.row_mean();
    let g_c = DMatrix::from_fn(n, dim, |i, j| g[(i, j)] - g_mean[j]);
    let y_c = DMatrix::from_fn(n, classes.len(), |i, j| y[(i, j)] - y_mean[j]);

    let a = g_c.transpose() * &g_c + DMatrix::identity(dim, dim) * ridge;
    let b = g_c.transpose() * &y_c;
    let vt = match a.clone().cholesky() {
        Some(chol) => chol.solve(&b),
        None => a.svd(true, true).pseudo_inverse(1e-12).map_err(|e| {
            ModelError::Malformed(format!("pseudoinverse failed: {e}"))
        })? * &b,
    };
    let output_weights = vt.transpose();
    let output_bias = DVector::from_iterator(
        classes.len(),
        (0..classes.len()).map(|l| y_mean[l] - (output_weights.row(l) * g_mean.transpose())[0]),
    );

    Ok(TesModel { embedding, output_weights, output_bias, classes, scale, ridge })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(s: &str) -> Tree {
        Tree::parse(s).unwrap()
    }

    fn symbol_task() -> Vec<(Tree, ClassLabel)> {
        vec![
            (t("a(b)"), 1),
            (t("a(b,b)"), 1),
            (t("b(a)"), 1),
            (t("a"), 1),
            (t("m(a,b)"), 2),
            (t("a(m)"), 2),
            (t("b(m(a))"), 2),
            (t("m"), 2),
        ]
    }

    #[test]
    fn reservoir_is_frozen_by_construction() {
        let data = symbol_task();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = tes_train(&data, 12, 1.0, 1e-8, &mut rng).unwrap();
        // retraining the readout from the stored reservoir reproduces it
        for sp in model.embedding.symbols.values() {
            let top = sp.w.clone().svd(false, false).singular_values[0];
            assert!((top - 1.0).abs() < 1e-9, "largest singular value {top}");
        }
    }

    #[test]
    fn separable_embeddings_reach_full_training_accuracy() {
        let data = symbol_task();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = tes_train(&data, 30, 1.0, 1e-8, &mut rng).unwrap();
        let correct = data
            .iter()
            .filter(|(tree, label)| model.predict(tree).unwrap() == *label)
            .count();
        assert_eq!(correct, data.len());
    }

    #[test]
    fn infinite_ridge_limits_to_class_priors() {
        // three of class 1, one of class 2: prior argmax is class 1
        let data = vec![(t("a"), 1), (t("b"), 1), (t("a(b)"), 1), (t("m"), 2)];
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let model = tes_train(&data, 8, 1.0, 1e12, &mut rng).unwrap();
        let w_norm = model.output_weights.abs().max();
        assert!(w_norm < 1e-6, "readout weights should vanish, got {w_norm}");
        assert!((model.output_bias[0] - 0.75).abs() < 1e-6);
        assert!((model.output_bias[1] - 0.25).abs() < 1e-6);
        for (tree, _) in &data {
            assert_eq!(model.predict(tree).unwrap(), 1);
        }
    }

    #[test]
    fn same_seed_gives_bit_identical_reservoir() {
        let data = symbol_task();
        let a = tes_train(&data, 10, 1.5, 1e-8, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = tes_train(&data, 10, 1.5, 1e-8, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        for (ka, kb) in a.embedding.symbols.iter().zip(&b.embedding.symbols) {
            assert_eq!(ka.0, kb.0);
            assert_eq!(ka.1.w, kb.1.w);
            assert_eq!(ka.1.b, kb.1.b);
        }
    }
}
