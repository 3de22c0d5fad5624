//! Kernel SVM on precomputed Gram matrices, trained by sequential minimal
//! optimization, plus the full tree-to-label pipeline used by the harness.
//!
//! Multiclass is one-vs-rest: one binary subproblem per class, prediction
//! by argmax of the decision values with ties to the smallest class index.
//! The solver works directly on the (clipped) Gram matrix; it needs no
//! feature vectors.
//!
//! A [`SvmClassifier`] additionally remembers everything needed to score
//! an arbitrary tree: the fold-union trees, the kernel configuration, the
//! double-centering statistics for the linear kernel, and the positive-
//! eigenspace projector of the clipped Gram matrix. A raw similarity row
//! multiplied by that projector reproduces the clipped Gram matrix on
//! in-sample trees exactly, which keeps training and prediction embeddings
//! consistent without re-clipping per query.

use nalgebra::{DMatrix, RowDVector};
use serde::{Deserialize, Serialize};

use crate::kernels::{clip_projector, gram, tree_kernel, GramMatrix, KernelConfig};
use crate::ted::ted;
use crate::trees::Tree;

use super::{argmax, ClassLabel, Classifier, ModelError};

/// Dual solution of one one-vs-rest subproblem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinarySvm {
    /// `alpha_i * y_i` per training point.
    pub alpha_y: Vec<f64>,
    pub bias: f64,
    /// Largest KKT violation left by the solver.
    pub kkt_violation: f64,
}

impl BinarySvm {
    pub fn decision(&self, k_row: &[f64]) -> f64 {
        self.alpha_y.iter().zip(k_row).map(|(a, k)| a * k).sum::<f64>() + self.bias
    }
}

/// One-vs-rest SVM over a fixed training set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvmModel {
    /// Distinct class labels, ascending; one subproblem each.
    pub classes: Vec<ClassLabel>,
    pub subproblems: Vec<BinarySvm>,
    pub regularization: f64,
    pub n_train: usize,
}

const KKT_TOL: f64 = 1e-3;

/// Trains one-vs-rest SMO on a (clipped) Gram matrix.
pub fn svm_train(
    k: &GramMatrix,
    labels: &[ClassLabel],
    regularization: f64,
) -> Result<SvmModel, ModelError> {
    let n = labels.len();
    if n == 0 {
        return Err(ModelError::EmptyTraining);
    }
    if k.n() != n {
        return Err(ModelError::SizeMismatch { labels: n, gram: k.n() });
    }
    let mut classes: Vec<ClassLabel> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(ModelError::SingleClass);
    }
    let mut subproblems = Vec::with_capacity(classes.len());
    for &class in &classes {
        let y: Vec<f64> =
            labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
        subproblems.push(smo(&k.matrix, &y, regularization));
    }
    Ok(SvmModel { classes, subproblems, regularization, n_train: n })
}

/// Predicts from kernel values between the query and the training points.
pub fn svm_predict(model: &SvmModel, k_row: &[f64]) -> Result<ClassLabel, ModelError> {
    if k_row.len() != model.n_train {
        return Err(ModelError::RowLengthMismatch {
            expected: model.n_train,
            got: k_row.len(),
        });
    }
    let decisions: Vec<f64> = model.subproblems.iter().map(|s| s.decision(k_row)).collect();
    Ok(model.classes[argmax(&decisions)])
}

/// Simplified sequential minimal optimization: sweep the training points,
/// pair each KKT violator with the partner of largest error gap (then any
/// partner that makes progress), and update the pair analytically. Stops
/// when a full sweep leaves no violation beyond the tolerance.
fn smo(k: &DMatrix<f64>, y: &[f64], c: f64) -> BinarySvm {
    let n = y.len();
    let mut alpha = vec![0.0f64; n];
    let mut bias = 0.0f64;
    // decision value minus target per point, kept incrementally
    let mut error: Vec<f64> = y.iter().map(|yi| -yi).collect();

    let violation = |alpha: &[f64], error: &[f64], i: usize| -> f64 {
        let r = error[i] * y[i];
        if alpha[i] < c && r < -KKT_TOL {
            -r
        } else if alpha[i] > 0.0 && r > KKT_TOL {
            r
        } else {
            0.0
        }
    };

    // n^2 pair updates per sweep at worst; the pass cap only guards
    // against degenerate cycling on semi-definite inputs
    let max_sweeps = 200 * n.max(16);
    for _ in 0..max_sweeps {
        let mut changed = 0usize;
        for i in 0..n {
            if violation(&alpha, &error, i) == 0.0 {
                continue;
            }
            // second-choice heuristic: largest |E_i - E_j|, ties low
            let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            order.sort_by(|&a, &b| {
                let ga = (error[i] - error[a]).abs();
                let gb = (error[i] - error[b]).abs();
                gb.partial_cmp(&ga).unwrap().then(a.cmp(&b))
            });
            for j in order {
                if step(k, y, c, i, j, &mut alpha, &mut bias, &mut error) {
                    changed += 1;
                    break;
                }
            }
        }
        if changed == 0 {
            break;
        }
    }

    let kkt_violation =
        (0..n).map(|i| violation(&alpha, &error, i)).fold(0.0f64, f64::max);
    let alpha_y = alpha.iter().zip(y).map(|(a, yi)| a * yi).collect();
    BinarySvm { alpha_y, bias, kkt_violation }
}

#[allow(clippy::too_many_arguments)]
fn step(
    k: &DMatrix<f64>,
    y: &[f64],
    c: f64,
    i: usize,
    j: usize,
    alpha: &mut [f64],
    bias: &mut f64,
    error: &mut [f64],
) -> bool {
    let eta = k[(i, i)] + k[(j, j)] - 2.0 * k[(i, j)];
    if eta <= 1e-12 {
        return false;
    }
    let (low, high) = if y[i] != y[j] {
        ((alpha[j] - alpha[i]).max(0.0), (c + alpha[j] - alpha[i]).min(c))
    } else {
        ((alpha[i] + alpha[j] - c).max(0.0), (alpha[i] + alpha[j]).min(c))
    };
    if low >= high {
        return false;
    }
    let unclipped = alpha[j] + y[j] * (error[i] - error[j]) / eta;
    let new_j = unclipped.clamp(low, high);
    let delta_j = new_j - alpha[j];
    if delta_j.abs() < 1e-10 {
        return false;
    }
    let delta_i = -y[i] * y[j] * delta_j;
    let new_i = alpha[i] + delta_i;

    let b1 = *bias - error[i] - y[i] * delta_i * k[(i, i)] - y[j] * delta_j * k[(i, j)];
    let b2 = *bias - error[j] - y[i] * delta_i * k[(i, j)] - y[j] * delta_j * k[(j, j)];
    let new_bias = if new_i > 0.0 && new_i < c {
        b1
    } else if new_j > 0.0 && new_j < c {
        b2
    } else {
        0.5 * (b1 + b2)
    };

    let bias_delta = new_bias - *bias;
    for t in 0..error.len() {
        error[t] += y[i] * delta_i * k[(i, t)] + y[j] * delta_j * k[(j, t)] + bias_delta;
    }
    alpha[i] = new_i;
    alpha[j] = new_j;
    *bias = new_bias;
    true
}

/// Double-centering statistics of the squared distances over the fold
/// union, for scoring out-of-sample trees with the linear kernel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearCentering {
    pub col_mean_sq: Vec<f64>,
    pub grand_mean_sq: f64,
}

/// A complete SVM pipeline over trees.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvmClassifier {
    pub kernel: KernelConfig,
    pub normalize: bool,
    /// Fold union: training trees first, then the evaluation trees that
    /// took part in the clip correction.
    pub union_trees: Vec<Tree>,
    pub n_train: usize,
    /// Positive-eigenspace projector of the union Gram matrix.
    pub projector: DMatrix<f64>,
    pub centering: Option<LinearCentering>,
    /// Raw self-similarities `k(u, u)` of the union trees, for kernel
    /// normalization of query rows.
    pub self_similarity: Vec<f64>,
    pub svm: SvmModel,
}

impl SvmClassifier {
    /// Builds the Gram matrix over `union_trees` (the first `n_train` of
    /// which are the training points), clips it once, and trains the SVM
    /// on the training block of the clipped matrix.
    pub fn fit(
        union_trees: Vec<Tree>,
        n_train: usize,
        labels: &[ClassLabel],
        kernel: KernelConfig,
        normalize: bool,
        regularization: f64,
    ) -> Result<Self, ModelError> {
        assert!(n_train <= union_trees.len());
        assert_eq!(labels.len(), n_train);
        let raw = gram(&union_trees, &kernel, normalize)?;
        let projector = clip_projector(&raw.matrix)?;
        let clipped_full = symmetrized(&projector * &raw.matrix);

        let train_matrix = clipped_full.view((0, 0), (n_train, n_train)).into_owned();
        let train_gram = GramMatrix {
            matrix: train_matrix,
            provenance: crate::kernels::Provenance {
                clipped: true,
                ..raw.provenance.clone()
            },
        };
        let svm = svm_train(&train_gram, labels, regularization)?;

        let centering = match kernel {
            KernelConfig::Linear => {
                let d = crate::ted::pairwise_ted(&union_trees);
                let n = d.len();
                let mut col_mean_sq = vec![0.0; n];
                let mut grand = 0.0;
                for i in 0..n {
                    let s: f64 = (0..n).map(|j| (d[i][j] * d[i][j]) as f64).sum();
                    col_mean_sq[i] = s / n as f64;
                    grand += s;
                }
                Some(LinearCentering { col_mean_sq, grand_mean_sq: grand / (n * n) as f64 })
            }
            _ => None,
        };
        let self_similarity = if kernel.is_tree_kernel() {
            union_trees
                .iter()
                .map(|t| tree_kernel(&kernel, t, t))
                .collect::<Result<_, _>>()?
        } else {
            Vec::new()
        };

        Ok(SvmClassifier {
            kernel,
            normalize,
            union_trees,
            n_train,
            projector,
            centering,
            self_similarity,
            svm,
        })
    }

    /// Raw kernel row between a query tree and every union tree.
    fn raw_row(&self, tree: &Tree) -> Result<Vec<f64>, ModelError> {
        let n = self.union_trees.len();
        match &self.kernel {
            KernelConfig::Linear => {
                let centering = self.centering.as_ref().expect("linear pipeline has stats");
                let dz2: Vec<f64> = self
                    .union_trees
                    .iter()
                    .map(|u| {
                        let d = ted(tree, u) as f64;
                        d * d
                    })
                    .collect();
                let row_mean = dz2.iter().sum::<f64>() / n as f64;
                Ok((0..n)
                    .map(|u| {
                        -0.5 * (dz2[u] - centering.col_mean_sq[u] - row_mean
                            + centering.grand_mean_sq)
                    })
                    .collect())
            }
            KernelConfig::Rbf { sigma } => Ok(self
                .union_trees
                .iter()
                .map(|u| {
                    let d = ted(tree, u) as f64;
                    (-0.5 * d * d / (sigma * sigma)).exp()
                })
                .collect()),
            tree_kind => {
                let mut row = Vec::with_capacity(n);
                for (u, utree) in self.union_trees.iter().enumerate() {
                    let mut v = tree_kernel(tree_kind, tree, utree)?;
                    if self.normalize {
                        let kzz = tree_kernel(tree_kind, tree, tree)?;
                        let denom = (kzz * self.self_similarity[u]).sqrt();
                        v = if denom > 0.0 { v / denom } else { 0.0 };
                    }
                    row.push(v);
                }
                Ok(row)
            }
        }
    }

    pub fn predict(&self, tree: &Tree) -> Result<ClassLabel, ModelError> {
        let raw = RowDVector::from_vec(self.raw_row(tree)?);
        let projected = raw * &self.projector;
        let k_row: Vec<f64> = projected.iter().take(self.n_train).copied().collect();
        svm_predict(&self.svm, &k_row)
    }
}

impl Classifier for SvmClassifier {
    fn predict(&self, tree: &Tree) -> Result<ClassLabel, ModelError> {
        SvmClassifier::predict(self, tree)
    }
}

fn symmetrized(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}
