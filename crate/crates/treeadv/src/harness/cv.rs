//! Stratified crossvalidation with nested hyperparameter search.
//!
//! Outer folds are stratified by label (falling back to plain round-robin
//! with a warning when a class has fewer members than folds). For each
//! outer fold, every grid point is scored by inner crossvalidation on the
//! outer-training data only; the mean pairwise edit distance that scales
//! the RBF bandwidth grid is likewise computed on the outer-training
//! split, so no hyperparameter decision ever sees outer-test data. Ties
//! prefer the earlier grid point. The winning configuration is retrained
//! on the full outer-training split.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kernels::KernelConfig;
use crate::models::{
    recnet_train, tes_train, ClassLabel, Classifier, SvmClassifier, TrainedModel,
};
use crate::ted::mean_pairwise_ted;
use crate::trees::Tree;

use super::HarnessError;

/// The seven classifier variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Linear,
    Rbf,
    St,
    Sst,
    Pt,
    Rec,
    Tes,
}

impl ClassifierKind {
    pub fn all() -> [ClassifierKind; 7] {
        [
            ClassifierKind::Linear,
            ClassifierKind::Rbf,
            ClassifierKind::St,
            ClassifierKind::Sst,
            ClassifierKind::Pt,
            ClassifierKind::Rec,
            ClassifierKind::Tes,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            ClassifierKind::Linear => "linear",
            ClassifierKind::Rbf => "rbf",
            ClassifierKind::St => "st",
            ClassifierKind::Sst => "sst",
            ClassifierKind::Pt => "pt",
            ClassifierKind::Rec => "rec",
            ClassifierKind::Tes => "tes",
        }
    }
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ClassifierKind::all()
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown classifier {s:?}"))
    }
}

/// One grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum HyperParams {
    Svm { kernel: KernelConfig, c: f64 },
    Rec { dim: usize },
    Tes { dim: usize, scale: f64, ridge: f64 },
}

const C_GRID: [f64; 4] = [0.1, 1.0, 10.0, 100.0];
const SIGMA_FACTORS: [f64; 3] = [0.5, 1.0, 2.0];
const LAMBDA_GRID: [f64; 3] = [0.001, 0.01, 0.1];
const TES_SCALES: [f64; 5] = [0.7, 0.9, 1.0, 1.5, 2.0];
const TES_DIMS: [usize; 3] = [10, 50, 100];
const TES_RIDGE: f64 = 1e-8;
const REC_DIM: usize = 10;

/// The hyperparameter grid of a classifier; `d_bar` is the mean pairwise
/// edit distance of the training split, scaling the RBF bandwidths.
pub fn grid(kind: ClassifierKind, d_bar: f64) -> Vec<HyperParams> {
    let mut points = Vec::new();
    match kind {
        ClassifierKind::Linear => {
            for &c in &C_GRID {
                points.push(HyperParams::Svm { kernel: KernelConfig::Linear, c });
            }
        }
        ClassifierKind::Rbf => {
            for &f in &SIGMA_FACTORS {
                for &c in &C_GRID {
                    points.push(HyperParams::Svm {
                        kernel: KernelConfig::Rbf { sigma: f * d_bar },
                        c,
                    });
                }
            }
        }
        ClassifierKind::St | ClassifierKind::Sst | ClassifierKind::Pt => {
            for &lambda in &LAMBDA_GRID {
                for &c in &C_GRID {
                    let kernel = match kind {
                        ClassifierKind::St => KernelConfig::Subtree { lambda },
                        ClassifierKind::Sst => KernelConfig::SubsetTree { lambda },
                        _ => KernelConfig::PartialTree { lambda },
                    };
                    points.push(HyperParams::Svm { kernel, c });
                }
            }
        }
        ClassifierKind::Rec => points.push(HyperParams::Rec { dim: REC_DIM }),
        ClassifierKind::Tes => {
            for &scale in &TES_SCALES {
                for &dim in &TES_DIMS {
                    points.push(HyperParams::Tes { dim, scale, ridge: TES_RIDGE });
                }
            }
        }
    }
    points
}

/// splitmix64 step, used to derive independent seeds per fold/point/run.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Partitions `0..labels.len()` into `k` folds. Stratified by label when
/// every class has at least `k` members; otherwise unstratified (the
/// second return value reports which).
pub fn stratified_folds<R: Rng + ?Sized>(
    labels: &[ClassLabel],
    k: usize,
    rng: &mut R,
) -> (Vec<Vec<usize>>, bool) {
    assert!(k >= 2, "need at least two folds");
    let max_label = labels.iter().copied().max().unwrap_or(0);
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); max_label + 1];
    for (i, &l) in labels.iter().enumerate() {
        per_class[l].push(i);
    }
    let stratified = per_class.iter().all(|c| c.is_empty() || c.len() >= k);

    let mut folds = vec![Vec::new(); k];
    if stratified {
        let mut dealt = 0usize;
        for class in per_class.iter_mut() {
            class.shuffle(rng);
            for &idx in class.iter() {
                folds[dealt % k].push(idx);
                dealt += 1;
            }
        }
    } else {
        let mut all: Vec<usize> = (0..labels.len()).collect();
        all.shuffle(rng);
        for (pos, idx) in all.into_iter().enumerate() {
            folds[pos % k].push(idx);
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    (folds, stratified)
}

/// Trains one classifier configuration. For SVMs the Gram matrix is built
/// over training plus evaluation trees and clipped once, per the fold-wide
/// clipping convention; the neural models ignore `eval_trees`.
pub fn train_classifier(
    params: &HyperParams,
    train: &[(Tree, ClassLabel)],
    eval_trees: &[Tree],
    normalize: bool,
    seed: u64,
) -> Result<TrainedModel, HarnessError> {
    let labels: Vec<ClassLabel> = train.iter().map(|&(_, l)| l).collect();
    match params {
        HyperParams::Svm { kernel, c } => {
            let mut union: Vec<Tree> = train.iter().map(|(t, _)| t.clone()).collect();
            union.extend(eval_trees.iter().cloned());
            let model = SvmClassifier::fit(
                union,
                train.len(),
                &labels,
                kernel.clone(),
                normalize,
                *c,
            )?;
            Ok(TrainedModel::Svm(model))
        }
        HyperParams::Rec { dim } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(TrainedModel::RecNet(recnet_train(train, *dim, &mut rng)?))
        }
        HyperParams::Tes { dim, scale, ridge } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(TrainedModel::Tes(tes_train(train, *dim, *scale, *ridge, &mut rng)?))
        }
    }
}

/// Fraction of points the model labels correctly.
pub fn evaluate_accuracy(
    model: &dyn Classifier,
    points: &[(Tree, ClassLabel)],
) -> Result<f64, HarnessError> {
    if points.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for (tree, label) in points {
        if model.predict(tree)? == *label {
            correct += 1;
        }
    }
    Ok(correct as f64 / points.len() as f64)
}

/// Scores every grid point by inner crossvalidation on `train` and returns
/// the winner (ties to the earlier point) with its mean inner accuracy.
pub fn select_hyperparameters(
    kind: ClassifierKind,
    train: &[(Tree, ClassLabel)],
    inner_folds: usize,
    normalize: bool,
    seed: u64,
) -> Result<(HyperParams, f64, f64), HarnessError> {
    let d_bar = mean_pairwise_ted(&train.iter().map(|(t, _)| t.clone()).collect::<Vec<_>>());
    let points = grid(kind, d_bar);
    if points.len() == 1 {
        return Ok((points.into_iter().next().unwrap(), f64::NAN, d_bar));
    }
    let labels: Vec<ClassLabel> = train.iter().map(|&(_, l)| l).collect();
    let mut fold_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x177e5));
    let (folds, _) = stratified_folds(&labels, inner_folds, &mut fold_rng);

    let mut best: Option<(usize, f64)> = None;
    for (gi, params) in points.iter().enumerate() {
        let mut total = 0.0;
        for (fi, fold) in folds.iter().enumerate() {
            let val: Vec<(Tree, ClassLabel)> =
                fold.iter().map(|&i| train[i].clone()).collect();
            let fit: Vec<(Tree, ClassLabel)> = (0..train.len())
                .filter(|i| !fold.contains(i))
                .map(|i| train[i].clone())
                .collect();
            ensure_all_classes(&fit, &labels)?;
            let eval_trees: Vec<Tree> = val.iter().map(|(t, _)| t.clone()).collect();
            let model = train_classifier(
                params,
                &fit,
                &eval_trees,
                normalize,
                derive_seed(seed, (gi as u64) << 16 | fi as u64),
            )?;
            total += evaluate_accuracy(&model, &val)?;
        }
        let mean = total / folds.len() as f64;
        if best.is_none_or(|(_, b)| mean > b) {
            best = Some((gi, mean));
        }
    }
    let (gi, acc) = best.expect("grid is never empty");
    Ok((points.into_iter().nth(gi).unwrap(), acc, d_bar))
}

fn ensure_all_classes(
    train: &[(Tree, ClassLabel)],
    all_labels: &[ClassLabel],
) -> Result<(), HarnessError> {
    let mut classes: Vec<ClassLabel> = all_labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    for class in classes {
        if !train.iter().any(|&(_, l)| l == class) {
            return Err(HarnessError::ClassMissingFromFold { class });
        }
    }
    Ok(())
}

/// One trained outer fold.
#[derive(Debug)]
pub struct FoldModel {
    pub fold: usize,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub model: TrainedModel,
    pub selected: HyperParams,
    pub inner_accuracy: f64,
    pub d_bar: f64,
    pub accuracy: f64,
    /// Set when the recursive net hit its iteration cap short of the loss
    /// target.
    pub warning: Option<String>,
}

#[derive(Debug)]
pub struct CvOutcome {
    pub folds: Vec<FoldModel>,
    pub stratified: bool,
}

/// Runs the outer crossvalidation of one classifier kind.
pub fn crossvalidate(
    dataset: &super::Dataset,
    kind: ClassifierKind,
    folds: usize,
    inner_folds: usize,
    normalize: bool,
    seed: u64,
) -> Result<CvOutcome, HarnessError> {
    if folds < 2 {
        return Err(HarnessError::BadConfig("need at least 2 folds".into()));
    }
    if dataset.len() < folds {
        return Err(HarnessError::BadConfig(format!(
            "{} examples cannot fill {folds} folds",
            dataset.len()
        )));
    }
    let labels = dataset.labels();
    let mut fold_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xf01d));
    let (assignment, stratified) = stratified_folds(&labels, folds, &mut fold_rng);

    let mut out = Vec::with_capacity(folds);
    for (f, test_indices) in assignment.iter().enumerate() {
        let train_indices: Vec<usize> =
            (0..dataset.len()).filter(|i| !test_indices.contains(i)).collect();
        let train: Vec<(Tree, ClassLabel)> =
            train_indices.iter().map(|&i| dataset.examples[i].clone()).collect();
        let test: Vec<(Tree, ClassLabel)> =
            test_indices.iter().map(|&i| dataset.examples[i].clone()).collect();
        ensure_all_classes(&train, &labels)?;

        let select_seed = derive_seed(seed, 0x5e1ec7 ^ (f as u64) << 32);
        let (selected, inner_accuracy, d_bar) =
            select_hyperparameters(kind, &train, inner_folds, normalize, select_seed)?;

        let eval_trees: Vec<Tree> = test.iter().map(|(t, _)| t.clone()).collect();
        let final_seed = derive_seed(seed, 0xf17a1 ^ (f as u64) << 32);
        let model = train_classifier(&selected, &train, &eval_trees, normalize, final_seed)?;
        let warning = match &model {
            TrainedModel::RecNet(m) if !m.converged => Some(format!(
                "recursive net stopped at loss {:.4} after {} iterations",
                m.final_loss, m.iterations
            )),
            _ => None,
        };
        let accuracy = evaluate_accuracy(&model, &test)?;
        out.push(FoldModel {
            fold: f,
            train_indices,
            test_indices: test_indices.clone(),
            model,
            selected,
            inner_accuracy,
            d_bar,
            accuracy,
            warning,
        });
    }
    Ok(CvOutcome { folds: out, stratified })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_have_the_documented_sizes() {
        assert_eq!(grid(ClassifierKind::Linear, 3.0).len(), 4);
        assert_eq!(grid(ClassifierKind::Rbf, 3.0).len(), 12);
        assert_eq!(grid(ClassifierKind::St, 3.0).len(), 12);
        assert_eq!(grid(ClassifierKind::Sst, 3.0).len(), 12);
        assert_eq!(grid(ClassifierKind::Pt, 3.0).len(), 12);
        assert_eq!(grid(ClassifierKind::Rec, 3.0).len(), 1);
        assert_eq!(grid(ClassifierKind::Tes, 3.0).len(), 15);
    }

    #[test]
    fn rbf_grid_scales_with_mean_distance() {
        let points = grid(ClassifierKind::Rbf, 4.0);
        let HyperParams::Svm { kernel: KernelConfig::Rbf { sigma }, .. } = &points[0] else {
            panic!("unexpected grid point");
        };
        assert_eq!(*sigma, 2.0);
    }

    #[test]
    fn stratified_folds_balance_classes() {
        let labels: Vec<ClassLabel> =
            (0..20).map(|i| if i < 10 { 1 } else { 2 }).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (folds, stratified) = stratified_folds(&labels, 5, &mut rng);
        assert!(stratified);
        for fold in &folds {
            assert_eq!(fold.len(), 4);
            let c1 = fold.iter().filter(|&&i| labels[i] == 1).count();
            assert_eq!(c1, 2, "each test fold holds 2 per class");
        }
        // disjoint cover
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn small_class_falls_back_to_unstratified() {
        let labels = vec![1, 1, 1, 1, 1, 1, 1, 2, 2];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (folds, stratified) = stratified_folds(&labels, 3, &mut rng);
        assert!(!stratified);
        assert_eq!(folds.iter().map(Vec::len).sum::<usize>(), 9);
    }

    #[test]
    fn fold_assignment_is_deterministic() {
        let labels: Vec<ClassLabel> = (0..30).map(|i| 1 + i % 3).collect();
        let (a, _) = stratified_folds(&labels, 5, &mut ChaCha8Rng::seed_from_u64(8));
        let (b, _) = stratified_folds(&labels, 5, &mut ChaCha8Rng::seed_from_u64(8));
        assert_eq!(a, b);
    }

    #[test]
    fn constant_classifier_scores_majority_share() {
        let points: Vec<(Tree, ClassLabel)> = vec![
            (Tree::parse("a").unwrap(), 1),
            (Tree::parse("b").unwrap(), 1),
            (Tree::parse("c").unwrap(), 1),
            (Tree::parse("d").unwrap(), 2),
        ];
        let constant = |_: &Tree| 1usize;
        let acc = evaluate_accuracy(&constant, &points).unwrap();
        assert_eq!(acc, 0.75);
    }
}
