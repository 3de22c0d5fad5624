//! End-to-end experiments: crossvalidate, attack, aggregate, report.
//!
//! For every fold the reference pool holds the correctly classified
//! training points; every correctly classified test point is attacked with
//! each configured method. Success rates aggregate per fold (successes
//! over attacked points) and then as mean and population standard
//! deviation across folds. Distance ratios aggregate over the points where
//! the ratio is defined; when no fold defines any ratio the report prints
//! `n.a.`, matching the convention for attacks that always abort.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attacks::{
    backtracing_attack, evaluate_result, random_attack, select_reference, AttackError,
    AttackResult, ReferencePool,
};
use crate::models::{ClassLabel, Classifier, ClassifierHandle};
use crate::trees::{Label, Tree};

use super::cv::{crossvalidate, derive_seed, grid, ClassifierKind};
use super::dataset::{load_dataset, synth_generate, Dataset, SynthSpec};
use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackMethod {
    Random,
    Backtrace,
}

impl AttackMethod {
    pub fn name(&self) -> &'static str {
        match self {
            AttackMethod::Random => "random",
            AttackMethod::Backtrace => "backtrace",
        }
    }
}

impl std::fmt::Display for AttackMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AttackMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(AttackMethod::Random),
            "backtrace" => Ok(AttackMethod::Backtrace),
            other => Err(format!("unknown attack method {other:?}")),
        }
    }
}

/// Where the experiment data comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    /// Line-delimited dataset file.
    Path(String),
    /// Generated motif dataset (seeded from the experiment seed).
    Synthetic(SynthSpec),
}

fn default_inner_folds() -> usize {
    3
}

fn default_cap() -> usize {
    100
}

fn default_classifiers() -> Vec<ClassifierKind> {
    ClassifierKind::all().to_vec()
}

fn default_attacks() -> Vec<AttackMethod> {
    vec![AttackMethod::Random, AttackMethod::Backtrace]
}

/// Everything one experiment run needs; serialized as the `eval` config
/// file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DataSource,
    #[serde(default = "default_classifiers")]
    pub classifiers: Vec<ClassifierKind>,
    pub folds: usize,
    #[serde(default = "default_inner_folds")]
    pub inner_folds: usize,
    pub seed: u64,
    #[serde(default = "default_attacks")]
    pub attacks: Vec<AttackMethod>,
    #[serde(default = "default_cap")]
    pub cap: usize,
    /// Attack toward this class instead of the nearest other-label
    /// reference.
    #[serde(default)]
    pub target_class: Option<ClassLabel>,
    #[serde(default)]
    pub normalize_kernels: bool,
}

impl ExperimentConfig {
    pub fn load_data(&self) -> Result<Dataset, HarnessError> {
        match &self.dataset {
            DataSource::Path(path) => load_dataset(std::path::Path::new(path)),
            DataSource::Synthetic(spec) => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, 0x5e_da7a));
                synth_generate(spec, &mut rng)
            }
        }
    }
}

/// Per-point attack record, one structured line per attacked point.
#[derive(Debug, Clone, Serialize)]
pub struct AttackRecord {
    pub origin_index: usize,
    pub method: AttackMethod,
    pub success: bool,
    pub prefix_length: usize,
    pub queries: u64,
    pub dist_to_origin: Option<usize>,
    pub dist_to_reference: Option<usize>,
    pub ratio: Option<f64>,
    pub adversarial: Option<Tree>,
}

impl AttackRecord {
    fn from_result(origin_index: usize, method: AttackMethod, r: &AttackResult) -> Self {
        AttackRecord {
            origin_index,
            method,
            success: r.success,
            prefix_length: r.prefix.len(),
            queries: r.queries,
            dist_to_origin: r.dist_to_origin,
            dist_to_reference: r.dist_to_reference,
            ratio: r.ratio,
            adversarial: r.adversarial.clone(),
        }
    }
}

/// Attacks every given point (assumed correctly classified; its label is
/// the classifier's own) and evaluates success against the pool. A missing
/// reference makes the point count as a failed attack rather than an
/// error.
#[allow(clippy::too_many_arguments)]
pub fn attack_points(
    model: &dyn Classifier,
    pool: &ReferencePool,
    points: &[(usize, Tree, ClassLabel)],
    method: AttackMethod,
    alphabet: &[Label],
    cap: usize,
    target_class: Option<ClassLabel>,
    seed: u64,
) -> Result<Vec<AttackRecord>, HarnessError> {
    let mut records = Vec::with_capacity(points.len());
    for (pi, (origin_index, tree, label)) in points.iter().enumerate() {
        let handle = ClassifierHandle::new(model);
        let outcome = match method {
            AttackMethod::Backtrace => {
                match select_reference(tree, *label, pool, target_class) {
                    Ok(ref_idx) => {
                        let member = &pool.members[ref_idx];
                        backtracing_attack(tree, *label, &handle, &member.tree, member.true_label)
                    }
                    Err(e @ AttackError::NoReference(_)) => Err(e),
                    Err(e) => return Err(e.into()),
                }
            }
            AttackMethod::Random => {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xa77ac4 ^ (pi as u64) << 24));
                random_attack(tree, *label, &handle, alphabet, &mut rng, cap)
            }
        };
        let record = match outcome {
            Ok(mut result) => {
                evaluate_result(&mut result, *label, pool);
                AttackRecord::from_result(*origin_index, method, &result)
            }
            // unreachable references mean the attack could not even start
            Err(AttackError::NoReference(_)) | Err(AttackError::IdenticalTrees) => AttackRecord {
                origin_index: *origin_index,
                method,
                success: false,
                prefix_length: 0,
                queries: handle.query_count(),
                dist_to_origin: None,
                dist_to_reference: None,
                ratio: None,
                adversarial: None,
            },
            Err(e) => return Err(e.into()),
        };
        records.push(record);
    }
    Ok(records)
}

/// One line of the final report.
#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub classifier: ClassifierKind,
    pub attack: AttackMethod,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub success_mean: f64,
    pub success_std: f64,
    pub ratio_mean: Option<f64>,
    pub ratio_std: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportMetadata {
    pub seed: u64,
    pub folds: usize,
    pub inner_folds: usize,
    pub cap: usize,
    pub target_class: Option<ClassLabel>,
    pub normalize_kernels: bool,
    pub dataset_name: String,
    pub dataset_size: usize,
    pub grids: Vec<String>,
    pub warnings: Vec<String>,
    pub conventions: Vec<String>,
}

#[derive(Debug)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub metadata: ReportMetadata,
}

pub const CSV_HEADER: &str =
    "classifier,attack,accuracy_mean,accuracy_std,success_mean,success_std,ratio_mean,ratio_std";

impl Report {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            let fmt_opt = |v: Option<f64>| match v {
                Some(x) => format!("{x:.4}"),
                None => "n.a.".to_string(),
            };
            out.push_str(&format!(
                "{},{},{:.4},{:.4},{:.4},{:.4},{},{}\n",
                row.classifier,
                row.attack,
                row.accuracy_mean,
                row.accuracy_std,
                row.success_mean,
                row.success_std,
                fmt_opt(row.ratio_mean),
                fmt_opt(row.ratio_std),
            ));
        }
        out
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs the full protocol for every configured classifier and attack.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Report, HarnessError> {
    if config.classifiers.is_empty() || config.attacks.is_empty() {
        return Err(HarnessError::BadConfig("no classifiers or no attacks configured".into()));
    }
    if config.cap < 1 {
        return Err(HarnessError::BadConfig("edit cap must be at least 1".into()));
    }
    let dataset = config.load_data()?;
    let mut rows = Vec::new();
    let mut warnings = Vec::new();

    for (ki, &kind) in config.classifiers.iter().enumerate() {
        let cv = crossvalidate(
            &dataset,
            kind,
            config.folds,
            config.inner_folds,
            config.normalize_kernels,
            derive_seed(config.seed, ki as u64),
        )?;
        if !cv.stratified {
            warnings.push(format!("{kind}: folds were not stratified (class too small)"));
        }
        let accuracies: Vec<f64> = cv.folds.iter().map(|f| f.accuracy).collect();
        for fold in &cv.folds {
            if let Some(w) = &fold.warning {
                warnings.push(format!("{kind} fold {}: {w}", fold.fold));
            }
        }

        for &method in &config.attacks {
            let mut fold_success = Vec::new();
            let mut fold_ratios: Vec<f64> = Vec::new();
            for fold in &cv.folds {
                let (rate, ratios) = attack_fold(&dataset, fold, method, config, kind)?;
                fold_success.push(rate);
                if let Some(r) = ratios {
                    fold_ratios.push(r);
                }
            }
            let (accuracy_mean, accuracy_std) = mean_std(&accuracies);
            let (success_mean, success_std) = mean_std(&fold_success);
            let (ratio_mean, ratio_std) = if fold_ratios.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_std(&fold_ratios);
                (Some(m), Some(s))
            };
            rows.push(ReportRow {
                classifier: kind,
                attack: method,
                accuracy_mean,
                accuracy_std,
                success_mean,
                success_std,
                ratio_mean,
                ratio_std,
            });
        }
    }

    let grids = config
        .classifiers
        .iter()
        .map(|&k| format!("{k}: {:?}", grid(k, f64::NAN).len()))
        .collect();
    Ok(Report {
        rows,
        metadata: ReportMetadata {
            seed: config.seed,
            folds: config.folds,
            inner_folds: config.inner_folds,
            cap: config.cap,
            target_class: config.target_class,
            normalize_kernels: config.normalize_kernels,
            dataset_name: dataset.name.clone(),
            dataset_size: dataset.len(),
            grids,
            warnings,
            conventions: vec![
                "reference pool: correctly classified training points of each fold".into(),
                "attacked points: correctly classified test points of each fold".into(),
                "success: adversarial tree closer to its origin than to any pool member \
                 with a different true label"
                    .into(),
                "ratio: d(z,x)/d(z,y*) over label-flipped attacks; n.a. when no fold \
                 defines one"
                    .into(),
                "std: population standard deviation across folds".into(),
            ],
        },
    })
}

/// Per-fold attack pass: returns the success rate over attacked points and
/// the mean defined ratio (when any).
fn attack_fold(
    dataset: &Dataset,
    fold: &super::cv::FoldModel,
    method: AttackMethod,
    config: &ExperimentConfig,
    kind: ClassifierKind,
) -> Result<(f64, Option<f64>), HarnessError> {
    let train: Vec<(Tree, ClassLabel)> =
        fold.train_indices.iter().map(|&i| dataset.examples[i].clone()).collect();
    let pool = ReferencePool::build(&train, &fold.model)?;

    // the random attack draws symbols from the training alphabet so the
    // neural models never see unknown labels
    let mut train_alphabet: Vec<Label> = train
        .iter()
        .flat_map(|(t, _)| t.preorder().map(|(_, n)| n.label.clone()).collect::<Vec<_>>())
        .collect();
    train_alphabet.sort_unstable();
    train_alphabet.dedup();

    let mut attacked = Vec::new();
    for &i in &fold.test_indices {
        let (tree, label) = &dataset.examples[i];
        if fold.model.predict(tree)? == *label {
            attacked.push((i, tree.clone(), *label));
        }
    }
    if attacked.is_empty() {
        return Ok((0.0, None));
    }
    let seed = derive_seed(
        config.seed,
        0xa77 ^ (fold.fold as u64) << 8 ^ (method as u64) << 16 ^ (kind as u64) << 24,
    );
    let records = attack_points(
        &fold.model,
        &pool,
        &attacked,
        method,
        &train_alphabet,
        config.cap,
        config.target_class,
        seed,
    )?;
    let successes = records.iter().filter(|r| r.success).count();
    let rate = successes as f64 / records.len() as f64;
    let ratios: Vec<f64> = records.iter().filter_map(|r| r.ratio).collect();
    let ratio = if ratios.is_empty() {
        None
    } else {
        Some(ratios.iter().sum::<f64>() / ratios.len() as f64)
    };
    Ok((rate, ratio))
}
