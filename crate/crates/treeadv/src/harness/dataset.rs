//! Dataset ingestion and synthetic data generation.
//!
//! Datasets are line-delimited JSON records `{"tree": "...", "label": k}`
//! with labels forming a contiguous range `1..=L`. The synthetic generator
//! produces a two-class motif task: class 2 trees contain a fixed motif
//! subtree grafted at a random position, class 1 trees never do. Base
//! trees draw only from the alphabet symbols outside the motif, so the
//! motif is the class signal rather than an accident of sampling.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::models::ClassLabel;
use crate::trees::{Label, Tree};

use super::HarnessError;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub examples: Vec<(Tree, ClassLabel)>,
    /// Sorted union of all node labels (or the declared synthetic
    /// alphabet, which covers it).
    pub alphabet: Vec<Label>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.examples.iter().map(|&(_, l)| l).max().unwrap_or(0)
    }

    pub fn labels(&self) -> Vec<ClassLabel> {
        self.examples.iter().map(|&(_, l)| l).collect()
    }

    /// Checks the contiguous-label invariant `1..=L`.
    fn validate_labels(examples: &[(Tree, ClassLabel)]) -> Result<(), HarnessError> {
        let max = examples.iter().map(|&(_, l)| l).max().unwrap_or(0);
        let present: BTreeSet<ClassLabel> = examples.iter().map(|&(_, l)| l).collect();
        if present.contains(&0) {
            return Err(HarnessError::LabelGap { missing: 1, max });
        }
        for l in 1..=max {
            if !present.contains(&l) {
                return Err(HarnessError::LabelGap { missing: l, max });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    tree: Tree,
    label: ClassLabel,
}

/// Loads a line-delimited dataset; the alphabet is inferred as the union
/// of node labels.
pub fn load_dataset(path: &Path) -> Result<Dataset, HarnessError> {
    let file = std::fs::File::open(path)
        .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    let mut examples = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| {
            HarnessError::MalformedRecord { line: lineno + 1, message: e.to_string() }
        })?;
        if record.label == 0 {
            return Err(HarnessError::MalformedRecord {
                line: lineno + 1,
                message: "labels are 1-based".into(),
            });
        }
        examples.push((record.tree, record.label));
    }
    if examples.is_empty() {
        return Err(HarnessError::EmptyDataset);
    }
    Dataset::validate_labels(&examples)?;
    let alphabet = infer_alphabet(&examples);
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    Ok(Dataset { name, examples, alphabet })
}

/// Writes a dataset in the format [`load_dataset`] reads.
pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<(), HarnessError> {
    let mut file = std::fs::File::create(path)
        .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    for (tree, label) in &dataset.examples {
        let record = Record { tree: tree.clone(), label: *label };
        let line =
            serde_json::to_string(&record).map_err(|e| HarnessError::Io(e.to_string()))?;
        writeln!(file, "{line}").map_err(|e| HarnessError::Io(e.to_string()))?;
    }
    Ok(())
}

fn infer_alphabet(examples: &[(Tree, ClassLabel)]) -> Vec<Label> {
    let mut set = BTreeSet::new();
    for (tree, _) in examples {
        for (_, node) in tree.preorder() {
            set.insert(node.label.clone());
        }
    }
    set.into_iter().collect()
}

/// First `n` single-letter labels.
pub fn default_alphabet(n: usize) -> Result<Vec<Label>, HarnessError> {
    if n == 0 || n > 26 {
        return Err(HarnessError::BadConfig(format!(
            "alphabet size must be within 1..=26, got {n}"
        )));
    }
    Ok((0..n).map(|i| Label::new(((b'a' + i as u8) as char).to_string()).unwrap()).collect())
}

/// Random tree of (at most) `size` nodes and depth at most `max_depth`:
/// each new node attaches at a uniform slot under a uniform eligible
/// parent.
pub fn random_tree_bounded<R: Rng + ?Sized>(
    rng: &mut R,
    size: usize,
    max_depth: usize,
    alphabet: &[Label],
) -> Tree {
    assert!(size >= 1 && max_depth >= 1 && !alphabet.is_empty());
    let mut labels = vec![alphabet[rng.random_range(0..alphabet.len())].clone()];
    let mut children: Vec<Vec<usize>> = vec![Vec::new()];
    let mut depths = vec![1usize];
    for _ in 1..size {
        let eligible: Vec<usize> =
            (0..labels.len()).filter(|&i| depths[i] < max_depth).collect();
        if eligible.is_empty() {
            break;
        }
        let parent = eligible[rng.random_range(0..eligible.len())];
        let slot = rng.random_range(0..=children[parent].len());
        labels.push(alphabet[rng.random_range(0..alphabet.len())].clone());
        children.push(Vec::new());
        depths.push(depths[parent] + 1);
        let me = labels.len() - 1;
        children[parent].insert(slot, me);
    }
    fn build(i: usize, labels: &[Label], children: &[Vec<usize>]) -> Tree {
        Tree::new(
            labels[i].clone(),
            children[i].iter().map(|&c| build(c, labels, children)).collect(),
        )
    }
    build(0, &labels, &children)
}

/// True when `motif` occurs as a complete subtree of `tree`.
pub fn contains_subtree(tree: &Tree, motif: &Tree) -> bool {
    tree.preorder().any(|(_, node)| node == motif)
}

/// Grafts `subtree` as a new child of the node at preorder index
/// `node_idx`, at child slot `slot` (0-based).
fn graft(tree: &Tree, node_idx: usize, slot: usize, subtree: Tree) -> Tree {
    fn walk(node: &Tree, counter: &mut usize, target: usize, slot: usize, sub: &Tree) -> Tree {
        *counter += 1;
        let mut children: Vec<Tree> = Vec::with_capacity(node.children.len() + 1);
        let me = *counter;
        for child in &node.children {
            children.push(walk(child, counter, target, slot, sub));
        }
        if me == target {
            children.insert(slot, sub.clone());
        }
        Tree::new(node.label.clone(), children)
    }
    let mut counter = 0;
    walk(tree, &mut counter, node_idx, slot, &subtree)
}

/// Parameters of the synthetic motif task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_examples: usize,
    pub alphabet_size: usize,
    pub max_depth: usize,
    pub motif: Tree,
    /// Node-count range of the base trees.
    #[serde(default = "default_base_sizes")]
    pub base_sizes: (usize, usize),
}

fn default_base_sizes() -> (usize, usize) {
    (4, 10)
}

/// Generates the two-class motif dataset: class 2 contains the motif,
/// class 1 does not, classes balanced within one example.
pub fn synth_generate<R: Rng + ?Sized>(
    spec: &SynthSpec,
    rng: &mut R,
) -> Result<Dataset, HarnessError> {
    if spec.n_examples < 4 {
        return Err(HarnessError::BadConfig(format!(
            "need at least 2 examples per class, got {} total",
            spec.n_examples
        )));
    }
    let alphabet = default_alphabet(spec.alphabet_size)?;
    let motif_labels: BTreeSet<Label> =
        spec.motif.preorder().map(|(_, n)| n.label.clone()).collect();
    for l in &motif_labels {
        if !alphabet.contains(l) {
            return Err(HarnessError::MotifNotInAlphabet { symbol: l.as_str().to_string() });
        }
    }
    let base_alphabet: Vec<Label> =
        alphabet.iter().filter(|l| !motif_labels.contains(l)).cloned().collect();
    if base_alphabet.is_empty() {
        return Err(HarnessError::BadConfig(
            "alphabet has no symbols left outside the motif".into(),
        ));
    }
    let (lo, hi) = spec.base_sizes;
    if lo < 1 || hi < lo {
        return Err(HarnessError::BadConfig(format!("bad base size range {lo}..={hi}")));
    }

    let mut examples = Vec::with_capacity(spec.n_examples);
    for i in 0..spec.n_examples {
        let label = if i % 2 == 0 { 1 } else { 2 };
        let tree = loop {
            let size = rng.random_range(lo..=hi);
            let base = random_tree_bounded(rng, size, spec.max_depth, &base_alphabet);
            if label == 1 {
                // base symbols exclude the motif's, but stay defensive for
                // exotic configurations
                if !contains_subtree(&base, &spec.motif) {
                    break base;
                }
            } else {
                let node = rng.random_range(1..=base.size());
                let arity = node_arity(&base, node);
                let slot = rng.random_range(0..=arity);
                break graft(&base, node, slot, spec.motif.clone());
            }
        };
        examples.push((tree, label));
    }
    Ok(Dataset { name: "synthetic".into(), examples, alphabet })
}

fn node_arity(tree: &Tree, idx: usize) -> usize {
    tree.preorder()
        .nth(idx - 1)
        .map(|(_, node)| node.children.len())
        .expect("index within tree")
}
