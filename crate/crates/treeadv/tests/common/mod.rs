//! Shared test support: random tree generation, the brute-force edit-graph
//! oracle for the tree edit distance, and exhaustive fragment-enumeration
//! oracles for the tree kernels. Everything here is deliberately
//! independent of the implementation paths it checks.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use treeadv::edits::{apply_edit, TreeEdit};
use treeadv::trees::{Label, Tree};

pub fn lab(s: &str) -> Label {
    Label::new(s).unwrap()
}

pub fn t(s: &str) -> Tree {
    Tree::parse(s).unwrap()
}

/// First `n` single-letter labels `a, b, c, ...`.
pub fn letters(n: usize) -> Vec<Label> {
    assert!(n <= 26);
    (0..n).map(|i| lab(&((b'a' + i as u8) as char).to_string())).collect()
}

/// Uniform-ish random tree of exactly `size` nodes: each new node attaches
/// to a uniformly chosen existing node at a uniform child slot.
pub fn random_tree<R: Rng + ?Sized>(rng: &mut R, size: usize, alphabet: &[Label]) -> Tree {
    assert!(size >= 1);
    let mut labels = Vec::with_capacity(size);
    let mut children: Vec<Vec<usize>> = Vec::with_capacity(size);
    for k in 0..size {
        labels.push(alphabet[rng.random_range(0..alphabet.len())].clone());
        children.push(Vec::new());
        if k > 0 {
            let parent = rng.random_range(0..k);
            let slot = rng.random_range(0..=children[parent].len());
            children[parent].insert(slot, k);
        }
    }
    fn build(i: usize, labels: &[Label], children: &[Vec<usize>]) -> Tree {
        Tree::new(
            labels[i].clone(),
            children[i].iter().map(|&c| build(c, labels, children)).collect(),
        )
    }
    build(0, &labels, &children)
}

/// Every edit applicable to `tree` over `alphabet`, skipping relabelings to
/// the current label (self-loops in the edit graph).
pub fn all_edits(tree: &Tree, alphabet: &[Label]) -> Vec<TreeEdit> {
    let size = tree.size();
    let mut edits = Vec::new();
    for i in 2..=size {
        edits.push(TreeEdit::Del(i));
    }
    let nodes: Vec<&Tree> = tree.preorder().map(|(_, n)| n).collect();
    for (idx, node) in nodes.iter().enumerate() {
        for a in alphabet {
            if *a != node.label {
                edits.push(TreeEdit::Rep(idx + 1, a.clone()));
            }
        }
        let arity = node.children.len();
        for position in 1..=arity + 1 {
            for adopted in 0..=arity - (position - 1) {
                for a in alphabet {
                    edits.push(TreeEdit::Ins {
                        parent: idx + 1,
                        position,
                        adopted,
                        label: a.clone(),
                    });
                }
            }
        }
    }
    edits
}

fn label_counts(tree: &Tree) -> BTreeMap<String, i64> {
    let mut counts = BTreeMap::new();
    for (_, node) in tree.preorder() {
        *counts.entry(node.label.as_str().to_string()).or_insert(0) += 1;
    }
    counts
}

/// Admissible lower bound on the edit distance: every edit changes the size
/// by at most one and the label multiset by at most one element.
fn lower_bound(a: &BTreeMap<String, i64>, size_a: i64, b: &BTreeMap<String, i64>, size_b: i64) -> i64 {
    let mut surplus = 0i64;
    let mut deficit = 0i64;
    for (k, &ca) in a {
        let cb = b.get(k).copied().unwrap_or(0);
        if ca > cb {
            surplus += ca - cb;
        }
    }
    for (k, &cb) in b {
        let ca = a.get(k).copied().unwrap_or(0);
        if cb > ca {
            deficit += cb - ca;
        }
    }
    surplus.max(deficit).max((size_a - size_b).abs())
}

/// Exact minimum script length from `x` to `y`: bidirectional breadth-first
/// search over the edit graph. States whose admissible lower bound already
/// meets the best known realizable script length are not expanded.
pub fn bfs_ted(x: &Tree, y: &Tree, alphabet: &[Label]) -> usize {
    if x == y {
        return 0;
    }
    // Deleting x down to its root, relabeling, and rebuilding y is always
    // realizable, so the search starts with a finite bound.
    let mut best =
        (x.size() - 1 + y.size() - 1 + usize::from(x.label != y.label)) as i64;

    struct Side {
        dist: HashMap<String, i64>,
        frontier: Vec<Tree>,
        depth: i64,
        target_counts: BTreeMap<String, i64>,
        target_size: i64,
    }
    let mut from_x = Side {
        dist: HashMap::from([(x.serialize(), 0)]),
        frontier: vec![x.clone()],
        depth: 0,
        target_counts: label_counts(y),
        target_size: y.size() as i64,
    };
    let mut from_y = Side {
        dist: HashMap::from([(y.serialize(), 0)]),
        frontier: vec![y.clone()],
        depth: 0,
        target_counts: label_counts(x),
        target_size: x.size() as i64,
    };

    while best > from_x.depth + from_y.depth {
        let (side, other) = if from_x.frontier.len() <= from_y.frontier.len() {
            (&mut from_x, &from_y)
        } else {
            (&mut from_y, &from_x)
        };
        if side.frontier.is_empty() {
            break;
        }
        let mut next = Vec::new();
        let new_depth = side.depth + 1;
        for state in std::mem::take(&mut side.frontier) {
            for edit in all_edits(&state, alphabet) {
                let neighbor = apply_edit(&state, &edit).expect("enumerated edits apply");
                let key = neighbor.serialize();
                if side.dist.contains_key(&key) {
                    continue;
                }
                let bound = lower_bound(
                    &label_counts(&neighbor),
                    neighbor.size() as i64,
                    &side.target_counts,
                    side.target_size,
                );
                if new_depth + bound >= best {
                    continue;
                }
                side.dist.insert(key.clone(), new_depth);
                if let Some(&d_other) = other.dist.get(&key) {
                    best = best.min(new_depth + d_other);
                }
                next.push(neighbor);
            }
        }
        side.frontier = next;
        side.depth = new_depth;
    }
    best as usize
}

// ---------------------------------------------------------------------------
// Kernel oracles: exhaustive fragment enumeration.
//
// Each oracle explodes a tree into the weighted multiset of fragments its
// kernel counts, so that a kernel value is a plain dot product over shared
// fragment keys. The per-side weight of a fragment is the square root of
// the weight its kernel assigns to a matched pair, which makes the dot
// product reproduce the kernel exactly.
// ---------------------------------------------------------------------------

/// Interns fragment keys so bags can be joined on exact integer ids.
#[derive(Default)]
pub struct KeyInterner(HashMap<String, u64>);

impl KeyInterner {
    fn id(&mut self, key: String) -> u64 {
        let next = self.0.len() as u64;
        *self.0.entry(key).or_insert(next)
    }
}

/// Weighted fragment multiset, sorted by key id for merge-join dots.
pub struct FragmentBag(Vec<(u64, f64)>);

impl FragmentBag {
    fn from_map(map: HashMap<String, f64>, interner: &mut KeyInterner) -> Self {
        let mut items: Vec<(u64, f64)> =
            map.into_iter().map(|(k, w)| (interner.id(k), w)).collect();
        items.sort_unstable_by_key(|&(k, _)| k);
        FragmentBag(items)
    }

    pub fn dot(&self, other: &FragmentBag) -> f64 {
        let (mut i, mut j) = (0, 0);
        let mut sum = 0.0;
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].0.cmp(&other.0[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    sum += self.0[i].1 * other.0[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        sum
    }
}

/// Subtree-kernel fragments: every complete subtree, per-side weight
/// `lambda^(size/2)` so a matched pair contributes `lambda^size`.
pub fn st_fragments(tree: &Tree, lambda: f64, interner: &mut KeyInterner) -> FragmentBag {
    let mut map = HashMap::new();
    for (_, node) in tree.preorder() {
        *map.entry(node.serialize()).or_insert(0.0) +=
            lambda.powf(node.size() as f64 / 2.0);
    }
    FragmentBag::from_map(map, interner)
}

/// Subset-tree fragments rooted at `node`: the node is expanded (its full
/// production included); every child is either a frontier leaf or expanded
/// recursively. Weight per side: `sqrt(lambda)` per expanded node.
fn sst_fragments_at(node: &Tree, lambda: f64) -> Vec<(String, f64)> {
    let s = lambda.sqrt();
    // options per child: stay frontier (weight 1) or any expanded fragment
    let mut acc: Vec<(String, f64)> = vec![(String::new(), s)];
    for child in &node.children {
        let mut options: Vec<(String, f64)> =
            vec![(format!("F:{}", child.label.as_str()), 1.0)];
        options.extend(sst_fragments_at(child, lambda));
        let mut next = Vec::with_capacity(acc.len() * options.len());
        for (prefix, w) in &acc {
            for (opt_key, opt_w) in &options {
                let sep = if prefix.is_empty() { "" } else { "," };
                next.push((format!("{prefix}{sep}{opt_key}"), w * opt_w));
            }
        }
        acc = next;
    }
    acc.into_iter()
        .map(|(inner, w)| (format!("E:{}({inner})", node.label.as_str()), w))
        .collect()
}

pub fn sst_fragments(tree: &Tree, lambda: f64, interner: &mut KeyInterner) -> FragmentBag {
    let mut map = HashMap::new();
    for (_, node) in tree.preorder() {
        for (key, w) in sst_fragments_at(node, lambda) {
            *map.entry(key).or_insert(0.0) += w;
        }
    }
    FragmentBag::from_map(map, interner)
}

/// Partial-tree fragments rooted at `node`: any ordered subsequence of the
/// children survives (possibly none), each surviving child recursively a
/// partial-tree fragment. Weight per side: `sqrt(lambda)` per node times
/// `lambda^span` for a nonempty subsequence (span = last - first + 1) or
/// `lambda` for a childless choice.
fn pt_fragments_at(node: &Tree, lambda: f64) -> Vec<(String, f64)> {
    let s = lambda.sqrt();
    let label = node.label.as_str();
    let mut results: Vec<(String, f64)> = vec![(label.to_string(), s * lambda)];
    let m = node.children.len();
    let child_fragments: Vec<Vec<(String, f64)>> =
        node.children.iter().map(|c| pt_fragments_at(c, lambda)).collect();
    // iterate over nonempty subsequences as bitmasks; order is positional
    for mask in 1u32..(1 << m) {
        let picked: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let span = picked[picked.len() - 1] - picked[0] + 1;
        let span_w = lambda.powi(span as i32);
        let mut combos: Vec<(String, f64)> = vec![(String::new(), s * span_w)];
        for &ci in &picked {
            let mut next = Vec::with_capacity(combos.len() * child_fragments[ci].len());
            for (prefix, w) in &combos {
                for (ck, cw) in &child_fragments[ci] {
                    let sep = if prefix.is_empty() { "" } else { "," };
                    next.push((format!("{prefix}{sep}{ck}"), w * cw));
                }
            }
            combos = next;
        }
        for (inner, w) in combos {
            results.push((format!("{label}({inner})"), w));
        }
    }
    results
}

pub fn pt_fragments(tree: &Tree, lambda: f64, interner: &mut KeyInterner) -> FragmentBag {
    let mut map = HashMap::new();
    for (_, node) in tree.preorder() {
        for (key, w) in pt_fragments_at(node, lambda) {
            *map.entry(key).or_insert(0.0) += w;
        }
    }
    FragmentBag::from_map(map, interner)
}

/// Every ordered labeled tree with at most `max_nodes` nodes over the
/// alphabet (3873 trees for 5 nodes over 3 symbols).
pub fn enumerate_trees(max_nodes: usize, alphabet: &[Label]) -> Vec<Tree> {
    fn shapes(n: usize) -> Vec<Tree> {
        let stub = Label::new("s").unwrap();
        if n == 1 {
            return vec![Tree::leaf(stub)];
        }
        let mut out = Vec::new();
        // ordered compositions of n-1 into child subtree sizes
        fn compositions(total: usize) -> Vec<Vec<usize>> {
            if total == 0 {
                return vec![vec![]];
            }
            let mut result = Vec::new();
            for first in 1..=total {
                for rest in compositions(total - first) {
                    let mut v = vec![first];
                    v.extend(rest);
                    result.push(v);
                }
            }
            result
        }
        for sizes in compositions(n - 1) {
            if sizes.is_empty() {
                continue;
            }
            let child_choices: Vec<Vec<Tree>> = sizes.iter().map(|&s| shapes(s)).collect();
            let mut partial: Vec<Vec<Tree>> = vec![vec![]];
            for choices in &child_choices {
                let mut next = Vec::new();
                for p in &partial {
                    for c in choices {
                        let mut q = p.clone();
                        q.push(c.clone());
                        next.push(q);
                    }
                }
                partial = next;
            }
            for children in partial {
                out.push(Tree::new(stub.clone(), children));
            }
        }
        out
    }

    fn relabel(shape: &Tree, digits: &mut impl Iterator<Item = usize>, alphabet: &[Label]) -> Tree {
        let label = alphabet[digits.next().unwrap()].clone();
        Tree::new(label, shape.children.iter().map(|c| relabel(c, digits, alphabet)).collect())
    }

    let mut out = Vec::new();
    for n in 1..=max_nodes {
        for shape in shapes(n) {
            let count = alphabet.len().pow(n as u32);
            for code in 0..count {
                let mut digits = Vec::with_capacity(n);
                let mut c = code;
                for _ in 0..n {
                    digits.push(c % alphabet.len());
                    c /= alphabet.len();
                }
                out.push(relabel(&shape, &mut digits.into_iter(), alphabet));
            }
        }
    }
    out
}
