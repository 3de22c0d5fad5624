//! Tree edit distance and backtracing.
//!
//! [`ted`] computes the minimum number of edits (unit cost for deletion,
//! insertion and relabeling, zero for matching labels) that transform one
//! tree into another, as the Zhang-Shasha dynamic program over postorder
//! forests restarted at keyroots. Because edits always keep the root in
//! place (see [`crate::edits`]), the top-level cell pairs the two roots;
//! everything below is the classic forest recurrence. The result is a
//! metric and never exceeds `size(x) + size(y)`.
//!
//! [`backtrace`] recovers a co-optimal edit script witnessing the distance:
//! the script has length `ted(x, y)`, every prefix is applicable to `x`,
//! and applying it yields `y`. Backtracing re-derives forest tables on
//! demand, which costs `O(|x|·|y|·(|x|+|y|))`. When several co-optimal
//! moves exist, matches and relabelings are preferred over deletions,
//! deletions over insertions, so the script is deterministic.

use std::collections::BTreeSet;
use std::collections::HashMap;

use crate::edits::{EditScript, TreeEdit};
use crate::trees::Tree;

/// Symmetric matrix of pairwise distances, indexed `[i][j]`.
pub type DistanceMatrix = Vec<Vec<usize>>;

/// Tree edit distance between `x` and `y`.
pub fn ted(x: &Tree, y: &Tree) -> usize {
    let mut interner = Interner::default();
    let fx = Flat::build(x, &mut interner);
    let fy = Flat::build(y, &mut interner);
    solve(&fx, &fy).1
}

/// A shortest edit script transforming `x` into `y`.
///
/// Deletions come first (in decreasing preorder index of `x`), then
/// relabelings, then insertions in increasing preorder index of the
/// evolving tree; this ordering keeps every prefix applicable.
pub fn backtrace(x: &Tree, y: &Tree) -> EditScript {
    let mut interner = Interner::default();
    let fx = Flat::build(x, &mut interner);
    let fy = Flat::build(y, &mut interner);
    let (mut td, _) = solve(&fx, &fy);
    let pairs = extract_mapping(&fx, &fy, &mut td);
    script_from_mapping(&fx, &fy, &pairs)
}

/// All pairwise distances among `trees`; zero diagonal, symmetric.
#[allow(clippy::needless_range_loop)]
pub fn pairwise_ted(trees: &[Tree]) -> DistanceMatrix {
    let n = trees.len();
    let mut d = vec![vec![0usize; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = ted(&trees[i], &trees[j]);
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

/// Mean pairwise distance over unordered distinct pairs; 0 for fewer than
/// two trees.
pub fn mean_pairwise_ted(trees: &[Tree]) -> f64 {
    let n = trees.len();
    if n < 2 {
        return 0.0;
    }
    let d = pairwise_ted(trees);
    let sum: usize = d.iter().enumerate().map(|(i, row)| row[i + 1..].iter().sum::<usize>()).sum();
    sum as f64 / (n * (n - 1) / 2) as f64
}

#[derive(Default)]
struct Interner(HashMap<String, u32>);

impl Interner {
    fn id(&mut self, label: &str) -> u32 {
        let next = self.0.len() as u32;
        *self.0.entry(label.to_string()).or_insert(next)
    }
}

/// Postorder view of one tree. All per-node arrays are 1-based.
struct Flat {
    n: usize,
    /// Interned label per postorder index.
    labels: Vec<u32>,
    /// Leftmost leaf descendant (postorder) per postorder index.
    lld: Vec<usize>,
    /// Keyroots in ascending postorder; the root is always last.
    keyroots: Vec<usize>,
    post_to_pre: Vec<usize>,
    /// Parent preorder index per preorder index (0 for the root).
    pre_parent: Vec<usize>,
    /// Subtree size per preorder index.
    pre_size: Vec<usize>,
    /// Original label text per preorder index.
    pre_label: Vec<String>,
}

impl Flat {
    fn build(tree: &Tree, interner: &mut Interner) -> Flat {
        let n = tree.size();
        let mut flat = Flat {
            n,
            labels: vec![0; n + 1],
            lld: vec![0; n + 1],
            keyroots: Vec::new(),
            post_to_pre: vec![0; n + 1],
            pre_parent: vec![0; n + 1],
            pre_size: vec![0; n + 1],
            pre_label: vec![String::new(); n + 1],
        };
        let mut pre_counter = 0usize;
        let mut post_counter = 0usize;
        walk(tree, 0, interner, &mut flat, &mut pre_counter, &mut post_counter);

        fn walk(
            node: &Tree,
            parent_pre: usize,
            interner: &mut Interner,
            flat: &mut Flat,
            pre: &mut usize,
            post: &mut usize,
        ) -> (usize, usize, usize) {
            *pre += 1;
            let my_pre = *pre;
            flat.pre_parent[my_pre] = parent_pre;
            flat.pre_label[my_pre] = node.label.as_str().to_string();
            let mut my_lld = 0usize;
            let mut my_size = 1usize;
            for (k, child) in node.children.iter().enumerate() {
                let (child_post, child_lld, child_size) =
                    walk(child, my_pre, interner, flat, pre, post);
                let _ = child_post;
                if k == 0 {
                    my_lld = child_lld;
                }
                my_size += child_size;
            }
            *post += 1;
            let my_post = *post;
            if node.children.is_empty() {
                my_lld = my_post;
            }
            flat.labels[my_post] = interner.id(node.label.as_str());
            flat.lld[my_post] = my_lld;
            flat.post_to_pre[my_post] = my_pre;
            flat.pre_size[my_pre] = my_size;
            (my_post, my_lld, my_size)
        }

        // v is a keyroot iff no later node shares its leftmost leaf.
        let mut seen = vec![false; n + 2];
        let mut keyroots = Vec::new();
        for v in (1..=n).rev() {
            if !seen[flat.lld[v]] {
                keyroots.push(v);
                seen[flat.lld[v]] = true;
            }
        }
        keyroots.reverse();
        flat.keyroots = keyroots;
        flat
    }
}

fn rep_cost(a: u32, b: u32) -> usize {
    usize::from(a != b)
}

/// Fills the subtree-distance table and returns it with the distance.
fn solve(x: &Flat, y: &Flat) -> (Vec<Vec<usize>>, usize) {
    let mut td = vec![vec![0usize; y.n + 1]; x.n + 1];
    let mut root_table = Vec::new();
    for &ki in &x.keyroots {
        for &kj in &y.keyroots {
            root_table = forest_table(x, y, ki, kj, &mut td);
        }
    }
    // The last keyroot pair is the pair of roots; the cell just below the
    // roots is the distance between the children forests.
    let dist = root_table[x.n - 1][y.n - 1] + rep_cost(x.labels[x.n], y.labels[y.n]);
    (td, dist)
}

/// Forest-distance table for the keyroot pair `(i, j)`.
///
/// Row `r` covers the postorder prefix `lld(i) .. lld(i)+r-1` of `x` (row 0
/// is the empty forest), columns likewise for `y`. Writes subtree distances
/// into `td` at aligned cells; rewriting an existing entry is harmless
/// because the recurrence is deterministic.
#[allow(clippy::needless_range_loop)]
fn forest_table(x: &Flat, y: &Flat, i: usize, j: usize, td: &mut [Vec<usize>]) -> Vec<Vec<usize>> {
    let lx = x.lld[i];
    let ly = y.lld[j];
    let rows = i - lx + 2;
    let cols = j - ly + 2;
    let mut f = vec![vec![0usize; cols]; rows];
    for r in 1..rows {
        f[r][0] = r;
    }
    for c in 1..cols {
        f[0][c] = c;
    }
    for r in 1..rows {
        let a = lx + r - 1;
        for c in 1..cols {
            let b = ly + c - 1;
            let del = f[r - 1][c] + 1;
            let ins = f[r][c - 1] + 1;
            if x.lld[a] == lx && y.lld[b] == ly {
                let diag = f[r - 1][c - 1] + rep_cost(x.labels[a], y.labels[b]);
                let v = del.min(ins).min(diag);
                f[r][c] = v;
                td[a][b] = v;
            } else {
                let r2 = x.lld[a] - lx;
                let c2 = y.lld[b] - ly;
                let jump = f[r2][c2] + td[a][b];
                f[r][c] = del.min(ins).min(jump);
            }
        }
    }
    f
}

/// Recovers one co-optimal mapping as postorder index pairs. The root pair
/// is always part of the mapping.
fn extract_mapping(x: &Flat, y: &Flat, td: &mut [Vec<usize>]) -> Vec<(usize, usize)> {
    let mut pairs = vec![(x.n, y.n)];
    let mut subtree_stack: Vec<(usize, usize)> = Vec::new();

    // Top level: the roots are matched; align their children forests.
    let f = forest_table(x, y, x.n, y.n, td);
    walk_cells(x, y, x.n, y.n, &f, x.n - 1, y.n - 1, td, &mut pairs, &mut subtree_stack);

    while let Some((i, j)) = subtree_stack.pop() {
        let f = forest_table(x, y, i, j, td);
        let start_r = i - x.lld[i] + 1;
        let start_c = j - y.lld[j] + 1;
        walk_cells(x, y, i, j, &f, start_r, start_c, td, &mut pairs, &mut subtree_stack);
    }
    pairs
}

/// Walks a forest table from `(r, c)` back to the empty-forest corner,
/// recording matched pairs and deferring subtree jumps. Preference at ties:
/// match/relabel, then deletion, then insertion.
#[allow(clippy::too_many_arguments)]
fn walk_cells(
    x: &Flat,
    y: &Flat,
    i: usize,
    j: usize,
    f: &[Vec<usize>],
    mut r: usize,
    mut c: usize,
    td: &[Vec<usize>],
    pairs: &mut Vec<(usize, usize)>,
    subtree_stack: &mut Vec<(usize, usize)>,
) {
    let lx = x.lld[i];
    let ly = y.lld[j];
    while r > 0 || c > 0 {
        if r > 0 && c > 0 {
            let a = lx + r - 1;
            let b = ly + c - 1;
            if x.lld[a] == lx && y.lld[b] == ly {
                let diag = f[r - 1][c - 1] + rep_cost(x.labels[a], y.labels[b]);
                if f[r][c] == diag {
                    pairs.push((a, b));
                    r -= 1;
                    c -= 1;
                    continue;
                }
            } else {
                let r2 = x.lld[a] - lx;
                let c2 = y.lld[b] - ly;
                if f[r][c] == f[r2][c2] + td[a][b] {
                    subtree_stack.push((a, b));
                    r = r2;
                    c = c2;
                    continue;
                }
            }
        }
        if r > 0 && f[r][c] == f[r - 1][c] + 1 {
            r -= 1;
            continue;
        }
        debug_assert!(c > 0 && f[r][c] == f[r][c - 1] + 1);
        c -= 1;
    }
}

/// Turns a mapping into a sequentially applicable script: deletions in
/// decreasing preorder of `x`, then relabelings, then insertions in
/// increasing preorder of `y`.
fn script_from_mapping(x: &Flat, y: &Flat, pairs: &[(usize, usize)]) -> EditScript {
    // Postorder pairs -> preorder pairs, sorted by x preorder. A valid
    // mapping preserves preorder order, so the y side is sorted too.
    let mut pre_pairs: Vec<(usize, usize)> =
        pairs.iter().map(|&(a, b)| (x.post_to_pre[a], y.post_to_pre[b])).collect();
    pre_pairs.sort_unstable();

    let mapped_x: BTreeSet<usize> = pre_pairs.iter().map(|&(i, _)| i).collect();
    let mapped_y: BTreeSet<usize> = pre_pairs.iter().map(|&(_, j)| j).collect();

    let mut edits = Vec::new();

    // Deleting the largest preorder index first leaves the index of every
    // remaining node unchanged.
    for i in (1..=x.n).rev() {
        if !mapped_x.contains(&i) {
            edits.push(TreeEdit::Del(i));
        }
    }

    // After the deletions the k-th kept node sits at preorder index k.
    for (rank, &(i, j)) in pre_pairs.iter().enumerate() {
        if x.pre_label[i] != y.pre_label[j] {
            let label = crate::trees::Label::new(&y.pre_label[j])
                .expect("tree labels are valid by construction");
            edits.push(TreeEdit::Rep(rank + 1, label));
        }
    }

    // Insert missing y nodes in increasing preorder. `present` tracks which
    // y nodes exist in the evolving tree; because node deletion and
    // insertion preserve relative preorder, the evolving tree is exactly y
    // restricted to `present`, and the rank of a y node in `present` is its
    // current preorder index.
    let mut present = mapped_y.clone();
    for w in 1..=y.n {
        if present.contains(&w) {
            continue;
        }
        let parent = y.pre_parent[w];
        debug_assert!(parent != 0 && present.contains(&parent), "parent must precede child");
        let parent_rank = present.range(..=parent).count();
        // Children of `parent` in the evolving tree: present nodes whose
        // nearest present ancestor is `parent`.
        let mut position = 1usize;
        let mut adopted = 0usize;
        let w_end = w + y.pre_size[w] - 1;
        for &u in present.range(parent + 1..) {
            let mut anc = y.pre_parent[u];
            while anc != 0 && !present.contains(&anc) {
                anc = y.pre_parent[anc];
            }
            if anc != parent {
                continue;
            }
            if u < w {
                position += 1;
            } else if u <= w_end {
                adopted += 1;
            }
        }
        let label = crate::trees::Label::new(&y.pre_label[w])
            .expect("tree labels are valid by construction");
        edits.push(TreeEdit::Ins { parent: parent_rank, position, adopted, label });
        present.insert(w);
    }

    EditScript::new(edits)
}
