//! Tree kernels and Gram-matrix machinery for the SVM classifiers.
//!
//! Two kernels are derived from the edit distance: the double-centering
//! (`linear`) kernel `-1/2 * J * D^(2) * J` and the RBF kernel
//! `exp(-1/2 * d^2 / sigma^2)`. Neither is positive semi-definite in
//! general, so [`clip_psd`] projects a Gram matrix onto the PSD cone by
//! zeroing negative eigenvalues.
//!
//! Three convolution kernels count shared fragments directly on the trees,
//! discounted by a decay `lambda`: [`st_kernel`] matches whole subtrees,
//! [`sst_kernel`] matches subset trees (production-closed fragments),
//! [`pt_kernel`] matches partial trees (ordered child subsequences, with
//! the depth decay identified with `lambda`). Each recursion is validated
//! against an exhaustive fragment-enumeration oracle in the test suite.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ted::DistanceMatrix;
use crate::trees::Tree;

/// Which kernel produced a Gram matrix, with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KernelConfig {
    Linear,
    Rbf { sigma: f64 },
    Subtree { lambda: f64 },
    SubsetTree { lambda: f64 },
    PartialTree { lambda: f64 },
}

impl KernelConfig {
    pub fn name(&self) -> &'static str {
        match self {
            KernelConfig::Linear => "linear",
            KernelConfig::Rbf { .. } => "rbf",
            KernelConfig::Subtree { .. } => "st",
            KernelConfig::SubsetTree { .. } => "sst",
            KernelConfig::PartialTree { .. } => "pt",
        }
    }

    /// True for the kernels computed directly on trees (ST/SST/PT).
    pub fn is_tree_kernel(&self) -> bool {
        matches!(
            self,
            KernelConfig::Subtree { .. }
                | KernelConfig::SubsetTree { .. }
                | KernelConfig::PartialTree { .. }
        )
    }
}

impl fmt::Display for KernelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelConfig::Linear => write!(f, "linear"),
            KernelConfig::Rbf { sigma } => write!(f, "rbf(sigma={sigma})"),
            KernelConfig::Subtree { lambda } => write!(f, "st(lambda={lambda})"),
            KernelConfig::SubsetTree { lambda } => write!(f, "sst(lambda={lambda})"),
            KernelConfig::PartialTree { lambda } => write!(f, "pt(lambda={lambda})"),
        }
    }
}

/// How a Gram matrix was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub kernel: KernelConfig,
    pub normalized: bool,
    pub clipped: bool,
}

/// A symmetric kernel matrix with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramMatrix {
    pub matrix: DMatrix<f64>,
    pub provenance: Provenance,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("distance matrix is not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),
    #[error("distance matrix has nonzero diagonal at {0}")]
    NonzeroDiagonal(usize),
    #[error("distance matrix rows have inconsistent lengths")]
    RaggedMatrix,
    #[error("bandwidth must be positive, got {0}")]
    InvalidBandwidth(f64),
    #[error("decay must be positive, got {0}")]
    InvalidDecay(f64),
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("gram i/o failed: {0}")]
    Io(String),
    #[error("malformed gram file: {0}")]
    Malformed(String),
}

#[allow(clippy::needless_range_loop)]
fn validate_distances(d: &DistanceMatrix) -> Result<usize, KernelError> {
    let n = d.len();
    for row in d {
        if row.len() != n {
            return Err(KernelError::RaggedMatrix);
        }
    }
    for i in 0..n {
        if d[i][i] != 0 {
            return Err(KernelError::NonzeroDiagonal(i));
        }
        for j in i + 1..n {
            if d[i][j] != d[j][i] {
                return Err(KernelError::NotSymmetric(i, j));
            }
        }
    }
    Ok(n)
}

/// Double-centering kernel `-1/2 * J * D^(2) * J` over squared distances,
/// with `J = I - (1/n) * 1 * 1^T`. Row and column sums of the result are
/// zero up to rounding.
#[allow(clippy::needless_range_loop)]
pub fn linear_kernel(d: &DistanceMatrix) -> Result<GramMatrix, KernelError> {
    let n = validate_distances(d)?;
    let sq = |i: usize, j: usize| (d[i][j] * d[i][j]) as f64;
    let mut row_mean = vec![0.0; n];
    let mut grand = 0.0;
    for i in 0..n {
        let s: f64 = (0..n).map(|j| sq(i, j)).sum();
        row_mean[i] = s / n as f64;
        grand += s;
    }
    grand /= (n * n) as f64;
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = -0.5 * (sq(i, j) - row_mean[i] - row_mean[j] + grand);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(GramMatrix {
        matrix: k,
        provenance: Provenance {
            kernel: KernelConfig::Linear,
            normalized: false,
            clipped: false,
        },
    })
}

/// RBF kernel `exp(-1/2 * d^2 / sigma^2)`; unit diagonal, entries in (0,1].
pub fn rbf_kernel(d: &DistanceMatrix, sigma: f64) -> Result<GramMatrix, KernelError> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(KernelError::InvalidBandwidth(sigma));
    }
    let n = validate_distances(d)?;
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let dist = d[i][j] as f64;
            let v = (-0.5 * dist * dist / (sigma * sigma)).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(GramMatrix {
        matrix: k,
        provenance: Provenance {
            kernel: KernelConfig::Rbf { sigma },
            normalized: false,
            clipped: false,
        },
    })
}

/// Subtree kernel: counts pairs of structurally identical complete
/// subtrees, each weighted by `lambda^size`.
pub fn st_kernel(x: &Tree, y: &Tree, lambda: f64) -> f64 {
    let mut counts_x: HashMap<String, (f64, usize)> = HashMap::new();
    for (_, node) in x.preorder() {
        let e = counts_x.entry(node.serialize()).or_insert((0.0, node.size()));
        e.0 += 1.0;
    }
    let mut total = 0.0;
    for (_, node) in y.preorder() {
        if let Some(&(cnt, size)) = counts_x.get(&node.serialize()) {
            total += cnt * lambda.powi(size as i32);
        }
    }
    total
}

/// Node table used by the recursive kernels: preorder labels and children
/// as preorder indices.
struct Nodes<'a> {
    labels: Vec<&'a str>,
    children: Vec<Vec<usize>>,
}

impl<'a> Nodes<'a> {
    fn build(tree: &'a Tree) -> Self {
        let mut labels = Vec::with_capacity(tree.size());
        let mut children = Vec::with_capacity(tree.size());
        fn walk<'a>(
            node: &'a Tree,
            labels: &mut Vec<&'a str>,
            children: &mut Vec<Vec<usize>>,
        ) -> usize {
            let me = labels.len();
            labels.push(node.label.as_str());
            children.push(Vec::with_capacity(node.children.len()));
            for child in &node.children {
                let c = walk(child, labels, children);
                children[me].push(c);
            }
            me
        }
        walk(tree, &mut labels, &mut children);
        Nodes { labels, children }
    }

    fn len(&self) -> usize {
        self.labels.len()
    }

    fn production_matches(&self, other: &Nodes<'_>, v: usize, w: usize) -> bool {
        if self.labels[v] != other.labels[w] {
            return false;
        }
        let cv = &self.children[v];
        let cw = &other.children[w];
        cv.len() == cw.len()
            && cv.iter().zip(cw).all(|(&a, &b)| self.labels[a] == other.labels[b])
    }
}

/// Subset tree kernel: matched nodes must share their whole production;
/// each match contributes `lambda * prod_j (1 + delta(child_j, child_j'))`.
pub fn sst_kernel(x: &Tree, y: &Tree, lambda: f64) -> f64 {
    let nx = Nodes::build(x);
    let ny = Nodes::build(y);
    let mut memo = vec![-1.0f64; nx.len() * ny.len()];
    let mut total = 0.0;
    for v in 0..nx.len() {
        for w in 0..ny.len() {
            total += sst_delta(&nx, &ny, v, w, lambda, &mut memo);
        }
    }
    total
}

fn sst_delta(
    nx: &Nodes<'_>,
    ny: &Nodes<'_>,
    v: usize,
    w: usize,
    lambda: f64,
    memo: &mut [f64],
) -> f64 {
    let key = v * ny.len() + w;
    if memo[key] >= 0.0 {
        return memo[key];
    }
    let value = if !nx.production_matches(ny, v, w) {
        0.0
    } else {
        let mut prod = lambda;
        for k in 0..nx.children[v].len() {
            let cv = nx.children[v][k];
            let cw = ny.children[w][k];
            prod *= 1.0 + sst_delta(nx, ny, cv, cw, lambda, memo);
        }
        prod
    };
    memo[key] = value;
    value
}

/// Partial tree kernel: matched nodes need only equal labels; child
/// matches range over equal-length ordered subsequences, discounted by
/// `lambda^(span_1 + span_2)` where a span is `last - first + 1`. The
/// depth decay is identified with `lambda`, so a lone matched node pair
/// contributes `lambda^3`.
pub fn pt_kernel(x: &Tree, y: &Tree, lambda: f64) -> f64 {
    let nx = Nodes::build(x);
    let ny = Nodes::build(y);
    let mut memo = vec![-1.0f64; nx.len() * ny.len()];
    let mut total = 0.0;
    for v in 0..nx.len() {
        for w in 0..ny.len() {
            total += pt_delta(&nx, &ny, v, w, lambda, &mut memo);
        }
    }
    total
}

fn pt_delta(
    nx: &Nodes<'_>,
    ny: &Nodes<'_>,
    v: usize,
    w: usize,
    lambda: f64,
    memo: &mut [f64],
) -> f64 {
    let key = v * ny.len() + w;
    if memo[key] >= 0.0 {
        return memo[key];
    }
    let value = if nx.labels[v] != ny.labels[w] {
        0.0
    } else {
        let m = nx.children[v].len();
        let n = ny.children[w].len();
        // G(i,j) sums subsequence pairs whose last elements are child i of
        // v and child j of w; A carries G forward with one lambda per step
        // of span on either side.
        let mut subseq_sum = 0.0;
        if m > 0 && n > 0 {
            let mut a = vec![vec![0.0f64; n + 1]; m + 1];
            for i in 1..=m {
                for j in 1..=n {
                    let cv = nx.children[v][i - 1];
                    let cw = ny.children[w][j - 1];
                    let pair = pt_delta(nx, ny, cv, cw, lambda, memo);
                    let g = pair * lambda * lambda * (1.0 + a[i - 1][j - 1]);
                    subseq_sum += g;
                    a[i][j] = g + lambda * a[i - 1][j] + lambda * a[i][j - 1]
                        - lambda * lambda * a[i - 1][j - 1];
                }
            }
        }
        lambda * (lambda * lambda + subseq_sum)
    };
    memo[key] = value;
    value
}

/// Evaluates one tree-kernel value between two trees.
///
/// Panics if called with a distance-based configuration; those kernels
/// only exist at the Gram-matrix level.
pub fn tree_kernel(config: &KernelConfig, x: &Tree, y: &Tree) -> Result<f64, KernelError> {
    match config {
        KernelConfig::Subtree { lambda } => {
            check_decay(*lambda)?;
            Ok(st_kernel(x, y, *lambda))
        }
        KernelConfig::SubsetTree { lambda } => {
            check_decay(*lambda)?;
            Ok(sst_kernel(x, y, *lambda))
        }
        KernelConfig::PartialTree { lambda } => {
            check_decay(*lambda)?;
            Ok(pt_kernel(x, y, *lambda))
        }
        _ => panic!("tree_kernel called with a distance-based kernel"),
    }
}

fn check_decay(lambda: f64) -> Result<(), KernelError> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(KernelError::InvalidDecay(lambda))
    }
}

/// Assembles the Gram matrix of a tree kernel over `trees`, computing one
/// triangle and mirroring so symmetry is exact. With `normalize` set,
/// entries become `k(x,y) / sqrt(k(x,x) * k(y,y))`.
pub fn tree_kernel_gram(
    trees: &[Tree],
    config: &KernelConfig,
    normalize: bool,
) -> Result<GramMatrix, KernelError> {
    let n = trees.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = tree_kernel(config, &trees[i], &trees[j])?;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    if normalize {
        let diag: Vec<f64> = (0..n).map(|i| k[(i, i)]).collect();
        for i in 0..n {
            for j in 0..n {
                let denom = (diag[i] * diag[j]).sqrt();
                k[(i, j)] = if denom > 0.0 { k[(i, j)] / denom } else { 0.0 };
            }
        }
    }
    Ok(GramMatrix {
        matrix: k,
        provenance: Provenance { kernel: config.clone(), normalized: normalize, clipped: false },
    })
}

/// Builds the Gram matrix for any kernel configuration; distance-based
/// kernels get their pairwise distances computed here. The normalization
/// flag only applies to tree kernels.
pub fn gram(
    trees: &[Tree],
    config: &KernelConfig,
    normalize: bool,
) -> Result<GramMatrix, KernelError> {
    match config {
        KernelConfig::Linear => linear_kernel(&crate::ted::pairwise_ted(trees)),
        KernelConfig::Rbf { sigma } => rbf_kernel(&crate::ted::pairwise_ted(trees), *sigma),
        _ => tree_kernel_gram(trees, config, normalize),
    }
}

/// Projects a symmetric matrix onto the PSD cone: eigendecompose, zero the
/// negative eigenvalues, reconstruct. Already-PSD input is reproduced up
/// to eigensolver rounding; the operation is idempotent at that tolerance.
pub fn clip_psd(gram: &GramMatrix) -> Result<GramMatrix, KernelError> {
    let projector = clip_projector(&gram.matrix)?;
    let mut clipped = projector * &gram.matrix;
    // mirror to remove rounding asymmetry
    let n = clipped.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (clipped[(i, j)] + clipped[(j, i)]);
            clipped[(i, j)] = v;
            clipped[(j, i)] = v;
        }
    }
    Ok(GramMatrix {
        matrix: clipped,
        provenance: Provenance { clipped: true, ..gram.provenance.clone() },
    })
}

/// Orthogonal projector `U * 1[lambda > 0] * U^T` onto the positive
/// eigenspace of a symmetric matrix. Multiplying a raw similarity row by
/// this projector is the out-of-sample counterpart of [`clip_psd`]: on the
/// matrix's own rows it reproduces the clipped matrix exactly, because
/// `K * P = U * max(Lambda, 0) * U^T`.
pub fn clip_projector(k: &DMatrix<f64>) -> Result<DMatrix<f64>, KernelError> {
    if k.iter().any(|v| !v.is_finite()) {
        return Err(KernelError::NonFinite);
    }
    let eig = SymmetricEigen::new(k.clone());
    let n = k.nrows();
    let mut keep = DMatrix::zeros(n, n);
    for (i, &val) in eig.eigenvalues.iter().enumerate() {
        keep[(i, i)] = if val > 0.0 { 1.0 } else { 0.0 };
    }
    Ok(&eig.eigenvectors * keep * eig.eigenvectors.transpose())
}

/// Writes a Gram matrix as plain text (first line `n`, then `n` rows of
/// `n` decimal values) plus a `<path>.meta.json` sidecar describing the
/// kernel, its hyperparameters and the normalization flag.
pub fn save_gram(gram: &GramMatrix, path: &Path) -> Result<(), KernelError> {
    let n = gram.n();
    let mut out = String::new();
    out.push_str(&format!("{n}\n"));
    for i in 0..n {
        let row: Vec<String> = (0..n).map(|j| format!("{}", gram.matrix[(i, j)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| KernelError::Io(e.to_string()))?;
    let meta = serde_json::to_string_pretty(&gram.provenance)
        .map_err(|e| KernelError::Io(e.to_string()))?;
    std::fs::write(meta_path(path), meta).map_err(|e| KernelError::Io(e.to_string()))
}

/// Reads a Gram matrix written by [`save_gram`].
pub fn load_gram(path: &Path) -> Result<GramMatrix, KernelError> {
    let text = std::fs::read_to_string(path).map_err(|e| KernelError::Io(e.to_string()))?;
    let mut lines = text.lines();
    let n: usize = lines
        .next()
        .ok_or_else(|| KernelError::Malformed("empty file".into()))?
        .trim()
        .parse()
        .map_err(|e| KernelError::Malformed(format!("bad size line: {e}")))?;
    let mut matrix = DMatrix::zeros(n, n);
    for i in 0..n {
        let line =
            lines.next().ok_or_else(|| KernelError::Malformed(format!("missing row {i}")))?;
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| KernelError::Malformed(format!("row {i}: {e}")))?;
        if values.len() != n {
            return Err(KernelError::Malformed(format!(
                "row {i} has {} values, expected {n}",
                values.len()
            )));
        }
        for (j, v) in values.into_iter().enumerate() {
            matrix[(i, j)] = v;
        }
    }
    let meta =
        std::fs::read_to_string(meta_path(path)).map_err(|e| KernelError::Io(e.to_string()))?;
    let provenance: Provenance =
        serde_json::from_str(&meta).map_err(|e| KernelError::Malformed(e.to_string()))?;
    Ok(GramMatrix { matrix, provenance })
}

fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}
