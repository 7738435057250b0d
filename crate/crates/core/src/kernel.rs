//! Embedding-augmented contiguous-subtree convolution kernel.
//!
//! For nodes `x`, `y` the node similarity is
//! `k = k_w² (k_w² + k_e + k_r)` with the sparse RBF word kernel
//! `k_w = exp((w_x·w_y − 1)/β) · max(0, (w_x·w_y − α)/(1 − α))`, an edge
//! kernel `k_e` and the role indicator `k_r`. Two trees score
//! `K = k(roots) + K_c(children)` when `k(roots) > 0`, where `K_c` sums
//! `λ^l · (Σ_s K) · (Π_s k)` over every pair of equal-length contiguous
//! child runs.
//!
//! [`tree_kernel_dp_with`] evaluates `K_c` with two tables filled from the
//! end of both child lists, per start pair `(p, q)`:
//!
//! ```text
//! D[p][q] = λ k_pq (1 + D[p+1][q+1])
//! C[p][q] = λ k_pq (K_pq (1 + D[p+1][q+1]) + C[p+1][q+1])
//! ```
//!
//! `D` is the λ-weighted sum of similarity products over all run lengths
//! starting at `(p, q)` and `C` the same sum weighted by the run's subtree
//! kernels, so `K_c = Σ C[p][q]`. Both are zero wherever `k_pq = 0`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edges::EdgeVectorStore;
use crate::embedding::cosine;
use crate::gram::GramMatrix;
use crate::graph::{EdgeLabel, KernelTree, TreeNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EdgeKernelMode {
    /// `k_e = 1` when the edge label names are equal.
    #[default]
    Identity,
    /// Sparse RBF on learned edge-label vectors.
    EmbeddedSparseRbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelParams {
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub edge_mode: EdgeKernelMode,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams {
            lambda: 0.99,
            alpha: 0.4,
            beta: 1.0,
            edge_mode: EdgeKernelMode::Identity,
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<(), KernelError> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(KernelError::InvalidParams(format!("lambda must be in (0, 1), got {}", self.lambda)));
        }
        if !(self.alpha >= 0.0 && self.alpha < 1.0) {
            return Err(KernelError::InvalidParams(format!("alpha must be in [0, 1), got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(KernelError::InvalidParams(format!("beta must be positive, got {}", self.beta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("invalid kernel parameters: {0}")]
    InvalidParams(String),
    #[error("no learned vector for edge label `{0}`")]
    MissingEdgeVector(String),
    #[error("embedded edge kernel requested without an edge vector store")]
    MissingEdgeStore,
    #[error("self-kernel of `{0}` is zero")]
    DegenerateSelfKernel(String),
    #[error("gram needs at least one tree")]
    Empty,
}

/// `exp((c − 1)/β) · max(0, (c − α)/(1 − α))` for a cosine `c`.
pub fn sparse_rbf(c: f64, alpha: f64, beta: f64) -> f64 {
    let gate = (c - alpha) / (1.0 - alpha);
    if gate <= 0.0 {
        return 0.0;
    }
    ((c - 1.0) / beta).exp() * gate
}

#[derive(Debug, Clone, Copy)]
pub struct TreeKernel<'a> {
    params: KernelParams,
    edges: Option<&'a EdgeVectorStore>,
}

impl<'a> TreeKernel<'a> {
    pub fn new(params: KernelParams, edges: Option<&'a EdgeVectorStore>) -> Result<Self, KernelError> {
        params.validate()?;
        if params.edge_mode == EdgeKernelMode::EmbeddedSparseRbf && edges.is_none() {
            return Err(KernelError::MissingEdgeStore);
        }
        Ok(TreeKernel { params, edges })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    /// Word similarity; falls back to label equality when either node has
    /// no embedding.
    pub fn word_kernel(&self, x: &TreeNode, y: &TreeNode) -> f64 {
        match (&x.embedding, &y.embedding) {
            (Some(a), Some(b)) => sparse_rbf(cosine(a.as_slice(), b.as_slice()), self.params.alpha, self.params.beta),
            _ => f64::from(u8::from(x.label == y.label)),
        }
    }

    pub fn edge_kernel(&self, x: &EdgeLabel, y: &EdgeLabel) -> Result<f64, KernelError> {
        if x.name == y.name {
            return Ok(1.0);
        }
        match self.params.edge_mode {
            EdgeKernelMode::Identity => Ok(0.0),
            EdgeKernelMode::EmbeddedSparseRbf => {
                let store = self.edges.ok_or(KernelError::MissingEdgeStore)?;
                let vx = store
                    .vector(x)
                    .ok_or_else(|| KernelError::MissingEdgeVector(x.name.clone()))?;
                let vy = store
                    .vector(y)
                    .ok_or_else(|| KernelError::MissingEdgeVector(y.name.clone()))?;
                Ok(sparse_rbf(cosine(vx.as_slice(), vy.as_slice()), self.params.alpha, self.params.beta))
            }
        }
    }

    pub fn node_kernel(&self, x: &TreeNode, y: &TreeNode) -> Result<f64, KernelError> {
        let kw = self.word_kernel(x, y);
        if kw == 0.0 {
            return Ok(0.0);
        }
        let ke = self.edge_kernel(&x.edge, &y.edge)?;
        let kr = f64::from(u8::from(x.role == y.role));
        let kw2 = kw * kw;
        Ok(kw2 * (kw2 + ke + kr))
    }

    /// Unnormalized kernel by dynamic programming.
    pub fn tree_kernel(&self, a: &KernelTree, b: &KernelTree) -> Result<f64, KernelError> {
        tree_kernel_dp_with(&a.root, &b.root, self.params.lambda, |x, y| self.node_kernel(x, y))
    }

    /// Unnormalized kernel by direct enumeration of child runs.
    pub fn tree_kernel_naive(&self, a: &KernelTree, b: &KernelTree) -> Result<f64, KernelError> {
        tree_kernel_naive_with(&a.root, &b.root, self.params.lambda, &|x, y| self.node_kernel(x, y))
    }

    pub fn normalized(&self, a: &KernelTree, b: &KernelTree) -> Result<f64, KernelError> {
        let kaa = self.tree_kernel(a, a)?;
        let kbb = self.tree_kernel(b, b)?;
        let id = |t: &KernelTree| format!("{}/{}", t.provenance.sentence_id, t.root.label);
        if kaa == 0.0 {
            return Err(KernelError::DegenerateSelfKernel(id(a)));
        }
        if kbb == 0.0 {
            return Err(KernelError::DegenerateSelfKernel(id(b)));
        }
        Ok(self.tree_kernel(a, b)? / (kaa * kbb).sqrt())
    }

    fn self_kernels(&self, trees: &[(&str, &KernelTree)]) -> Result<Vec<f64>, KernelError> {
        trees
            .par_iter()
            .map(|(id, t)| {
                let k = self.tree_kernel(t, t)?;
                if k == 0.0 {
                    Err(KernelError::DegenerateSelfKernel(id.to_string()))
                } else {
                    Ok(k)
                }
            })
            .collect()
    }

    /// Normalized Gram matrix; only the upper triangle is evaluated.
    pub fn gram(&self, trees: &[(&str, &KernelTree)]) -> Result<GramMatrix, KernelError> {
        if trees.is_empty() {
            return Err(KernelError::Empty);
        }
        let n = trees.len();
        let diag = self.self_kernels(trees)?;
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let vals: Vec<f64> = pairs
            .par_iter()
            .map(|&(i, j)| Ok(self.tree_kernel(trees[i].1, trees[j].1)? / (diag[i] * diag[j]).sqrt()))
            .collect::<Result<_, KernelError>>()?;
        let mut m = DMatrix::identity(n, n);
        for (&(i, j), v) in pairs.iter().zip(vals) {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        let ids = trees.iter().map(|(id, _)| id.to_string()).collect();
        Ok(GramMatrix::new(ids, m, true))
    }

    /// Normalized kernel between every row tree and every column tree.
    pub fn cross(&self, rows: &[(&str, &KernelTree)], cols: &[(&str, &KernelTree)]) -> Result<DMatrix<f64>, KernelError> {
        let dr = self.self_kernels(rows)?;
        let dc = self.self_kernels(cols)?;
        let vals: Vec<f64> = (0..rows.len() * cols.len())
            .into_par_iter()
            .map(|k| {
                let (i, j) = (k / cols.len(), k % cols.len());
                Ok(self.tree_kernel(rows[i].1, cols[j].1)? / (dr[i] * dc[j]).sqrt())
            })
            .collect::<Result<_, KernelError>>()?;
        Ok(DMatrix::from_row_slice(rows.len(), cols.len(), &vals))
    }
}

/// Sum in a fixed order so the result does not depend on traversal order.
pub(crate) fn sorted_sum(mut v: Vec<f64>) -> f64 {
    v.sort_unstable_by(f64::total_cmp);
    v.iter().sum()
}

fn flatten(root: &TreeNode) -> (Vec<&TreeNode>, Vec<Vec<usize>>) {
    let mut nodes = Vec::new();
    let mut kids: Vec<Vec<usize>> = Vec::new();
    fn go<'t>(n: &'t TreeNode, nodes: &mut Vec<&'t TreeNode>, kids: &mut Vec<Vec<usize>>) -> usize {
        let me = nodes.len();
        nodes.push(n);
        kids.push(Vec::new());
        for c in &n.children {
            let ci = go(c, nodes, kids);
            kids[me].push(ci);
        }
        me
    }
    go(root, &mut nodes, &mut kids);
    (nodes, kids)
}

struct Dp<'t, F> {
    a: Vec<&'t TreeNode>,
    ak: Vec<Vec<usize>>,
    b: Vec<&'t TreeNode>,
    bk: Vec<Vec<usize>>,
    lambda: f64,
    sim: F,
    // (k, K) per pre-order pair
    memo: Vec<Option<(f64, f64)>>,
}

impl<F, E> Dp<'_, F>
where
    F: FnMut(&TreeNode, &TreeNode) -> Result<f64, E>,
{
    fn pair(&mut self, i: usize, j: usize) -> Result<(f64, f64), E> {
        let slot = i * self.b.len() + j;
        if let Some(v) = self.memo[slot] {
            return Ok(v);
        }
        let k = (self.sim)(self.a[i], self.b[j])?;
        let big = if k == 0.0 { 0.0 } else { k + self.children(i, j)? };
        self.memo[slot] = Some((k, big));
        Ok((k, big))
    }

    fn children(&mut self, i: usize, j: usize) -> Result<f64, E> {
        let ca = self.ak[i].clone();
        let cb = self.bk[j].clone();
        let (m, n) = (ca.len(), cb.len());
        if m == 0 || n == 0 {
            return Ok(0.0);
        }
        let w = n + 1;
        let mut d = vec![0.0; (m + 1) * w];
        let mut c = vec![0.0; (m + 1) * w];
        let mut terms = Vec::with_capacity(m * n);
        for p in (0..m).rev() {
            for q in (0..n).rev() {
                let (kpq, big) = self.pair(ca[p], cb[q])?;
                if kpq == 0.0 {
                    continue;
                }
                let dn = d[(p + 1) * w + q + 1];
                let cn = c[(p + 1) * w + q + 1];
                let lk = self.lambda * kpq;
                d[p * w + q] = lk * (1.0 + dn);
                c[p * w + q] = lk * (big * (1.0 + dn) + cn);
                terms.push(c[p * w + q]);
            }
        }
        Ok(sorted_sum(terms))
    }
}

/// Tree kernel for an arbitrary node similarity, by dynamic programming
/// with subtree pairs memoized by pre-order index.
pub fn tree_kernel_dp_with<F, E>(a: &TreeNode, b: &TreeNode, lambda: f64, sim: F) -> Result<f64, E>
where
    F: FnMut(&TreeNode, &TreeNode) -> Result<f64, E>,
{
    let (an, ak) = flatten(a);
    let (bn, bk) = flatten(b);
    let size = an.len() * bn.len();
    let mut dp = Dp {
        a: an,
        ak,
        b: bn,
        bk,
        lambda,
        sim,
        memo: vec![None; size],
    };
    Ok(dp.pair(0, 0)?.1)
}

/// Reference evaluation: child-pair kernels are computed once per node
/// pair, then every run pair is enumerated explicitly.
pub fn tree_kernel_naive_with<F, E>(a: &TreeNode, b: &TreeNode, lambda: f64, sim: &F) -> Result<f64, E>
where
    F: Fn(&TreeNode, &TreeNode) -> Result<f64, E>,
{
    let k = sim(a, b)?;
    if k == 0.0 {
        return Ok(0.0);
    }
    let (m, n) = (a.children.len(), b.children.len());
    let mut ks = vec![vec![0.0; n]; m];
    let mut bigs = vec![vec![0.0; n]; m];
    for p in 0..m {
        for q in 0..n {
            ks[p][q] = sim(&a.children[p], &b.children[q])?;
            bigs[p][q] = tree_kernel_naive_with(&a.children[p], &b.children[q], lambda, sim)?;
        }
    }
    let mut total = 0.0;
    for p in 0..m {
        for q in 0..n {
            for l in 1..=(m - p).min(n - q) {
                let mut sum = 0.0;
                let mut prod = 1.0;
                for s in 0..l {
                    sum += bigs[p + s][q + s];
                    prod *= ks[p + s][q + s];
                }
                total += lambda.powi(l as i32) * sum * prod;
            }
        }
    }
    Ok(k + total)
}

#[cfg(test)]
mod tests;
