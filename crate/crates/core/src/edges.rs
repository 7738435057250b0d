//! Learned edge-label vectors.
//!
//! Each edge label `i` gets a `d × d` matrix `A_i` that carries a child's
//! embedding towards its parent's, `y ≈ x A_i`, and two siblings hanging
//! off one parent should agree after transport, `z_i A_i ≈ z_j A_j`. With
//!
//! ```text
//! M_i  = X_iᵀX_i + Σ_j Z_i^{ij}ᵀ Z_i^{ij}
//! B_i  = X_iᵀY_i
//! Q_ij = Z_i^{ij}ᵀ Z_j^{ij}
//! ```
//!
//! the matrices solve `M_i A_i = B_i + Σ_j Q_ij A_j` for every `i`. The
//! solver sweeps the labels in a fixed order, updating one block at a time
//! from the latest values of the others:
//!
//! ```text
//! (M_i + εI) A_i' = B_i + Σ_j Q_ij A_j + ε A_i
//! ```
//!
//! The `ε A_i` term keeps every update well posed without moving the fixed
//! point. The recorded residual of a sweep is `Σ_i ‖M_i A_i − B_i −
//! Σ_j Q_ij A_j‖_F` evaluated before the sweep.
//!
//! The vector of a label is the unit-normalized row-major flattening of its
//! matrix; the inverse label (`ARG0-of`) uses the flattening of the inverse
//! matrix.
//!
//! # File format
//!
//! ```text
//! d=<d> reduced=<0|1>
//! <label>
//! <d² floats: vector>
//! <d² floats: matrix>
//! <d² floats: inverse matrix>
//! ...
//! ```

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use log::{debug, warn};
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use thiserror::Error;

use crate::embedding::{EmbeddingStore, UnitVector};
use crate::graph::{EdgeLabel, LabeledGraph};

/// Condition number above which the inverse matrix is regularized.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Error)]
pub enum EdgeError {
    #[error("system for edge label `{0}` is numerically singular")]
    SingularSystem(String),
    #[error("no observations")]
    NoObservations,
    #[error("learned matrix for `{0}` is zero")]
    ZeroMatrix(String),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Rows observed for one label: child embeddings `x` and parent embeddings `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelObservations {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

impl LabelObservations {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }
}

/// Sibling rows for an ordered label pair `(i, j)` with `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairObservations {
    pub zi: DMatrix<f64>,
    pub zj: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeObservations {
    pub dim: usize,
    pub labels: BTreeMap<String, LabelObservations>,
    pub pairs: BTreeMap<(String, String), PairObservations>,
    /// Edges dropped because an endpoint had no embedding.
    pub skipped: usize,
    pub reduced: bool,
}

#[derive(Default)]
struct RowSink {
    labels: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
    pairs: BTreeMap<(String, String), (Vec<f64>, Vec<f64>)>,
    skipped: usize,
}

impl RowSink {
    fn absorb(&mut self, other: RowSink) {
        for (k, (x, y)) in other.labels {
            let e = self.labels.entry(k).or_default();
            e.0.extend(x);
            e.1.extend(y);
        }
        for (k, (a, b)) in other.pairs {
            let e = self.pairs.entry(k).or_default();
            e.0.extend(a);
            e.1.extend(b);
        }
        self.skipped += other.skipped;
    }
}

fn rows_to_matrix(flat: Vec<f64>, d: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(flat.len() / d, d, &flat)
}

fn graph_rows(g: &LabeledGraph, store: &EmbeddingStore) -> RowSink {
    let mut sink = RowSink::default();
    let emb: Vec<Option<UnitVector>> = g.nodes.iter().map(|n| store.lookup(&n.label)).collect();
    let mut edges: Vec<&crate::graph::GraphEdge> = g.edges.iter().collect();
    edges.sort_by(|a, b| {
        (&g.nodes[a.src].id, &g.nodes[a.dst].id, &a.label.name).cmp(&(&g.nodes[b.src].id, &g.nodes[b.dst].id, &b.label.name))
    });
    let mut children: BTreeMap<usize, Vec<(&str, &UnitVector)>> = BTreeMap::new();
    for e in edges {
        match (&emb[e.dst], &emb[e.src]) {
            (Some(c), Some(p)) => {
                let slot = sink.labels.entry(e.label.name.clone()).or_default();
                slot.0.extend_from_slice(c.as_slice());
                slot.1.extend_from_slice(p.as_slice());
                children.entry(e.src).or_default().push((&e.label.name, c));
            }
            _ => sink.skipped += 1,
        }
    }
    for kids in children.values() {
        for (a, &(la, va)) in kids.iter().enumerate() {
            for &(lb, vb) in &kids[a + 1..] {
                if la == lb {
                    continue;
                }
                let (key, first, second) = if la < lb { ((la, lb), va, vb) } else { ((lb, la), vb, va) };
                let slot = sink.pairs.entry((key.0.to_string(), key.1.to_string())).or_default();
                slot.0.extend_from_slice(first.as_slice());
                slot.1.extend_from_slice(second.as_slice());
            }
        }
    }
    sink
}

/// Gathers child/parent rows per label and sibling rows per label pair.
/// Graphs are visited in (document, sentence) order and edges by
/// (parent id, child id, label), whatever the input order.
pub fn collect_observations(graphs: &[LabeledGraph], store: &EmbeddingStore) -> EdgeObservations {
    let mut order: Vec<&LabeledGraph> = graphs.iter().collect();
    order.sort_by(|a, b| (&a.document_id, &a.sentence_id).cmp(&(&b.document_id, &b.sentence_id)));
    let parts: Vec<RowSink> = order.par_iter().map(|g| graph_rows(g, store)).collect();
    let mut all = RowSink::default();
    for p in parts {
        all.absorb(p);
    }
    let d = store.dim();
    EdgeObservations {
        dim: d,
        labels: all
            .labels
            .into_iter()
            .map(|(k, (x, y))| {
                (
                    k,
                    LabelObservations {
                        x: rows_to_matrix(x, d),
                        y: rows_to_matrix(y, d),
                    },
                )
            })
            .collect(),
        pairs: all
            .pairs
            .into_iter()
            .map(|(k, (a, b))| {
                (
                    k,
                    PairObservations {
                        zi: rows_to_matrix(a, d),
                        zj: rows_to_matrix(b, d),
                    },
                )
            })
            .collect(),
        skipped: all.skipped,
        reduced: false,
    }
}

impl EdgeObservations {
    pub fn count(&self, label: &str) -> usize {
        self.labels.get(label).map_or(0, LabelObservations::len)
    }

    /// Labels sharing at least one parent with `label`.
    pub fn neighborhood(&self, label: &str) -> Vec<&str> {
        self.pairs
            .iter()
            .filter(|(_, p)| p.zi.nrows() > 0)
            .filter_map(|((a, b), _)| {
                if a == label {
                    Some(b.as_str())
                } else if b == label {
                    Some(a.as_str())
                } else {
                    None
                }
            })
            .collect()
    }

    /// Update order: descending observation count, then name.
    pub fn sweep_order(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.labels.keys().map(String::as_str).collect();
        v.sort_by(|a, b| self.count(b).cmp(&self.count(a)).then(a.cmp(b)));
        v
    }

    /// Projects every row onto the top `r` eigenvectors of the pooled
    /// second-moment matrix and renormalizes. No-op when `r >= dim`.
    pub fn reduce(self, r: usize) -> EdgeObservations {
        if r >= self.dim || r == 0 {
            return self;
        }
        let d = self.dim;
        let mut moment = DMatrix::<f64>::zeros(d, d);
        for o in self.labels.values() {
            moment += o.x.transpose() * &o.x + o.y.transpose() * &o.y;
        }
        let eig = SymmetricEigen::new(moment);
        let mut idx: Vec<usize> = (0..d).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let basis = DMatrix::from_fn(d, r, |row, c| eig.eigenvectors[(row, idx[c])]);
        let project = |m: &DMatrix<f64>| {
            let mut p = m * &basis;
            for mut row in p.row_iter_mut() {
                let n = row.norm();
                if n > 0.0 {
                    row /= n;
                }
            }
            p
        };
        EdgeObservations {
            dim: r,
            labels: self
                .labels
                .iter()
                .map(|(k, o)| {
                    (
                        k.clone(),
                        LabelObservations {
                            x: project(&o.x),
                            y: project(&o.y),
                        },
                    )
                })
                .collect(),
            pairs: self
                .pairs
                .iter()
                .map(|(k, p)| {
                    (
                        k.clone(),
                        PairObservations {
                            zi: project(&p.zi),
                            zj: project(&p.zj),
                        },
                    )
                })
                .collect(),
            skipped: self.skipped,
            reduced: true,
        }
    }
}

fn ridge(m: &DMatrix<f64>, scale: f64) -> f64 {
    let e = scale * m.trace() / m.nrows() as f64;
    if e > 0.0 {
        e
    } else {
        scale
    }
}

fn solve_spd(m: DMatrix<f64>, rhs: &DMatrix<f64>, label: &str) -> Result<DMatrix<f64>, EdgeError> {
    let chol = m.cholesky().ok_or_else(|| EdgeError::SingularSystem(label.to_string()))?;
    let sol = chol.solve(rhs);
    if sol.iter().all(|v| v.is_finite()) {
        Ok(sol)
    } else {
        Err(EdgeError::SingularSystem(label.to_string()))
    }
}

/// Ridge least-squares start: `(XᵀX + εI)⁻¹ XᵀY` with `ε = scale·trace(XᵀX)/d`.
pub fn initialize(obs: &EdgeObservations, ridge_scale: f64) -> Result<BTreeMap<String, DMatrix<f64>>, EdgeError> {
    obs.labels
        .iter()
        .map(|(name, o)| {
            let xtx = o.x.transpose() * &o.x;
            let eps = ridge(&xtx, ridge_scale);
            let lhs = &xtx + DMatrix::identity(obs.dim, obs.dim) * eps;
            let a = solve_spd(lhs, &(o.x.transpose() * &o.y), name)?;
            Ok((name.clone(), a))
        })
        .collect()
}

struct Block {
    name: String,
    m: DMatrix<f64>,
    b: DMatrix<f64>,
    eps: f64,
    factor: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    /// (index into the block list, Q_ij)
    neighbors: Vec<(usize, DMatrix<f64>)>,
}

/// Prepared block system; factorizations are computed once.
pub struct GaussSeidel {
    blocks: Vec<Block>,
}

impl GaussSeidel {
    pub fn new(obs: &EdgeObservations, ridge_scale: f64) -> Result<Self, EdgeError> {
        let order: Vec<String> = obs.sweep_order().into_iter().map(str::to_string).collect();
        let pos: BTreeMap<&str, usize> = order.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let d = obs.dim;
        let mut ms: Vec<DMatrix<f64>> = order
            .iter()
            .map(|n| {
                let o = &obs.labels[n];
                o.x.transpose() * &o.x
            })
            .collect();
        let mut nbrs: Vec<Vec<(usize, DMatrix<f64>)>> = vec![Vec::new(); order.len()];
        for ((a, b), p) in &obs.pairs {
            if p.zi.nrows() == 0 {
                continue;
            }
            let (Some(&ia), Some(&ib)) = (pos.get(a.as_str()), pos.get(b.as_str())) else {
                continue;
            };
            ms[ia] += p.zi.transpose() * &p.zi;
            ms[ib] += p.zj.transpose() * &p.zj;
            nbrs[ia].push((ib, p.zi.transpose() * &p.zj));
            nbrs[ib].push((ia, p.zj.transpose() * &p.zi));
        }
        let mut blocks = Vec::with_capacity(order.len());
        for ((name, m), neighbors) in order.into_iter().zip(ms).zip(nbrs) {
            let o = &obs.labels[&name];
            let eps = ridge(&m, ridge_scale);
            let factor = (&m + DMatrix::identity(d, d) * eps)
                .cholesky()
                .ok_or_else(|| EdgeError::SingularSystem(name.clone()))?;
            blocks.push(Block {
                b: o.x.transpose() * &o.y,
                name,
                m,
                eps,
                factor,
                neighbors,
            });
        }
        Ok(GaussSeidel { blocks })
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.blocks.iter().map(|b| b.name.as_str())
    }

    fn rhs(&self, i: usize, current: &[DMatrix<f64>]) -> DMatrix<f64> {
        let mut r = self.blocks[i].b.clone();
        for (j, q) in &self.blocks[i].neighbors {
            r += q * &current[*j];
        }
        r
    }

    /// `Σ_i ‖M_i A_i − B_i − Σ_j Q_ij A_j‖_F`.
    pub fn residual(&self, current: &[DMatrix<f64>]) -> f64 {
        (0..self.blocks.len())
            .map(|i| (&self.blocks[i].m * &current[i] - self.rhs(i, current)).norm())
            .sum()
    }

    /// One in-place sweep; returns the residual measured before it.
    pub fn sweep(&self, current: &mut [DMatrix<f64>]) -> Result<f64, EdgeError> {
        let before = self.residual(current);
        for i in 0..self.blocks.len() {
            let blk = &self.blocks[i];
            let rhs = self.rhs(i, current) + &current[i] * blk.eps;
            let next = blk.factor.solve(&rhs);
            if !next.iter().all(|v| v.is_finite()) {
                return Err(EdgeError::SingularSystem(blk.name.clone()));
            }
            current[i] = next;
        }
        Ok(before)
    }

    fn to_vec(&self, map: &BTreeMap<String, DMatrix<f64>>) -> Vec<DMatrix<f64>> {
        self.blocks.iter().map(|b| map[&b.name].clone()).collect()
    }

    fn to_map(&self, v: Vec<DMatrix<f64>>) -> BTreeMap<String, DMatrix<f64>> {
        self.blocks.iter().map(|b| b.name.clone()).zip(v).collect()
    }
}

/// One sweep from `current`; returns the new matrices and the residual
/// before the sweep.
pub fn gauss_seidel_step(
    obs: &EdgeObservations,
    current: &BTreeMap<String, DMatrix<f64>>,
    ridge_scale: f64,
) -> Result<(BTreeMap<String, DMatrix<f64>>, f64), EdgeError> {
    let gs = GaussSeidel::new(obs, ridge_scale)?;
    let mut v = gs.to_vec(current);
    let r = gs.sweep(&mut v)?;
    Ok((gs.to_map(v), r))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnOptions {
    pub max_sweeps: usize,
    pub tol: f64,
    pub ridge_scale: f64,
}

impl Default for LearnOptions {
    fn default() -> Self {
        LearnOptions {
            max_sweeps: 500,
            tol: 1e-8,
            ridge_scale: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnReport {
    /// Residual before each sweep, then the final residual.
    pub residuals: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

/// Initializes and sweeps until the residual drops below `tol` or the sweep
/// budget runs out. Running out of sweeps is reported, not an error.
pub fn learn_matrices(
    obs: &EdgeObservations,
    opts: &LearnOptions,
) -> Result<(BTreeMap<String, DMatrix<f64>>, LearnReport), EdgeError> {
    if obs.labels.is_empty() {
        return Err(EdgeError::NoObservations);
    }
    let init = initialize(obs, opts.ridge_scale)?;
    let gs = GaussSeidel::new(obs, opts.ridge_scale)?;
    let mut cur = gs.to_vec(&init);
    let mut residuals = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        let r = gs.residual(&cur);
        if r < opts.tol {
            residuals.push(r);
            converged = true;
            break;
        }
        residuals.push(gs.sweep(&mut cur)?);
        sweeps += 1;
    }
    if !converged {
        let r = gs.residual(&cur);
        residuals.push(r);
        converged = r < opts.tol;
        if !converged {
            warn!("edge learning stopped after {sweeps} sweeps with residual {r:e}");
        }
    }
    debug!("edge learning: {sweeps} sweeps, residual {:e}", residuals.last().copied().unwrap_or(0.0));
    Ok((gs.to_map(cur), LearnReport { residuals, sweeps, converged }))
}

/// Learns matrices and packages them as an edge vector store.
pub fn learn(obs: &EdgeObservations, opts: &LearnOptions) -> Result<(EdgeVectorStore, LearnReport), EdgeError> {
    let (mats, report) = learn_matrices(obs, opts)?;
    let mut store = EdgeVectorStore {
        dim: obs.dim,
        reduced: obs.reduced,
        entries: BTreeMap::new(),
    };
    for (name, a) in mats {
        let entry = EdgeEntry::from_matrix(&name, a)?;
        store.entries.insert(name, entry);
    }
    Ok((store, report))
}

/// Inverse, regularized as `(A + εI)⁻¹` when `A` is ill-conditioned.
pub fn stable_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let d = a.nrows();
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    if smin > 0.0 && smax / smin <= MAX_CONDITION {
        if let Some(inv) = a.clone().try_inverse() {
            return inv;
        }
    }
    let eps = 1e-6 * smax.max(f64::MIN_POSITIVE);
    if let Some(inv) = (a + DMatrix::identity(d, d) * eps).try_inverse() {
        if inv.iter().all(|v| v.is_finite()) {
            return inv;
        }
    }
    // A + εI can itself be singular when A has eigenvalue −ε.
    let at = a.transpose();
    (&at * a + DMatrix::identity(d, d) * (eps * eps))
        .try_inverse()
        .map(|m| m * at)
        .unwrap_or_else(|| DMatrix::zeros(d, d))
}

fn flatten(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            v.push(m[(r, c)]);
        }
    }
    v
}

fn unflatten(v: &[f64], d: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(d, d, v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeEntry {
    pub matrix: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    pub vector: UnitVector,
    pub inverse_vector: UnitVector,
}

impl EdgeEntry {
    pub fn from_matrix(name: &str, matrix: DMatrix<f64>) -> Result<Self, EdgeError> {
        let inverse = stable_inverse(&matrix);
        let vector = UnitVector::new(flatten(&matrix)).ok_or_else(|| EdgeError::ZeroMatrix(name.to_string()))?;
        let inverse_vector =
            UnitVector::new(flatten(&inverse)).ok_or_else(|| EdgeError::ZeroMatrix(format!("{name}-of")))?;
        Ok(EdgeEntry {
            matrix,
            inverse,
            vector,
            inverse_vector,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeVectorStore {
    pub dim: usize,
    pub reduced: bool,
    pub entries: BTreeMap<String, EdgeEntry>,
}

impl EdgeVectorStore {
    pub fn new(dim: usize, reduced: bool) -> Self {
        EdgeVectorStore {
            dim,
            reduced,
            entries: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&EdgeEntry> {
        self.entries.get(name)
    }

    /// Vector for a tree edge; inverse labels use the inverse matrix.
    pub fn vector(&self, label: &EdgeLabel) -> Option<&UnitVector> {
        if label.inverse {
            self.entries.get(label.base_name()).map(|e| &e.inverse_vector)
        } else {
            self.entries.get(&label.name).map(|e| &e.vector)
        }
    }

    pub fn contains(&self, label: &EdgeLabel) -> bool {
        self.vector(label).is_some()
    }

    /// Adds the labels of `other` that are not already present. Returns the
    /// names that were present in both; those keep this store's entry.
    pub fn merge(&mut self, other: EdgeVectorStore) -> Vec<String> {
        let mut clashes = Vec::new();
        self.reduced |= other.reduced;
        for (k, v) in other.entries {
            if self.entries.contains_key(&k) {
                clashes.push(k);
            } else {
                self.entries.insert(k, v);
            }
        }
        clashes
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "d={} reduced={}", self.dim, u8::from(self.reduced))?;
        let line = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
        for (name, e) in &self.entries {
            writeln!(w, "{name}")?;
            writeln!(w, "{}", line(e.vector.as_slice()))?;
            writeln!(w, "{}", line(&flatten(&e.matrix)))?;
            writeln!(w, "{}", line(&flatten(&e.inverse)))?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<EdgeVectorStore, EdgeError> {
        let lines: Vec<String> = r.lines().collect::<Result<_, _>>()?;
        let bad = |line: usize, message: String| EdgeError::Format { line, message };
        let header = lines.first().ok_or_else(|| bad(1, "empty file".into()))?;
        let mut dim = None;
        let mut reduced = None;
        for part in header.split_whitespace() {
            match part.split_once('=') {
                Some(("d", v)) => dim = v.parse::<usize>().ok(),
                Some(("reduced", "0")) => reduced = Some(false),
                Some(("reduced", "1")) => reduced = Some(true),
                _ => {}
            }
        }
        let (dim, reduced) = dim.zip(reduced).ok_or_else(|| bad(1, "expected `d=<int> reduced=<0|1>`".into()))?;
        let body: Vec<(usize, &String)> = lines.iter().enumerate().skip(1).filter(|(_, l)| !l.trim().is_empty()).collect();
        if body.len() % 4 != 0 {
            return Err(bad(lines.len(), "truncated label block".into()));
        }
        let parse = |(i, l): (usize, &String)| -> Result<Vec<f64>, EdgeError> {
            let v: Vec<f64> = l
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| bad(i + 1, "unparseable number".into()))?;
            if v.len() != dim * dim {
                return Err(bad(i + 1, format!("expected {} values, found {}", dim * dim, v.len())));
            }
            Ok(v)
        };
        let mut store = EdgeVectorStore::new(dim, reduced);
        for chunk in body.chunks(4) {
            let name = chunk[0].1.trim().to_string();
            let vector = parse(chunk[1])?;
            let matrix = unflatten(&parse(chunk[2])?, dim);
            let inverse = unflatten(&parse(chunk[3])?, dim);
            let vector = UnitVector::new(vector).ok_or_else(|| bad(chunk[1].0 + 1, "zero vector".into()))?;
            let inverse_vector =
                UnitVector::new(flatten(&inverse)).ok_or_else(|| bad(chunk[3].0 + 1, "zero inverse".into()))?;
            store.entries.insert(
                name,
                EdgeEntry {
                    matrix,
                    inverse,
                    vector,
                    inverse_vector,
                },
            );
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests;
