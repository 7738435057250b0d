//! Kernels between sets of trees.
//!
//! A candidate is represented by every tree that supports it. Sets are
//! compared through a base kernel on their members: the squared maximum
//! mean discrepancy, a kernel-density estimate of the KL divergence, or the
//! mean cross-kernel value. The first two are lifted to kernels with
//! `exp(−D / bandwidth)`.
//!
//! Members are referred to by index into a precomputed base kernel (usually
//! the normalized tree Gram over the pooled trees), so each tree pair is
//! evaluated once however many sets contain it. Every block sum is taken in
//! sorted order, which makes the results independent of member order and
//! makes the MMD exactly symmetric.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gram::GramMatrix;
use crate::graph::{KernelTree, Source};
use crate::kernel::{sorted_sum, KernelError, TreeKernel};

/// Floor applied to density estimates before taking logarithms.
pub const DENSITY_FLOOR: f64 = 1e-300;
/// Relative eigenvalue tolerance for accepting a Gram matrix as PSD.
pub const PSD_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum DistributionMetric {
    #[default]
    #[serde(rename = "MMD")]
    Mmd,
    #[serde(rename = "KL")]
    Kl,
    #[serde(rename = "CK")]
    Ck,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("distribution `{0}` has no samples")]
    EmptyDistribution(String),
    #[error("no distributions")]
    Empty,
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Base kernel over sample indices.
pub trait SampleKernel: Sync {
    fn eval(&self, a: usize, b: usize) -> f64;
}

impl SampleKernel for DMatrix<f64> {
    fn eval(&self, a: usize, b: usize) -> f64 {
        self[(a, b)]
    }
}

impl SampleKernel for GramMatrix {
    fn eval(&self, a: usize, b: usize) -> f64 {
        self.values[(a, b)]
    }
}

/// A candidate's evidence set, as indices into a base kernel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Distribution {
    pub id: String,
    pub document_id: String,
    pub samples: Vec<usize>,
    pub amr: usize,
    pub sdg: usize,
}

/// A candidate's evidence set as trees.
#[derive(Debug, Clone)]
pub struct GraphDistribution {
    pub id: String,
    pub document_id: String,
    pub samples: Vec<KernelTree>,
}

impl GraphDistribution {
    pub fn counts(&self) -> (usize, usize) {
        let amr = self.samples.iter().filter(|t| t.source == Source::Amr).count();
        (amr, self.samples.len() - amr)
    }
}

/// Pools the trees of all sets into one normalized Gram and returns index
/// sets into it.
pub fn pool(dists: &[GraphDistribution], kernel: &TreeKernel<'_>) -> Result<(GramMatrix, Vec<Distribution>), DistributionError> {
    let mut trees: Vec<(String, &KernelTree)> = Vec::new();
    let mut out = Vec::with_capacity(dists.len());
    for d in dists {
        if d.samples.is_empty() {
            return Err(DistributionError::EmptyDistribution(d.id.clone()));
        }
        let start = trees.len();
        for (k, t) in d.samples.iter().enumerate() {
            trees.push((format!("{}#{k}", d.id), t));
        }
        let (amr, sdg) = d.counts();
        out.push(Distribution {
            id: d.id.clone(),
            document_id: d.document_id.clone(),
            samples: (start..trees.len()).collect(),
            amr,
            sdg,
        });
    }
    let refs: Vec<(&str, &KernelTree)> = trees.iter().map(|(i, t)| (i.as_str(), *t)).collect();
    let gram = kernel.gram(&refs)?;
    Ok((gram, out))
}

fn block_mean<K: SampleKernel + ?Sized>(a: &[usize], b: &[usize], k: &K) -> f64 {
    let vals: Vec<f64> = a.iter().flat_map(|&i| b.iter().map(move |&j| k.eval(i, j))).collect();
    sorted_sum(vals) / (a.len() * b.len()) as f64
}

/// Biased squared MMD, `mean K_aa + mean K_bb − 2 mean K_ab`, at least 0.
pub fn mmd<K: SampleKernel + ?Sized>(a: &[usize], b: &[usize], k: &K) -> f64 {
    let v = block_mean(a, a, k) + block_mean(b, b, k) - 2.0 * block_mean(a, b, k);
    if v < -1e-12 {
        log::warn!("squared MMD {v:e} is negative; base kernel is not PSD");
    }
    v.max(0.0)
}

pub fn gdk_mmd<K: SampleKernel + ?Sized>(a: &[usize], b: &[usize], k: &K, bandwidth: f64) -> f64 {
    (-mmd(a, b, k) / bandwidth).exp()
}

fn mean_row<K: SampleKernel + ?Sized>(r: usize, set: &[usize], k: &K) -> f64 {
    sorted_sum(set.iter().map(|&s| k.eval(r, s)).collect()) / set.len() as f64
}

/// Kernel-density KL estimate of `a` against `b`, evaluated at the members
/// of `a`. Not symmetric and can be negative.
pub fn kl_estimate<K: SampleKernel + ?Sized>(a: &[usize], b: &[usize], k: &K) -> f64 {
    let terms: Vec<f64> = a
        .iter()
        .map(|&r| {
            let own = mean_row(r, a, k).max(DENSITY_FLOOR);
            let other = mean_row(r, b, k).max(DENSITY_FLOOR);
            (own / other).ln()
        })
        .collect();
    sorted_sum(terms) / a.len() as f64
}

pub fn gdk_kl<K: SampleKernel + ?Sized>(a: &[usize], b: &[usize], k: &K, bandwidth: f64) -> f64 {
    (-(kl_estimate(a, b, k) + kl_estimate(b, a, k)) / bandwidth).exp()
}

pub fn cross_kernel<K: SampleKernel + ?Sized>(a: &[usize], b: &[usize], k: &K) -> f64 {
    block_mean(a, b, k)
}

/// Set kernel value for one pair under `metric`.
pub fn set_kernel<K: SampleKernel + ?Sized>(metric: DistributionMetric, a: &[usize], b: &[usize], k: &K, bandwidth: f64) -> f64 {
    match metric {
        DistributionMetric::Mmd => gdk_mmd(a, b, k, bandwidth),
        DistributionMetric::Kl => gdk_kl(a, b, k, bandwidth),
        DistributionMetric::Ck => cross_kernel(a, b, k),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsdProjection {
    pub matrix: DMatrix<f64>,
    /// Smallest eigenvalue of the input.
    pub min_eigenvalue: f64,
    /// Number of eigenvalues set to zero.
    pub clipped: usize,
    /// The eigendecomposition did not converge; `matrix` is the input.
    pub failed: bool,
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn eigen(m: &DMatrix<f64>) -> Option<SymmetricEigen<f64, nalgebra::Dyn>> {
    SymmetricEigen::try_new(symmetrize(m), f64::EPSILON, 100_000)
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn eigen_range(m: &DMatrix<f64>) -> Option<(f64, f64)> {
    let e = eigen(m)?;
    Some((e.eigenvalues.min(), e.eigenvalues.max()))
}

/// Whether `min eig ≥ −tol · max eig`.
pub fn is_psd(m: &DMatrix<f64>, tol: f64) -> bool {
    eigen_range(m).is_some_and(|(lo, hi)| lo >= -tol * hi.max(0.0))
}

/// Nearest PSD matrix in Frobenius norm: negative eigenvalues are set to 0.
pub fn psd_project(m: &DMatrix<f64>) -> PsdProjection {
    let Some(e) = eigen(m) else {
        return PsdProjection {
            matrix: m.clone(),
            min_eigenvalue: f64::NAN,
            clipped: 0,
            failed: true,
        };
    };
    let min_eigenvalue = e.eigenvalues.min();
    let clipped = e.eigenvalues.iter().filter(|&&v| v < 0.0).count();
    let lam = DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.max(0.0)));
    let rebuilt = &e.eigenvectors * lam * e.eigenvectors.transpose();
    PsdProjection {
        matrix: symmetrize(&rebuilt),
        min_eigenvalue,
        clipped,
        failed: false,
    }
}

/// What happened to a distribution Gram after it was computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsdReport {
    pub min_eigenvalue: f64,
    pub projected: bool,
    pub clipped: usize,
    pub failed: bool,
}

fn check_sets(dists: &[Distribution]) -> Result<(), DistributionError> {
    if dists.is_empty() {
        return Err(DistributionError::Empty);
    }
    if let Some(d) = dists.iter().find(|d| d.samples.is_empty()) {
        return Err(DistributionError::EmptyDistribution(d.id.clone()));
    }
    Ok(())
}

/// Pairwise set kernels. KL and CK matrices are always projected onto the
/// PSD cone; an MMD matrix only when its smallest eigenvalue falls below
/// `−1e-8 · max`.
pub fn distribution_gram<K: SampleKernel + ?Sized>(
    dists: &[Distribution],
    metric: DistributionMetric,
    k: &K,
    bandwidth: f64,
) -> Result<(GramMatrix, PsdReport), DistributionError> {
    check_sets(dists)?;
    let n = dists.len();
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let vals: Vec<f64> = cells
        .par_iter()
        .map(|&(i, j)| set_kernel(metric, &dists[i].samples, &dists[j].samples, k, bandwidth))
        .collect();
    let mut m = DMatrix::zeros(n, n);
    for (&(i, j), v) in cells.iter().zip(vals) {
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    let (lo, hi) = eigen_range(&m).unwrap_or((f64::NAN, f64::NAN));
    let needs = match metric {
        DistributionMetric::Mmd => !(lo >= -PSD_TOLERANCE * hi.max(0.0)),
        DistributionMetric::Kl | DistributionMetric::Ck => true,
    };
    let mut report = PsdReport {
        min_eigenvalue: lo,
        projected: false,
        clipped: 0,
        failed: false,
    };
    if needs {
        let p = psd_project(&m);
        report.projected = !p.failed;
        report.clipped = p.clipped;
        report.failed = p.failed;
        m = p.matrix;
    }
    let normalized = metric != DistributionMetric::Ck && (0..n).all(|i| (m[(i, i)] - 1.0).abs() <= 1e-9);
    let ids = dists.iter().map(|d| d.id.clone()).collect();
    Ok((GramMatrix::new(ids, m, normalized), report))
}

/// Set kernels between every row set and every column set, unprojected.
pub fn distribution_cross<K: SampleKernel + ?Sized>(
    rows: &[Distribution],
    cols: &[Distribution],
    metric: DistributionMetric,
    k: &K,
    bandwidth: f64,
) -> Result<DMatrix<f64>, DistributionError> {
    check_sets(rows)?;
    check_sets(cols)?;
    let vals: Vec<f64> = (0..rows.len() * cols.len())
        .into_par_iter()
        .map(|c| {
            let (i, j) = (c / cols.len(), c % cols.len());
            set_kernel(metric, &rows[i].samples, &cols[j].samples, k, bandwidth)
        })
        .collect();
    Ok(DMatrix::from_row_slice(rows.len(), cols.len(), &vals))
}
