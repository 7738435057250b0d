//! Document-level evaluation.
//!
//! Documents are dealt into folds; each fold in turn is the test set and
//! the rest is training data. Every (fold, run) pair draws its own
//! subsample of interactions, stratified by document, trains a classifier
//! and scores the Valid class. Three units of inference are supported:
//!
//! - `SLI`: every evidence tree is classified and scored on its own.
//! - `MSI`: every tree of an interaction is classified and the single
//!   (class, score) pair with the highest score decides the interaction.
//! - `GDK`: an interaction is the set of its trees, compared to other sets
//!   with a distribution kernel.
//!
//! The tree Gram over all trees of the selected sources is computed once;
//! runs only index into it.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classifier::{self, ClassifierError, KernelModel, Prediction, SvmParams};
use crate::distribution::{self, Distribution, DistributionError, DistributionMetric};
use crate::edges::EdgeVectorStore;
use crate::extract::{assign_labels, CandidateRecord, EvidenceTree, InteractionKey, Label};
use crate::gram::GramMatrix;
use crate::graph::{KernelTree, Source};
use crate::kernel::{sorted_sum, KernelError, KernelParams, TreeKernel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InferenceMode {
    #[serde(rename = "SLI")]
    Sli,
    #[serde(rename = "MSI")]
    Msi,
    #[serde(rename = "GDK")]
    Gdk,
}

impl InferenceMode {
    pub const ALL: [InferenceMode; 3] = [InferenceMode::Sli, InferenceMode::Msi, InferenceMode::Gdk];

    pub fn as_str(self) -> &'static str {
        match self {
            InferenceMode::Sli => "SLI",
            InferenceMode::Msi => "MSI",
            InferenceMode::Gdk => "GDK",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SourceMode {
    #[serde(rename = "AMR")]
    Amr,
    #[serde(rename = "SDG")]
    Sdg,
    Joint,
}

impl SourceMode {
    pub const ALL: [SourceMode; 3] = [SourceMode::Amr, SourceMode::Sdg, SourceMode::Joint];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceMode::Amr => "AMR",
            SourceMode::Sdg => "SDG",
            SourceMode::Joint => "Joint",
        }
    }

    pub fn includes(self, s: Source) -> bool {
        match self {
            SourceMode::Amr => s == Source::Amr,
            SourceMode::Sdg => s == Source::Sdg,
            SourceMode::Joint => true,
        }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{docs} documents cannot fill {folds} folds")]
    FewerDocsThanFolds { docs: usize, folds: usize },
    #[error("evaluation needs at least two folds")]
    NeedTwoFolds,
    #[error("no evidence trees for source {0}")]
    NoTrees(&'static str),
    #[error("Gram over {gram} ids does not match the {trees} selected trees")]
    GramMismatch { gram: usize, trees: usize },
    #[error("document `{0}` is in both train and test")]
    Leakage(String),
    #[error("fold {fold} run {run}: {source}")]
    Run {
        fold: usize,
        run: usize,
        #[source]
        source: Box<EvalError>,
    },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Stable 64-bit hash of a sequence of byte strings.
pub fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    /// Document ids per fold, sorted.
    pub folds: Vec<Vec<String>>,
    pub fraction: f64,
    pub runs: usize,
    pub seed: u64,
}

impl SplitPlan {
    pub fn fold_of(&self, doc: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.binary_search_by(|d| d.as_str().cmp(doc)).is_ok())
    }
}

/// Orders the documents by a seeded hash of their id and deals them into
/// `n_folds` folds in turn, so fold sizes differ by at most one.
pub fn make_splits<'a, I>(docs: I, n_folds: usize, seed: u64, runs: usize, fraction: f64) -> Result<SplitPlan, EvalError>
where
    I: IntoIterator<Item = &'a str>,
{
    let docs: BTreeSet<&str> = docs.into_iter().collect();
    if n_folds == 0 || docs.len() < n_folds {
        return Err(EvalError::FewerDocsThanFolds {
            docs: docs.len(),
            folds: n_folds,
        });
    }
    let seed_bytes = seed.to_le_bytes();
    let mut order: Vec<(u64, &str)> = docs.iter().map(|d| (stable_hash(&[&seed_bytes, d.as_bytes()]), *d)).collect();
    order.sort();
    let mut folds = vec![Vec::new(); n_folds];
    for (i, (_, d)) in order.into_iter().enumerate() {
        folds[i % n_folds].push(d.to_string());
    }
    for f in &mut folds {
        f.sort();
    }
    Ok(SplitPlan {
        folds,
        fraction,
        runs,
        seed,
    })
}

/// Evidence trees with a gold label for every interaction they support.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub trees: Vec<EvidenceTree>,
    pub labels: BTreeMap<InteractionKey, Label>,
}

impl Dataset {
    pub fn new(trees: Vec<EvidenceTree>, gold: &[CandidateRecord]) -> Self {
        let keys: BTreeSet<InteractionKey> = trees.iter().map(|t| t.key.clone()).collect();
        let labels = assign_labels(&keys, gold);
        Dataset { trees, labels }
    }

    pub fn documents(&self) -> BTreeSet<&str> {
        self.labels.keys().map(|k| k.doc.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub kernel: KernelParams,
    pub svm: SvmParams,
    pub metric: DistributionMetric,
    pub bandwidth: f64,
    pub divergence_threshold: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            kernel: KernelParams::default(),
            svm: SvmParams::default(),
            metric: DistributionMetric::Mmd,
            bandwidth: 1.0,
            divergence_threshold: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    /// Counts with Valid as the positive class; Swap is negative.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Label, Label)>) -> Self {
        let mut c = Confusion::default();
        for (predicted, gold) in pairs {
            match (predicted == Label::Valid, gold == Label::Valid) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    /// Precision, recall, F1, with 0/0 taken as 0.
    pub fn prf(&self) -> (f64, f64, f64) {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let p = ratio(self.tp, self.tp + self.fp);
        let r = ratio(self.tp, self.tp + self.fn_);
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        (p, r, f)
    }
}

/// Classifies every row on its own.
pub fn sli_infer(model: &KernelModel, rows: &[Vec<f64>]) -> Result<Vec<Prediction>, ClassifierError> {
    rows.iter().map(|r| model.predict(r)).collect()
}

/// Picks the highest-scoring (class, score) over all rows of a group;
/// ties go to the earlier class, then the earlier row. Returns the label,
/// its score and the winning row.
pub fn msi_choose(preds: &[Prediction]) -> Option<(Label, f64, usize)> {
    let mut best: Option<(Label, f64, usize)> = None;
    for (t, p) in preds.iter().enumerate() {
        for &(c, s) in &p.scores {
            let better = match best {
                None => true,
                Some((bc, bs, _)) => s > bs || (s == bs && c < bc),
            };
            if better {
                best = Some((c, s, t));
            }
        }
    }
    best
}

pub fn msi_infer(model: &KernelModel, groups: &[Vec<Vec<f64>>]) -> Result<Vec<(Label, f64, usize)>, ClassifierError> {
    groups
        .iter()
        .map(|g| Ok(msi_choose(&sli_infer(model, g)?).expect("group has at least one row")))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunScore {
    pub fold: usize,
    pub run: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
    pub train_units: usize,
    pub test_units: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub test_docs: usize,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub precision_mean: f64,
    pub recall_mean: f64,
    /// Squared MMD between the fold's training trees and test trees.
    pub divergence: f64,
    pub divergent: bool,
    pub positive_ratio: f64,
    pub runs: Vec<RunScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: InferenceMode,
    pub source: SourceMode,
    pub metric: DistributionMetric,
    pub seed: u64,
    pub runs_per_fold: usize,
    pub fraction: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub precision_mean: f64,
    pub recall_mean: f64,
    pub divergence_mean: f64,
    pub positive_ratio: f64,
    /// Runs whose train/test document sets were checked to be disjoint.
    pub leakage_checks: usize,
    pub folds: Vec<FoldReport>,
}

/// Population mean and standard deviation, summed in sorted order.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let m = sorted_sum(v.to_vec()) / n;
    let var = sorted_sum(v.iter().map(|x| (x - m) * (x - m)).collect()) / n;
    (m, var.sqrt())
}

pub const TABLE_HEADER: &str = "fold\tmode\tsource\tf1_mean\tf1_std\tprecision_recall\ttrain_test_div\tpositive_ratio";

impl EvalReport {
    /// One tab-separated row per fold plus an `all` row.
    pub fn table_rows(&self) -> Vec<String> {
        let row = |fold: &str, f1: f64, sd: f64, p: f64, r: f64, div: f64, pos: f64| {
            format!(
                "{fold}\t{}\t{}\t{f1:.4}\t{sd:.4}\t({p:.4}, {r:.4})\t{div:.6}\t{pos:.4}",
                self.mode.as_str(),
                self.source.as_str()
            )
        };
        let mut out: Vec<String> = self
            .folds
            .iter()
            .map(|f| {
                row(
                    &f.fold.to_string(),
                    f.f1_mean,
                    f.f1_std,
                    f.precision_mean,
                    f.recall_mean,
                    f.divergence,
                    f.positive_ratio,
                )
            })
            .collect();
        out.push(row(
            "all",
            self.f1_mean,
            self.f1_std,
            self.precision_mean,
            self.recall_mean,
            self.divergence_mean,
            self.positive_ratio,
        ));
        out
    }

    pub fn write_json<W: Write>(&self, w: W) -> io::Result<()> {
        serde_json::to_writer_pretty(w, self).map_err(io::Error::other)
    }
}

/// Interactions and the tree Gram for one source mode.
pub struct Evaluator {
    source: SourceMode,
    settings: EvalSettings,
    /// Normalized kernel over the selected trees.
    pub gram: GramMatrix,
    /// Sorted interaction keys with at least one selected tree.
    pub keys: Vec<InteractionKey>,
    /// Gram rows of each key's trees.
    pub key_trees: Vec<Vec<usize>>,
    labels: Vec<Label>,
    tree_labels: Vec<Label>,
    tree_sources: Vec<Source>,
    /// Key positions by document.
    by_doc: BTreeMap<String, Vec<usize>>,
}

fn selected<'d>(dataset: &'d Dataset, source: SourceMode) -> Vec<&'d EvidenceTree> {
    dataset.trees.iter().filter(|t| source.includes(t.tree.source)).collect()
}

impl Evaluator {
    pub fn new(
        dataset: &Dataset,
        source: SourceMode,
        settings: EvalSettings,
        edges: Option<&EdgeVectorStore>,
    ) -> Result<Self, EvalError> {
        let kernel = TreeKernel::new(settings.kernel, edges)?;
        let trees = selected(dataset, source);
        if trees.is_empty() {
            return Err(EvalError::NoTrees(source.as_str()));
        }
        let refs: Vec<(&str, &KernelTree)> = trees.iter().map(|t| (t.id.as_str(), &t.tree)).collect();
        let gram = kernel.gram(&refs)?;
        Self::from_gram(dataset, source, settings, gram)
    }

    /// Uses a precomputed tree Gram whose ids are the selected trees in
    /// dataset order.
    pub fn from_gram(dataset: &Dataset, source: SourceMode, settings: EvalSettings, gram: GramMatrix) -> Result<Self, EvalError> {
        let trees = selected(dataset, source);
        if trees.is_empty() {
            return Err(EvalError::NoTrees(source.as_str()));
        }
        if gram.ids.len() != trees.len() || gram.ids.iter().zip(&trees).any(|(g, t)| *g != t.id) {
            return Err(EvalError::GramMismatch {
                gram: gram.ids.len(),
                trees: trees.len(),
            });
        }
        let mut index: BTreeMap<&InteractionKey, Vec<usize>> = BTreeMap::new();
        for (i, t) in trees.iter().enumerate() {
            index.entry(&t.key).or_default().push(i);
        }
        let keys: Vec<InteractionKey> = index.keys().map(|k| (*k).clone()).collect();
        let key_trees: Vec<Vec<usize>> = index.into_values().collect();
        let labels: Vec<Label> = keys
            .iter()
            .map(|k| dataset.labels.get(k).copied().unwrap_or(Label::Invalid))
            .collect();
        let mut tree_labels = vec![Label::Invalid; trees.len()];
        for (k, ts) in key_trees.iter().enumerate() {
            for &t in ts {
                tree_labels[t] = labels[k];
            }
        }
        let tree_sources = trees.iter().map(|t| t.tree.source).collect();
        let mut by_doc: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, k) in keys.iter().enumerate() {
            by_doc.entry(k.doc.clone()).or_default().push(i);
        }
        Ok(Evaluator {
            source,
            settings,
            gram,
            keys,
            key_trees,
            labels,
            tree_labels,
            tree_sources,
            by_doc,
        })
    }

    pub fn label(&self, key: usize) -> Label {
        self.labels[key]
    }

    pub fn documents(&self) -> Vec<&str> {
        self.by_doc.keys().map(String::as_str).collect()
    }

    /// One distribution per key, over the key's Gram rows.
    pub fn distributions(&self, keys: &[usize]) -> Vec<Distribution> {
        keys.iter()
            .map(|&k| {
                let samples = self.key_trees[k].clone();
                let amr = samples
                    .iter()
                    .filter(|&&t| self.tree_sources[t] == Source::Amr)
                    .count();
                Distribution {
                    id: self.keys[k].to_string(),
                    document_id: self.keys[k].doc.clone(),
                    sdg: samples.len() - amr,
                    amr,
                    samples,
                }
            })
            .collect()
    }

    fn trees_of(&self, keys: &[usize]) -> Vec<usize> {
        keys.iter().flat_map(|&k| self.key_trees[k].iter().copied()).collect()
    }

    fn tree_model(&self, train_trees: &[usize]) -> Result<KernelModel, EvalError> {
        let sub = self.gram.select(train_trees);
        let labels: Vec<Label> = train_trees.iter().map(|&t| self.tree_labels[t]).collect();
        Ok(classifier::train_gram(&sub, &labels, &self.settings.svm)?)
    }

    fn tree_row(&self, model: &KernelModel, train_trees: &[usize], t: usize) -> Vec<f64> {
        model.support_index.iter().map(|&s| self.gram.get(t, train_trees[s])).collect()
    }

    /// Trains on `train` keys and returns (predicted, gold) per test unit.
    pub fn predict(&self, mode: InferenceMode, train: &[usize], test: &[usize]) -> Result<Vec<(Label, Label)>, EvalError> {
        match mode {
            InferenceMode::Sli | InferenceMode::Msi => {
                let train_trees = self.trees_of(train);
                let model = self.tree_model(&train_trees)?;
                if mode == InferenceMode::Sli {
                    let test_trees = self.trees_of(test);
                    let rows: Vec<Vec<f64>> = test_trees.iter().map(|&t| self.tree_row(&model, &train_trees, t)).collect();
                    let preds = sli_infer(&model, &rows)?;
                    Ok(preds.iter().zip(&test_trees).map(|(p, &t)| (p.label, self.tree_labels[t])).collect())
                } else {
                    let groups: Vec<Vec<Vec<f64>>> = test
                        .iter()
                        .map(|&k| self.key_trees[k].iter().map(|&t| self.tree_row(&model, &train_trees, t)).collect())
                        .collect();
                    let chosen = msi_infer(&model, &groups)?;
                    Ok(chosen.iter().zip(test).map(|(c, &k)| (c.0, self.labels[k])).collect())
                }
            }
            InferenceMode::Gdk => {
                let train_d = self.distributions(train);
                let (g, _) = distribution::distribution_gram(&train_d, self.settings.metric, &self.gram, self.settings.bandwidth)?;
                let labels: Vec<Label> = train.iter().map(|&k| self.labels[k]).collect();
                let model = classifier::train_gram(&g, &labels, &self.settings.svm)?;
                let supports: Vec<Distribution> = model.support_index.iter().map(|&s| train_d[s].clone()).collect();
                let test_d = self.distributions(test);
                let rows = distribution::distribution_cross(&test_d, &supports, self.settings.metric, &self.gram, self.settings.bandwidth)?;
                let mut out = Vec::with_capacity(test.len());
                for (i, &k) in test.iter().enumerate() {
                    let row: Vec<f64> = rows.row(i).iter().copied().collect();
                    out.push((model.predict(&row)?.label, self.labels[k]));
                }
                Ok(out)
            }
        }
    }

    /// Trains on every interaction; used to write a model file.
    pub fn train_all(&self, mode: InferenceMode) -> Result<(KernelModel, Vec<String>), EvalError> {
        let all: Vec<usize> = (0..self.keys.len()).collect();
        match mode {
            InferenceMode::Sli | InferenceMode::Msi => {
                let trees = self.trees_of(&all);
                let model = self.tree_model(&trees)?;
                Ok((model, trees.iter().map(|&t| self.gram.ids[t].clone()).collect()))
            }
            InferenceMode::Gdk => {
                let d = self.distributions(&all);
                let (g, _) = distribution::distribution_gram(&d, self.settings.metric, &self.gram, self.settings.bandwidth)?;
                let labels: Vec<Label> = self.labels.clone();
                let ids = g.ids.clone();
                Ok((classifier::train_gram(&g, &labels, &self.settings.svm)?, ids))
            }
        }
    }

    fn subsample(&self, docs: &[&str], fraction: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut out = Vec::new();
        for d in docs {
            let Some(keys) = self.by_doc.get(*d) else {
                continue;
            };
            let take = ((keys.len() as f64 * fraction).ceil() as usize).clamp(1, keys.len());
            let mut ks = keys.clone();
            ks.shuffle(rng);
            ks.truncate(take);
            ks.sort_unstable();
            out.extend(ks);
        }
        out
    }

    /// Squared MMD between the trees of two key sets.
    pub fn divergence(&self, a: &[usize], b: &[usize]) -> f64 {
        distribution::mmd(&self.trees_of(a), &self.trees_of(b), &self.gram)
    }

    fn run_one(&self, plan: &SplitPlan, mode: InferenceMode, fold: usize, run: usize) -> Result<RunScore, EvalError> {
        let test_docs: Vec<&str> = plan.folds[fold].iter().map(String::as_str).collect();
        let train_docs: Vec<&str> = plan
            .folds
            .iter()
            .enumerate()
            .filter(|(f, _)| *f != fold)
            .flat_map(|(_, ds)| ds.iter().map(String::as_str))
            .collect();
        let seed = stable_hash(&[&plan.seed.to_le_bytes(), &(fold as u64).to_le_bytes(), &(run as u64).to_le_bytes()]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let train = self.subsample(&train_docs, plan.fraction, &mut rng);
        let test = self.subsample(&test_docs, plan.fraction, &mut rng);
        let train_set: BTreeSet<&str> = train.iter().map(|&k| self.keys[k].doc.as_str()).collect();
        if let Some(&k) = test.iter().find(|&&k| train_set.contains(self.keys[k].doc.as_str())) {
            return Err(EvalError::Leakage(self.keys[k].doc.clone()));
        }
        let pairs = self.predict(mode, &train, &test)?;
        let confusion = Confusion::from_pairs(pairs.iter().copied());
        let (precision, recall, f1) = confusion.prf();
        Ok(RunScore {
            fold,
            run,
            precision,
            recall,
            f1,
            confusion,
            train_units: train.len(),
            test_units: pairs.len(),
        })
    }

    pub fn evaluate(&self, plan: &SplitPlan, mode: InferenceMode) -> Result<EvalReport, EvalError> {
        if plan.folds.len() < 2 {
            return Err(EvalError::NeedTwoFolds);
        }
        let jobs: Vec<(usize, usize)> = (0..plan.folds.len()).flat_map(|f| (0..plan.runs).map(move |r| (f, r))).collect();
        let scores: Vec<RunScore> = jobs
            .par_iter()
            .map(|&(f, r)| {
                self.run_one(plan, mode, f, r).map_err(|e| EvalError::Run {
                    fold: f,
                    run: r,
                    source: Box::new(e),
                })
            })
            .collect::<Result<_, _>>()?;
        let mut folds = Vec::new();
        for f in 0..plan.folds.len() {
            let runs: Vec<RunScore> = scores.iter().filter(|s| s.fold == f).cloned().collect();
            let test_keys: Vec<usize> = plan.folds[f]
                .iter()
                .filter_map(|d| self.by_doc.get(d))
                .flatten()
                .copied()
                .collect();
            let test_set: BTreeSet<usize> = test_keys.iter().copied().collect();
            let train_keys: Vec<usize> = (0..self.keys.len()).filter(|k| !test_set.contains(k)).collect();
            let divergence = if test_keys.is_empty() || train_keys.is_empty() {
                0.0
            } else {
                self.divergence(&train_keys, &test_keys)
            };
            let f1s: Vec<f64> = runs.iter().map(|r| r.f1).collect();
            let (f1_mean, f1_std) = mean_std(&f1s);
            let ps: Vec<f64> = runs.iter().map(|r| r.precision).collect();
            let rs: Vec<f64> = runs.iter().map(|r| r.recall).collect();
            let positives = test_keys.iter().filter(|&&k| self.labels[k] == Label::Valid).count();
            folds.push(FoldReport {
                fold: f,
                test_docs: plan.folds[f].len(),
                f1_mean,
                f1_std,
                precision_mean: mean_std(&ps).0,
                recall_mean: mean_std(&rs).0,
                divergence,
                divergent: divergence > self.settings.divergence_threshold,
                positive_ratio: if test_keys.is_empty() { 0.0 } else { positives as f64 / test_keys.len() as f64 },
                runs,
            });
        }
        let f1s: Vec<f64> = scores.iter().map(|r| r.f1).collect();
        let (f1_mean, f1_std) = mean_std(&f1s);
        let positives = self.labels.iter().filter(|&&l| l == Label::Valid).count();
        Ok(EvalReport {
            mode,
            source: self.source,
            metric: self.settings.metric,
            seed: plan.seed,
            runs_per_fold: plan.runs,
            fraction: plan.fraction,
            f1_mean,
            f1_std,
            precision_mean: mean_std(&scores.iter().map(|r| r.precision).collect::<Vec<_>>()).0,
            recall_mean: mean_std(&scores.iter().map(|r| r.recall).collect::<Vec<_>>()).0,
            divergence_mean: mean_std(&folds.iter().map(|f| f.divergence).collect::<Vec<_>>()).0,
            positive_ratio: positives as f64 / self.labels.len().max(1) as f64,
            leakage_checks: scores.len(),
            folds,
        })
    }
}

/// One-shot evaluation of a single mode and source.
pub fn evaluate(
    dataset: &Dataset,
    plan: &SplitPlan,
    mode: InferenceMode,
    source: SourceMode,
    settings: EvalSettings,
    edges: Option<&EdgeVectorStore>,
) -> Result<EvalReport, EvalError> {
    Evaluator::new(dataset, source, settings, edges)?.evaluate(plan, mode)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_partition_documents() {
        let docs: Vec<String> = (0..45).map(|i| format!("pmid{i}")).collect();
        let plan = make_splits(docs.iter().map(String::as_str), 11, 3, 25, 0.8).unwrap();
        assert_eq!(plan.folds.len(), 11);
        let mut seen: Vec<&String> = plan.folds.iter().flatten().collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 45);
        assert!(plan.folds.iter().all(|f| f.len() == 4 || f.len() == 5));
        assert_eq!(plan, make_splits(docs.iter().map(String::as_str), 11, 3, 25, 0.8).unwrap());
        assert_ne!(plan.folds, make_splits(docs.iter().map(String::as_str), 11, 4, 25, 0.8).unwrap().folds);
        for d in &docs {
            assert!(plan.fold_of(d).is_some());
        }
    }

    #[test]
    fn single_fold_holds_everything() {
        let plan = make_splits(["a", "b", "c"], 1, 0, 1, 0.8).unwrap();
        assert_eq!(plan.folds, vec![vec!["a".to_string(), "b".into(), "c".into()]]);
    }

    #[test]
    fn too_few_documents() {
        assert!(matches!(
            make_splits(["a"], 2, 0, 1, 0.8),
            Err(EvalError::FewerDocsThanFolds { docs: 1, folds: 2 })
        ));
    }

    #[test]
    fn all_invalid_predictions_score_zero() {
        let c = Confusion::from_pairs([(Label::Invalid, Label::Valid), (Label::Invalid, Label::Invalid)]);
        assert_eq!(c.prf(), (0.0, 0.0, 0.0));
        let c = Confusion::from_pairs([(Label::Swap, Label::Valid), (Label::Valid, Label::Swap)]);
        assert_eq!((c.tp, c.fp, c.fn_), (0, 1, 1));
    }

    #[test]
    fn f1_is_harmonic_mean() {
        let c = Confusion {
            tp: 3,
            fp: 1,
            fn_: 2,
            tn: 4,
        };
        let (p, r, f) = c.prf();
        assert!((f - 2.0 * p * r / (p + r)).abs() <= 1e-12);
    }

    fn pred(scores: &[(Label, f64)]) -> Prediction {
        Prediction {
            label: scores[0].0,
            scores: scores.to_vec(),
            decisions: vec![],
        }
    }

    #[test]
    fn msi_takes_maximum() {
        let a = pred(&[(Label::Valid, 0.3), (Label::Invalid, 0.2)]);
        let b = pred(&[(Label::Valid, 0.1), (Label::Invalid, 0.8)]);
        assert_eq!(msi_choose(&[a.clone(), b]).unwrap(), (Label::Invalid, 0.8, 1));
        assert_eq!(msi_choose(std::slice::from_ref(&a)).unwrap().0, Label::Valid);
        let tie = pred(&[(Label::Valid, 0.5), (Label::Invalid, 0.5)]);
        assert_eq!(msi_choose(&[tie]).unwrap().0, Label::Valid);
        let t1 = pred(&[(Label::Invalid, 0.5)]);
        let t2 = pred(&[(Label::Valid, 0.5)]);
        assert_eq!(msi_choose(&[t1, t2]).unwrap(), (Label::Valid, 0.5, 1));
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }
}
