//! Subcommands that run the pipeline from a config file.
//!
//! Every command writes into the output directory and records the content
//! hashes of its inputs in `manifest.json`. Commands reuse upstream
//! artifacts found in the output directory and compute missing ones in
//! memory.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classifier::KernelModel;
use crate::codec;
use crate::config::{ConfigError, Overrides, RunConfig};
use crate::distribution;
use crate::edges::{self, EdgeVectorStore};
use crate::embedding::EmbeddingStore;
use crate::eval::{self, Dataset, Evaluator, InferenceMode, TABLE_HEADER};
use crate::extract::{
    assign_labels, extract_all, read_candidate_records, write_candidate_records, CandidateRecord, EntitySpec, EvidenceTree,
    Extractor, TriggerLexicon,
};
use crate::gram::GramMatrix;
use crate::graph::LabeledGraph;
use crate::parsers::{parse_dependencies, parse_penman, DependencyDocument, PenmanDocument};

pub const GRAPHS: &str = "graphs.jsonl";
pub const TREES: &str = "trees.jsonl";
pub const TREE_VECTORS: &str = "tree_vectors.txt";
pub const CANDIDATES: &str = "candidates.jsonl";
pub const EDGES: &str = "edges.txt";
pub const GRAM: &str = "gram.txt";
pub const GDK_GRAM: &str = "gram_gdk.txt";
pub const MODEL: &str = "model.json";
pub const REPORT: &str = "report.json";
pub const TABLE: &str = "report.tsv";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "biorel", version, about = "Biomedical relation extraction with tree and distribution kernels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for splits and subsampling; overrides the config
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to available parallelism
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory; overrides the config
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Parse AMR and dependency input into graphs
    Parse,
    /// Extract interaction candidates and their evidence trees
    Extract,
    /// Learn edge-label vectors from the parsed graphs
    LearnEdges,
    /// Compute the tree Gram matrix for the configured sources
    Gram,
    /// Train a classifier on every labeled interaction
    Train,
    /// Cross-validated evaluation
    Eval,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Parse => "parse",
            Command::Extract => "extract",
            Command::LearnEdges => "learn-edges",
            Command::Gram => "gram",
            Command::Train => "train",
            Command::Eval => "eval",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 1,
        }
    }
}

fn data<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Data(format!("{context}: {e}"))
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut f = File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

struct Context {
    cfg: RunConfig,
    command: Command,
    inputs: BTreeMap<String, Value>,
    outputs: Vec<String>,
}

impl Context {
    fn artifact(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    fn note_input(&mut self, name: &str, path: &Path) -> Result<(), CliError> {
        let hash = sha256_file(path).map_err(data(path.display()))?;
        self.inputs.insert(name.to_string(), json!({ "path": path.display().to_string(), "sha256": hash }));
        Ok(())
    }

    fn open(&mut self, name: &str, path: &Path) -> Result<BufReader<File>, CliError> {
        self.note_input(name, path)?;
        Ok(BufReader::new(File::open(path).map_err(data(path.display()))?))
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.artifact(name);
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(File::create(&path).map_err(data(path.display()))?))
    }

    /// Reuses an upstream artifact from the output directory when the
    /// current command is not the one producing it.
    fn reusable(&self, name: &str, producer: Command) -> Option<PathBuf> {
        let p = self.artifact(name);
        (self.command != producer && p.exists()).then_some(p)
    }

    fn graphs(&mut self) -> Result<Vec<LabeledGraph>, CliError> {
        if let Some(p) = self.reusable(GRAPHS, Command::Parse) {
            let r = self.open(GRAPHS, &p)?;
            return codec::read_graphs(r).map_err(data(p.display()));
        }
        let amr = self.cfg.paths.amr.clone();
        let sdg = self.cfg.paths.sdg.clone();
        if amr.is_none() && sdg.is_none() {
            return Err(ConfigError::Missing { field: "paths.amr" }.into());
        }
        let mut graphs = Vec::new();
        if let Some(p) = amr {
            self.note_input("paths.amr", &p)?;
            let text = std::fs::read_to_string(&p).map_err(data(p.display()))?;
            for g in parse_penman(&PenmanDocument::from_text(&text)) {
                graphs.push(g.map_err(data(p.display()))?);
            }
        }
        if let Some(p) = sdg {
            self.note_input("paths.sdg", &p)?;
            let text = std::fs::read_to_string(&p).map_err(data(p.display()))?;
            for g in parse_dependencies(&DependencyDocument::from_text(&text)) {
                graphs.push(g.map_err(data(p.display()))?);
            }
        }
        Ok(graphs)
    }

    fn embeddings(&mut self) -> Result<EmbeddingStore, CliError> {
        let p = self.cfg.require("paths.embeddings", &self.cfg.paths.embeddings)?.to_path_buf();
        self.note_input("paths.embeddings", &p)?;
        EmbeddingStore::load(&p).map_err(data(p.display()))
    }

    fn gold(&mut self) -> Result<Vec<CandidateRecord>, CliError> {
        let p = self.cfg.require("paths.labels", &self.cfg.paths.labels)?.to_path_buf();
        let r = self.open("paths.labels", &p)?;
        read_candidate_records(r).map_err(data(p.display()))
    }

    fn trees(&mut self) -> Result<Vec<EvidenceTree>, CliError> {
        if let (Some(t), Some(v)) = (self.reusable(TREES, Command::Extract), self.reusable(TREE_VECTORS, Command::Extract)) {
            let tr = self.open(TREES, &t)?;
            let vr = self.open(TREE_VECTORS, &v)?;
            return codec::read_trees(tr, vr).map_err(data(t.display()));
        }
        let graphs = self.graphs()?;
        let store = self.embeddings()?;
        let lexicon = match self.cfg.paths.lexicon.clone() {
            Some(p) => {
                let r = self.open("paths.lexicon", &p)?;
                TriggerLexicon::from_reader(r).map_err(data(p.display()))?
            }
            None => TriggerLexicon::default(),
        };
        let mut entities = EntitySpec::default();
        if let Some(p) = self.cfg.paths.gazetteer.clone() {
            let mut text = String::new();
            self.open("paths.gazetteer", &p)?.read_to_string(&mut text).map_err(data(p.display()))?;
            entities = entities.with_names(text.lines().map(str::trim).filter(|l| !l.is_empty()));
        }
        let ex = Extractor {
            lexicon: &lexicon,
            entities: &entities,
            store: &store,
        };
        let (trees, stats) = extract_all(&graphs, &ex);
        log::info!(
            "{} graphs, {} candidates, {} trees ({} disconnected, {} too far)",
            stats.graphs,
            stats.candidates,
            stats.trees,
            stats.disconnected,
            stats.too_far
        );
        Ok(trees)
    }

    fn edge_store(&mut self) -> Result<Option<EdgeVectorStore>, CliError> {
        let Some(p) = self.cfg.paths.edge_vectors.clone() else {
            return Ok(None);
        };
        let r = self.open("paths.edge_vectors", &p)?;
        Ok(Some(EdgeVectorStore::read_from(r).map_err(data(p.display()))?))
    }

    fn dataset(&mut self, labeled: bool) -> Result<Dataset, CliError> {
        let trees = self.trees()?;
        let gold = if labeled || self.cfg.paths.labels.is_some() { self.gold()? } else { Vec::new() };
        Ok(Dataset::new(trees, &gold))
    }

    fn evaluator(&mut self, dataset: &Dataset) -> Result<Evaluator, CliError> {
        let store = self.edge_store()?;
        if let Some(p) = self.reusable(GRAM, Command::Gram) {
            let r = self.open(GRAM, &p)?;
            let gram = GramMatrix::read_from(r).map_err(data(p.display()))?;
            return Evaluator::from_gram(dataset, self.cfg.sources, self.cfg.settings, gram).map_err(data(p.display()));
        }
        Evaluator::new(dataset, self.cfg.sources, self.cfg.settings, store.as_ref()).map_err(data("tree kernel"))
    }

    fn write_manifest(&mut self) -> Result<(), CliError> {
        let path = self.artifact(MANIFEST);
        let mut manifest: BTreeMap<String, Value> = match std::fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map_err(data(path.display()))?,
            Err(_) => BTreeMap::new(),
        };
        let config_hash = sha256_file(&self.cfg.origin).ok();
        manifest.insert(
            self.command.name().to_string(),
            json!({
                "config": { "path": self.cfg.origin.display().to_string(), "sha256": config_hash },
                "seed": self.cfg.seed,
                "workers": self.cfg.workers,
                "inputs": self.inputs,
                "outputs": self.outputs,
            }),
        );
        let mut f = BufWriter::new(File::create(&path).map_err(data(path.display()))?);
        serde_json::to_writer_pretty(&mut f, &manifest).map_err(data(path.display()))?;
        writeln!(f).map_err(data(path.display()))?;
        f.flush().map_err(data(path.display()))
    }
}

fn finish<W: Write>(mut w: W, name: &str) -> Result<(), CliError> {
    w.flush().map_err(data(name))
}

fn cmd_parse(ctx: &mut Context) -> Result<(), CliError> {
    let graphs = ctx.graphs()?;
    let mut w = ctx.create(GRAPHS)?;
    codec::write_graphs(&mut w, &graphs).map_err(data(GRAPHS))?;
    finish(w, GRAPHS)
}

fn cmd_extract(ctx: &mut Context) -> Result<(), CliError> {
    let trees = ctx.trees()?;
    let mut tw = ctx.create(TREES)?;
    let mut vw = ctx.create(TREE_VECTORS)?;
    codec::write_trees(&mut tw, &mut vw, &trees).map_err(data(TREES))?;
    finish(tw, TREES)?;
    finish(vw, TREE_VECTORS)?;
    let keys = trees.iter().map(|t| t.key.clone()).collect();
    let labels = match ctx.cfg.paths.labels.clone() {
        Some(_) => Some(assign_labels(&keys, &ctx.gold()?)),
        None => None,
    };
    let records: Vec<CandidateRecord> = keys
        .iter()
        .map(|k| CandidateRecord {
            doc: k.doc.clone(),
            sentence: None,
            trigger_lemma: k.lemma.clone(),
            participants: k.participants.clone(),
            label: labels.as_ref().and_then(|l| l.get(k).copied()),
            source: None,
        })
        .collect();
    let mut cw = ctx.create(CANDIDATES)?;
    write_candidate_records(&mut cw, &records).map_err(data(CANDIDATES))?;
    finish(cw, CANDIDATES)
}

fn cmd_learn_edges(ctx: &mut Context) -> Result<(), CliError> {
    let graphs = ctx.graphs()?;
    let store = ctx.embeddings()?;
    let mut obs = edges::collect_observations(&graphs, &store);
    if let Some(r) = ctx.cfg.edges.reduce {
        obs = obs.reduce(r);
    }
    let (learned, report) = edges::learn(&obs, &ctx.cfg.edges.options()).map_err(data("edge learning"))?;
    log::info!("{} edge labels after {} sweeps (converged: {})", learned.len(), report.sweeps, report.converged);
    let mut w = ctx.create(EDGES)?;
    learned.write_to(&mut w).map_err(data(EDGES))?;
    finish(w, EDGES)
}

fn cmd_gram(ctx: &mut Context) -> Result<(), CliError> {
    let dataset = ctx.dataset(false)?;
    let ev = ctx.evaluator(&dataset)?;
    let mut w = ctx.create(GRAM)?;
    ev.gram.write_to(&mut w).map_err(data(GRAM))?;
    finish(w, GRAM)?;
    if ctx.cfg.mode == InferenceMode::Gdk {
        let s = ctx.cfg.settings;
        let all: Vec<usize> = (0..ev.keys.len()).collect();
        let dists = ev.distributions(&all);
        let (g, report) = distribution::distribution_gram(&dists, s.metric, &ev.gram, s.bandwidth).map_err(data("distribution kernel"))?;
        if report.projected {
            log::info!("distribution Gram projected; min eigenvalue {:e}, {} clipped", report.min_eigenvalue, report.clipped);
        }
        let mut w = ctx.create(GDK_GRAM)?;
        g.write_to(&mut w).map_err(data(GDK_GRAM))?;
        finish(w, GDK_GRAM)?;
    }
    Ok(())
}

fn cmd_train(ctx: &mut Context) -> Result<(), CliError> {
    let dataset = ctx.dataset(true)?;
    let ev = ctx.evaluator(&dataset)?;
    let (model, _): (KernelModel, _) = ev.train_all(ctx.cfg.mode).map_err(data("training"))?;
    let mut w = ctx.create(MODEL)?;
    model.write_to(&mut w).map_err(data(MODEL))?;
    finish(w, MODEL)
}

fn cmd_eval(ctx: &mut Context) -> Result<(), CliError> {
    let dataset = ctx.dataset(true)?;
    let ev = ctx.evaluator(&dataset)?;
    let plan = eval::make_splits(ev.documents(), ctx.cfg.split.folds, ctx.cfg.seed, ctx.cfg.split.runs, ctx.cfg.split.fraction)
        .map_err(data("splits"))?;
    let report = ev.evaluate(&plan, ctx.cfg.mode).map_err(data("evaluation"))?;
    let mut w = ctx.create(REPORT)?;
    report.write_json(&mut w).map_err(data(REPORT))?;
    writeln!(w).map_err(data(REPORT))?;
    finish(w, REPORT)?;
    let mut t = ctx.create(TABLE)?;
    writeln!(t, "{TABLE_HEADER}").map_err(data(TABLE))?;
    for row in report.table_rows() {
        writeln!(t, "{row}").map_err(data(TABLE))?;
    }
    finish(t, TABLE)?;
    for f in report.folds.iter().filter(|f| f.divergent) {
        log::info!("fold {} flagged: train/test divergence {:.4} above {}", f.fold, f.divergence, ctx.cfg.settings.divergence_threshold);
    }
    log::info!("F1 {:.4} ± {:.4}", report.f1_mean, report.f1_std);
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let config = cli.config.as_deref().ok_or(ConfigError::Missing { field: "--config" })?;
    let overrides = Overrides {
        seed: cli.seed,
        workers: cli.workers,
        out: cli.out.clone(),
    };
    let cfg = RunConfig::load(config, &overrides)?;
    std::fs::create_dir_all(&cfg.out).map_err(data(cfg.out.display()))?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(data("thread pool"))?;
    let mut ctx = Context {
        cfg,
        command: cli.command,
        inputs: BTreeMap::new(),
        outputs: Vec::new(),
    };
    pool.install(|| {
        match cli.command {
            Command::Parse => cmd_parse(&mut ctx),
            Command::Extract => cmd_extract(&mut ctx),
            Command::LearnEdges => cmd_learn_edges(&mut ctx),
            Command::Gram => cmd_gram(&mut ctx),
            Command::Train => cmd_train(&mut ctx),
            Command::Eval => cmd_eval(&mut ctx),
        }?;
        ctx.write_manifest()
    })
}
