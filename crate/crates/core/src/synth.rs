//! Seeded synthetic data: random trees, planted edge-matrix systems, and the
//! small corpora used by the tests and the bundled toy fixture.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::embedding::{EmbeddingStore, OovPolicy, UnitVector};
use crate::extract::{Category, CandidateRecord, EvidenceTree, InteractionCandidate, InteractionKey, Label, Participant};
use crate::graph::{sort_children, EdgeLabel, GraphNode, KernelTree, LabeledGraph, NodeRole, Provenance, Source, TreeNode};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn random_unit<R: Rng>(rng: &mut R, d: usize) -> UnitVector {
    loop {
        if let Some(v) = UnitVector::new(gaussian_vec(rng, d)) {
            return v;
        }
    }
}

/// Haar-distributed orthogonal matrix.
pub fn random_orthogonal<R: Rng>(rng: &mut R, d: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for c in 0..d {
        if r[(c, c)] < 0.0 {
            for row in 0..d {
                q[(row, c)] = -q[(row, c)];
            }
        }
    }
    q
}

/// Word, edge and role alphabet for random trees.
#[derive(Debug, Clone)]
pub struct TreeVocab {
    pub words: Vec<(String, Option<UnitVector>)>,
    pub edges: Vec<String>,
    pub roles: Vec<NodeRole>,
}

impl TreeVocab {
    /// `n_words` words with random unit embeddings of dimension `dim`.
    pub fn random<R: Rng>(rng: &mut R, n_words: usize, dim: usize, n_edges: usize) -> Self {
        TreeVocab {
            words: (0..n_words).map(|i| (format!("w{i}"), Some(random_unit(rng, dim)))).collect(),
            edges: (0..n_edges).map(|i| format!("e{i}")).collect(),
            roles: vec![NodeRole::Protein, NodeRole::Concept, NodeRole::InteractionType],
        }
    }
}

fn random_node<R: Rng>(rng: &mut R, vocab: &TreeVocab, edge: EdgeLabel, levels: usize, fanout: usize) -> TreeNode {
    let (label, emb) = &vocab.words[rng.random_range(0..vocab.words.len())];
    let role = vocab.roles[rng.random_range(0..vocab.roles.len())];
    let mut node = TreeNode::new(label.clone(), role, edge).with_embedding(emb.clone());
    if levels > 1 {
        let k = rng.random_range(0..=fanout);
        for _ in 0..k {
            let e = EdgeLabel::new(vocab.edges[rng.random_range(0..vocab.edges.len())].clone());
            node.children.push(random_node(rng, vocab, e, levels - 1, fanout));
        }
    }
    node
}

/// Canonically sorted random tree with at most `max_depth` levels and
/// `max_fanout` children per node.
pub fn random_tree<R: Rng>(rng: &mut R, vocab: &TreeVocab, max_depth: usize, max_fanout: usize) -> KernelTree {
    let root = random_node(rng, vocab, EdgeLabel::root(), max_depth, max_fanout);
    let prov = Provenance {
        document_id: "synthetic".into(),
        sentence_id: "synthetic".into(),
    };
    sort_children(KernelTree::new(root, Source::Amr, prov))
}

/// Graphs whose edges follow known matrices exactly: every parent is
/// `y = x A_l` for each child `x` on an edge labeled `l`.
#[derive(Debug, Clone)]
pub struct PlantedEdges {
    pub graphs: Vec<LabeledGraph>,
    pub store: EmbeddingStore,
    pub truth: BTreeMap<String, DMatrix<f64>>,
}

/// Builds `rounds` rounds; in each, the labels are shuffled and paired, and
/// every pair (or leftover single label) becomes one parent with one child
/// per label. Each label therefore gets exactly `rounds` observations.
pub fn planted_edges<R: Rng>(
    rng: &mut R,
    dim: usize,
    truth: &BTreeMap<String, DMatrix<f64>>,
    rounds: usize,
    source: Source,
    prefix: &str,
) -> PlantedEdges {
    let labels: Vec<&String> = truth.keys().collect();
    let mut store = EmbeddingStore::new(dim, OovPolicy::ExactOnly);
    let mut graphs = Vec::new();
    let mut tok = 0usize;
    let mut fresh = |store: &mut EmbeddingStore, v: &[f64]| {
        let name = format!("{prefix}{tok}");
        tok += 1;
        store.insert(&name, v.to_vec()).expect("planted vectors are nonzero");
        name
    };
    for r in 0..rounds {
        let mut order = labels.clone();
        order.shuffle(rng);
        for (g, group) in order.chunks(2).enumerate() {
            let y = random_unit(rng, dim);
            let yrow = DMatrix::from_row_slice(1, dim, y.as_slice());
            let sid = format!("{prefix}{r}.{g}");
            let mut graph = LabeledGraph::new(source, format!("{prefix}{r}"), sid);
            let pname = fresh(&mut store, y.as_slice());
            let p = graph
                .add_node(GraphNode::concept("p", pname))
                .expect("fresh node id");
            graph.root = Some(p);
            for (c, &label) in group.iter().enumerate() {
                let x = &yrow * truth[label].transpose();
                let cname = fresh(&mut store, x.as_slice());
                let ci = graph
                    .add_node(GraphNode::concept(format!("c{c}"), cname))
                    .expect("fresh node id");
                graph.add_edge(p, ci, EdgeLabel::new(label.clone())).expect("valid edge");
            }
            graphs.push(graph);
        }
    }
    PlantedEdges {
        graphs,
        store,
        truth: truth.clone(),
    }
}

/// Random orthogonal matrices for the given labels.
pub fn planted_truth<R: Rng>(rng: &mut R, dim: usize, labels: &[&str]) -> BTreeMap<String, DMatrix<f64>> {
    labels.iter().map(|l| (l.to_string(), random_orthogonal(rng, dim))).collect()
}

/// AMR and SDG corpora in which `ARG0`/`nsubj` share one matrix and
/// `ARG1`/`acomp` share another.
pub fn bilingual_edges<R: Rng>(rng: &mut R, dim: usize, rounds: usize) -> (PlantedEdges, PlantedEdges) {
    let agent = random_orthogonal(rng, dim);
    let patient = random_orthogonal(rng, dim);
    let amr: BTreeMap<String, DMatrix<f64>> =
        [("ARG0".to_string(), agent.clone()), ("ARG1".to_string(), patient.clone())].into();
    let sdg: BTreeMap<String, DMatrix<f64>> = [("nsubj".to_string(), agent), ("acomp".to_string(), patient)].into();
    (
        planted_edges(rng, dim, &amr, rounds, Source::Amr, "a"),
        planted_edges(rng, dim, &sdg, rounds, Source::Sdg, "s"),
    )
}

/// Bundled separable corpus: every document holds one sentence in which one
/// protein phosphorylates (Valid) or inhibits (Invalid) another.
#[derive(Debug, Clone)]
pub struct ToyCorpus {
    pub amr: String,
    pub sdg: String,
    pub embeddings: EmbeddingStore,
    pub gold: Vec<CandidateRecord>,
    pub gazetteer: Vec<String>,
}

pub const TOY_DIM: usize = 8;

fn basis(d: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[i] = 1.0;
    v
}

pub fn toy_corpus(n_docs: usize, seed: u64) -> ToyCorpus {
    let mut rng = rng(seed);
    let mut store = EmbeddingStore::new(TOY_DIM, OovPolicy::FallbackChain);
    for (words, axis) in [(["phosphorylate", "phosphorylates"], 0), (["inhibit", "inhibits"], 1)] {
        for w in words {
            store.insert(w, basis(TOY_DIM, axis)).expect("basis vector");
        }
    }
    let mut amr = String::new();
    let mut sdg = String::new();
    let mut gold = Vec::new();
    let mut gazetteer = Vec::new();
    for i in 0..n_docs {
        let doc = format!("doc{i:02}");
        let sid = format!("{doc}.1");
        let valid = i % 2 == 0;
        let (concept, verb, lemma) = if valid {
            ("phosphorylate-01", "phosphorylates", "phosphorylate")
        } else {
            ("inhibit-01", "inhibits", "inhibit")
        };
        let a = format!("PA{i}");
        let b = format!("PB{i}");
        for name in [&a, &b] {
            // protein vectors live in the subspace orthogonal to the triggers
            let mut v = gaussian_vec(&mut rng, TOY_DIM);
            v[0] = 0.0;
            v[1] = 0.0;
            store.insert(name, v).expect("nonzero vector");
            gazetteer.push(name.clone());
        }
        let _ = writeln!(amr, "# ::id {sid}\n# ::doc {doc}");
        let _ = writeln!(
            amr,
            "(p / {concept}\n   :ARG0 (x / protein :name (n / name :op1 \"{a}\"))\n   :ARG1 (y / protein :name (n2 / name :op1 \"{b}\")))\n"
        );
        let _ = writeln!(
            sdg,
            "# ::id {sid}\n# ::doc {doc}\nnsubj({verb}-2, {a}-1)\nroot(ROOT-0, {verb}-2)\ndobj({verb}-2, {b}-3)\n"
        );
        if valid {
            let cat = |n: &str| (n.to_string(), NodeRole::Catalyst);
            let pro = |n: &str| (n.to_string(), NodeRole::Protein);
            for parts in [
                vec![pro(&a)],
                vec![pro(&b)],
                vec![cat(&a), pro(&b)],
                vec![cat(&b), pro(&a)],
                vec![cat(&a), pro(&a)],
                vec![cat(&b), pro(&b)],
            ] {
                gold.push(CandidateRecord {
                    doc: doc.clone(),
                    sentence: None,
                    trigger_lemma: lemma.to_string(),
                    participants: parts,
                    label: Some(Label::Valid),
                    source: None,
                });
            }
        }
    }
    ToyCorpus {
        amr,
        sdg,
        embeddings: store,
        gold,
        gazetteer,
    }
}

fn blend(a: &[f64], b: &[f64], w: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| w * x + (1.0 - w) * y).collect()
}

/// Weight of the other class in a noise tree's root direction.
pub const NOISE_LEAN: f64 = 0.6;

/// Tree-level corpus in which every interaction has three evidence trees,
/// two typical of its class and one that leans toward the other class.
pub fn noisy_trees(n_docs: usize, seed: u64) -> (Vec<EvidenceTree>, BTreeMap<InteractionKey, Label>) {
    const DIM: usize = 12;
    let mut rng = rng(seed);
    let class_dir = [basis(DIM, 0), basis(DIM, 1)];
    let mut trees = Vec::new();
    let mut labels = BTreeMap::new();
    let near = |rng: &mut ChaCha8Rng, dir: &[f64], spread: f64| {
        let noise = gaussian_vec(rng, DIM);
        let v: Vec<f64> = dir.iter().zip(noise).map(|(d, n)| d + spread * n / (DIM as f64).sqrt()).collect();
        UnitVector::new(v).expect("nonzero")
    };
    for i in 0..n_docs {
        let doc = format!("nd{i:03}");
        let class = i % 2;
        let label = if class == 0 { Label::Valid } else { Label::Invalid };
        let (a, b) = (format!("QA{i}"), format!("QB{i}"));
        let key = InteractionKey::new(
            doc.clone(),
            "regulate",
            vec![(a.clone(), NodeRole::Catalyst), (b.clone(), NodeRole::Protein)],
        );
        labels.insert(key.clone(), label);
        let ea = near(&mut rng, &basis(DIM, 2), 0.1);
        let eb = near(&mut rng, &basis(DIM, 3), 0.1);
        for s in 0..3 {
            // the noise tree leans toward the other class without reaching it
            let (dir, spread) = if s < 2 { (class_dir[class].clone(), 0.2) } else { (blend(&class_dir[1 - class], &class_dir[class], NOISE_LEAN), 0.2) };
            let root = TreeNode::new("regulate-01", NodeRole::InteractionType, EdgeLabel::root())
                .with_embedding(Some(near(&mut rng, &dir, spread)))
                .with_child(TreeNode::new(a.clone(), NodeRole::Catalyst, EdgeLabel::new("ARG0")).with_embedding(Some(ea.clone())))
                .with_child(TreeNode::new(b.clone(), NodeRole::Protein, EdgeLabel::new("ARG1")).with_embedding(Some(eb.clone())));
            let provenance = Provenance {
                document_id: doc.clone(),
                sentence_id: format!("{doc}.{s}"),
            };
            let tree = sort_children(KernelTree::new(root, Source::Amr, provenance.clone()));
            trees.push(EvidenceTree {
                id: format!("{doc}.{s}|AMR|r"),
                key: key.clone(),
                candidate: InteractionCandidate {
                    trigger: "r".into(),
                    lemma: "regulate".into(),
                    category: Category::StateChange,
                    participants: vec![
                        Participant {
                            node: "a".into(),
                            role: NodeRole::Catalyst,
                        },
                        Participant {
                            node: "b".into(),
                            role: NodeRole::Protein,
                        },
                    ],
                    self_interaction: false,
                    source: Source::Amr,
                    provenance,
                },
                tree,
            });
        }
    }
    (trees, labels)
}
