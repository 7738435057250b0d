use rayon::prelude::*;
use serde::Serialize;

use super::{
    extract_subgraph, generate_candidates, identify_nodes, project_to_tree, EntitySpec, InteractionCandidate,
    InteractionKey, SubgraphError, TriggerLexicon,
};
use crate::embedding::EmbeddingStore;
use crate::graph::{KernelTree, LabeledGraph};

/// One projected tree together with the candidate it supports.
#[derive(Debug, Clone)]
pub struct EvidenceTree {
    /// Unique within a corpus: sentence, source, trigger and participants.
    pub id: String,
    pub key: InteractionKey,
    pub candidate: InteractionCandidate,
    pub tree: KernelTree,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ExtractStats {
    pub graphs: usize,
    pub candidates: usize,
    pub trees: usize,
    pub disconnected: usize,
    pub too_far: usize,
}

impl ExtractStats {
    fn merge(mut self, o: ExtractStats) -> Self {
        self.graphs += o.graphs;
        self.candidates += o.candidates;
        self.trees += o.trees;
        self.disconnected += o.disconnected;
        self.too_far += o.too_far;
        self
    }
}

pub struct Extractor<'a> {
    pub lexicon: &'a TriggerLexicon,
    pub entities: &'a EntitySpec,
    pub store: &'a EmbeddingStore,
}

fn tree_id(c: &InteractionCandidate) -> String {
    let mut id = format!("{}|{}|{}", c.provenance.sentence_id, c.source, c.trigger);
    for p in &c.participants {
        id.push('|');
        id.push_str(p.role.as_str());
        id.push('=');
        id.push_str(&p.node);
    }
    id
}

impl Extractor<'_> {
    pub fn extract(&self, graph: &LabeledGraph) -> (Vec<EvidenceTree>, ExtractStats) {
        let (ents, trigs) = identify_nodes(graph, self.lexicon, self.entities);
        let cands = generate_candidates(&ents, &trigs, graph, self.lexicon);
        let mut stats = ExtractStats {
            graphs: 1,
            candidates: cands.len(),
            ..Default::default()
        };
        let mut out = Vec::new();
        for c in cands {
            match extract_subgraph(graph, &c) {
                Ok(sub) => {
                    let tree = project_to_tree(&sub, &c, self.entities, self.store);
                    out.push(EvidenceTree {
                        id: tree_id(&c),
                        key: InteractionKey::from_candidate(&c, graph),
                        candidate: c,
                        tree,
                    });
                }
                Err(SubgraphError::TooFar { .. }) => stats.too_far += 1,
                Err(_) => stats.disconnected += 1,
            }
        }
        stats.trees = out.len();
        (out, stats)
    }
}

/// Runs the extractor over every graph in parallel; output order follows
/// the input order.
pub fn extract_all(graphs: &[LabeledGraph], extractor: &Extractor<'_>) -> (Vec<EvidenceTree>, ExtractStats) {
    let parts: Vec<(Vec<EvidenceTree>, ExtractStats)> = graphs.par_iter().map(|g| extractor.extract(g)).collect();
    let mut trees = Vec::new();
    let mut stats = ExtractStats::default();
    for (t, s) in parts {
        trees.extend(t);
        stats = stats.merge(s);
    }
    (trees, stats)
}
