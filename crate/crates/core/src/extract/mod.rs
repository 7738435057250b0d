//! Candidate interactions: which nodes are entities and triggers, how they
//! are combined into candidates, and how each candidate becomes a tree.

mod lexicon;
mod pipeline;
mod records;
mod subgraph;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::graph::{LabeledGraph, NodeRole, Provenance, Source};

pub use lexicon::{Category, TriggerLexicon};
pub use pipeline::{extract_all, EvidenceTree, ExtractStats, Extractor};
pub use records::{
    assign_labels, read_candidate_records, write_candidate_records, CandidateRecord, InteractionKey, Label,
    LabeledCandidate, RecordsError,
};
pub use subgraph::{extract_subgraph, project_to_tree, SubgraphError, MAX_TRIGGER_DISTANCE};

/// Entity types recognized in AMR graphs when none are configured.
pub const DEFAULT_ENTITY_TYPES: [&str; 12] = [
    "protein",
    "enzyme",
    "small-molecule",
    "gene",
    "macro-molecular-complex",
    "protein-family",
    "protein-segment",
    "molecular-physical-entity",
    "chemical",
    "amino-acid",
    "nucleic-acid",
    "dna-sequence",
];

/// How entity nodes are recognized: by AMR entity type, or by a
/// case-insensitive name list (needed for dependency graphs).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntitySpec {
    pub types: BTreeSet<String>,
    pub names: BTreeSet<String>,
}

impl Default for EntitySpec {
    fn default() -> Self {
        EntitySpec {
            types: DEFAULT_ENTITY_TYPES.iter().map(|s| s.to_string()).collect(),
            names: BTreeSet::new(),
        }
    }
}

impl EntitySpec {
    pub fn with_names<I: IntoIterator<Item = S>, S: AsRef<str>>(mut self, names: I) -> Self {
        self.names.extend(names.into_iter().map(|s| s.as_ref().to_lowercase()));
        self
    }

    pub fn is_entity(&self, graph: &LabeledGraph, node: usize) -> bool {
        let n = &graph.nodes[node];
        if n.constant {
            return false;
        }
        n.entity_type.as_ref().is_some_and(|t| self.types.contains(t)) || self.names.contains(&n.label.to_lowercase())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Participant {
    /// Node id in the sentence graph.
    pub node: String,
    pub role: NodeRole,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InteractionCandidate {
    /// Node id of the trigger.
    pub trigger: String,
    pub lemma: String,
    pub category: Category,
    /// Catalyst first when present, then proteins in node order.
    pub participants: Vec<Participant>,
    pub self_interaction: bool,
    pub source: Source,
    pub provenance: Provenance,
}

impl InteractionCandidate {
    pub fn catalyst(&self) -> Option<&str> {
        self.participants
            .iter()
            .find(|p| p.role == NodeRole::Catalyst)
            .map(|p| p.node.as_str())
    }

    pub fn proteins(&self) -> impl Iterator<Item = &str> + '_ {
        self.participants
            .iter()
            .filter(|p| p.role == NodeRole::Protein)
            .map(|p| p.node.as_str())
    }

    /// Distinct participant node ids, sorted.
    pub fn participant_nodes(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.participants.iter().map(|p| p.node.as_str()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Role a participant node gets in the projected tree. A node that is
    /// both catalyst and protein is marked as the catalyst.
    pub fn role_of(&self, node: &str) -> Option<NodeRole> {
        let mut role = None;
        for p in &self.participants {
            if p.node == node {
                if p.role == NodeRole::Catalyst {
                    return Some(NodeRole::Catalyst);
                }
                role = Some(p.role);
            }
        }
        role
    }
}

/// Entity and trigger nodes of a graph, both in ascending node order.
pub fn identify_nodes(graph: &LabeledGraph, lexicon: &TriggerLexicon, entities: &EntitySpec) -> (Vec<usize>, Vec<usize>) {
    let mut ents = Vec::new();
    let mut triggers = Vec::new();
    for i in 0..graph.nodes.len() {
        if entities.is_entity(graph, i) {
            ents.push(i);
        } else if !graph.nodes[i].constant && lexicon.lemmatize(&graph.nodes[i].label).is_some() {
            triggers.push(i);
        }
    }
    (ents, triggers)
}

fn protein(graph: &LabeledGraph, node: usize) -> Participant {
    Participant {
        node: graph.nodes[node].id.clone(),
        role: NodeRole::Protein,
    }
}

fn catalyst(graph: &LabeledGraph, node: usize) -> Participant {
    Participant {
        node: graph.nodes[node].id.clone(),
        role: NodeRole::Catalyst,
    }
}

/// Enumerates every candidate for every trigger.
///
/// State change: `(p)` and `(cat=c, p)` for every entity `c`, where `c = p`
/// is a self-interaction. Bind: `(a, b)` for every unordered pair, the same
/// pair with each other entity as catalyst, and the self-binding `(a, a)`.
pub fn generate_candidates(
    entities: &[usize],
    triggers: &[usize],
    graph: &LabeledGraph,
    lexicon: &TriggerLexicon,
) -> Vec<InteractionCandidate> {
    let ents: Vec<usize> = entities.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let trigs: Vec<usize> = triggers.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let mut out = BTreeSet::new();
    for &t in &trigs {
        let Some((lemma, category)) = lexicon.lemmatize(&graph.nodes[t].label) else {
            continue;
        };
        let make = |participants: Vec<Participant>, self_interaction: bool| InteractionCandidate {
            trigger: graph.nodes[t].id.clone(),
            lemma: lemma.clone(),
            category,
            participants,
            self_interaction,
            source: graph.source,
            provenance: graph.provenance(),
        };
        match category {
            Category::StateChange => {
                for &p in &ents {
                    out.insert(make(vec![protein(graph, p)], false));
                    for &c in &ents {
                        out.insert(make(vec![catalyst(graph, c), protein(graph, p)], c == p));
                    }
                }
            }
            Category::Bind => {
                for (i, &a) in ents.iter().enumerate() {
                    out.insert(make(vec![protein(graph, a), protein(graph, a)], true));
                    for &b in &ents[i + 1..] {
                        out.insert(make(vec![protein(graph, a), protein(graph, b)], false));
                        for &c in &ents {
                            if c != a && c != b {
                                out.insert(make(vec![catalyst(graph, c), protein(graph, a), protein(graph, b)], false));
                            }
                        }
                    }
                }
            }
        }
    }
    out.into_iter().collect()
}
