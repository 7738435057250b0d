//! Graph and tree data model shared by the parsers, the extractor, and the
//! kernels.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::UnitVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeRole {
    Protein,
    Catalyst,
    InteractionType,
    Concept,
    EntityOther,
}

impl NodeRole {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeRole::Protein => "Protein",
            NodeRole::Catalyst => "Catalyst",
            NodeRole::InteractionType => "InteractionType",
            NodeRole::Concept => "Concept",
            NodeRole::EntityOther => "EntityOther",
        }
    }
}

impl fmt::Display for NodeRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which kind of parse a graph or tree came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "AMR")]
    Amr,
    #[serde(rename = "SDG")]
    Sdg,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Amr => "AMR",
            Source::Sdg => "SDG",
        })
    }
}

/// Suffix marking an edge traversed against its stored direction.
pub const INVERSE_SUFFIX: &str = "-of";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeLabel {
    pub name: String,
    #[serde(default)]
    pub inverse: bool,
}

impl EdgeLabel {
    pub fn new(name: impl Into<String>) -> Self {
        EdgeLabel {
            name: name.into(),
            inverse: false,
        }
    }

    /// The label seen when walking the edge from its target back to its source.
    pub fn inverted(&self) -> Self {
        if self.inverse {
            let base = self.name.strip_suffix(INVERSE_SUFFIX).unwrap_or(&self.name);
            EdgeLabel::new(base)
        } else {
            EdgeLabel {
                name: format!("{}{}", self.name, INVERSE_SUFFIX),
                inverse: true,
            }
        }
    }

    /// Reserved incoming label of a root node.
    pub fn root() -> Self {
        EdgeLabel::new("")
    }

    pub fn is_root(&self) -> bool {
        self.name.is_empty()
    }

    /// Name with any inverse suffix removed.
    pub fn base_name(&self) -> &str {
        if self.inverse {
            self.name.strip_suffix(INVERSE_SUFFIX).unwrap_or(&self.name)
        } else {
            &self.name
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub document_id: String,
    pub sentence_id: String,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GraphError {
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("self-loop on node `{0}`")]
    SelfLoop(String),
    #[error("edge endpoint {0} does not exist")]
    MissingEndpoint(usize),
    #[error("empty edge label")]
    EmptyEdgeLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: String,
    pub label: String,
    pub role: NodeRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_type: Option<String>,
    /// AMR attribute value (`:polarity -`, `:quant 5`) rather than a concept.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub constant: bool,
}

impl GraphNode {
    /// Plain concept node with no entity type.
    pub fn concept(id: impl Into<String>, label: impl Into<String>) -> Self {
        GraphNode {
            id: id.into(),
            label: label.into(),
            role: NodeRole::Concept,
            entity_type: None,
            constant: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub src: usize,
    pub dst: usize,
    pub label: EdgeLabel,
}

/// A sentence parse. Nodes are addressed by position; `id` is the source
/// identifier (AMR variable or token index).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledGraph {
    pub source: Source,
    pub document_id: String,
    pub sentence_id: String,
    pub root: Option<usize>,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

impl LabeledGraph {
    pub fn new(source: Source, document_id: impl Into<String>, sentence_id: impl Into<String>) -> Self {
        LabeledGraph {
            source,
            document_id: document_id.into(),
            sentence_id: sentence_id.into(),
            root: None,
            nodes: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn add_node(&mut self, node: GraphNode) -> Result<usize, GraphError> {
        if self.nodes.iter().any(|n| n.id == node.id) {
            return Err(GraphError::DuplicateNode(node.id));
        }
        self.nodes.push(node);
        Ok(self.nodes.len() - 1)
    }

    pub fn add_edge(&mut self, src: usize, dst: usize, label: EdgeLabel) -> Result<(), GraphError> {
        for &end in &[src, dst] {
            if end >= self.nodes.len() {
                return Err(GraphError::MissingEndpoint(end));
            }
        }
        if src == dst {
            return Err(GraphError::SelfLoop(self.nodes[src].id.clone()));
        }
        if label.name.is_empty() {
            return Err(GraphError::EmptyEdgeLabel);
        }
        self.edges.push(GraphEdge { src, dst, label });
        Ok(())
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            document_id: self.document_id.clone(),
            sentence_id: self.sentence_id.clone(),
        }
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Checks the structural invariants; used after deserialization.
    pub fn validate(&self) -> Result<(), GraphError> {
        let mut seen = HashSet::new();
        for n in &self.nodes {
            if !seen.insert(n.id.as_str()) {
                return Err(GraphError::DuplicateNode(n.id.clone()));
            }
        }
        for e in &self.edges {
            for &end in &[e.src, e.dst] {
                if end >= self.nodes.len() {
                    return Err(GraphError::MissingEndpoint(end));
                }
            }
            if e.src == e.dst {
                return Err(GraphError::SelfLoop(self.nodes[e.src].id.clone()));
            }
            if e.label.name.is_empty() {
                return Err(GraphError::EmptyEdgeLabel);
            }
        }
        if let Some(r) = self.root {
            if r >= self.nodes.len() {
                return Err(GraphError::MissingEndpoint(r));
            }
        }
        Ok(())
    }

    /// Undirected adjacency: for each node, `(neighbor, edge index)` sorted by
    /// neighbor then edge index.
    pub fn undirected_adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (k, e) in self.edges.iter().enumerate() {
            adj[e.src].push((e.dst, k));
            adj[e.dst].push((e.src, k));
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Outgoing edge indices per node, in edge order.
    pub fn outgoing(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (k, e) in self.edges.iter().enumerate() {
            out[e.src].push(k);
        }
        out
    }
}

/// One node of a kernel tree together with its incoming edge label.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub label: String,
    pub role: NodeRole,
    pub edge: EdgeLabel,
    pub embedding: Option<UnitVector>,
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    pub fn new(label: impl Into<String>, role: NodeRole, edge: EdgeLabel) -> Self {
        TreeNode {
            label: label.into(),
            role,
            edge,
            embedding: None,
            children: Vec::new(),
        }
    }

    pub fn with_embedding(mut self, embedding: Option<UnitVector>) -> Self {
        self.embedding = embedding;
        self
    }

    pub fn with_child(mut self, child: TreeNode) -> Self {
        self.children.push(child);
        self
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(TreeNode::size).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(TreeNode::depth).max().unwrap_or(0)
    }

    /// Pre-order traversal.
    pub fn preorder(&self) -> Vec<&TreeNode> {
        let mut out = Vec::with_capacity(self.size());
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(n.children.iter().rev());
        }
        out
    }
}

/// Rooted ordered tree compared by the convolution kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTree {
    pub root: TreeNode,
    pub source: Source,
    pub provenance: Provenance,
}

impl KernelTree {
    pub fn new(root: TreeNode, source: Source, provenance: Provenance) -> Self {
        KernelTree {
            root,
            source,
            provenance,
        }
    }

    pub fn size(&self) -> usize {
        self.root.size()
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }
}

/// Total order used for canonical child ordering: edge name, then node label,
/// then the remaining node fields and the (already canonical) subtrees.
fn canonical_cmp(a: &TreeNode, b: &TreeNode) -> Ordering {
    a.edge
        .name
        .cmp(&b.edge.name)
        .then_with(|| a.label.cmp(&b.label))
        .then_with(|| a.edge.inverse.cmp(&b.edge.inverse))
        .then_with(|| a.role.cmp(&b.role))
        .then_with(|| cmp_embedding(&a.embedding, &b.embedding))
        .then_with(|| a.children.len().cmp(&b.children.len()))
        .then_with(|| {
            a.children
                .iter()
                .zip(&b.children)
                .map(|(x, y)| canonical_cmp(x, y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

fn cmp_embedding(a: &Option<UnitVector>, b: &Option<UnitVector>) -> Ordering {
    match (a, b) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (Some(x), Some(y)) => x
            .as_slice()
            .iter()
            .zip(y.as_slice())
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or_else(|| x.dim().cmp(&y.dim())),
    }
}

fn sort_node(node: &mut TreeNode) {
    for c in &mut node.children {
        sort_node(c);
    }
    node.children.sort_by(canonical_cmp);
}

/// Returns the tree with every child list in canonical order.
pub fn sort_children(mut tree: KernelTree) -> KernelTree {
    sort_node(&mut tree.root);
    tree
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Pre-order index of the offending node.
    pub node: usize,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn at(node: usize) -> String {
    if node == 0 {
        "root".to_string()
    } else {
        format!("node n{node}")
    }
}

/// Lists every broken tree invariant; empty means the tree is well formed.
pub fn validate_tree(tree: &KernelTree) -> Vec<Violation> {
    let mut out = Vec::new();
    let nodes = tree.root.preorder();
    let dim = nodes.iter().find_map(|n| n.embedding.as_ref().map(UnitVector::dim));
    if !tree.root.edge.is_root() {
        out.push(Violation {
            node: 0,
            message: "root edge label not the empty sentinel".into(),
        });
    }
    for (i, n) in nodes.iter().enumerate() {
        if i > 0 && n.edge.is_root() {
            out.push(Violation {
                node: i,
                message: format!("empty edge label at {}", at(i)),
            });
        }
        if let Some(e) = &n.embedding {
            if !e.is_unit() {
                out.push(Violation {
                    node: i,
                    message: format!("embedding not unit at {}", at(i)),
                });
            }
            if Some(e.dim()) != dim {
                out.push(Violation {
                    node: i,
                    message: format!("embedding dimension mismatch at {}", at(i)),
                });
            }
        }
        let sorted = n
            .children
            .windows(2)
            .all(|w| canonical_cmp(&w[0], &w[1]) != Ordering::Greater);
        if !sorted {
            out.push(Violation {
                node: i,
                message: format!("children unsorted at {}", at(i)),
            });
        }
    }
    out
}
