//! Shortest-path subgraphs and their projection to rooted trees.

use std::collections::{BTreeSet, VecDeque};

use thiserror::Error;

use super::{EntitySpec, InteractionCandidate};
use crate::embedding::EmbeddingStore;
use crate::graph::{sort_children, EdgeLabel, KernelTree, LabeledGraph, NodeRole, TreeNode};

/// Candidates whose participants are farther than this from the trigger are dropped.
pub const MAX_TRIGGER_DISTANCE: usize = 8;

/// Shortest paths kept per participant before choosing a combination.
const MAX_PATHS: usize = 256;
/// Path combinations searched exhaustively; beyond this a greedy choice is made.
const MAX_COMBINATIONS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SubgraphError {
    #[error("participant node `{0}` is unreachable from the trigger")]
    Disconnected(String),
    #[error("participant node `{node}` is {distance} hops from the trigger")]
    TooFar { node: String, distance: usize },
    #[error("candidate refers to node `{0}`, which is not in the graph")]
    UnknownNode(String),
}

fn bfs(adj: &[Vec<(usize, usize)>], start: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[start] = Some(0);
    let mut q = VecDeque::from([start]);
    while let Some(u) = q.pop_front() {
        let du = dist[u].unwrap();
        for &(v, _) in &adj[u] {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                q.push_back(v);
            }
        }
    }
    dist
}

/// Every shortest path from the BFS root to `target`, as node lists, in
/// lexicographic order of their node sequences (at most `MAX_PATHS`).
fn shortest_paths(adj: &[Vec<(usize, usize)>], dist: &[Option<usize>], target: usize) -> Vec<Vec<usize>> {
    fn walk(
        adj: &[Vec<(usize, usize)>],
        dist: &[Option<usize>],
        u: usize,
        suffix: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if out.len() >= MAX_PATHS {
            return;
        }
        let du = dist[u].unwrap();
        if du == 0 {
            let mut p = suffix.clone();
            p.reverse();
            out.push(p);
            return;
        }
        let mut prev: Vec<usize> = adj[u]
            .iter()
            .map(|&(v, _)| v)
            .filter(|&v| dist[v] == Some(du - 1))
            .collect();
        prev.dedup();
        for v in prev {
            suffix.push(v);
            walk(adj, dist, v, suffix, out);
            suffix.pop();
        }
    }
    let mut out = Vec::new();
    let mut suffix = vec![target];
    walk(adj, dist, target, &mut suffix, &mut out);
    out.sort();
    out
}

fn union_of(paths: &[&Vec<usize>]) -> Vec<usize> {
    let set: BTreeSet<usize> = paths.iter().flat_map(|p| p.iter().copied()).collect();
    set.into_iter().collect()
}

fn better(a: &[usize], b: &[usize]) -> bool {
    a.len() < b.len() || (a.len() == b.len() && a < b)
}

/// Union of one shortest path per participant, choosing the combination
/// with the fewest nodes (ties: lexicographically smallest node set), with
/// every edge of `graph` between chosen nodes restored. Node ids are kept;
/// the root is the trigger.
pub fn extract_subgraph(graph: &LabeledGraph, candidate: &InteractionCandidate) -> Result<LabeledGraph, SubgraphError> {
    let index = |id: &str| graph.node_index(id).ok_or_else(|| SubgraphError::UnknownNode(id.to_string()));
    let trigger = index(&candidate.trigger)?;
    let adj = graph.undirected_adjacency();
    let dist = bfs(&adj, trigger);
    let mut targets = Vec::new();
    for id in candidate.participant_nodes() {
        let p = index(id)?;
        if p == trigger {
            continue;
        }
        match dist[p] {
            None => return Err(SubgraphError::Disconnected(id.to_string())),
            Some(d) if d > MAX_TRIGGER_DISTANCE => {
                return Err(SubgraphError::TooFar {
                    node: id.to_string(),
                    distance: d,
                })
            }
            Some(_) => targets.push(p),
        }
    }
    let options: Vec<Vec<Vec<usize>>> = targets.iter().map(|&p| shortest_paths(&adj, &dist, p)).collect();
    let combos = options.iter().try_fold(1usize, |acc, o| acc.checked_mul(o.len()).filter(|&n| n <= MAX_COMBINATIONS));
    let chosen: Vec<usize> = if options.is_empty() {
        vec![trigger]
    } else if combos.is_some() {
        let mut best: Option<Vec<usize>> = None;
        let mut idx = vec![0usize; options.len()];
        loop {
            let pick: Vec<&Vec<usize>> = idx.iter().zip(&options).map(|(&i, o)| &o[i]).collect();
            let u = union_of(&pick);
            if best.as_ref().is_none_or(|b| better(&u, b)) {
                best = Some(u);
            }
            let mut k = 0;
            while k < idx.len() {
                idx[k] += 1;
                if idx[k] < options[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == idx.len() {
                break;
            }
        }
        best.unwrap()
    } else {
        let mut acc: BTreeSet<usize> = BTreeSet::from([trigger]);
        for o in &options {
            let mut best: Option<Vec<usize>> = None;
            for p in o {
                let mut s = acc.clone();
                s.extend(p.iter().copied());
                let v: Vec<usize> = s.into_iter().collect();
                if best.as_ref().is_none_or(|b| better(&v, b)) {
                    best = Some(v);
                }
            }
            acc = best.unwrap().into_iter().collect();
        }
        acc.into_iter().collect()
    };
    Ok(induced(graph, &chosen, trigger))
}

fn induced(graph: &LabeledGraph, keep: &[usize], root: usize) -> LabeledGraph {
    let mut map = vec![None; graph.nodes.len()];
    let mut sub = LabeledGraph::new(graph.source, graph.document_id.clone(), graph.sentence_id.clone());
    for &i in keep {
        map[i] = Some(sub.nodes.len());
        sub.nodes.push(graph.nodes[i].clone());
    }
    for e in &graph.edges {
        if let (Some(s), Some(d)) = (map[e.src], map[e.dst]) {
            sub.edges.push(crate::graph::GraphEdge {
                src: s,
                dst: d,
                label: e.label.clone(),
            });
        }
    }
    sub.root = map[root];
    sub
}

/// Unfolds the subgraph into a tree rooted at the trigger. Each node's
/// children are its neighbors one BFS level further away, one child per
/// connecting edge; an edge walked against its direction gets the inverse
/// label. Nodes reachable along several paths are duplicated, and edges
/// between nodes at the same level are dropped.
pub fn project_to_tree(
    subgraph: &LabeledGraph,
    candidate: &InteractionCandidate,
    entities: &EntitySpec,
    store: &EmbeddingStore,
) -> KernelTree {
    let root = subgraph
        .node_index(&candidate.trigger)
        .expect("subgraph contains the trigger");
    let adj = subgraph.undirected_adjacency();
    let dist = bfs(&adj, root);
    let role_for = |i: usize| -> NodeRole {
        if i == root {
            return NodeRole::InteractionType;
        }
        if let Some(r) = candidate.role_of(&subgraph.nodes[i].id) {
            return r;
        }
        if entities.is_entity(subgraph, i) {
            NodeRole::EntityOther
        } else {
            NodeRole::Concept
        }
    };
    fn build(
        g: &LabeledGraph,
        adj: &[Vec<(usize, usize)>],
        dist: &[Option<usize>],
        u: usize,
        edge: EdgeLabel,
        role_for: &dyn Fn(usize) -> NodeRole,
        store: &EmbeddingStore,
    ) -> TreeNode {
        let n = &g.nodes[u];
        let mut node = TreeNode::new(n.label.clone(), role_for(u), edge).with_embedding(store.lookup(&n.label));
        let du = dist[u].unwrap();
        for &(v, k) in &adj[u] {
            if dist[v] != Some(du + 1) {
                continue;
            }
            let e = &g.edges[k];
            let label = if e.src == u { e.label.clone() } else { e.label.inverted() };
            node.children.push(build(g, adj, dist, v, label, role_for, store));
        }
        node
    }
    let tree = build(subgraph, &adj, &dist, root, EdgeLabel::root(), &role_for, store);
    sort_children(KernelTree::new(tree, subgraph.source, subgraph.provenance()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::{generate_candidates, identify_nodes, TriggerLexicon};
    use crate::graph::{GraphNode, Source};

    fn graph(nodes: &[&str], edges: &[(usize, usize, &str)]) -> LabeledGraph {
        let mut g = LabeledGraph::new(Source::Amr, "d", "d.1");
        for (i, l) in nodes.iter().enumerate() {
            g.add_node(GraphNode {
                id: format!("v{i}"),
                label: l.to_string(),
                role: NodeRole::Concept,
                entity_type: None,
                constant: false,
            })
            .unwrap();
        }
        for &(s, d, l) in edges {
            g.add_edge(s, d, EdgeLabel::new(l)).unwrap();
        }
        g.root = Some(0);
        g
    }

    fn names(ns: &[&str]) -> EntitySpec {
        EntitySpec::default().with_names(ns.iter().copied())
    }

    #[test]
    fn star_subgraph() {
        let g = graph(&["bind-01", "RAS", "GTP", "cell"], &[(0, 1, "ARG1"), (0, 2, "ARG2"), (0, 3, "location")]);
        let lex = TriggerLexicon::default();
        let spec = names(&["RAS", "GTP"]);
        let (e, t) = identify_nodes(&g, &lex, &spec);
        let cands = generate_candidates(&e, &t, &g, &lex);
        let c = cands.iter().find(|c| !c.self_interaction && c.catalyst().is_none()).unwrap();
        let sub = extract_subgraph(&g, c).unwrap();
        assert_eq!(sub.nodes.len(), 3);
        assert_eq!(sub.edges.len(), 2);
    }

    #[test]
    fn disconnected_participant() {
        let g = graph(&["bind-01", "RAS", "GTP"], &[(0, 1, "ARG1")]);
        let lex = TriggerLexicon::default();
        let spec = names(&["RAS", "GTP"]);
        let (e, t) = identify_nodes(&g, &lex, &spec);
        let cands = generate_candidates(&e, &t, &g, &lex);
        let c = cands.iter().find(|c| c.participant_nodes() == ["v1", "v2"]).unwrap();
        assert_eq!(extract_subgraph(&g, c), Err(SubgraphError::Disconnected("v2".into())));
    }
}
