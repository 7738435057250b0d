//! Typed-dependency reader: one `relation(governor-i, dependent-j)` triple per
//! line, `ROOT-0` as the artificial governor of the sentence head.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::{split_records, Record, RecordError};
use crate::graph::{EdgeLabel, GraphNode, LabeledGraph, NodeRole, Source};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DependencyError {
    #[error("malformed triple at line {line}: {reason}")]
    MalformedTriple { line: usize, reason: String },
    #[error("sentence `{0}` has no root relation")]
    MissingRoot(String),
    #[error("record starting at line {0} has no `# ::id` comment")]
    MissingId(usize),
}

#[derive(Debug, Clone)]
pub struct DependencyDocument {
    records: Vec<(Option<Record>, usize)>,
}

impl DependencyDocument {
    pub fn from_text(text: &str) -> Self {
        DependencyDocument {
            records: split_records(text),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

struct Triple<'a> {
    rel: &'a str,
    gov: (&'a str, usize),
    dep: (&'a str, usize),
}

fn split_token(tok: &str) -> Option<(&str, usize)> {
    let tok = tok.trim().trim_end_matches('\'');
    let p = tok.rfind('-')?;
    let word = &tok[..p];
    let idx = tok[p + 1..].parse::<usize>().ok()?;
    if word.is_empty() {
        return None;
    }
    Some((word, idx))
}

fn parse_triple(line: &str) -> Result<Triple<'_>, String> {
    let line = line.trim();
    let open = line.find('(').ok_or("missing `(`")?;
    let inner = line[open + 1..].strip_suffix(')').ok_or("missing `)`")?;
    let rel = line[..open].trim();
    if rel.is_empty() {
        return Err("empty relation".into());
    }
    let comma = inner.find(", ").ok_or("missing `, ` separator")?;
    let gov = split_token(&inner[..comma]).ok_or("bad governor token")?;
    let dep = split_token(&inner[comma + 2..]).ok_or("bad dependent token")?;
    Ok(Triple { rel, gov, dep })
}

/// Parses every sentence; failures are reported per sentence.
pub fn parse_dependencies(
    doc: &DependencyDocument,
) -> Vec<Result<LabeledGraph, RecordError<DependencyError>>> {
    doc.records
        .iter()
        .enumerate()
        .map(|(k, (rec, start))| match rec {
            None => Err(RecordError {
                record: k,
                sentence_id: String::new(),
                error: DependencyError::MissingId(*start),
            }),
            Some(rec) => parse_sentence(rec).map_err(|error| RecordError {
                record: k,
                sentence_id: rec.sentence_id.clone(),
                error,
            }),
        })
        .collect()
}

fn parse_sentence(rec: &Record) -> Result<LabeledGraph, DependencyError> {
    let malformed = |line: usize, reason: &str| DependencyError::MalformedTriple {
        line,
        reason: reason.to_string(),
    };
    let mut tokens: BTreeMap<usize, String> = BTreeMap::new();
    let mut arcs: Vec<(usize, usize, String)> = Vec::new();
    let mut root: Option<usize> = None;
    for (lineno, text) in &rec.lines {
        let t = parse_triple(text).map_err(|r| malformed(*lineno, &r))?;
        if t.dep.1 == 0 {
            return Err(malformed(*lineno, "dependent index 0"));
        }
        let mut note = |(word, idx): (&str, usize)| -> Result<(), DependencyError> {
            match tokens.get(&idx) {
                Some(w) if w != word => Err(malformed(*lineno, "token index reused with a different word")),
                Some(_) => Ok(()),
                None => {
                    tokens.insert(idx, word.to_string());
                    Ok(())
                }
            }
        };
        note(t.dep)?;
        if t.gov.1 == 0 {
            if root.is_some() {
                return Err(malformed(*lineno, "second root relation"));
            }
            root = Some(t.dep.1);
            continue;
        }
        note(t.gov)?;
        if t.gov.1 == t.dep.1 {
            return Err(malformed(*lineno, "self-loop"));
        }
        arcs.push((t.gov.1, t.dep.1, t.rel.to_string()));
    }
    let root = root.ok_or_else(|| DependencyError::MissingRoot(rec.sentence_id.clone()))?;
    let mut g = LabeledGraph::new(Source::Sdg, rec.document_id.clone(), rec.sentence_id.clone());
    let mut index_of = BTreeMap::new();
    for (idx, word) in &tokens {
        let k = g
            .add_node(GraphNode {
                id: idx.to_string(),
                label: word.clone(),
                role: NodeRole::Concept,
                entity_type: None,
                constant: false,
            })
            .expect("token indices are unique");
        index_of.insert(*idx, k);
    }
    for (gov, dep, rel) in arcs {
        g.add_edge(index_of[&gov], index_of[&dep], EdgeLabel::new(rel))
            .expect("endpoints exist and differ");
    }
    g.root = Some(index_of[&root]);
    Ok(g)
}

/// Writes a dependency graph back to triples with its `# ::id`/`# ::doc`
/// comments; node ids must be the token indices.
pub fn to_dependencies(graph: &LabeledGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# ::id {}", graph.sentence_id);
    let _ = writeln!(out, "# ::doc {}", graph.document_id);
    if let Some(r) = graph.root {
        let n = &graph.nodes[r];
        let _ = writeln!(out, "root(ROOT-0, {}-{})", n.label, n.id);
    }
    for e in &graph.edges {
        let g = &graph.nodes[e.src];
        let d = &graph.nodes[e.dst];
        let _ = writeln!(out, "{}({}-{}, {}-{})", e.label.name, g.label, g.id, d.label, d.id);
    }
    out
}
