//! Line-delimited files for graphs and evidence trees.
//!
//! Graphs are one JSON object per line, exactly the serde form of
//! [`LabeledGraph`].
//!
//! Trees use two files. The tree file has one JSON object per line:
//!
//! ```text
//! {"id": "...", "key": {"doc", "lemma", "participants"}, "trigger": "...",
//!  "lemma": "...", "category": "Bind" | "StateChange",
//!  "participants": [{"node", "role"}], "self_interaction": bool,
//!  "doc": "...", "sentence": "...", "source": "AMR" | "SDG",
//!  "tree": NODE}
//! NODE = {"label": str, "role": str, "edge": str, "inverse": bool,
//!         "embedding": int | null, "children": [NODE]}
//! ```
//!
//! `embedding` indexes the vector table, whose first line is
//! `d=<d> n=<n>` followed by `n` lines `<index> <d floats>`. Identical
//! vectors share one index. Floats are printed in shortest round-trip form,
//! so reading a file back reproduces every coordinate bit for bit.

use std::collections::HashMap;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::UnitVector;
use crate::extract::{Category, EvidenceTree, InteractionCandidate, InteractionKey, Participant};
use crate::graph::{EdgeLabel, KernelTree, LabeledGraph, NodeRole, Provenance, Source, TreeNode};

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: embedding index {index} not in vector table")]
    UnknownVector { line: usize, index: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeRecord {
    label: String,
    role: NodeRole,
    edge: String,
    inverse: bool,
    embedding: Option<usize>,
    children: Vec<NodeRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TreeRecord {
    id: String,
    key: InteractionKey,
    trigger: String,
    lemma: String,
    category: Category,
    participants: Vec<Participant>,
    self_interaction: bool,
    doc: String,
    sentence: String,
    source: Source,
    tree: NodeRecord,
}

#[derive(Default)]
struct VectorTable {
    index: HashMap<Vec<u64>, usize>,
    rows: Vec<UnitVector>,
}

impl VectorTable {
    fn intern(&mut self, v: &UnitVector) -> usize {
        let bits: Vec<u64> = v.as_slice().iter().map(|x| x.to_bits()).collect();
        *self.index.entry(bits).or_insert_with(|| {
            self.rows.push(v.clone());
            self.rows.len() - 1
        })
    }
}

fn encode(n: &TreeNode, table: &mut VectorTable) -> NodeRecord {
    NodeRecord {
        label: n.label.clone(),
        role: n.role,
        edge: n.edge.name.clone(),
        inverse: n.edge.inverse,
        embedding: n.embedding.as_ref().map(|v| table.intern(v)),
        children: n.children.iter().map(|c| encode(c, table)).collect(),
    }
}

fn decode(r: NodeRecord, vectors: &[UnitVector], line: usize) -> Result<TreeNode, CodecError> {
    let embedding = match r.embedding {
        None => None,
        Some(i) => Some(
            vectors
                .get(i)
                .cloned()
                .ok_or(CodecError::UnknownVector { line, index: i })?,
        ),
    };
    Ok(TreeNode {
        label: r.label,
        role: r.role,
        edge: EdgeLabel {
            name: r.edge,
            inverse: r.inverse,
        },
        embedding,
        children: r
            .children
            .into_iter()
            .map(|c| decode(c, vectors, line))
            .collect::<Result<_, _>>()?,
    })
}

/// Writes the tree file and its vector table.
pub fn write_trees<W: Write, V: Write>(mut trees_out: W, mut vectors_out: V, trees: &[EvidenceTree]) -> io::Result<()> {
    let mut table = VectorTable::default();
    for t in trees {
        let c = &t.candidate;
        let rec = TreeRecord {
            id: t.id.clone(),
            key: t.key.clone(),
            trigger: c.trigger.clone(),
            lemma: c.lemma.clone(),
            category: c.category,
            participants: c.participants.clone(),
            self_interaction: c.self_interaction,
            doc: t.tree.provenance.document_id.clone(),
            sentence: t.tree.provenance.sentence_id.clone(),
            source: t.tree.source,
            tree: encode(&t.tree.root, &mut table),
        };
        serde_json::to_writer(&mut trees_out, &rec)?;
        trees_out.write_all(b"\n")?;
    }
    let dim = table.rows.first().map_or(0, UnitVector::dim);
    writeln!(vectors_out, "d={dim} n={}", table.rows.len())?;
    for (i, v) in table.rows.iter().enumerate() {
        write!(vectors_out, "{i}")?;
        for x in v.as_slice() {
            write!(vectors_out, " {x:e}")?;
        }
        writeln!(vectors_out)?;
    }
    Ok(())
}

pub fn read_vector_table<R: BufRead>(r: R) -> Result<Vec<UnitVector>, CodecError> {
    let mut out = Vec::new();
    let mut dim = None;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let bad = |message: String| CodecError::Parse { line: i + 1, message };
        if i == 0 {
            let mut d = None;
            for part in line.split_whitespace() {
                if let Some(v) = part.strip_prefix("d=") {
                    d = v.parse::<usize>().ok();
                }
            }
            dim = Some(d.ok_or_else(|| bad("expected `d=<d> n=<n>`".into()))?);
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let idx: usize = parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| bad("missing index".into()))?;
        if idx != out.len() {
            return Err(bad(format!("expected index {}, found {idx}", out.len())));
        }
        let v: Vec<f64> = parts
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| bad("unparseable number".into()))?;
        if Some(v.len()) != dim {
            return Err(bad(format!("expected {} values, found {}", dim.unwrap_or(0), v.len())));
        }
        out.push(UnitVector::from_normalized(v));
    }
    Ok(out)
}

/// Reads trees written by [`write_trees`].
pub fn read_trees<R: BufRead, V: BufRead>(trees_in: R, vectors_in: V) -> Result<Vec<EvidenceTree>, CodecError> {
    let vectors = read_vector_table(vectors_in)?;
    let mut out = Vec::new();
    for (i, line) in trees_in.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TreeRecord = serde_json::from_str(&line).map_err(|e| CodecError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let provenance = Provenance {
            document_id: rec.doc,
            sentence_id: rec.sentence,
        };
        let root = decode(rec.tree, &vectors, i + 1)?;
        out.push(EvidenceTree {
            id: rec.id,
            key: rec.key,
            candidate: InteractionCandidate {
                trigger: rec.trigger,
                lemma: rec.lemma,
                category: rec.category,
                participants: rec.participants,
                self_interaction: rec.self_interaction,
                source: rec.source,
                provenance: provenance.clone(),
            },
            tree: KernelTree::new(root, rec.source, provenance),
        });
    }
    Ok(out)
}

pub fn write_graphs<W: Write>(mut w: W, graphs: &[LabeledGraph]) -> io::Result<()> {
    for g in graphs {
        serde_json::to_writer(&mut w, g)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_graphs<R: BufRead>(r: R) -> Result<Vec<LabeledGraph>, CodecError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let g: LabeledGraph = serde_json::from_str(&line).map_err(|e| CodecError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        g.validate().map_err(|e| CodecError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(g);
    }
    Ok(out)
}
