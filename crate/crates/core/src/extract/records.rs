//! Document-level interaction keys, gold labels, and the candidate record
//! format.
//!
//! A candidate record is one JSON object per line with the fields, in this
//! order: `doc`, `sentence`, `trigger_lemma`, `participants` (a list of
//! `[name, role]` pairs), `label` (`"Valid"`, `"Invalid"`, `"Swap"` or
//! `null`), `source` (`"AMR"`, `"SDG"` or `null`). In gold-label files
//! `sentence` and `source` may be `null`, meaning the label applies to the
//! interaction wherever it occurs in the document.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::InteractionCandidate;
use crate::graph::{LabeledGraph, NodeRole, Source};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Valid,
    Invalid,
    Swap,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Valid, Label::Invalid, Label::Swap];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Valid => "Valid",
            Label::Invalid => "Invalid",
            Label::Swap => "Swap",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identity of an interaction within a document, shared by every sentence
/// and parse that supports it. Participant names are lowercased; the
/// catalyst (if any) comes first, then proteins sorted by name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InteractionKey {
    pub doc: String,
    pub lemma: String,
    pub participants: Vec<(String, NodeRole)>,
}

impl InteractionKey {
    pub fn new(doc: impl Into<String>, lemma: impl Into<String>, participants: Vec<(String, NodeRole)>) -> Self {
        let mut cat: Vec<(String, NodeRole)> = Vec::new();
        let mut prot: Vec<(String, NodeRole)> = Vec::new();
        for (name, role) in participants {
            let name = name.to_lowercase();
            if role == NodeRole::Catalyst {
                cat.push((name, role));
            } else {
                prot.push((name, role));
            }
        }
        cat.sort();
        prot.sort();
        cat.extend(prot);
        InteractionKey {
            doc: doc.into(),
            lemma: lemma.into(),
            participants: cat,
        }
    }

    pub fn from_candidate(c: &InteractionCandidate, graph: &LabeledGraph) -> Self {
        let parts = c
            .participants
            .iter()
            .map(|p| {
                let name = graph
                    .node_index(&p.node)
                    .map(|i| graph.nodes[i].label.clone())
                    .unwrap_or_else(|| p.node.clone());
                (name, p.role)
            })
            .collect();
        InteractionKey::new(c.provenance.document_id.clone(), c.lemma.clone(), parts)
    }

    /// The key with catalyst and protein exchanged, when there is exactly
    /// one of each.
    pub fn swapped(&self) -> Option<InteractionKey> {
        let cats: Vec<&String> = self.participants.iter().filter(|p| p.1 == NodeRole::Catalyst).map(|p| &p.0).collect();
        let prots: Vec<&String> = self.participants.iter().filter(|p| p.1 == NodeRole::Protein).map(|p| &p.0).collect();
        if cats.len() != 1 || prots.len() != 1 || cats[0] == prots[0] {
            return None;
        }
        Some(InteractionKey::new(
            self.doc.clone(),
            self.lemma.clone(),
            vec![(prots[0].clone(), NodeRole::Catalyst), (cats[0].clone(), NodeRole::Protein)],
        ))
    }
}

impl fmt::Display for InteractionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}(", self.doc, self.lemma)?;
        for (i, (n, r)) in self.participants.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            if *r == NodeRole::Catalyst {
                write!(f, "cat={n}")?;
            } else {
                f.write_str(n)?;
            }
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledCandidate {
    pub key: InteractionKey,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub doc: String,
    #[serde(default)]
    pub sentence: Option<String>,
    pub trigger_lemma: String,
    pub participants: Vec<(String, NodeRole)>,
    #[serde(default)]
    pub label: Option<Label>,
    #[serde(default)]
    pub source: Option<Source>,
}

impl CandidateRecord {
    pub fn key(&self) -> InteractionKey {
        InteractionKey::new(self.doc.clone(), self.trigger_lemma.clone(), self.participants.clone())
    }
}

#[derive(Debug, Error)]
pub enum RecordsError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn write_candidate_records<W: Write>(mut w: W, records: &[CandidateRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_candidate_records<R: BufRead>(r: R) -> Result<Vec<CandidateRecord>, RecordsError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| RecordsError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Gold label for every key. An explicit record wins (Valid over Swap over
/// Invalid when records disagree); otherwise a key whose catalyst/protein
/// swap is explicitly Valid is Swap, and anything else is Invalid.
pub fn assign_labels(keys: &BTreeSet<InteractionKey>, gold: &[CandidateRecord]) -> BTreeMap<InteractionKey, Label> {
    let mut explicit: BTreeMap<InteractionKey, Label> = BTreeMap::new();
    for g in gold {
        let Some(label) = g.label else {
            continue;
        };
        let rank = |l: Label| match l {
            Label::Valid => 0,
            Label::Swap => 1,
            Label::Invalid => 2,
        };
        let e = explicit.entry(g.key()).or_insert(label);
        if rank(label) < rank(*e) {
            *e = label;
        }
    }
    keys.iter()
        .map(|k| {
            let label = explicit.get(k).copied().unwrap_or_else(|| {
                match k.swapped().and_then(|s| explicit.get(&s)) {
                    Some(Label::Valid) => Label::Swap,
                    _ => Label::Invalid,
                }
            });
            (k.clone(), label)
        })
        .collect()
}
