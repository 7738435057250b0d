//! Trigger lexicon and the suffix-stripping lemmatizer.

use std::collections::BTreeMap;
use std::io::{self, BufRead};

use serde::{Deserialize, Serialize};

use crate::embedding::strip_sense_suffix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    StateChange,
    Bind,
}

const STATE_CHANGE: [&str; 21] = [
    "inhibit",
    "phosphorylate",
    "signal",
    "activate",
    "transcript",
    "regulate",
    "apoptose",
    "express",
    "translocate",
    "degrade",
    "carboxymethylate",
    "depalmitoylate",
    "acetylate",
    "nitrosylate",
    "farnesylate",
    "methylate",
    "glycosylate",
    "hydroxylate",
    "ribosylate",
    "sumoylate",
    "ubiquitinate",
];

const BIND: [&str; 4] = ["bind", "heterodimerize", "homodimerize", "dissociate"];

/// Irregular forms mapped straight to their lemma.
const IRREGULAR: [(&str, &str); 2] = [("bound", "bind"), ("bond", "bind")];

/// `(suffix, replacement)` pairs tried in order after the exact form.
const SUFFIX_RULES: [(&str, &str); 9] = [
    ("s", ""),
    ("es", ""),
    ("ed", ""),
    ("d", ""),
    ("ing", ""),
    ("ing", "e"),
    ("ion", ""),
    ("ion", "e"),
    ("ation", "e"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriggerLexicon {
    entries: BTreeMap<String, Category>,
}

impl Default for TriggerLexicon {
    fn default() -> Self {
        let mut entries = BTreeMap::new();
        for l in STATE_CHANGE {
            entries.insert(l.to_string(), Category::StateChange);
        }
        for l in BIND {
            entries.insert(l.to_string(), Category::Bind);
        }
        TriggerLexicon { entries }
    }
}

impl TriggerLexicon {
    pub fn empty() -> Self {
        TriggerLexicon {
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, lemma: &str, category: Category) {
        self.entries.insert(lemma.to_lowercase(), category);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn category(&self, lemma: &str) -> Option<Category> {
        self.entries.get(lemma).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, Category)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Reads `lemma<TAB or space>StateChange|Bind` lines; `#` starts a comment.
    pub fn from_reader<R: BufRead>(r: R) -> io::Result<Self> {
        let mut lex = TriggerLexicon::empty();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let lemma = parts.next().unwrap_or_default();
            let cat = match parts.next() {
                Some("StateChange") => Category::StateChange,
                Some("Bind") => Category::Bind,
                other => {
                    return Err(io::Error::new(
                        io::ErrorKind::InvalidData,
                        format!("line {}: unknown category {:?}", i + 1, other.unwrap_or("")),
                    ))
                }
            };
            lex.insert(lemma, cat);
        }
        Ok(lex)
    }

    /// Maps a node label to a lexicon lemma: sense suffix removed, lowercased,
    /// then the exact form, the irregular table, and the suffix rules in order.
    pub fn lemmatize(&self, label: &str) -> Option<(String, Category)> {
        let base = strip_sense_suffix(label).unwrap_or(label).to_lowercase();
        if let Some(c) = self.category(&base) {
            return Some((base, c));
        }
        for (form, lemma) in IRREGULAR {
            if base == form {
                if let Some(c) = self.category(lemma) {
                    return Some((lemma.to_string(), c));
                }
            }
        }
        for (suffix, repl) in SUFFIX_RULES {
            if let Some(stem) = base.strip_suffix(suffix) {
                if stem.len() < 2 {
                    continue;
                }
                let cand = format!("{stem}{repl}");
                if let Some(c) = self.category(&cand) {
                    return Some((cand, c));
                }
            }
        }
        None
    }
}
