//! Readers for PENMAN (AMR) and typed-dependency annotation files.
//!
//! Both formats share the same record layout: records are separated by blank
//! lines, and comment lines starting with `#` carry `::key value` metadata.
//! `::id` names the sentence and `::doc` optionally names its document.

mod deps;
mod penman;

use std::fmt;

pub use deps::{parse_dependencies, to_dependencies, DependencyDocument, DependencyError};
pub use penman::{parse_penman, to_penman, PenmanDocument, PenmanError};

/// Raw text of one record plus its metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub sentence_id: String,
    pub document_id: String,
    /// 1-based line number of the first body line in the source file.
    pub first_line: usize,
    /// Body lines with their 1-based line numbers.
    pub lines: Vec<(usize, String)>,
}

impl Record {
    pub fn body(&self) -> String {
        let mut out = String::new();
        for (i, (_, l)) in self.lines.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push_str(l);
        }
        out
    }
}

/// Error attached to a single record; the rest of the file is still read.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordError<E> {
    /// Position of the record in the file, counting from 0.
    pub record: usize,
    pub sentence_id: String,
    pub error: E,
}

impl<E: fmt::Display> fmt::Display for RecordError<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "record {} ({}): {}", self.record, self.sentence_id, self.error)
    }
}

impl<E: fmt::Debug + fmt::Display> std::error::Error for RecordError<E> {}

/// Document id used when the record has no `::doc` field: the sentence id up
/// to its last `.`, or the whole sentence id when it has no `.`.
pub fn default_document_id(sentence_id: &str) -> &str {
    match sentence_id.rfind('.') {
        Some(p) if p > 0 => &sentence_id[..p],
        _ => sentence_id,
    }
}

fn metadata_value<'a>(comment: &'a str, key: &str) -> Option<&'a str> {
    let marker = format!("::{key}");
    let mut rest = comment;
    while let Some(p) = rest.find(&marker) {
        let after = &rest[p + marker.len()..];
        if after.is_empty() || after.starts_with(char::is_whitespace) {
            let value = after.trim_start();
            let end = value.find("::").unwrap_or(value.len());
            let value = value[..end].trim();
            return value.split_whitespace().next();
        }
        rest = after;
    }
    None
}

/// Splits annotation text into records. Records without an `::id` get the
/// id `None` in the returned tuple so callers can report them.
pub(crate) fn split_records(text: &str) -> Vec<(Option<Record>, usize)> {
    struct Pending {
        id: Option<String>,
        doc: Option<String>,
        lines: Vec<(usize, String)>,
        start: usize,
    }
    let mut out = Vec::new();
    let mut cur: Option<Pending> = None;
    let flush = |p: Pending, out: &mut Vec<(Option<Record>, usize)>| {
        if p.lines.is_empty() {
            return;
        }
        let rec = p.id.map(|id| {
            let document_id = p.doc.unwrap_or_else(|| default_document_id(&id).to_string());
            Record {
                sentence_id: id,
                document_id,
                first_line: p.lines[0].0,
                lines: p.lines,
            }
        });
        out.push((rec, p.start));
    };
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            if let Some(p) = cur.take() {
                flush(p, &mut out);
            }
            continue;
        }
        let p = cur.get_or_insert_with(|| Pending {
            id: None,
            doc: None,
            lines: Vec::new(),
            start: lineno,
        });
        if let Some(comment) = trimmed.strip_prefix('#') {
            if !p.lines.is_empty() {
                // metadata after body text starts a new record
                let done = cur.take().unwrap();
                flush(done, &mut out);
                cur = Some(Pending {
                    id: None,
                    doc: None,
                    lines: Vec::new(),
                    start: lineno,
                });
            }
            let p = cur.as_mut().unwrap();
            if let Some(id) = metadata_value(comment, "id") {
                p.id = Some(id.to_string());
            }
            if let Some(doc) = metadata_value(comment, "doc") {
                p.doc = Some(doc.to_string());
            }
            continue;
        }
        p.lines.push((lineno, line.to_string()));
    }
    if let Some(p) = cur.take() {
        flush(p, &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_with_metadata() {
        let text = "# ::id pmid1.3 ::date x\n# ::snt RAS binds GTP\n(b / bind-01)\n\n\n# ::id s2\n# ::doc D9\n(a / a)\n";
        let recs = split_records(text);
        assert_eq!(recs.len(), 2);
        let r0 = recs[0].0.as_ref().unwrap();
        assert_eq!(r0.sentence_id, "pmid1.3");
        assert_eq!(r0.document_id, "pmid1");
        assert_eq!(r0.first_line, 3);
        let r1 = recs[1].0.as_ref().unwrap();
        assert_eq!(r1.document_id, "D9");
        assert_eq!(r1.body(), "(a / a)");
    }

    #[test]
    fn record_without_id() {
        let recs = split_records("(a / a)\n");
        assert_eq!(recs.len(), 1);
        assert!(recs[0].0.is_none());
        assert_eq!(recs[0].1, 1);
    }

    #[test]
    fn document_ids() {
        assert_eq!(default_document_id("a.b.c"), "a.b");
        assert_eq!(default_document_id("abc"), "abc");
        assert_eq!(default_document_id(".x"), ".x");
    }
}
