//! PENMAN reader and writer.
//!
//! Grammar accepted per record (whitespace-insensitive):
//!
//! ```text
//! node  := '(' VAR '/' CONCEPT (ROLE value)* ')'
//! value := node | STRING | SYMBOL
//! ```
//!
//! A `SYMBOL` that names a declared variable is a re-entrant reference. A
//! symbol shaped like a variable (one letter plus optional digits) that is
//! never declared is a dangling reference; every other symbol or string is
//! a constant and becomes its own node with `constant = true`.
//!
//! `:name (n / name :op1 "A" :op2 "B")` collapses into the owning node: its
//! label becomes `"A B"` and its concept moves to `entity_type`. Roles ending
//! in `-of` (except `:consist-of`) are stored as the reversed edge. `:wiki`
//! values and `~e.N` alignment markers are dropped.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use super::{split_records, Record, RecordError};
use crate::graph::{EdgeLabel, GraphError, GraphNode, LabeledGraph, NodeRole, Source, INVERSE_SUFFIX};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PenmanError {
    #[error("unbalanced parentheses at line {line}, column {column}")]
    UnbalancedParens { line: usize, column: usize },
    #[error("variable `{0}` declared twice")]
    DuplicateVariable(String),
    #[error("reference to undeclared variable `{0}`")]
    DanglingReference(String),
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("record starting at line {0} has no `# ::id` comment")]
    MissingId(usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// A PENMAN file split into records.
#[derive(Debug, Clone)]
pub struct PenmanDocument {
    records: Vec<(Option<Record>, usize)>,
}

impl PenmanDocument {
    pub fn from_text(text: &str) -> Self {
        PenmanDocument {
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

/// Parses every record; failures are reported per record.
pub fn parse_penman(doc: &PenmanDocument) -> Vec<Result<LabeledGraph, RecordError<PenmanError>>> {
    doc.records
        .iter()
        .enumerate()
        .map(|(k, (rec, start))| match rec {
            None => Err(RecordError {
                record: k,
                sentence_id: String::new(),
                error: PenmanError::MissingId(*start),
            }),
            Some(rec) => parse_record(rec).map_err(|error| RecordError {
                record: k,
                sentence_id: rec.sentence_id.clone(),
                error,
            }),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Slash,
    Role(String),
    Str(String),
    Sym(String),
}

struct Lexer {
    toks: Vec<(Tok, usize, usize)>,
}

fn is_delim(c: char) -> bool {
    c.is_whitespace() || c == '(' || c == ')' || c == '"'
}

impl Lexer {
    fn run(rec: &Record) -> Result<Vec<(Tok, usize, usize)>, PenmanError> {
        let mut lx = Lexer { toks: Vec::new() };
        let mut depth: Vec<(usize, usize)> = Vec::new();
        for (lineno, line) in &rec.lines {
            let chars: Vec<(usize, char)> = line.char_indices().collect();
            let mut i = 0;
            let col = |i: usize| i + 1;
            while i < chars.len() {
                let c = chars[i].1;
                if c.is_whitespace() {
                    i += 1;
                } else if c == '(' {
                    depth.push((*lineno, col(i)));
                    lx.push(Tok::Open, *lineno, col(i));
                    i += 1;
                } else if c == ')' {
                    if depth.pop().is_none() {
                        return Err(PenmanError::UnbalancedParens {
                            line: *lineno,
                            column: col(i),
                        });
                    }
                    lx.push(Tok::Close, *lineno, col(i));
                    i += 1;
                } else if c == '/' {
                    lx.push(Tok::Slash, *lineno, col(i));
                    i += 1;
                } else if c == '"' {
                    let start = i;
                    let mut s = String::new();
                    i += 1;
                    let mut closed = false;
                    while i < chars.len() {
                        match chars[i].1 {
                            '\\' if i + 1 < chars.len() => {
                                s.push(chars[i + 1].1);
                                i += 2;
                            }
                            '"' => {
                                closed = true;
                                i += 1;
                                break;
                            }
                            ch => {
                                s.push(ch);
                                i += 1;
                            }
                        }
                    }
                    if !closed {
                        return Err(PenmanError::Syntax {
                            line: *lineno,
                            column: col(start),
                            message: "unterminated string".into(),
                        });
                    }
                    // alignment marker glued to the literal
                    if i < chars.len() && chars[i].1 == '~' {
                        while i < chars.len() && !is_delim(chars[i].1) {
                            i += 1;
                        }
                    }
                    lx.push(Tok::Str(s), *lineno, col(start));
                } else {
                    let start = i;
                    while i < chars.len() && !is_delim(chars[i].1) {
                        i += 1;
                    }
                    let word: String = chars[start..i].iter().map(|&(_, ch)| ch).collect();
                    let word = match word.find('~') {
                        Some(p) if p > 0 => word[..p].to_string(),
                        _ => word,
                    };
                    if let Some(role) = word.strip_prefix(':') {
                        if role.is_empty() {
                            return Err(PenmanError::Syntax {
                                line: *lineno,
                                column: col(start),
                                message: "empty role".into(),
                            });
                        }
                        lx.push(Tok::Role(role.to_string()), *lineno, col(start));
                    } else if let Some(concept) = word.strip_prefix('/') {
                        lx.push(Tok::Slash, *lineno, col(start));
                        lx.push(Tok::Sym(concept.to_string()), *lineno, col(start) + 1);
                    } else {
                        lx.push(Tok::Sym(word), *lineno, col(start));
                    }
                }
            }
        }
        if let Some((line, column)) = depth.pop() {
            return Err(PenmanError::UnbalancedParens { line, column });
        }
        Ok(lx.toks)
    }

    fn push(&mut self, t: Tok, line: usize, col: usize) {
        if let Tok::Sym(s) = &t {
            if s.is_empty() {
                return;
            }
        }
        self.toks.push((t, line, col));
    }
}

#[derive(Debug)]
struct AstNode {
    var: String,
    concept: String,
    roles: Vec<(String, Value)>,
}

#[derive(Debug)]
enum Value {
    Node(AstNode),
    Str(String),
    Sym(String),
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
    end: (usize, usize),
}

impl Parser {
    fn err(&self, message: &str) -> PenmanError {
        let (line, column) = self
            .toks
            .get(self.pos)
            .map(|t| (t.1, t.2))
            .unwrap_or(self.end);
        PenmanError::Syntax {
            line,
            column,
            message: message.into(),
        }
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.0.clone());
        self.pos += 1;
        t
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn node(&mut self) -> Result<AstNode, PenmanError> {
        if self.next() != Some(Tok::Open) {
            self.pos -= 1;
            return Err(self.err("expected `(`"));
        }
        let var = match self.next() {
            Some(Tok::Sym(v)) => v,
            _ => {
                self.pos -= 1;
                return Err(self.err("expected variable"));
            }
        };
        let concept = match self.peek() {
            Some(Tok::Slash) => {
                self.pos += 1;
                match self.next() {
                    Some(Tok::Sym(c)) => c,
                    Some(Tok::Str(c)) => c,
                    _ => {
                        self.pos -= 1;
                        return Err(self.err("expected concept after `/`"));
                    }
                }
            }
            _ => return Err(self.err("expected `/`")),
        };
        let mut roles = Vec::new();
        loop {
            match self.next() {
                Some(Tok::Close) => break,
                Some(Tok::Role(r)) => {
                    let value = match self.peek() {
                        Some(Tok::Open) => Value::Node(self.node()?),
                        Some(Tok::Str(_)) => match self.next() {
                            Some(Tok::Str(s)) => Value::Str(s),
                            _ => unreachable!(),
                        },
                        Some(Tok::Sym(_)) => match self.next() {
                            Some(Tok::Sym(s)) => Value::Sym(s),
                            _ => unreachable!(),
                        },
                        _ => return Err(self.err("expected value after role")),
                    };
                    roles.push((r, value));
                }
                _ => {
                    self.pos -= 1;
                    return Err(self.err("expected role or `)`"));
                }
            }
        }
        Ok(AstNode { var, concept, roles })
    }
}

fn looks_like_variable(s: &str) -> bool {
    let mut it = s.chars();
    matches!(it.next(), Some(c) if c.is_ascii_lowercase()) && it.all(|c| c.is_ascii_digit())
}

fn is_inverse_role(role: &str) -> bool {
    role != "consist-of" && role.len() > INVERSE_SUFFIX.len() && role.ends_with(INVERSE_SUFFIX)
}

/// `(n / name :op1 "A" :op2 "B")` → `Some("A B")`.
fn name_label(node: &AstNode) -> Option<String> {
    if node.concept != "name" {
        return None;
    }
    let mut ops: Vec<(u32, &str)> = node
        .roles
        .iter()
        .filter_map(|(r, v)| {
            let k = r.strip_prefix("op")?.parse::<u32>().ok()?;
            let s = match v {
                Value::Str(s) | Value::Sym(s) => s.as_str(),
                Value::Node(_) => return None,
            };
            Some((k, s))
        })
        .collect();
    if ops.is_empty() {
        return None;
    }
    ops.sort_by_key(|&(k, _)| k);
    Some(ops.iter().map(|&(_, s)| s).collect::<Vec<_>>().join(" "))
}

fn is_collapsed_name(role: &str, v: &Value) -> Option<String> {
    match v {
        Value::Node(n) if role == "name" => name_label(n),
        _ => None,
    }
}

struct Builder {
    graph: LabeledGraph,
    vars: HashMap<String, usize>,
    declared: HashSet<String>,
}

impl Builder {
    fn declare(&mut self, n: &AstNode) -> Result<(), PenmanError> {
        if !self.declared.insert(n.var.clone()) {
            return Err(PenmanError::DuplicateVariable(n.var.clone()));
        }
        let mut label = n.concept.clone();
        let mut entity_type = None;
        for (r, v) in &n.roles {
            if let Some(name) = is_collapsed_name(r, v) {
                label = name;
                entity_type = Some(n.concept.clone());
            }
        }
        let idx = self.graph.add_node(GraphNode {
            id: n.var.clone(),
            label,
            role: NodeRole::Concept,
            entity_type,
            constant: false,
        })?;
        self.vars.insert(n.var.clone(), idx);
        for (r, v) in &n.roles {
            match v {
                Value::Node(child) => {
                    if let Some(_name) = is_collapsed_name(r, v) {
                        // the name node is folded; its variable is still taken
                        if !self.declared.insert(child.var.clone()) {
                            return Err(PenmanError::DuplicateVariable(child.var.clone()));
                        }
                        self.vars.insert(child.var.clone(), idx);
                        continue;
                    }
                    self.declare(child)?;
                }
                Value::Str(_) | Value::Sym(_) => {}
            }
        }
        Ok(())
    }

    fn constant(&mut self, owner: &str, role: &str, value: &str) -> Result<usize, PenmanError> {
        let base = format!("{owner}:{role}");
        let mut id = base.clone();
        let mut k = 2;
        while self.graph.node_index(&id).is_some() {
            id = format!("{base}#{k}");
            k += 1;
        }
        Ok(self.graph.add_node(GraphNode {
            id,
            label: value.to_string(),
            role: NodeRole::Concept,
            entity_type: None,
            constant: true,
        })?)
    }

    fn connect(&mut self, n: &AstNode) -> Result<(), PenmanError> {
        let me = self.vars[&n.var];
        for (r, v) in &n.roles {
            if r == "wiki" || is_collapsed_name(r, v).is_some() {
                continue;
            }
            let target = match v {
                Value::Node(child) => {
                    let t = self.vars[&child.var];
                    self.connect(child)?;
                    t
                }
                Value::Sym(s) => match self.vars.get(s) {
                    Some(&t) => t,
                    None if looks_like_variable(s) => return Err(PenmanError::DanglingReference(s.clone())),
                    None => self.constant(&n.var, r, s)?,
                },
                Value::Str(s) => self.constant(&n.var, r, s)?,
            };
            if is_inverse_role(r) {
                let base = &r[..r.len() - INVERSE_SUFFIX.len()];
                self.graph.add_edge(target, me, EdgeLabel::new(base))?;
            } else {
                self.graph.add_edge(me, target, EdgeLabel::new(r.as_str()))?;
            }
        }
        Ok(())
    }
}

fn parse_record(rec: &Record) -> Result<LabeledGraph, PenmanError> {
    let toks = Lexer::run(rec)?;
    let end = rec
        .lines
        .last()
        .map(|(l, s)| (*l, s.chars().count() + 1))
        .unwrap_or((rec.first_line, 1));
    let mut p = Parser { toks, pos: 0, end };
    let top = p.node()?;
    if p.pos < p.toks.len() {
        return Err(p.err("more than one top-level node"));
    }
    let mut b = Builder {
        graph: LabeledGraph::new(Source::Amr, rec.document_id.clone(), rec.sentence_id.clone()),
        vars: HashMap::new(),
        declared: HashSet::new(),
    };
    b.declare(&top)?;
    b.connect(&top)?;
    b.graph.root = Some(0);
    Ok(b.graph)
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

/// Writes an AMR graph back to PENMAN, including its `# ::id` and
/// `# ::doc` comments. Parsing the output yields the same nodes and edges.
pub fn to_penman(graph: &LabeledGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# ::id {}", graph.sentence_id);
    let _ = writeln!(out, "# ::doc {}", graph.document_id);
    let Some(root) = graph.root.or(if graph.nodes.is_empty() { None } else { Some(0) }) else {
        return out;
    };
    let taken: HashSet<&str> = graph.nodes.iter().map(|n| n.id.as_str()).collect();
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); graph.nodes.len()];
    for (k, e) in graph.edges.iter().enumerate() {
        incident[e.src].push(k);
        incident[e.dst].push(k);
    }
    let mut w = Writer {
        graph,
        taken,
        incident,
        visited: vec![false; graph.nodes.len()],
        emitted: vec![false; graph.edges.len()],
        out: String::new(),
    };
    // nodes unreachable from the root have no PENMAN form and are skipped
    w.node(root, 0);
    out.push_str(&w.out);
    out.push('\n');
    out
}

struct Writer<'a> {
    graph: &'a LabeledGraph,
    taken: HashSet<&'a str>,
    incident: Vec<Vec<usize>>,
    visited: Vec<bool>,
    emitted: Vec<bool>,
    out: String,
}

impl Writer<'_> {
    fn fresh_name_var(&self, owner: &str) -> String {
        let mut v = format!("{owner}_name");
        let mut k = 2;
        while self.taken.contains(v.as_str()) {
            v = format!("{owner}_name{k}");
            k += 1;
        }
        v
    }

    fn node(&mut self, u: usize, indent: usize) {
        self.visited[u] = true;
        let n = &self.graph.nodes[u];
        let pad = "   ".repeat(indent + 1);
        match &n.entity_type {
            Some(ty) => {
                let _ = write!(self.out, "({} / {}", n.id, ty);
                let nv = self.fresh_name_var(&n.id);
                let _ = write!(self.out, "\n{pad}:name ({nv} / name");
                for (k, part) in n.label.split(' ').enumerate() {
                    let _ = write!(self.out, " :op{} {}", k + 1, quote(part));
                }
                self.out.push(')');
            }
            None => {
                let _ = write!(self.out, "({} / {}", n.id, n.label);
            }
        }
        let edges = self.incident[u].clone();
        for k in edges {
            if self.emitted[k] {
                continue;
            }
            self.emitted[k] = true;
            let e = &self.graph.edges[k];
            let (role, target) = if e.src == u {
                (e.label.name.clone(), e.dst)
            } else {
                (format!("{}{}", e.label.name, INVERSE_SUFFIX), e.src)
            };
            let _ = write!(self.out, "\n{pad}:{role} ");
            let t = &self.graph.nodes[target];
            if t.constant {
                let q = quote(&t.label);
                self.out.push_str(&q);
                self.visited[target] = true;
            } else if self.visited[target] {
                self.out.push_str(&t.id);
            } else {
                self.node(target, indent + 1);
            }
        }
        self.out.push(')');
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RAS_BRAF: &str = "# ::id rb.1\n(a / activate-01\n   :ARG0 (s / protein :name (n1 / name :op1 \"RAS\"))\n   :ARG1 (s2 / protein :name (n2 / name :op1 \"B-RAF\")))\n";

    fn parse_one(text: &str) -> Result<LabeledGraph, PenmanError> {
        let doc = PenmanDocument::from_text(text);
        let mut v = parse_penman(&doc);
        assert_eq!(v.len(), 1);
        v.remove(0).map_err(|e| e.error)
    }

    fn labels(g: &LabeledGraph) -> Vec<&str> {
        g.nodes.iter().map(|n| n.label.as_str()).collect()
    }

    #[test]
    fn activation_example() {
        let g = parse_one(RAS_BRAF).unwrap();
        assert_eq!(labels(&g), ["activate-01", "RAS", "B-RAF"]);
        assert_eq!(g.nodes[1].entity_type.as_deref(), Some("protein"));
        let edges: Vec<(usize, usize, &str)> = g.edges.iter().map(|e| (e.src, e.dst, e.label.name.as_str())).collect();
        assert_eq!(edges, [(0, 1, "ARG0"), (0, 2, "ARG1")]);
        assert_eq!(g.root, Some(0));
        assert_eq!(g.document_id, "rb");
    }

    #[test]
    fn reused_variable_is_rejected() {
        let literal = "# ::id x\n(a / activate-01 :ARG0 (s / protein) :ARG1 (s / protein))\n";
        assert_eq!(parse_one(literal), Err(PenmanError::DuplicateVariable("s".into())));
    }

    #[test]
    fn single_node() {
        let g = parse_one("# ::id x\n(x / bind-01)").unwrap();
        assert_eq!(labels(&g), ["bind-01"]);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn bad_record_does_not_stop_others() {
        let text = "# ::id a\n(x / bind-01\n\n# ::id b\n(y / go-01)\n";
        let res = parse_penman(&PenmanDocument::from_text(text));
        assert_eq!(res.len(), 2);
        assert_eq!(
            res[0].as_ref().unwrap_err().error,
            PenmanError::UnbalancedParens { line: 2, column: 1 }
        );
        assert_eq!(labels(res[1].as_ref().unwrap()), ["go-01"]);
    }

    #[test]
    fn reentrancy_and_inverse_roles() {
        let text = "# ::id x\n(r / result-01 :ARG2 (a / accumulate-01 :ARG1 (e / enzyme :ARG2-of (m / mutate-01))) :ARG1 e)";
        let g = parse_one(text).unwrap();
        assert_eq!(g.nodes.len(), 4);
        let m = g.node_index("m").unwrap();
        let e = g.node_index("e").unwrap();
        assert!(g.edges.iter().any(|x| x.src == m && x.dst == e && x.label.name == "ARG2"));
        assert_eq!(g.edges.iter().filter(|x| x.dst == e).count(), 3);
    }

    #[test]
    fn consist_of_stays_forward() {
        let g = parse_one("# ::id x\n(a / a :consist-of (b / b))").unwrap();
        assert_eq!(g.edges[0].src, 0);
        assert_eq!(g.edges[0].label.name, "consist-of");
    }

    #[test]
    fn constants_and_dangling() {
        let g = parse_one("# ::id x\n(a / bind-01 :polarity - :quant 5 :value \"x y\")").unwrap();
        assert_eq!(labels(&g), ["bind-01", "-", "5", "x y"]);
        assert!(g.nodes[1].constant);
        assert_eq!(
            parse_one("# ::id x\n(a / bind-01 :ARG0 b)"),
            Err(PenmanError::DanglingReference("b".into()))
        );
    }

    #[test]
    fn multiword_names_and_alignments() {
        let g = parse_one("# ::id x\n(p / protein~e.2 :name (n / name :op1 \"NF\"~e.0 :op2 \"kappaB\") :wiki \"Q1\")").unwrap();
        assert_eq!(labels(&g), ["NF kappaB"]);
        assert_eq!(g.nodes[0].entity_type.as_deref(), Some("protein"));
    }

    #[test]
    fn missing_id() {
        let res = parse_penman(&PenmanDocument::from_text("(a / b)"));
        assert_eq!(res[0].as_ref().unwrap_err().error, PenmanError::MissingId(1));
    }

    #[test]
    fn writer_round_trip() {
        let g = parse_one(RAS_BRAF).unwrap();
        let text = to_penman(&g);
        let back = parse_one(&text).unwrap();
        assert_eq!(back, g);
    }
}
