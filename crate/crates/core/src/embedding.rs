//! Word-vector store: loading, unit normalization, and label lookup with a
//! fixed out-of-vocabulary fallback chain.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

/// Norm tolerance for everything that claims to be a unit vector.
pub const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding file is empty")]
    EmptyFile,
    #[error("line {line}: bad header, expected `d=<int>` with d >= 2")]
    BadHeader { line: usize },
    #[error("line {line}: expected {expected} numbers, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: invalid number `{text}`")]
    BadNumber { line: usize, text: String },
    #[error("zero vector for token `{token}`")]
    ZeroVector { token: String },
    #[error("line {line}: duplicate token `{token}`")]
    DuplicateToken { line: usize, token: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A vector of Euclidean norm 1, shared cheaply between trees.
#[derive(Clone, PartialEq)]
pub struct UnitVector(Arc<[f64]>);

impl UnitVector {
    /// Normalizes `values`; `None` for zero or non-finite input.
    pub fn new(values: Vec<f64>) -> Option<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return None;
        }
        Some(UnitVector(values.into_iter().map(|v| v / norm).collect()))
    }

    /// Wraps values that are already unit length (e.g. read back from a
    /// serialized tree) without renormalizing, so round trips stay bit-exact.
    pub fn from_normalized(values: Vec<f64>) -> Self {
        UnitVector(values.into())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_TOLERANCE
    }
}

impl fmt::Debug for UnitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

/// Dot product of two unit vectors, clamped to [-1, 1].
pub fn cosine(x: &[f64], y: &[f64]) -> f64 {
    if x == y {
        return 1.0;
    }
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    dot.clamp(-1.0, 1.0)
}

/// Strips a trailing AMR sense suffix such as `-01`.
pub fn strip_sense_suffix(label: &str) -> Option<&str> {
    let bytes = label.as_bytes();
    let n = bytes.len();
    if n > 3 && bytes[n - 3] == b'-' && bytes[n - 2].is_ascii_digit() && bytes[n - 1].is_ascii_digit() {
        Some(&label[..n - 3])
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OovPolicy {
    /// exact, sense-stripped, lowercased, then mean of space/hyphen pieces
    #[default]
    FallbackChain,
    ExactOnly,
}

#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    dim: usize,
    vectors: HashMap<String, UnitVector>,
    policy: OovPolicy,
}

impl EmbeddingStore {
    pub fn new(dim: usize, policy: OovPolicy) -> Self {
        EmbeddingStore {
            dim,
            vectors: HashMap::new(),
            policy,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmbeddingError> {
        let file = File::open(path)?;
        Self::from_reader(BufReader::new(file))
    }

    /// Reads the `d=<int>` header followed by `token v1 .. vd` records.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, EmbeddingError> {
        let mut lines = reader.lines().enumerate();
        let dim = loop {
            match lines.next() {
                None => return Err(EmbeddingError::EmptyFile),
                Some((i, line)) => {
                    let line = line?;
                    let line = line.trim();
                    if line.is_empty() {
                        continue;
                    }
                    let dim = line
                        .strip_prefix("d=")
                        .and_then(|d| d.trim().parse::<usize>().ok())
                        .filter(|&d| d >= 2)
                        .ok_or(EmbeddingError::BadHeader { line: i + 1 })?;
                    break dim;
                }
            }
        };
        let mut store = EmbeddingStore::new(dim, OovPolicy::default());
        for (i, line) in lines {
            let line = line?;
            let mut fields = line.split_whitespace();
            let token = match fields.next() {
                Some(t) => t,
                None => continue,
            };
            let values = fields
                .map(|f| {
                    f.parse::<f64>().map_err(|_| EmbeddingError::BadNumber {
                        line: i + 1,
                        text: f.to_string(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            if values.len() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    line: i + 1,
                    expected: dim,
                    found: values.len(),
                });
            }
            if store.vectors.contains_key(token) {
                return Err(EmbeddingError::DuplicateToken {
                    line: i + 1,
                    token: token.to_string(),
                });
            }
            store.insert(token, values)?;
        }
        if store.vectors.is_empty() {
            return Err(EmbeddingError::EmptyFile);
        }
        Ok(store)
    }

    pub fn insert(&mut self, token: &str, values: Vec<f64>) -> Result<(), EmbeddingError> {
        assert_eq!(values.len(), self.dim, "vector dimension must match store");
        let unit = UnitVector::new(values).ok_or_else(|| EmbeddingError::ZeroVector {
            token: token.to_string(),
        })?;
        self.vectors.insert(token.to_string(), unit);
        Ok(())
    }

    pub fn with_policy(mut self, policy: OovPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn policy(&self) -> OovPolicy {
        self.policy
    }

    /// Stored tokens in sorted order.
    pub fn tokens(&self) -> Vec<&str> {
        let mut t: Vec<&str> = self.vectors.keys().map(String::as_str).collect();
        t.sort_unstable();
        t
    }

    pub fn get(&self, token: &str) -> Option<&UnitVector> {
        self.vectors.get(token)
    }

    pub fn lookup(&self, label: &str) -> Option<UnitVector> {
        if let Some(v) = self.vectors.get(label) {
            return Some(v.clone());
        }
        if self.policy == OovPolicy::ExactOnly {
            return None;
        }
        let stripped = strip_sense_suffix(label).unwrap_or(label);
        if let Some(v) = self.vectors.get(stripped) {
            return Some(v.clone());
        }
        let lower = stripped.to_lowercase();
        if let Some(v) = self.vectors.get(&lower) {
            return Some(v.clone());
        }
        let mut sum = vec![0.0; self.dim];
        let mut found = 0usize;
        for piece in stripped.split([' ', '-']).filter(|p| !p.is_empty()) {
            let hit = self
                .vectors
                .get(piece)
                .or_else(|| self.vectors.get(&piece.to_lowercase()));
            if let Some(v) = hit {
                for (s, x) in sum.iter_mut().zip(v.as_slice()) {
                    *s += x;
                }
                found += 1;
            }
        }
        if found == 0 {
            return None;
        }
        UnitVector::new(sum)
    }

    /// Writes the store in its text format, tokens sorted.
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "d={}", self.dim)?;
        for token in self.tokens() {
            write!(w, "{token}")?;
            for x in self.vectors[token].as_slice() {
                write!(w, " {x:e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(text: &str) -> Result<EmbeddingStore, EmbeddingError> {
        EmbeddingStore::from_reader(text.as_bytes())
    }

    #[test]
    fn loads_and_normalizes() {
        let s = store("d=3\nRAS 3 4 0\nGTP 0 0 2\n").unwrap();
        assert_eq!(s.len(), 2);
        let ras = s.get("RAS").unwrap();
        assert_eq!(ras.as_slice(), &[0.6, 0.8, 0.0]);
        assert!(s.get("GTP").unwrap().is_unit());
    }

    #[test]
    fn rejects_bad_files() {
        assert!(matches!(store(""), Err(EmbeddingError::EmptyFile)));
        assert!(matches!(store("d=3\n"), Err(EmbeddingError::EmptyFile)));
        assert!(matches!(store("d=1\na 1\n"), Err(EmbeddingError::BadHeader { line: 1 })));
        assert!(matches!(
            store("d=3\na 1 2\n"),
            Err(EmbeddingError::DimensionMismatch { line: 2, expected: 3, found: 2 })
        ));
        assert!(matches!(store("d=2\nz 0 0\n"), Err(EmbeddingError::ZeroVector { .. })));
        assert!(matches!(store("d=2\na 1 x\n"), Err(EmbeddingError::BadNumber { line: 2, .. })));
        assert!(matches!(
            store("d=2\na 1 0\na 0 1\n"),
            Err(EmbeddingError::DuplicateToken { line: 3, .. })
        ));
    }

    #[test]
    fn lookup_fallback_chain() {
        let s = store("d=3\nbind 1 0 0\ngtp 0 1 0\nbound 0 0 1\n").unwrap();
        assert_eq!(s.lookup("bind-01").unwrap().as_slice(), &[1.0, 0.0, 0.0]);
        assert_eq!(s.lookup("GTP").unwrap().as_slice(), &[0.0, 1.0, 0.0]);
        // mean of (0,1,0) and (0,0,1) renormalized, computed by hand
        let h = 1.0 / 2f64.sqrt();
        let v = s.lookup("GTP-bound").unwrap();
        assert!((v.as_slice()[0]).abs() < 1e-15);
        assert!((v.as_slice()[1] - h).abs() < 1e-15);
        assert!((v.as_slice()[2] - h).abs() < 1e-15);
        assert!(s.lookup("kinase").is_none());
        let exact = s.clone().with_policy(OovPolicy::ExactOnly);
        assert!(exact.lookup("bind-01").is_none());
    }

    #[test]
    fn cosine_basics() {
        let x = [0.6, 0.8];
        assert_eq!(cosine(&x, &x), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert_eq!(cosine(&x, &[-0.6, -0.8]), -1.0);
    }

    #[test]
    fn sense_suffix() {
        assert_eq!(strip_sense_suffix("bind-01"), Some("bind"));
        assert_eq!(strip_sense_suffix("B-RAF"), None);
        assert_eq!(strip_sense_suffix("-01"), None);
    }

    #[test]
    fn write_then_read_is_exact() {
        let s = store("d=3\nRAS 3 4 1\nGTP 0.1 0.2 0.3\n").unwrap();
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        let back = EmbeddingStore::from_reader(buf.as_slice()).unwrap();
        for t in s.tokens() {
            // renormalizing an already-unit vector may move the last bit
            for (a, b) in s.get(t).unwrap().as_slice().iter().zip(back.get(t).unwrap().as_slice()) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }
}
