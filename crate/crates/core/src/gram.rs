//! Labeled kernel matrices and their text file format.
//!
//! ```text
//! n=<n> normalized=<0|1>
//! <id 1>
//! ...
//! <id n>
//! <row 1: n floats>
//! ...
//! ```
//!
//! Floats are written in scientific notation with 17 significant digits.

use std::io::{self, BufRead, Write};

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GramError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub ids: Vec<String>,
    pub values: DMatrix<f64>,
    pub normalized: bool,
}

impl GramMatrix {
    pub fn new(ids: Vec<String>, values: DMatrix<f64>, normalized: bool) -> Self {
        assert_eq!(ids.len(), values.nrows(), "one id per row");
        assert!(values.is_square(), "gram matrix must be square");
        GramMatrix { ids, values, normalized }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    /// Largest |M_ij − M_ji|.
    pub fn asymmetry(&self) -> f64 {
        let n = self.len();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                worst = worst.max((self.values[(i, j)] - self.values[(j, i)]).abs());
            }
        }
        worst
    }

    /// Principal submatrix on the given rows, in the given order.
    pub fn select(&self, idx: &[usize]) -> GramMatrix {
        let values = DMatrix::from_fn(idx.len(), idx.len(), |r, c| self.values[(idx[r], idx[c])]);
        GramMatrix {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            values,
            normalized: self.normalized,
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "n={} normalized={}", self.len(), u8::from(self.normalized))?;
        for id in &self.ids {
            writeln!(w, "{id}")?;
        }
        for i in 0..self.len() {
            let row: Vec<String> = (0..self.len()).map(|j| format!("{:.16e}", self.values[(i, j)])).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<GramMatrix, GramError> {
        let mut lines = r.lines().enumerate();
        let bad = |line: usize, message: &str| GramError::Format {
            line,
            message: message.to_string(),
        };
        let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
        let header = header?;
        let mut n = None;
        let mut normalized = None;
        for part in header.split_whitespace() {
            match part.split_once('=') {
                Some(("n", v)) => n = v.parse::<usize>().ok(),
                Some(("normalized", "0")) => normalized = Some(false),
                Some(("normalized", "1")) => normalized = Some(true),
                _ => return Err(bad(1, "expected `n=<int> normalized=<0|1>`")),
            }
        }
        let (n, normalized) = n.zip(normalized).ok_or_else(|| bad(1, "expected `n=<int> normalized=<0|1>`"))?;
        let mut ids = Vec::with_capacity(n);
        for k in 0..n {
            let (_, l) = lines.next().ok_or_else(|| bad(k + 2, "missing identifier"))?;
            ids.push(l?);
        }
        let mut values = DMatrix::zeros(n, n);
        for i in 0..n {
            let lineno = n + 2 + i;
            let (_, l) = lines.next().ok_or_else(|| bad(lineno, "missing row"))?;
            let l = l?;
            let row: Vec<f64> = l
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| bad(lineno, "unparseable number"))?;
            if row.len() != n {
                return Err(bad(lineno, &format!("expected {n} values, found {}", row.len())));
            }
            for (j, v) in row.into_iter().enumerate() {
                values[(i, j)] = v;
            }
        }
        Ok(GramMatrix { ids, values, normalized })
    }
}
