//! Sparse binary matrices over GF(2).
//!
//! [`BinMatrix`] keeps both a row-major and a column-major adjacency view.
//! Entries are mod-2 presence bits: every adjacency list is strictly
//! increasing, and the two views are always exact transposes of each other.

use std::fmt;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Errors raised by matrix construction, composition and I/O.
#[derive(Debug, thiserror::Error)]
pub enum MatrixError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error("malformed triplet file at line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sparse GF(2) matrix with sorted row and column adjacency lists.
#[derive(Clone, PartialEq, Eq)]
pub struct BinMatrix {
    num_rows: usize,
    num_cols: usize,
    row_adj: Vec<Vec<usize>>,
    col_adj: Vec<Vec<usize>>,
}

/// Structural summary of a matrix: sizes, density and 4-cycle count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixStats {
    pub num_rows: usize,
    pub num_cols: usize,
    pub nnz: u64,
    pub avg_row_weight: f64,
    pub num_4cycles: u64,
}

impl BinMatrix {
    /// All-zero matrix.
    pub fn zeros(num_rows: usize, num_cols: usize) -> Self {
        Self {
            num_rows,
            num_cols,
            row_adj: vec![Vec::new(); num_rows],
            col_adj: vec![Vec::new(); num_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let rows = (0..n).map(|i| vec![i]).collect();
        Self::from_sorted_rows(n, rows)
    }

    /// Builds a matrix from arbitrary `(row, col)` entries. Repeated entries
    /// cancel in pairs, as they would when summing over GF(2).
    pub fn from_entries<I>(num_rows: usize, num_cols: usize, entries: I) -> Result<Self, MatrixError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut rows = vec![Vec::new(); num_rows];
        for (r, c) in entries {
            if r >= num_rows || c >= num_cols {
                return Err(MatrixError::OutOfRange(format!(
                    "entry ({r}, {c}) in a {num_rows}x{num_cols} matrix"
                )));
            }
            rows[r].push(c);
        }
        for row in &mut rows {
            row.sort_unstable();
            *row = cancel_pairs(row);
        }
        Ok(Self::from_sorted_rows(num_cols, rows))
    }

    /// Builds a matrix from per-row column lists (any order, duplicates cancel).
    pub fn from_rows(num_cols: usize, rows: Vec<Vec<usize>>) -> Result<Self, MatrixError> {
        let num_rows = rows.len();
        Self::from_entries(
            num_rows,
            num_cols,
            rows.into_iter()
                .enumerate()
                .flat_map(|(r, cols)| cols.into_iter().map(move |c| (r, c))),
        )
    }

    /// Builds a matrix from per-column row lists (any order, duplicates cancel).
    pub fn from_cols(num_rows: usize, cols: Vec<Vec<usize>>) -> Result<Self, MatrixError> {
        let num_cols = cols.len();
        Self::from_entries(
            num_rows,
            num_cols,
            cols.into_iter()
                .enumerate()
                .flat_map(|(c, rows)| rows.into_iter().map(move |r| (r, c))),
        )
    }

    // Rows must already be strictly increasing and in range.
    fn from_sorted_rows(num_cols: usize, row_adj: Vec<Vec<usize>>) -> Self {
        let num_rows = row_adj.len();
        let mut col_adj = vec![Vec::new(); num_cols];
        for (r, row) in row_adj.iter().enumerate() {
            for &c in row {
                col_adj[c].push(r);
            }
        }
        Self { num_rows, num_cols, row_adj, col_adj }
    }

    #[inline]
    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    #[inline]
    pub fn num_cols(&self) -> usize {
        self.num_cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[usize] {
        &self.row_adj[r]
    }

    #[inline]
    pub fn col(&self, c: usize) -> &[usize] {
        &self.col_adj[c]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[usize]> + '_ {
        self.row_adj.iter().map(Vec::as_slice)
    }

    pub fn cols(&self) -> impl ExactSizeIterator<Item = &[usize]> + '_ {
        self.col_adj.iter().map(Vec::as_slice)
    }

    pub fn nnz(&self) -> u64 {
        self.row_adj.iter().map(|r| r.len() as u64).sum()
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.row_adj[r].binary_search(&c).is_ok()
    }

    pub fn transpose(&self) -> Self {
        Self {
            num_rows: self.num_cols,
            num_cols: self.num_rows,
            row_adj: self.col_adj.clone(),
            col_adj: self.row_adj.clone(),
        }
    }

    /// `(M x) mod 2`.
    pub fn matvec_mod2(&self, x: &[bool]) -> Result<Vec<bool>, MatrixError> {
        if x.len() != self.num_cols {
            return Err(MatrixError::Dimension(format!(
                "vector of length {} against {} columns",
                x.len(),
                self.num_cols
            )));
        }
        Ok(self
            .row_adj
            .iter()
            .map(|row| row.iter().fold(false, |acc, &c| acc ^ x[c]))
            .collect())
    }

    /// Syndrome of a sparse error given as a list of set column indices.
    pub fn syndrome_of_support(&self, support: &[usize]) -> Vec<bool> {
        let mut s = vec![false; self.num_rows];
        for &c in support {
            for &r in &self.col_adj[c] {
                s[r] ^= true;
            }
        }
        s
    }

    /// Number of 4-cycles: unordered row pairs times unordered column pairs
    /// with all four incidences present, i.e. the sum over row pairs of
    /// `C(overlap, 2)`.
    ///
    /// Runs in `O(sum_c w_c^2)` time with one scratch array per worker.
    pub fn count_4cycles(&self) -> u64 {
        (0..self.num_rows)
            .into_par_iter()
            .fold(
                || (vec![0u32; self.num_rows], Vec::new(), 0u64),
                |(mut overlap, mut touched, mut total), r| {
                    for &c in &self.row_adj[r] {
                        for &r2 in &self.col_adj[c] {
                            if r2 > r {
                                if overlap[r2] == 0 {
                                    touched.push(r2);
                                }
                                overlap[r2] += 1;
                            }
                        }
                    }
                    for &r2 in &touched {
                        let k = overlap[r2] as u64;
                        total += k * (k - 1) / 2;
                        overlap[r2] = 0;
                    }
                    touched.clear();
                    (overlap, touched, total)
                },
            )
            .map(|(_, _, total)| total)
            .sum()
    }

    pub fn stats(&self) -> MatrixStats {
        let nnz = self.nnz();
        MatrixStats {
            num_rows: self.num_rows,
            num_cols: self.num_cols,
            nnz,
            avg_row_weight: if self.num_rows == 0 { 0.0 } else { nnz as f64 / self.num_rows as f64 },
            num_4cycles: self.count_4cycles(),
        }
    }

    /// `[A B]`.
    pub fn hstack(&self, other: &BinMatrix) -> Result<Self, MatrixError> {
        if self.num_rows != other.num_rows {
            return Err(MatrixError::Dimension(format!(
                "hstack of {} rows with {} rows",
                self.num_rows, other.num_rows
            )));
        }
        let offset = self.num_cols;
        let rows = self
            .row_adj
            .iter()
            .zip(&other.row_adj)
            .map(|(a, b)| a.iter().copied().chain(b.iter().map(|&c| c + offset)).collect())
            .collect();
        Ok(Self::from_sorted_rows(self.num_cols + other.num_cols, rows))
    }

    /// `[A; B]`.
    pub fn vstack(&self, other: &BinMatrix) -> Result<Self, MatrixError> {
        if self.num_cols != other.num_cols {
            return Err(MatrixError::Dimension(format!(
                "vstack of {} columns with {} columns",
                self.num_cols, other.num_cols
            )));
        }
        let rows = self.row_adj.iter().chain(&other.row_adj).cloned().collect();
        Ok(Self::from_sorted_rows(self.num_cols, rows))
    }

    /// Extracts the listed columns, in the listed order.
    pub fn submatrix_by_columns(&self, cols: &[usize]) -> Result<Self, MatrixError> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.num_cols) {
            return Err(MatrixError::OutOfRange(format!(
                "column {bad} of a matrix with {} columns",
                self.num_cols
            )));
        }
        Self::from_cols(self.num_rows, cols.iter().map(|&c| self.col_adj[c].clone()).collect())
    }

    /// Extracts the listed rows, in the listed order.
    pub fn submatrix_by_rows(&self, rows: &[usize]) -> Result<Self, MatrixError> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.num_rows) {
            return Err(MatrixError::OutOfRange(format!(
                "row {bad} of a matrix with {} rows",
                self.num_rows
            )));
        }
        Ok(Self::from_sorted_rows(
            self.num_cols,
            rows.iter().map(|&r| self.row_adj[r].clone()).collect(),
        ))
    }

    /// Writes the triplet text format: a `rows cols nnz` header followed by
    /// one `row col` pair per line in row-major order.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> Result<(), MatrixError> {
        writeln!(w, "{} {} {}", self.num_rows, self.num_cols, self.nnz())?;
        for (r, row) in self.row_adj.iter().enumerate() {
            for &c in row {
                writeln!(w, "{r} {c}")?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the triplet text format written by [`BinMatrix::write_triplets`].
    /// Entries must be sorted and unique.
    pub fn read_triplets<R: BufRead>(r: R) -> Result<Self, MatrixError> {
        let mut lines = r.lines().enumerate();
        let (num_rows, num_cols, nnz) = loop {
            let Some((i, line)) = lines.next() else {
                return Err(MatrixError::Format { line: 0, msg: "missing header".into() });
            };
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let nums = parse_numbers(&line, i + 1)?;
            if nums.len() != 3 {
                return Err(MatrixError::Format {
                    line: i + 1,
                    msg: "header must be `rows cols nnz`".into(),
                });
            }
            break (nums[0], nums[1], nums[2]);
        };
        let mut rows = vec![Vec::new(); num_rows];
        let mut last: Option<(usize, usize)> = None;
        let mut count = 0usize;
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let nums = parse_numbers(&line, i + 1)?;
            let [r, c] = nums[..] else {
                return Err(MatrixError::Format { line: i + 1, msg: "expected `row col`".into() });
            };
            if r >= num_rows || c >= num_cols {
                return Err(MatrixError::Format {
                    line: i + 1,
                    msg: format!("entry ({r}, {c}) outside {num_rows}x{num_cols}"),
                });
            }
            if last.is_some_and(|prev| prev >= (r, c)) {
                return Err(MatrixError::Format {
                    line: i + 1,
                    msg: "entries must be strictly increasing".into(),
                });
            }
            last = Some((r, c));
            rows[r].push(c);
            count += 1;
        }
        if count != nnz {
            return Err(MatrixError::Format {
                line: 1,
                msg: format!("header declares {nnz} entries, found {count}"),
            });
        }
        Ok(Self::from_sorted_rows(num_cols, rows))
    }
}

impl fmt::Debug for BinMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BinMatrix({}x{}, nnz={})", self.num_rows, self.num_cols, self.nnz())?;
        if self.num_rows <= 16 && self.num_cols <= 32 {
            for row in &self.row_adj {
                let line: String = (0..self.num_cols)
                    .map(|c| if row.binary_search(&c).is_ok() { '1' } else { '.' })
                    .collect();
                write!(f, "\n  {line}")?;
            }
        }
        Ok(())
    }
}

fn cancel_pairs(sorted: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(sorted.len());
    for &c in sorted {
        if out.last() == Some(&c) {
            out.pop();
        } else {
            out.push(c);
        }
    }
    out
}

fn parse_numbers(line: &str, lineno: usize) -> Result<Vec<usize>, MatrixError> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<usize>().map_err(|_| MatrixError::Format {
                line: lineno,
                msg: format!("not a non-negative integer: {tok:?}"),
            })
        })
        .collect()
}
