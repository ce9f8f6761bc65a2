//! Symmetric sparse storage for the rescaled differential matrix.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::correlation::StatKind;
use crate::eigen::SymmetricOperator;
use crate::error::{Result, ScreenError};
use crate::sampler::Pair;
use crate::scalar::Scalar;

/// Matrix-vector products above this many stored entries are split into
/// fixed row blocks; the block count never depends on the thread pool, so
/// products are bit-identical for any number of threads.
const PARALLEL_NNZ: usize = 1 << 16;
const MATVEC_BLOCKS: usize = 16;

/// Symmetric `p x p` matrix with a zero diagonal, stored once per unordered
/// pair as compressed rows of the strict upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDifferential<T> {
    p: usize,
    rho: f64,
    stat_kind: StatKind,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    values: Vec<T>,
    degenerate_variables: Vec<bool>,
    blocks: Vec<(usize, usize)>,
}

fn row_blocks(row_ptr: &[usize]) -> Vec<(usize, usize)> {
    let p = row_ptr.len() - 1;
    let nnz = row_ptr[p];
    if nnz < PARALLEL_NNZ {
        return vec![(0, p)];
    }
    let target = nnz.div_ceil(MATVEC_BLOCKS);
    let mut blocks = Vec::with_capacity(MATVEC_BLOCKS);
    let mut start = 0;
    for r in 0..p {
        if row_ptr[r + 1] - row_ptr[start] >= target {
            blocks.push((start, r + 1));
            start = r + 1;
        }
    }
    if start < p {
        blocks.push((start, p));
    }
    blocks
}

impl<T: Scalar> SparseDifferential<T> {
    /// Assembles from `(i, j) -> value` entries with `i < j`, in any order.
    /// Duplicate pairs are rejected.
    pub fn from_entries(
        p: usize,
        rho: f64,
        stat_kind: StatKind,
        entries: impl IntoIterator<Item = (Pair, T)>,
        degenerate_variables: Vec<bool>,
    ) -> Result<Self> {
        let mut entries: Vec<(Pair, T)> = entries.into_iter().collect();
        if !entries.windows(2).all(|w| w[0].0 < w[1].0) {
            entries.sort_by_key(|e| e.0);
            if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(ScreenError::Precondition(format!(
                    "duplicate pair ({},{})",
                    w[0].0 .0 + 1,
                    w[0].0 .1 + 1
                )));
            }
        }
        if degenerate_variables.len() != p {
            return Err(ScreenError::Dimension(format!(
                "{} degeneracy flags for p={p}",
                degenerate_variables.len()
            )));
        }
        let mut row_ptr = vec![0usize; p + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        for ((i, j), v) in entries {
            if i >= j || j as usize >= p {
                return Err(ScreenError::Precondition(format!(
                    "pair ({},{}) is not an upper-triangle pair for p={p}",
                    i + 1,
                    j + 1
                )));
            }
            row_ptr[i as usize + 1] += 1;
            cols.push(j);
            values.push(v);
        }
        for r in 0..p {
            row_ptr[r + 1] += row_ptr[r];
        }
        let blocks = row_blocks(&row_ptr);
        Ok(Self {
            p,
            rho,
            stat_kind,
            row_ptr,
            cols,
            values,
            degenerate_variables,
            blocks,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn stat_kind(&self) -> StatKind {
        self.stat_kind
    }

    /// Stored entries (one per unordered pair).
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn degenerate_variables(&self) -> &[bool] {
        &self.degenerate_variables
    }

    pub fn is_degenerate_pair(&self, i: usize, j: usize) -> bool {
        self.degenerate_variables[i] || self.degenerate_variables[j]
    }

    /// Entry `(i, j)`; zero on the diagonal and at unsampled positions.
    pub fn get(&self, i: usize, j: usize) -> T {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        if a == b {
            return T::zero();
        }
        let range = self.row_ptr[a]..self.row_ptr[a + 1];
        match self.cols[range.clone()].binary_search(&(b as u32)) {
            Ok(k) => self.values[range.start + k],
            Err(_) => T::zero(),
        }
    }

    /// Stored upper-triangle entries in row order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.p).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.cols[k] as usize, self.values[k]))
        })
    }

    /// Row-major dense copy (diagnostics and small problems only).
    pub fn to_dense(&self) -> Vec<T> {
        let mut d = vec![T::zero(); self.p * self.p];
        for (i, j, v) in self.entries() {
            d[i * self.p + j] = v;
            d[j * self.p + i] = v;
        }
        d
    }

    fn apply_rows(&self, rows: (usize, usize), x: &[T], y: &mut [T]) {
        self.apply_rows_offset(rows, 0, x, y);
    }

    /// Like `apply_rows`, with `y` covering indices `offset..p`.
    fn apply_rows_offset(&self, rows: (usize, usize), offset: usize, x: &[T], y: &mut [T]) {
        for i in rows.0..rows.1 {
            let xi = x[i];
            let mut acc = T::zero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[k] as usize;
                let v = self.values[k];
                acc += v * x[j];
                y[j - offset] += v * xi;
            }
            y[i - offset] += acc;
        }
    }

    /// `y = D x`
    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.p);
        assert_eq!(y.len(), self.p);
        y.iter_mut().for_each(|v| *v = T::zero());
        if self.blocks.len() == 1 {
            self.apply_rows(self.blocks[0], x, y);
            return;
        }
        // upper-triangle rows from r0 on only touch columns r0..p
        let partials: Vec<Vec<T>> = self
            .blocks
            .par_iter()
            .map(|&(r0, r1)| {
                let mut part = vec![T::zero(); self.p - r0];
                self.apply_rows_offset((r0, r1), r0, x, &mut part);
                part
            })
            .collect();
        for (&(r0, _), part) in self.blocks.iter().zip(&partials) {
            for (yi, &v) in y[r0..].iter_mut().zip(part) {
                *yi += v;
            }
        }
    }

    /// Coordinate text: `# p=.. rho=.. stat_kind=..` then `i j value` lines
    /// (1-based, `i < j`).
    pub fn write_coordinate<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# p={} rho={} stat_kind={}", self.p, self.rho, self.stat_kind)?;
        for (i, j, v) in self.entries() {
            writeln!(w, "{} {} {}", i + 1, j + 1, v)?;
        }
        Ok(())
    }

    pub fn read_coordinate<R: BufRead>(r: R) -> Result<Self> {
        let mut p = None;
        let mut rho = None;
        let mut kind = None;
        let mut entries = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let perr = |column: usize, message: String| ScreenError::Parse {
                path: "<coordinate>".into(),
                line: lineno as u64 + 1,
                column,
                message,
            };
            let line = line.trim();
            if let Some(header) = line.strip_prefix('#') {
                for tok in header.split_whitespace() {
                    match tok.split_once('=') {
                        Some(("p", v)) => p = Some(v.parse::<usize>().map_err(|e| perr(1, e.to_string()))?),
                        Some(("rho", v)) => rho = Some(v.parse::<f64>().map_err(|e| perr(1, e.to_string()))?),
                        Some(("stat_kind", v)) => kind = Some(v.parse::<StatKind>()?),
                        _ => {}
                    }
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let mut field = |c: usize| it.next().ok_or_else(|| perr(c, "missing field".into()));
            let i: u32 = field(1)?.parse().map_err(|e: std::num::ParseIntError| perr(1, e.to_string()))?;
            let j: u32 = field(2)?.parse().map_err(|e: std::num::ParseIntError| perr(2, e.to_string()))?;
            let v: f64 = field(3)?.parse().map_err(|e: std::num::ParseFloatError| perr(3, e.to_string()))?;
            if i < 1 || j < 1 {
                return Err(perr(1, "indices are 1-based".into()));
            }
            entries.push(((i - 1, j - 1), T::of_f64(v)));
        }
        let missing = |what: &str| ScreenError::Parse {
            path: "<coordinate>".into(),
            line: 1,
            column: 1,
            message: format!("header is missing `{what}`"),
        };
        let p = p.ok_or_else(|| missing("p"))?;
        Self::from_entries(
            p,
            rho.ok_or_else(|| missing("rho"))?,
            kind.ok_or_else(|| missing("stat_kind"))?,
            entries,
            vec![false; p],
        )
    }
}

impl<T: Scalar> SymmetricOperator<T> for SparseDifferential<T> {
    fn dim(&self) -> usize {
        self.p
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        self.matvec(x, y)
    }
}
