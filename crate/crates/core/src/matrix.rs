//! Compressed sparse row storage for transition matrices.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Row sums must match one to this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Nonnegative sparse matrix in CSR form, rows usually stochastic.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl StochasticMatrix {
    /// Builds from per-row `(column, value)` lists. Duplicates are summed,
    /// zeros dropped, columns sorted. No stochasticity check.
    pub fn from_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if rows.len() != n {
            return Err(Error::Domain(format!("{} rows supplied for a {n}-state matrix", rows.len())));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            let mut k = 0;
            while k < row.len() {
                let j = row[k].0;
                if j >= n {
                    return Err(Error::Domain(format!("column {j} out of range for n = {n}")));
                }
                let mut v = 0.0;
                while k < row.len() && row[k].0 == j {
                    v += row[k].1;
                    k += 1;
                }
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::Domain(format!("invalid entry {v} in column {j}")));
                }
                if v > 0.0 {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Ok(StochasticMatrix { n, row_ptr, cols, vals })
    }

    /// Like [`from_rows`](Self::from_rows) but also checks row sums.
    pub fn stochastic_from_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let m = Self::from_rows(n, rows)?;
        m.check_stochastic()?;
        Ok(m)
    }

    pub fn from_dense(a: &[Vec<f64>]) -> Result<Self> {
        let n = a.len();
        let rows = a
            .iter()
            .map(|r| {
                if r.len() != n {
                    return Err(Error::Domain("dense matrix is not square".into()));
                }
                Ok(r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j, *v)).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(n, rows)
    }

    pub fn identity(n: usize) -> Self {
        StochasticMatrix {
            n,
            row_ptr: (0..=n).collect(),
            cols: (0..n).collect(),
            vals: vec![1.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Stored `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        match self.cols[a..b].binary_search(&j) {
            Ok(k) => self.vals[a + k],
            Err(_) => 0.0,
        }
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, v)| v).sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row_sum(i)).collect()
    }

    pub fn check_stochastic(&self) -> Result<()> {
        for i in 0..self.n {
            let s = self.row_sum(i);
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Domain(format!("row {i} sums to {s}")));
            }
        }
        Ok(())
    }

    pub fn transpose(&self) -> Self {
        let mut rows = vec![Vec::new(); self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                rows[j].push((i, v));
            }
        }
        // Entries are already positive and unique per (row, col).
        let mut row_ptr = Vec::with_capacity(self.n + 1);
        let mut cols = Vec::with_capacity(self.nnz());
        let mut vals = Vec::with_capacity(self.nnz());
        row_ptr.push(0);
        for r in rows {
            for (j, v) in r {
                cols.push(j);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        StochasticMatrix { n: self.n, row_ptr, cols, vals }
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    /// `y = x^T A`, the action on row vectors (densities).
    pub fn left_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                for (j, v) in self.row(i) {
                    y[j] += xi * v;
                }
            }
        }
        y
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.n]; self.n];
        for (i, row) in a.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        a
    }

    /// Principal submatrix on `states` (in the given order), rows not renormalized.
    pub fn restrict(&self, states: &[usize]) -> Self {
        let mut pos = vec![usize::MAX; self.n];
        for (k, &s) in states.iter().enumerate() {
            pos[s] = k;
        }
        let rows = states
            .iter()
            .map(|&s| self.row(s).filter(|&(j, _)| pos[j] != usize::MAX).map(|(j, v)| (pos[j], v)).collect())
            .collect();
        Self::from_rows(states.len(), rows).expect("restriction of a valid matrix")
    }

    /// Divides every nonzero row by its sum.
    pub fn normalize_rows(&mut self) {
        for i in 0..self.n {
            let s = self.row_sum(i);
            if s > 0.0 {
                for v in &mut self.vals[self.row_ptr[i]..self.row_ptr[i + 1]] {
                    *v /= s;
                }
            }
        }
    }

    /// Adjacency lists of the directed graph `i -> j` for stored entries.
    pub fn successors(&self) -> Vec<Vec<usize>> {
        (0..self.n).map(|i| self.row(i).map(|(j, _)| j).collect()).collect()
    }

    /// Matrix Market coordinate format, 1-based indices.
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.n, self.n, self.nnz())?;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
            }
        }
        Ok(())
    }

    pub fn read_matrix_market<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Io("empty Matrix Market file".into()))??;
        if !header.starts_with("%%MatrixMarket matrix coordinate real general") {
            return Err(Error::Io(format!("unsupported header '{header}'")));
        }
        let mut size = None;
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
        for line in lines {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('%') {
                continue;
            }
            let f: Vec<&str> = t.split_whitespace().collect();
            let bad = || Error::Io(format!("malformed line '{t}'"));
            if size.is_none() {
                let n: usize = f.first().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
                size = Some(n);
                rows = vec![Vec::new(); n];
                continue;
            }
            if f.len() != 3 {
                return Err(bad());
            }
            let i: usize = f[0].parse().map_err(|_| bad())?;
            let j: usize = f[1].parse().map_err(|_| bad())?;
            let v: f64 = f[2].parse().map_err(|_| bad())?;
            if i == 0 || i > rows.len() {
                return Err(bad());
            }
            rows[i - 1].push((j - 1, v));
        }
        let n = size.ok_or_else(|| Error::Io("missing size line".into()))?;
        Self::from_rows(n, rows)
    }
}
