//! Compressed sparse row matrices.
//!
//! Entries are kept in a canonical form: within each row, column indices are
//! strictly increasing and explicit zeros are dropped. Every kernel walks
//! entries in that order, so results are bitwise reproducible.

use crate::error::{dim_err, param_err, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets<I>(nrows: usize, ncols: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for (r, c, v) in triplets {
            if r >= nrows || c >= ncols {
                return dim_err(format!("entry ({r}, {c}) outside {nrows}x{ncols}"));
            }
            rows[r].push((c, v));
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in &mut rows {
            // stable sort keeps insertion order of duplicates, so their sum is deterministic
            row.sort_by_key(|&(c, _)| c);
            let mut i = 0;
            while i < row.len() {
                let c = row[i].0;
                let mut acc = 0.0;
                while i < row.len() && row[i].0 == c {
                    acc += row[i].1;
                    i += 1;
                }
                if acc != 0.0 {
                    indices.push(c);
                    values.push(acc);
                }
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_triplets(n, n, diag.iter().enumerate().map(|(i, &v)| (i, i, v)))
            .expect("diagonal entries are in range")
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(pos) => vals[pos],
            Err(_) => 0.0,
        }
    }

    /// Entries in canonical order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y)?;
        Ok(y)
    }

    /// `y = A x` without allocating.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.ncols || y.len() != self.nrows {
            return dim_err(format!(
                "matvec of {}x{} with x[{}] into y[{}]",
                self.nrows,
                self.ncols,
                x.len(),
                y.len()
            ));
        }
        for (r, out) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            let mut acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c];
            }
            *out = acc;
        }
        Ok(())
    }

    /// `xᵀ A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> Result<f64> {
        if self.nrows != self.ncols {
            return dim_err("quadratic form of a non-square matrix");
        }
        let ax = self.matvec(x)?;
        Ok(ax.iter().zip(x).map(|(a, b)| a * b).sum())
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for i in 0..self.ncols {
            counts[i + 1] += counts[i];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        // rows are visited in increasing order, so each output row comes out sorted
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let dst = next[c];
                indices[dst] = r;
                values[dst] = v;
                next[c] += 1;
            }
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            indptr,
            indices,
            values,
        }
    }

    pub fn scale(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out.drop_zeros();
        out
    }

    /// `self + other`.
    pub fn add(&self, other: &SparseMatrix) -> Result<Self> {
        self.add_scaled(other, 1.0)
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, other: &SparseMatrix, alpha: f64) -> Result<Self> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return dim_err(format!(
                "add {}x{} and {}x{}",
                self.nrows, self.ncols, other.nrows, other.ncols
            ));
        }
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        let mut indices = Vec::with_capacity(self.nnz() + other.nnz());
        let mut values = Vec::with_capacity(self.nnz() + other.nnz());
        indptr.push(0);
        for r in 0..self.nrows {
            let (ac, av) = self.row(r);
            let (bc, bv) = other.row(r);
            let (mut i, mut j) = (0, 0);
            while i < ac.len() || j < bc.len() {
                let (c, v) = if j >= bc.len() || (i < ac.len() && ac[i] < bc[j]) {
                    i += 1;
                    (ac[i - 1], av[i - 1])
                } else if i >= ac.len() || bc[j] < ac[i] {
                    j += 1;
                    (bc[j - 1], alpha * bv[j - 1])
                } else {
                    i += 1;
                    j += 1;
                    (ac[i - 1], av[i - 1] + alpha * bv[j - 1])
                };
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr,
            indices,
            values,
        })
    }

    /// Sparse product `self * other` (row-wise Gustavson with a dense accumulator).
    pub fn matmul(&self, other: &SparseMatrix) -> Result<Self> {
        if self.ncols != other.nrows {
            return dim_err(format!(
                "matmul {}x{} by {}x{}",
                self.nrows, self.ncols, other.nrows, other.ncols
            ));
        }
        let mut acc = vec![0.0; other.ncols];
        let mut seen = vec![usize::MAX; other.ncols];
        let mut pattern: Vec<usize> = Vec::new();
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for r in 0..self.nrows {
            pattern.clear();
            let (ac, av) = self.row(r);
            for (&k, &a) in ac.iter().zip(av) {
                let (bc, bv) = other.row(k);
                for (&c, &b) in bc.iter().zip(bv) {
                    if seen[c] != r {
                        seen[c] = r;
                        acc[c] = 0.0;
                        pattern.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            pattern.sort_unstable();
            for &c in &pattern {
                if acc[c] != 0.0 {
                    indices.push(c);
                    values.push(acc[c]);
                }
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            nrows: self.nrows,
            ncols: other.ncols,
            indptr,
            indices,
            values,
        })
    }

    /// Canonical sparse form of `Fᵀ L F`.
    pub fn triple_product(f: &SparseMatrix, l: &SparseMatrix) -> Result<Self> {
        if l.nrows != l.ncols || l.ncols != f.nrows {
            return dim_err(format!(
                "triple product with F {}x{} and L {}x{}",
                f.nrows, f.ncols, l.nrows, l.ncols
            ));
        }
        f.transpose().matmul(&l.matmul(f)?)
    }

    pub fn diagonal_values(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Symmetric up to `tol * max_abs()`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let t = self.transpose();
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        match self.add_scaled(&t, -1.0) {
            Ok(diff) => diff.max_abs() <= tol * scale,
            Err(_) => false,
        }
    }

    /// Row-major dense copy, for small matrices and tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, c, v) in self.triplets() {
            out[r][c] = v;
        }
        out
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return param_err("ragged dense matrix");
        }
        Self::from_triplets(
            nrows,
            ncols,
            rows.iter()
                .enumerate()
                .flat_map(|(r, row)| row.iter().enumerate().map(move |(c, &v)| (r, c, v))),
        )
    }

    fn drop_zeros(&mut self) {
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        let mut w = 0;
        indptr.push(0);
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.values[k] != 0.0 {
                    self.indices[w] = self.indices[k];
                    self.values[w] = self.values[k];
                    w += 1;
                }
            }
            indptr.push(w);
        }
        self.indices.truncate(w);
        self.values.truncate(w);
        self.indptr = indptr;
    }
}
