//! Compressed-row sparse matrices and a thin wrapper over faer's sparse LU.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{KfpError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds the matrix from `(row, col, value)` triplets; duplicates are
    /// summed and columns sorted within each row. Explicit zeros are kept.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        indptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for r in 0..nrows {
            row.clear();
            row.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            row.sort_by_key(|e| e.0);
            for &(c, v) in &row {
                if indices.len() > indptr[r] && *indices.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        CsrMatrix::from_triplets(n, n, &t)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.indptr[r]..self.indptr[r + 1]).map(move |k| (self.indices[k], self.values[k]))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let cols = &self.indices[self.indptr[r]..self.indptr[r + 1]];
        match cols.binary_search(&c) {
            Ok(k) => self.values[self.indptr[r] + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        for (r, out) in y.iter_mut().enumerate().take(self.nrows) {
            *out = self.row(r).map(|(c, v)| v * x[c]).sum();
        }
    }

    /// `xᵀ A x`-style bilinear form `aᵀ A b`.
    pub fn bilinear(&self, a: &[f64], b: &[f64]) -> f64 {
        (0..self.nrows)
            .map(|r| a[r] * self.row(r).map(|(c, v)| v * b[c]).sum::<f64>())
            .sum()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let t: Vec<_> = (0..self.nrows)
            .flat_map(|r| self.row(r).map(move |(c, v)| (c, r, v)))
            .collect();
        CsrMatrix::from_triplets(self.ncols, self.nrows, &t)
    }

    /// Rows `rows` restricted to columns `cols`, reindexed from zero.
    pub fn block(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> CsrMatrix {
        let mut t = Vec::new();
        for r in rows.clone() {
            for (c, v) in self.row(r) {
                if cols.contains(&c) {
                    t.push((r - rows.start, c - cols.start, v));
                }
            }
        }
        CsrMatrix::from_triplets(rows.len(), cols.len(), &t)
    }

    /// Entry-wise `max |A − Aᵀ|`.
    pub fn max_asymmetry(&self) -> f64 {
        let mut d: f64 = 0.0;
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                d = d.max((v - self.get(c, r)).abs());
            }
        }
        d
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.nrows)
            .flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v)))
            .collect()
    }
}

/// Sparse LU factorization with partial pivoting.
pub struct SparseLu {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl SparseLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(KfpError::DimensionMismatch {
                expected: a.nrows,
                got: a.ncols,
            });
        }
        let trips: Vec<Triplet<usize, usize, f64>> = a
            .triplets()
            .into_iter()
            .map(|(r, c, v)| Triplet::new(r, c, v))
            .collect();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(a.nrows, a.ncols, &trips)
            .map_err(|e| KfpError::Singular(format!("sparse assembly: {e:?}")))?;
        let lu = mat
            .sp_lu()
            .map_err(|e| KfpError::Singular(format!("sparse LU: {e:?}")))?;
        Ok(SparseLu { n: a.nrows, lu })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(KfpError::DimensionMismatch {
                expected: self.n,
                got: b.len(),
            });
        }
        let mut rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_in_place(rhs.as_mut());
        let x: Vec<f64> = (0..self.n).map(|i| rhs[(i, 0)]).collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(KfpError::Singular("non-finite solution from LU".into()));
        }
        Ok(x)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Solves `A x = b` with LU plus iterative refinement until
/// `‖b − A x‖_∞ ≤ rel_tol · ‖b‖_∞`. Returns the solution and residual history.
pub fn solve_refined(
    a: &CsrMatrix,
    lu: &SparseLu,
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let scale = inf_norm(b).max(f64::MIN_POSITIVE);
    let mut x = lu.solve(b)?;
    let mut history = Vec::new();
    for _ in 0..=max_iter {
        let ax = a.matvec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let res = inf_norm(&r) / scale;
        history.push(res);
        if res <= rel_tol || inf_norm(b) == 0.0 {
            return Ok((x, history));
        }
        if history.len() > max_iter {
            break;
        }
        let dx = lu.solve(&r)?;
        for (xi, d) in x.iter_mut().zip(&dx) {
            *xi += d;
        }
    }
    Err(KfpError::NonConvergence {
        message: format!("relative residual above {rel_tol:e}"),
        history,
    })
}
