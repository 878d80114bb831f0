//! Linear-algebra plumbing: sparse assembly and direct factorization (faer),
//! dense matrices (nalgebra), quadrature weights.

use faer::prelude::*;
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};

use crate::{Error, Result, C64};

/// Dense complex matrix used for maps and composites.
pub type DMat = nalgebra::DMatrix<C64>;

/// Right-hand sides per block solve; bounds peak memory on large grids.
const SOLVE_BLOCK: usize = 64;

/// Accumulates (row, col, value) entries; duplicates are summed on build.
#[derive(Debug, Clone)]
pub struct SparseBuilder {
    n: usize,
    entries: Vec<Triplet<usize, usize, C64>>,
}

impl SparseBuilder {
    pub fn new(n: usize) -> Self {
        Self { n, entries: Vec::with_capacity(5 * n) }
    }

    pub fn add(&mut self, row: usize, col: usize, val: C64) {
        debug_assert!(row < self.n && col < self.n);
        self.entries.push(Triplet::new(row, col, val));
    }

    pub fn build(self) -> Result<SparseMatrix> {
        let inner = SparseColMat::<usize, C64>::try_new_from_triplets(self.n, self.n, &self.entries)
            .map_err(|e| Error::InvalidArgument(format!("sparse assembly: {e:?}")))?;
        Ok(SparseMatrix { inner })
    }
}

/// Square sparse complex matrix in compressed-column form.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    inner: SparseColMat<usize, C64>,
}

impl SparseMatrix {
    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn nnz(&self) -> usize {
        self.inner.compute_nnz()
    }

    /// All stored entries as (row, col, value).
    pub fn entries(&self) -> Vec<(usize, usize, C64)> {
        let m = self.inner.as_ref();
        let mut out = Vec::with_capacity(self.nnz());
        for j in 0..m.ncols() {
            for (i, v) in m.row_idx_of_col(j).zip(m.val_of_col(j).iter()) {
                out.push((i, j, *v));
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.dim());
        let mut y = vec![C64::new(0.0, 0.0); self.dim()];
        let m = self.inner.as_ref();
        for j in 0..m.ncols() {
            let xj = x[j];
            for (i, v) in m.row_idx_of_col(j).zip(m.val_of_col(j).iter()) {
                y[i] += v * xj;
            }
        }
        y
    }

    /// Sparse LU with partial pivoting. `k` is only used for error reports.
    pub fn factor(&self, k: f64) -> Result<SparseLu> {
        let lu = self
            .inner
            .sp_lu()
            .map_err(|e| Error::SolveFailure { k, reason: format!("LU factorization: {e:?}") })?;
        Ok(SparseLu { lu, n: self.dim(), k })
    }
}

/// A factorization shared read-only across right-hand sides.
pub struct SparseLu {
    lu: Lu<usize, C64>,
    n: usize,
    k: f64,
}

impl SparseLu {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, rhs: &[C64]) -> Result<Vec<C64>> {
        let mut x = rhs.to_vec();
        self.solve_block_in_place(&mut x, 1)?;
        Ok(x)
    }

    /// Solves for `ncols` right-hand sides stored column-major in `data`.
    pub fn solve_block_in_place(&self, data: &mut [C64], ncols: usize) -> Result<()> {
        if data.len() != self.n * ncols {
            return Err(Error::DimensionMismatch(format!(
                "rhs block has {} entries, expected {}x{}",
                data.len(),
                self.n,
                ncols
            )));
        }
        for chunk in data.chunks_mut(self.n * SOLVE_BLOCK) {
            let nc = chunk.len() / self.n;
            let mat = MatMut::from_column_major_slice_mut(chunk, self.n, nc);
            self.lu.solve_in_place(mat);
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::SolveFailure { k: self.k, reason: "non-finite solution".into() });
        }
        Ok(())
    }
}

/// Trapezoid weights for `n_cells` uniform cells of width `h`.
pub fn trapezoid_weights(n_cells: usize, h: f64) -> Vec<f64> {
    if n_cells == 0 {
        return vec![h];
    }
    let mut w = vec![h; n_cells + 1];
    w[0] = 0.5 * h;
    w[n_cells] = 0.5 * h;
    w
}

/// √(Σ w |z|²)
pub fn weighted_norm(z: &[C64], w: &[f64]) -> f64 {
    debug_assert_eq!(z.len(), w.len());
    z.iter().zip(w).map(|(z, w)| w * z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vec_norm(z: &[C64]) -> f64 {
    z.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
