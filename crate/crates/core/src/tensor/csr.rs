use super::alloc::TrackedVec;
use super::{DenseMat, TensorError};

/// Compressed sparse row matrix in canonical form (strictly increasing column
/// indices within each row).
#[derive(Clone, PartialEq)]
pub struct CsrMat {
    rows: usize,
    cols: usize,
    row_ptr: TrackedVec<usize>,
    col_idx: TrackedVec<usize>,
    vals: TrackedVec<f32>,
}

impl CsrMat {
    /// Validates and wraps raw CSR arrays.
    pub fn new(
        rows: usize,
        cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        vals: Vec<f32>,
    ) -> Result<Self, TensorError> {
        if row_ptr.len() != rows + 1 {
            return Err(TensorError::InvalidCsr(format!(
                "row_ptr has length {}, expected {}",
                row_ptr.len(),
                rows + 1
            )));
        }
        if row_ptr[0] != 0 || row_ptr[rows] != col_idx.len() || col_idx.len() != vals.len() {
            return Err(TensorError::InvalidCsr(
                "row_ptr must start at 0 and end at len(col_idx) = len(vals)".into(),
            ));
        }
        for r in 0..rows {
            if row_ptr[r] > row_ptr[r + 1] {
                return Err(TensorError::InvalidCsr(format!(
                    "row_ptr decreases at row {r}"
                )));
            }
            let cols_in_row = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            if cols_in_row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(TensorError::InvalidCsr(format!(
                    "columns of row {r} are not strictly increasing"
                )));
            }
            if cols_in_row.last().is_some_and(|&c| c >= cols) {
                return Err(TensorError::InvalidCsr(format!(
                    "column index out of range in row {r}"
                )));
            }
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: "csr" });
        }
        Ok(Self {
            rows,
            cols,
            row_ptr: TrackedVec::new(row_ptr),
            col_idx: TrackedVec::new(col_idx),
            vals: TrackedVec::new(vals),
        })
    }

    /// Builds a CSR matrix from `(row, col, value)` triplets. Duplicates are
    /// summed.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        mut triplets: Vec<(usize, usize, f32)>,
    ) -> Result<Self, TensorError> {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f32> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if r >= rows || c >= cols {
                return Err(TensorError::InvalidCsr(format!(
                    "triplet ({r}, {c}) out of range"
                )));
            }
            if last == Some((r, c)) {
                *vals.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            vals.push(v);
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self::new(rows, cols, row_ptr, col_idx, vals)
    }

    pub fn identity(n: usize) -> Self {
        Self::new(n, n, (0..=n).collect(), (0..n).collect(), vec![1.0; n])
            .expect("identity is canonical")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn vals(&self) -> &[f32] {
        &self.vals
    }

    /// Column indices of row `r`.
    pub fn row_cols(&self, r: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    pub fn row_vals(&self, r: usize) -> &[f32] {
        &self.vals[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    pub fn degree(&self, r: usize) -> usize {
        self.row_ptr[r + 1] - self.row_ptr[r]
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        self.row_cols(r).binary_search(&c).is_ok()
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        match self.row_cols(r).binary_search(&c) {
            Ok(pos) => self.row_vals(r)[pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> DenseMat {
        let mut d = DenseMat::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (&c, &v) in self.row_cols(r).iter().zip(self.row_vals(r)) {
                d.set(r, c, v);
            }
        }
        d
    }

    /// True when the sparsity pattern is symmetric (values are ignored).
    pub fn is_pattern_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|r| self.row_cols(r).iter().all(|&c| self.contains(c, r)))
    }

    pub fn bytes(&self) -> usize {
        self.row_ptr.bytes() + self.col_idx.bytes() + self.vals.bytes()
    }
}

impl std::fmt::Debug for CsrMat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CsrMat({}x{}, nnz={})", self.rows, self.cols, self.nnz())
    }
}
