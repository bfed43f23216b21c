/// Row-compressed Jacobian: one list of `(column, value)` per constraint.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseRows {
    pub cols: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn new(cols: usize) -> Self {
        Self {
            cols,
            rows: Vec::new(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    /// `J^T v` accumulated into `out`.
    pub fn add_transpose_mul(&self, v: &[f64], out: &mut [f64]) {
        for (row, &vi) in self.rows.iter().zip(v) {
            if vi == 0.0 {
                continue;
            }
            for &(c, a) in row {
                out[c] += a * vi;
            }
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.rows.len(), self.cols);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, a) in row {
                m[(r, c)] += a;
            }
        }
        m
    }
}
