//! Dense row-major matrix kernels.
//!
//! Every kernel accumulates left to right in index order, so two runs over
//! identical inputs produce bitwise-identical output. Shape errors name both
//! operand shapes.

use crate::error::{Error, Result};

/// Dense matrix of `f64` in row-major order: entry `(r, c)` lives at
/// `data[r * cols + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from a row-major buffer. The buffer length must equal
    /// `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Config {
                message: format!(
                    "buffer of length {} cannot fill a {rows}x{cols} matrix",
                    data.len()
                ),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix by evaluating `f(r, c)` at every position, row-major.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Matrix with every entry equal to `value`.
    pub fn fill(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::fill(rows, cols, 0.0)
    }

    /// Square identity matrix.
    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    /// Total bytes held by the value buffer.
    pub fn buffer_bytes(&self) -> usize {
        self.data.len() * std::mem::size_of::<f64>()
    }

    /// Product `self * other`. Inner dimensions must agree. Each output
    /// entry accumulates its inner sum in increasing index order.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = vec![0.0; self.rows * other.cols];
        // k sits in the middle loop so rows of `other` stream sequentially;
        // each out[i][j] still receives its k-terms in increasing order.
        for i in 0..self.rows {
            let out_row = &mut out[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Matrix {
            rows: self.rows,
            cols: other.cols,
            data: out,
        })
    }

    /// Element-wise product. Shapes must match, except that `other` may be a
    /// single row of matching width, which is then applied to every row of
    /// `self`.
    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_broadcast(other, "hadamard", |a, b| a * b)
    }

    /// Element-wise sum, with the same single-row broadcast rule as
    /// [`Matrix::hadamard`].
    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_broadcast(other, "add", |a, b| a + b)
    }

    /// Element-wise difference. Shapes must match exactly.
    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                op: "sub",
                left: self.shape(),
                right: other.shape(),
            });
        }
        self.zip_broadcast(other, "sub", |a, b| a - b)
    }

    fn zip_broadcast(
        &self,
        other: &Matrix,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix> {
        if self.shape() == other.shape() {
            let data = self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect();
            return Ok(Matrix {
                rows: self.rows,
                cols: self.cols,
                data,
            });
        }
        if other.rows == 1 && other.cols == self.cols {
            let mut data = Vec::with_capacity(self.rows * self.cols);
            for r in 0..self.rows {
                for c in 0..self.cols {
                    data.push(f(self.data[r * self.cols + c], other.data[c]));
                }
            }
            return Ok(Matrix {
                rows: self.rows,
                cols: self.cols,
                data,
            });
        }
        Err(Error::ShapeMismatch {
            op,
            left: self.shape(),
            right: other.shape(),
        })
    }

    /// Column sums as a `1 x cols` row, each accumulated top to bottom.
    pub fn colsum(&self) -> Matrix {
        let mut data = vec![0.0; self.cols];
        for r in 0..self.rows {
            for c in 0..self.cols {
                data[c] += self.data[r * self.cols + c];
            }
        }
        Matrix {
            rows: 1,
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// Applies `f` to every entry, in row-major order.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Column `c` as a `rows x 1` matrix.
    pub fn slice_column(&self, c: usize) -> Result<Matrix> {
        if c >= self.cols {
            return Err(Error::IndexOutOfRange {
                what: "column",
                index: c,
                bound: self.cols,
            });
        }
        let data = (0..self.rows).map(|r| self.get(r, c)).collect();
        Ok(Matrix {
            rows: self.rows,
            cols: 1,
            data,
        })
    }

    /// Replicates a single-column matrix across `cols` columns.
    pub fn expand_cols(&self, cols: usize) -> Result<Matrix> {
        if self.cols != 1 {
            return Err(Error::ShapeMismatch {
                op: "expand_cols",
                left: self.shape(),
                right: (self.rows, cols),
            });
        }
        Ok(Matrix::from_fn(self.rows, cols, |r, _| self.data[r]))
    }

    /// Largest absolute entry, or 0 for an empty matrix.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    /// Largest absolute difference against `other`. Shapes must match.
    pub fn max_abs_diff(&self, other: &Matrix) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                op: "max_abs_diff",
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (&a, &b)| m.max((a - b).abs())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Plain i-j-k triple loop, the reference semantics for matmul.
    fn matmul_oracle(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut acc = 0.0;
                for k in 0..a.cols() {
                    acc += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    fn random_matrix(rng: &mut StdRng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-2.0..2.0))
    }

    #[test]
    fn from_vec_rejects_wrong_length() {
        let err = Matrix::from_vec(2, 3, vec![1.0; 5]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3"), "message should name the shape: {msg}");
    }

    #[test]
    fn matmul_matches_triple_loop_oracle_exactly() {
        let mut rng = StdRng::seed_from_u64(7);
        let a = random_matrix(&mut rng, 3, 4);
        let b = random_matrix(&mut rng, 4, 2);
        let got = a.matmul(&b).unwrap();
        let want = matmul_oracle(&a, &b);
        for (g, w) in got.data().iter().zip(want.data()) {
            assert_eq!(g.to_bits(), w.to_bits(), "accumulation order must match");
        }
    }

    #[test]
    fn matmul_identity_is_bitwise_noop() {
        let mut rng = StdRng::seed_from_u64(11);
        let a = random_matrix(&mut rng, 5, 3);
        let left = Matrix::identity(5).matmul(&a).unwrap();
        let right = a.matmul(&Matrix::identity(3)).unwrap();
        assert_eq!(a, left);
        assert_eq!(a, right);
    }

    #[test]
    fn matmul_rejects_inner_mismatch() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        let err = a.matmul(&b).unwrap_err();
        assert!(
            err.to_string().contains("2x3 and 2x3"),
            "message should name both shapes: {err}"
        );
    }

    #[test]
    fn hadamard_broadcasts_single_row() {
        let a = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let row = Matrix::from_vec(1, 2, vec![10.0, 100.0]).unwrap();
        let got = a.hadamard(&row).unwrap();
        assert_eq!(got.data(), &[10.0, 200.0, 30.0, 400.0]);
    }

    #[test]
    fn hadamard_rejects_column_broadcast() {
        let a = Matrix::zeros(2, 3);
        let col = Matrix::zeros(2, 1);
        assert!(a.hadamard(&col).is_err(), "only a 1-row operand broadcasts");
    }

    #[test]
    fn fill_sets_every_entry() {
        let m = Matrix::fill(2, 2, 0.5);
        assert_eq!(m.data(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn slice_column_out_of_range_names_bound() {
        let m = Matrix::zeros(2, 2);
        let err = m.slice_column(5).unwrap_err();
        assert!(err.to_string().contains("5"), "message: {err}");
        assert!(err.to_string().contains("2"), "message: {err}");
    }

    #[test]
    fn expand_cols_replicates_column() {
        let col = Matrix::from_vec(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let m = col.expand_cols(2).unwrap();
        assert_eq!(m.data(), &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        assert!(Matrix::zeros(2, 2).expand_cols(3).is_err());
    }

    #[test]
    fn colsum_equals_ones_row_matmul() {
        let mut rng = StdRng::seed_from_u64(3);
        let g = random_matrix(&mut rng, 6, 4);
        let ones = Matrix::fill(1, 6, 1.0);
        let via_matmul = ones.matmul(&g).unwrap();
        let direct = g.colsum();
        let diff = direct.max_abs_diff(&via_matmul).unwrap();
        assert!(diff <= 1e-12, "colsum disagrees with ones-row product: {diff}");
    }

    fn small_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-10.0..10.0f64, rows * cols)
            .prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn transpose_of_product_matches_reversed_product(
            a in small_matrix(3, 4),
            b in small_matrix(4, 2),
        ) {
            let lhs = a.matmul(&b).unwrap().transpose();
            let rhs = b.transpose().matmul(&a.transpose()).unwrap();
            let scale = lhs.max_abs().max(1.0);
            prop_assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-12 * scale);
        }

        #[test]
        fn hadamard_commutes_for_equal_shapes(
            a in small_matrix(3, 3),
            b in small_matrix(3, 3),
        ) {
            let ab = a.hadamard(&b).unwrap();
            let ba = b.hadamard(&a).unwrap();
            prop_assert_eq!(ab, ba);
        }

        #[test]
        fn transpose_is_involutive(a in small_matrix(4, 3)) {
            prop_assert_eq!(a.transpose().transpose(), a);
        }
    }
}
