use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                what: "matrix data",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    /// `out += self · x`
    pub(crate) fn mul_vec_acc(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o += dot(row, x);
        }
    }

    /// `out += self · x` for a sparse `x` given as `(index, value)` pairs.
    pub(crate) fn mul_sparse_acc(&self, x: &[(usize, f64)], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            let mut acc = 0.0;
            for &(c, v) in x {
                acc += row[c] * v;
            }
            *o += acc;
        }
    }

    /// `out += selfᵀ · y`
    pub(crate) fn t_mul_vec_acc(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (&yr, row) in y.iter().zip(self.data.chunks_exact(self.cols)) {
            if yr == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(row) {
                *o += yr * a;
            }
        }
    }

    /// `self += a · bᵀ`
    pub(crate) fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (&ar, row) in a.iter().zip(self.data.chunks_exact_mut(self.cols)) {
            if ar == 0.0 {
                continue;
            }
            for (w, &bv) in row.iter_mut().zip(b) {
                *w += ar * bv;
            }
        }
    }

    /// `self += a · bᵀ` for a sparse `b`.
    pub(crate) fn add_outer_sparse(&mut self, a: &[f64], b: &[(usize, f64)]) {
        debug_assert_eq!(a.len(), self.rows);
        for (&ar, row) in a.iter().zip(self.data.chunks_exact_mut(self.cols)) {
            if ar == 0.0 {
                continue;
            }
            for &(c, bv) in b {
                row[c] += ar * bv;
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Shapes shared by a parameter set and everything congruent to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub obs_size: usize,
    pub action_count: usize,
    pub hidden: usize,
}

impl Dims {
    /// Network input width: observation, previous-action one-hot and mask.
    pub fn input_dim(&self) -> usize {
        self.obs_size + 2 * self.action_count
    }
}

/// Gate order used by every per-gate array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Cell = 2,
    Output = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Cell, Gate::Output];
}

/// One slot per trainable tensor, in declaration order.
///
/// Shared by parameters, gradients and optimizer accumulators so that
/// elementwise operations can walk all of them in lockstep.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensors {
    /// Per gate, `hidden × input_dim`.
    pub input_weights: [Matrix; 4],
    /// Per gate, `hidden × hidden`.
    pub recurrent_weights: [Matrix; 4],
    /// Per gate, `hidden`.
    pub gate_biases: [Vec<f64>; 4],
    /// `action_count × hidden`.
    pub output_weights: Matrix,
    /// `action_count`.
    pub output_bias: Vec<f64>,
}

impl Tensors {
    pub fn zeros(dims: Dims) -> Self {
        let input_dim = dims.input_dim();
        Tensors {
            input_weights: std::array::from_fn(|_| Matrix::zeros(dims.hidden, input_dim)),
            recurrent_weights: std::array::from_fn(|_| Matrix::zeros(dims.hidden, dims.hidden)),
            gate_biases: std::array::from_fn(|_| vec![0.0; dims.hidden]),
            output_weights: Matrix::zeros(dims.action_count, dims.hidden),
            output_bias: vec![0.0; dims.action_count],
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(14);
        out.extend(self.input_weights.iter().map(Matrix::as_slice));
        out.extend(self.recurrent_weights.iter().map(Matrix::as_slice));
        out.extend(self.gate_biases.iter().map(Vec::as_slice));
        out.push(self.output_weights.as_slice());
        out.push(&self.output_bias);
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(14);
        out.extend(self.input_weights.iter_mut().map(Matrix::as_mut_slice));
        out.extend(self.recurrent_weights.iter_mut().map(Matrix::as_mut_slice));
        out.extend(self.gate_biases.iter_mut().map(Vec::as_mut_slice));
        out.push(self.output_weights.as_mut_slice());
        out.push(&mut self.output_bias);
        out
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn l2_norm(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            for v in s.iter_mut() {
                *v *= factor;
            }
        }
    }

    pub fn add_assign(&mut self, other: &Tensors) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub(crate) fn dims_match(&self, dims: Dims) -> bool {
        let input_dim = dims.input_dim();
        self.input_weights
            .iter()
            .all(|m| m.rows() == dims.hidden && m.cols() == input_dim)
            && self
                .recurrent_weights
                .iter()
                .all(|m| m.rows() == dims.hidden && m.cols() == dims.hidden)
            && self.gate_biases.iter().all(|b| b.len() == dims.hidden)
            && self.output_weights.rows() == dims.action_count
            && self.output_weights.cols() == dims.hidden
            && self.output_bias.len() == dims.action_count
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_and_dense_products_agree() {
        let m = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let x = [0.0, 2.0, 0.5];
        let mut dense = vec![0.0; 2];
        m.mul_vec_acc(&x, &mut dense);
        let mut sparse = vec![0.0; 2];
        m.mul_sparse_acc(&[(1, 2.0), (2, 0.5)], &mut sparse);
        assert_eq!(dense, vec![5.5, 13.0]);
        assert_eq!(dense, sparse);

        let mut t = vec![0.0; 3];
        m.t_mul_vec_acc(&[1.0, -1.0], &mut t);
        assert_eq!(t, vec![-3.0, -3.0, -3.0]);
    }

    #[test]
    fn outer_products() {
        let mut a = Matrix::zeros(2, 3);
        a.add_outer(&[1.0, 2.0], &[0.0, 1.0, 3.0]);
        let mut b = Matrix::zeros(2, 3);
        b.add_outer_sparse(&[1.0, 2.0], &[(1, 1.0), (2, 3.0)]);
        assert_eq!(a, b);
        assert_eq!(a.row(1), &[0.0, 2.0, 6.0]);
    }

    #[test]
    fn tensor_slices_cover_every_entry() {
        let dims = Dims {
            obs_size: 3,
            action_count: 2,
            hidden: 4,
        };
        let t = Tensors::zeros(dims);
        let expected = 4 * 4 * 7 + 4 * 4 * 4 + 4 * 4 + 2 * 4 + 2;
        assert_eq!(t.len(), expected);
        assert!(t.dims_match(dims));
    }
}
