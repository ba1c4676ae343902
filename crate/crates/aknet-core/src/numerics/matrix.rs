use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
///
/// Column vectors are matrices with `cols == 1`. All filter and network
/// quantities in this crate are small (dimensions well below 10^3), so a
/// flat `Vec<f64>` with explicit index arithmetic is the whole story.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Build from row-major data. Panics if `data.len() != rows * cols`.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "matrix data length {} does not match {}x{}",
            data.len(),
            rows,
            cols
        );
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn scaled_identity(n: usize, scale: f64) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = scale;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    /// Column vector from a slice.
    pub fn col(values: &[f64]) -> Self {
        Self::new(values.len(), 1, values.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn trace(&self) -> f64 {
        let n = self.rows.min(self.cols);
        (0..n).map(|i| self.data[i * self.cols + i]).sum()
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Standard matrix product. Errors when inner dimensions disagree.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                op: "matmul",
                details: format!(
                    "{}x{} * {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        let k = self.cols;
        let n = other.cols;
        for i in 0..self.rows {
            for l in 0..k {
                let a = self.data[i * k + l];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[l * n..(l + 1) * n];
                let orow = &mut out.data[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += a * brow[j];
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    fn zip_with(&self, other: &Matrix, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                op,
                details: format!(
                    "{}x{} vs {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            });
        }
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }

    /// (self + self^T) / 2; squares only.
    pub fn symmetrized(&self) -> Matrix {
        debug_assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out.data[i * n + j] = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        debug_assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
    pub fn cholesky(&self) -> Result<Matrix> {
        if self.rows != self.cols {
            return Err(Error::DimensionMismatch {
                op: "cholesky",
                details: format!("{}x{} is not square", self.rows, self.cols),
            });
        }
        let n = self.rows;
        let mut l = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut sum = self.data[i * n + j];
                for k in 0..j {
                    sum -= l.data[i * n + k] * l.data[j * n + k];
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return Err(Error::NotPositiveDefinite(format!(
                            "pivot {} at row {} during Cholesky",
                            sum, i
                        )));
                    }
                    l.data[i * n + j] = sum.sqrt();
                } else {
                    l.data[i * n + j] = sum / l.data[j * n + j];
                }
            }
        }
        Ok(l)
    }

    /// Solve `self * X = rhs` where `self` is SPD, via its Cholesky factor.
    pub fn spd_solve(&self, rhs: &Matrix) -> Result<Matrix> {
        let l = self.cholesky()?;
        if rhs.rows != self.rows {
            return Err(Error::DimensionMismatch {
                op: "spd_solve",
                details: format!("rhs has {} rows, expected {}", rhs.rows, self.rows),
            });
        }
        let n = self.rows;
        let m = rhs.cols;
        // forward: L y = rhs
        let mut y = rhs.clone();
        for c in 0..m {
            for i in 0..n {
                let mut sum = y.data[i * m + c];
                for k in 0..i {
                    sum -= l.data[i * n + k] * y.data[k * m + c];
                }
                y.data[i * m + c] = sum / l.data[i * n + i];
            }
        }
        // backward: L^T x = y
        let mut x = y;
        for c in 0..m {
            for i in (0..n).rev() {
                let mut sum = x.data[i * m + c];
                for k in i + 1..n {
                    sum -= l.data[k * n + i] * x.data[k * m + c];
                }
                x.data[i * m + c] = sum / l.data[i * n + i];
            }
        }
        Ok(x)
    }

    /// Cheap condition estimate from the Cholesky factor: (max Lii / min Lii)^2.
    pub fn spd_condition_estimate(&self) -> Result<f64> {
        let l = self.cholesky()?;
        let n = self.rows;
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for i in 0..n {
            let d = l.data[i * n + i];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        Ok((hi / lo).powi(2))
    }

    /// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
    /// Returns eigenvalues (ascending) and eigenvectors as columns.
    pub fn sym_eig(&self) -> Result<(Vec<f64>, Matrix)> {
        if self.rows != self.cols {
            return Err(Error::DimensionMismatch {
                op: "sym_eig",
                details: format!("{}x{} is not square", self.rows, self.cols),
            });
        }
        let n = self.rows;
        let mut a = self.symmetrized();
        let mut v = Matrix::identity(n);
        for _sweep in 0..100 {
            let mut off = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    off += a.get(i, j).abs();
                }
            }
            if off < 1e-13 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a.get(p, q);
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let app = a.get(p, p);
                    let aqq = a.get(q, q);
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a.get(k, p);
                        let akq = a.get(k, q);
                        a.set(k, p, c * akp - s * akq);
                        a.set(k, q, s * akp + c * akq);
                    }
                    for k in 0..n {
                        let apk = a.get(p, k);
                        let aqk = a.get(q, k);
                        a.set(p, k, c * apk - s * aqk);
                        a.set(q, k, s * apk + c * aqk);
                    }
                    for k in 0..n {
                        let vkp = v.get(k, p);
                        let vkq = v.get(k, q);
                        v.set(k, p, c * vkp - s * vkq);
                        v.set(k, q, s * vkp + c * vkq);
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        let eig: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
        order.sort_by(|&i, &j| eig[i].partial_cmp(&eig[j]).unwrap());
        let values: Vec<f64> = order.iter().map(|&i| eig[i]).collect();
        let mut vectors = Matrix::zeros(n, n);
        for (new_col, &old_col) in order.iter().enumerate() {
            for k in 0..n {
                vectors.set(k, new_col, v.get(k, old_col));
            }
        }
        Ok((values, vectors))
    }

    /// Smallest eigenvalue of a symmetric matrix.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.sym_eig()?.0[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matmul_oracle(a: &Matrix, b: &Matrix) -> Matrix {
        // entrywise triple loop, independent of Matrix::matmul's loop order
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    fn seeded_random(rows: usize, cols: usize, seed: u64) -> Matrix {
        // splitmix64-style generator, enough for test fixtures
        let mut state = seed;
        let mut next = move || {
            state = state.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            z = z ^ (z >> 31);
            (z as f64 / u64::MAX as f64) * 2.0 - 1.0
        };
        Matrix::new(rows, cols, (0..rows * cols).map(|_| next()).collect())
    }

    #[test]
    fn matmul_identity_passthrough() {
        let a = seeded_random(2, 2, 7);
        let i2 = Matrix::identity(2);
        assert_eq!(i2.matmul(&a).unwrap(), a);
    }

    #[test]
    fn matmul_hand_case() {
        let a = Matrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let b = Matrix::new(2, 1, vec![1.0, 1.0]);
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_matches_entrywise_oracle() {
        let a = seeded_random(5, 4, 11);
        let b = seeded_random(4, 3, 13);
        let fast = a.matmul(&b).unwrap();
        let slow = matmul_oracle(&a, &b);
        assert!(fast.max_abs_diff(&slow) < 1e-14);
    }

    #[test]
    fn matmul_dimension_mismatch_errors() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        assert!(a.matmul(&b).is_err());
    }

    #[test]
    fn identity_associativity_bit_compatible() {
        let a = seeded_random(4, 4, 3);
        let b = seeded_random(4, 4, 5);
        let i = Matrix::identity(4);
        let left = a.matmul(&i).unwrap().matmul(&b).unwrap();
        let right = a.matmul(&i.matmul(&b).unwrap()).unwrap();
        assert!(left.max_abs_diff(&right) < 1e-12);
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = seeded_random(4, 4, 17);
        let spd = a.matmul(&a.transpose()).unwrap().add(&Matrix::scaled_identity(4, 0.5)).unwrap();
        let l = spd.cholesky().unwrap();
        let rec = l.matmul(&l.transpose()).unwrap();
        assert!(rec.max_abs_diff(&spd) < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = Matrix::new(2, 2, vec![1.0, 2.0, 2.0, 1.0]);
        assert!(m.cholesky().is_err());
    }

    #[test]
    fn spd_solve_matches_direct() {
        let a = seeded_random(3, 3, 23);
        let spd = a.matmul(&a.transpose()).unwrap().add(&Matrix::scaled_identity(3, 1.0)).unwrap();
        let x_true = seeded_random(3, 2, 29);
        let rhs = spd.matmul(&x_true).unwrap();
        let x = spd.spd_solve(&rhs).unwrap();
        assert!(x.max_abs_diff(&x_true) < 1e-10);
    }

    #[test]
    fn sym_eig_recovers_diagonal() {
        let m = Matrix::diag(&[3.0, 1.0, 2.0]);
        let (vals, _) = m.sym_eig().unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 2.0).abs() < 1e-12);
        assert!((vals[2] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn sym_eig_reconstructs_random_spd() {
        let a = seeded_random(4, 4, 41);
        let spd = a.matmul(&a.transpose()).unwrap().add(&Matrix::scaled_identity(4, 0.1)).unwrap();
        let (vals, vecs) = spd.sym_eig().unwrap();
        let rec = vecs
            .matmul(&Matrix::diag(&vals))
            .unwrap()
            .matmul(&vecs.transpose())
            .unwrap();
        assert!(rec.max_abs_diff(&spd) < 1e-9);
    }
}
