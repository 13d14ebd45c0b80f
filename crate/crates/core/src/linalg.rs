//! Dense row-major matrices and the handful of kernels the samplers need:
//! Cholesky factorization, triangular solves, and SPD inversion.

use crate::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, S::one())
    }

    pub fn scaled_identity(n: usize, v: S) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(c, r)] = self[(r, c)];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dims");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == S::zero() {
                    continue;
                }
                let src = other.row(k);
                let dst = out.row_mut(i);
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = *d + a * *s;
                }
            }
        }
        out
    }

    pub fn mat_vec(&self, v: &[S]) -> Vec<S> {
        assert_eq!(self.cols, v.len(), "mat_vec dims");
        (0..self.rows).map(|r| dot(self.row(r), v)).collect()
    }

    /// `Aᵀ v` without materializing the transpose.
    pub fn transpose_mat_vec(&self, v: &[S]) -> Vec<S> {
        assert_eq!(self.rows, v.len(), "transpose_mat_vec dims");
        let mut out = vec![S::zero(); self.cols];
        for r in 0..self.rows {
            let vr = v[r];
            for (o, s) in out.iter_mut().zip(self.row(r)) {
                *o = *o + vr * *s;
            }
        }
        out
    }

    pub fn max_abs(&self) -> S {
        self.data.iter().fold(S::zero(), |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> S {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(S::zero(), |m, (a, b)| m.max((*a - *b).abs()))
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let scale = S::one().max(self.max_abs());
        let tol = scale * S::cast_from(rel_tol);
        for r in 0..self.rows {
            for c in (r + 1)..self.cols {
                if (self[(r, c)] - self[(c, r)]).abs() > tol {
                    return false;
                }
            }
        }
        true
    }
}

impl<S: Scalar> std::ops::Index<(usize, usize)> for Matrix<S> {
    type Output = S;

    fn index(&self, (r, c): (usize, usize)) -> &S {
        &self.data[r * self.cols + c]
    }
}

impl<S: Scalar> std::ops::IndexMut<(usize, usize)> for Matrix<S> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut S {
        &mut self.data[r * self.cols + c]
    }
}

/// Lower-triangular Cholesky factor of a symmetric matrix, or `None` when a
/// pivot is non-positive or non-finite.
pub fn cholesky_lower<S: Scalar>(m: &Matrix<S>) -> Option<Matrix<S>> {
    let n = m.rows();
    assert_eq!(n, m.cols(), "cholesky requires a square matrix");
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = m[(i, j)];
            for k in 0..j {
                sum = sum - l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if !(sum > S::zero()) || !sum.is_finite() {
                    return None;
                }
                l[(i, i)] = sum.sqrt();
            } else {
                l[(i, j)] = sum / l[(j, j)];
            }
        }
    }
    Some(l)
}

/// Forward substitution: solves `L y = b` for lower-triangular `L`.
pub fn solve_lower<S: Scalar>(l: &Matrix<S>, b: &[S]) -> Vec<S> {
    let n = l.rows();
    assert_eq!(b.len(), n);
    let mut y = vec![S::zero(); n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum = sum - l[(i, k)] * y[k];
        }
        y[i] = sum / l[(i, i)];
    }
    y
}

/// Back substitution: solves `Lᵀ x = b` for lower-triangular `L`.
pub fn solve_lower_transpose<S: Scalar>(l: &Matrix<S>, b: &[S]) -> Vec<S> {
    let n = l.rows();
    assert_eq!(b.len(), n);
    let mut x = vec![S::zero(); n];
    for i in (0..n).rev() {
        let mut sum = b[i];
        for k in (i + 1)..n {
            sum = sum - l[(k, i)] * x[k];
        }
        x[i] = sum / l[(i, i)];
    }
    x
}

/// Inverse of the SPD matrix `L Lᵀ` given its Cholesky factor.
pub fn spd_inverse_from_chol<S: Scalar>(l: &Matrix<S>) -> Matrix<S> {
    let n = l.rows();
    let mut inv = Matrix::zeros(n, n);
    let mut e = vec![S::zero(); n];
    for j in 0..n {
        e[j] = S::one();
        let y = solve_lower(l, &e);
        let x = solve_lower_transpose(l, &y);
        for i in 0..n {
            inv[(i, j)] = x[i];
        }
        e[j] = S::zero();
    }
    // Exact symmetry despite round-off in the two solves.
    for i in 0..n {
        for j in 0..i {
            let v = (inv[(i, j)] + inv[(j, i)]) * S::cast_from(0.5);
            inv[(i, j)] = v;
            inv[(j, i)] = v;
        }
    }
    inv
}

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(S::zero(), |acc, (x, y)| acc + *x * *y)
}

pub fn sub<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| *x - *y).collect()
}

/// `dst += s * src`
pub fn axpy<S: Scalar>(dst: &mut [S], s: S, src: &[S]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, v) in dst.iter_mut().zip(src) {
        *d += s * *v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_identity() {
        let m = Matrix::<f64>::identity(3);
        let l = cholesky_lower(&m).unwrap();
        assert_eq!(l, Matrix::identity(3));
    }

    #[test]
    fn cholesky_known_factor() {
        let m = Matrix::<f64>::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]);
        let l = cholesky_lower(&m).unwrap();
        assert!((l[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((l[(1, 0)] - 1.0).abs() < 1e-12);
        assert!((l[(1, 1)] - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(l[(0, 1)], 0.0);
        let recon = l.matmul(&l.transpose());
        assert!(recon.max_abs_diff(&m) < 1e-8 * m.max_abs());
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(cholesky_lower(&m).is_none());
    }

    #[test]
    fn triangular_solves_invert() {
        let m = Matrix::<f64>::from_rows(&[
            vec![4.0, 2.0, 0.4],
            vec![2.0, 3.0, 0.1],
            vec![0.4, 0.1, 5.0],
        ]);
        let l = cholesky_lower(&m).unwrap();
        let b = vec![1.0, -2.0, 0.5];
        let y = solve_lower(&l, &b);
        let x = solve_lower_transpose(&l, &y);
        // L Lᵀ x should reproduce b
        let back = m.mat_vec(&x);
        for (u, v) in back.iter().zip(&b) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn spd_inverse_roundtrip() {
        let m = Matrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]);
        let l = cholesky_lower(&m).unwrap();
        let inv = spd_inverse_from_chol(&l);
        let prod = m.matmul(&inv);
        assert!(prod.max_abs_diff(&Matrix::identity(2)) < 1e-12);
    }

    #[test]
    fn works_in_f32() {
        let m = Matrix::<f32>::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]);
        let l = cholesky_lower(&m).unwrap();
        assert!((l[(0, 0)] - 2.0).abs() < 1e-6);
    }
}
