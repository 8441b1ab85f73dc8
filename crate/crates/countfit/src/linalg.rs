//! Minimal dense linear algebra: a row-major matrix, Cholesky factorization,
//! and symmetric positive-definite solves. Problem sizes here are tiny
//! (tens of parameters), so simplicity and determinism win over speed.

use crate::num::Float;

#[derive(Debug, Clone, PartialEq)]
pub struct Mat<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Float> Mat<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = F::one();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<F>>) -> Self {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == p), "ragged rows");
        Self {
            rows: n,
            cols: p,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `self * v`
    pub fn matvec(&self, v: &[F]) -> Vec<F> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(F::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect()
    }

    /// `self^T * v`
    pub fn t_matvec(&self, v: &[F]) -> Vec<F> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![F::zero(); self.cols];
        for i in 0..self.rows {
            let vi = v[i];
            for (j, &a) in self.row(i).iter().enumerate() {
                out[j] += a * vi;
            }
        }
        out
    }

    /// `self^T * diag(w) * self`, the weighted Gram matrix.
    pub fn xtwx(&self, w: &[F]) -> Mat<F> {
        assert_eq!(w.len(), self.rows);
        let p = self.cols;
        let mut out = Mat::zeros(p, p);
        for i in 0..self.rows {
            let wi = w[i];
            let row = self.row(i);
            for a in 0..p {
                let wa = wi * row[a];
                for b in a..p {
                    out[(a, b)] += wa * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                out[(a, b)] = out[(b, a)];
            }
        }
        out
    }
}

impl<F: Float> core::ops::Index<(usize, usize)> for Mat<F> {
    type Output = F;
    fn index(&self, (i, j): (usize, usize)) -> &F {
        &self.data[i * self.cols + j]
    }
}

impl<F: Float> core::ops::IndexMut<(usize, usize)> for Mat<F> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut F {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
/// On failure returns the pivot index where positive-definiteness broke down.
pub fn cholesky<F: Float>(a: &Mat<F>) -> Result<Mat<F>, usize> {
    assert_eq!(a.rows(), a.cols());
    let n = a.rows();
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > F::zero()) || !diag.is_finite() {
            return Err(j);
        }
        let root = diag.sqrt();
        l[(j, j)] = root;
        for i in (j + 1)..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / root;
        }
    }
    Ok(l)
}

/// Solves `A x = b` given the Cholesky factor `L` of `A`.
pub fn cholesky_solve<F: Float>(l: &Mat<F>, b: &[F]) -> Vec<F> {
    let n = l.rows();
    assert_eq!(b.len(), n);
    // forward: L y = b
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            let t = l[(i, k)] * y[k];
            y[i] -= t;
        }
        y[i] /= l[(i, i)];
    }
    // backward: L^T x = y
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let t = l[(k, i)] * y[k];
            y[i] -= t;
        }
        y[i] /= l[(i, i)];
    }
    y
}

/// Solves `A x = b` for symmetric positive-definite `A`.
pub fn spd_solve<F: Float>(a: &Mat<F>, b: &[F]) -> Result<Vec<F>, usize> {
    Ok(cholesky_solve(&cholesky(a)?, b))
}

/// Inverse of a symmetric positive-definite matrix.
pub fn spd_inverse<F: Float>(a: &Mat<F>) -> Result<Mat<F>, usize> {
    let l = cholesky(a)?;
    let n = a.rows();
    let mut inv = Mat::zeros(n, n);
    let mut e = vec![F::zero(); n];
    for j in 0..n {
        e[j] = F::one();
        let col = cholesky_solve(&l, &e);
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
        e[j] = F::zero();
    }
    // symmetrize away rounding asymmetry
    for i in 0..n {
        for j in (i + 1)..n {
            let s = (inv[(i, j)] + inv[(j, i)]) * F::cast(0.5);
            inv[(i, j)] = s;
            inv[(j, i)] = s;
        }
    }
    Ok(inv)
}
