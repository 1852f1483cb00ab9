use crate::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Argument(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn frobenius_distance(&self, other: &Matrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    }
}

/// Dense symmetric matrix. Writes go through [`SymmetricMatrix::set`], which
/// mirrors the entry, so the two triangles never disagree.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    inner: Matrix,
}

impl SymmetricMatrix {
    pub fn identity(p: usize) -> Self {
        Self { inner: Matrix::identity(p) }
    }

    /// Builds the matrix from `f(i, j)` evaluated on the lower triangle (`i >= j`).
    pub fn from_fn(p: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut inner = Matrix::zeros(p, p);
        for i in 0..p {
            for j in 0..=i {
                let v = f(i, j);
                inner.set(i, j, v);
                inner.set(j, i, v);
            }
        }
        Self { inner }
    }

    /// Builds from a square matrix; the lower triangle is authoritative.
    pub fn from_lower(m: &Matrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::Argument(format!("matrix is {}x{}, not square", m.rows(), m.cols())));
        }
        Ok(Self::from_fn(m.rows(), |i, j| m.get(i, j)))
    }

    /// Builds from the row-major packed lower triangle (`p(p+1)/2` values).
    pub fn from_packed_lower(p: usize, packed: &[f64]) -> Result<Self> {
        if packed.len() != p * (p + 1) / 2 {
            return Err(Error::Argument(format!(
                "packed lower triangle of order {p} needs {} values, got {}",
                p * (p + 1) / 2,
                packed.len()
            )));
        }
        let mut it = packed.iter();
        let mut m = Matrix::zeros(p, p);
        for i in 0..p {
            for j in 0..=i {
                let v = *it.next().unwrap();
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        Ok(Self { inner: m })
    }

    pub fn packed_lower(&self) -> Vec<f64> {
        let p = self.order();
        let mut out = Vec::with_capacity(p * (p + 1) / 2);
        for i in 0..p {
            for j in 0..=i {
                out.push(self.get(i, j));
            }
        }
        out
    }

    pub fn order(&self) -> usize {
        self.inner.rows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner.get(i, j)
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.inner.set(i, j, v);
        self.inner.set(j, i, v);
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.inner
    }

    pub fn is_finite(&self) -> bool {
        self.inner.data.iter().all(|v| v.is_finite())
    }

    pub fn trace(&self) -> f64 {
        (0..self.order()).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.inner.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn frobenius_distance(&self, other: &SymmetricMatrix) -> f64 {
        self.inner.frobenius_distance(&other.inner)
    }
}

/// Eigenvalues in descending order with the matching orthonormal
/// eigenvectors stored as the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymEigen {
    /// `V diag(values) Vᵀ`.
    pub fn reconstruct(&self) -> SymmetricMatrix {
        let p = self.values.len();
        let v = &self.vectors;
        SymmetricMatrix::from_fn(p, |i, j| (0..p).map(|k| v.get(i, k) * self.values[k] * v.get(j, k)).sum())
    }
}

const MAX_SWEEPS: usize = 100;

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
pub fn sym_eigen(m: &SymmetricMatrix) -> Result<SymEigen> {
    if !m.is_finite() {
        return Err(Error::Numeric("eigendecomposition of a matrix with non-finite entries".into()));
    }
    let n = m.order();
    let mut a = m.as_matrix().clone();
    let mut v = Matrix::identity(n);
    let total: f64 = a.data.iter().map(|x| x * x).sum();

    let off_norm = |a: &Matrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += a.get(i, j).powi(2);
            }
        }
        s
    };

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let off = off_norm(&a);
        if off <= 1e-30 * total || off == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
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
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    if !converged && off_norm(&a) > 1e-24 * total.max(1e-300) {
        let diag_max = (0..n).map(|i| a.get(i, i).abs()).fold(0.0, f64::max);
        let diag_min = (0..n).map(|i| a.get(i, i).abs()).fold(f64::INFINITY, f64::min);
        return Err(Error::Numeric(format!(
            "Jacobi eigendecomposition did not converge after {MAX_SWEEPS} sweeps \
             (order {n}, condition estimate {:.3e})",
            diag_max / diag_min
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(j, j).total_cmp(&a.get(i, i)));
    let values = order.iter().map(|&k| a.get(k, k)).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors.set(r, dst, v.get(r, src));
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Lower-triangular `L` with `L Lᵀ = m`.
pub fn cholesky(m: &SymmetricMatrix) -> Result<Matrix> {
    let n = m.order();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = m.get(j, j);
        for k in 0..j {
            d -= l.get(j, k).powi(2);
        }
        if !(d > 0.0) {
            return Err(Error::Factorization { pivot: j, value: d });
        }
        let ljj = d.sqrt();
        l.set(j, j, ljj);
        for i in (j + 1)..n {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / ljj);
        }
    }
    Ok(l)
}

/// Cholesky with a single retry after adding `1e-10` to the diagonal.
pub fn cholesky_with_jitter(m: &SymmetricMatrix) -> Result<Matrix> {
    match cholesky(m) {
        Ok(l) => Ok(l),
        Err(Error::Factorization { pivot, value }) => {
            log::warn!("cholesky pivot {pivot} = {value:e}; retrying with diagonal jitter 1e-10");
            let mut jittered = m.clone();
            for i in 0..m.order() {
                jittered.set(i, i, m.get(i, i) + 1e-10);
            }
            cholesky(&jittered)
        }
        Err(e) => Err(e),
    }
}
