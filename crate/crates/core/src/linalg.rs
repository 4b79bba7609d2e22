//! Dense vector/matrix arithmetic, principal component analysis, and the
//! projective-debiasing primitive shared by every intervention location.

use crate::error::{Error, Result};

/// Row-major dense matrix of finite `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting length mismatches and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "matrix data length",
                expected: rows * cols,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "matrix" });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(n * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    context: "matrix row length",
                    expected: cols,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Matrix::new(n, cols, data)
    }

    /// Identity matrix of the given order.
    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = out.row_mut(i);
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    /// `self * other^T`.
    pub fn matmul_transb(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "matmul_transb shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            for j in 0..other.rows {
                out.set(i, j, dot(self.row(i), other.row(j)));
            }
        }
        out
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Orthonormal direction set with per-direction variance-explained weights.
#[derive(Debug, Clone)]
pub struct Basis {
    vectors: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

const ORTHO_TOL: f64 = 1e-9;

impl Basis {
    /// Validates unit norms, pairwise orthogonality, and the weight contract
    /// (each in `[0, 1]`, sorted non-increasing, summing to at most 1).
    pub fn new(vectors: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if vectors.is_empty() || vectors.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                context: "basis weights",
                expected: vectors.len(),
                got: weights.len(),
            });
        }
        let len = vectors[0].len();
        for v in &vectors {
            if v.len() != len {
                return Err(Error::DimensionMismatch {
                    context: "basis vector length",
                    expected: len,
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { context: "basis" });
            }
            if (norm(v) - 1.0).abs() > ORTHO_TOL {
                return Err(Error::InvalidParameter {
                    name: "basis",
                    detail: format!("vector norm {} is not unit", norm(v)),
                });
            }
        }
        for i in 0..vectors.len() {
            for j in (i + 1)..vectors.len() {
                let ip = dot(&vectors[i], &vectors[j]);
                if ip.abs() > ORTHO_TOL {
                    return Err(Error::InvalidParameter {
                        name: "basis",
                        detail: format!("vectors {i} and {j} not orthogonal (inner product {ip})"),
                    });
                }
            }
        }
        let mut sum = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::InvalidParameter {
                    name: "basis weights",
                    detail: format!("weight {w} outside [0, 1]"),
                });
            }
            if i > 0 && w > weights[i - 1] + 1e-12 {
                return Err(Error::InvalidParameter {
                    name: "basis weights",
                    detail: "weights not sorted non-increasing".into(),
                });
            }
            sum += w;
        }
        if sum > 1.0 + ORTHO_TOL {
            return Err(Error::InvalidParameter {
                name: "basis weights",
                detail: format!("weights sum to {sum} > 1"),
            });
        }
        Ok(Basis { vectors, weights })
    }

    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    pub fn vector_len(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Keeps only the first `k` (highest-variance) components.
    pub fn truncated(&self, k: usize) -> Basis {
        assert!(k >= 1 && k <= self.dim());
        Basis {
            vectors: self.vectors[..k].to_vec(),
            weights: self.weights[..k].to_vec(),
        }
    }
}

/// Removes (hard) or attenuates (soft) the components of `h` that lie inside
/// the basis span. Soft mode scales each removal by that direction's
/// variance-explained weight, so a direction is nullified in proportion to
/// how much of the observed variation it captured.
pub fn project_out(h: &[f64], basis: &Basis, soft: bool) -> Result<Vec<f64>> {
    if h.len() != basis.vector_len() {
        return Err(Error::DimensionMismatch {
            context: "project_out",
            expected: basis.vector_len(),
            got: h.len(),
        });
    }
    let mut out = h.to_vec();
    for (g, &w) in basis.vectors().iter().zip(basis.weights()) {
        let coeff = if soft { w } else { 1.0 };
        let ip = dot(h, g);
        for (o, &gi) in out.iter_mut().zip(g) {
            *o -= coeff * ip * gi;
        }
    }
    Ok(out)
}

/// In-place variant used by forward-pass hooks.
pub(crate) fn project_out_inplace(row: &mut [f64], basis: &Basis, soft: bool) {
    let snapshot: Vec<f64> = row.to_vec();
    for (g, &w) in basis.vectors().iter().zip(basis.weights()) {
        let coeff = if soft { w } else { 1.0 };
        let ip = dot(&snapshot, g);
        for (o, &gi) in row.iter_mut().zip(g) {
            *o -= coeff * ip * gi;
        }
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns (eigenvalues, eigenvectors as matrix columns), unsorted.
pub fn jacobi_eigen(sym: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    const TOLERANCE: f64 = 1e-12;
    const MAX_SWEEPS: usize = 100;

    let n = sym.rows();
    if n != sym.cols() {
        return Err(Error::DimensionMismatch {
            context: "jacobi_eigen",
            expected: n,
            got: sym.cols(),
        });
    }
    let mut a = sym.clone();
    let mut v = Matrix::identity(n);
    let frob: f64 = sym.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    let stop = TOLERANCE * frob.max(1.0);

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a.get(p, q).abs();
            }
        }
        if off <= stop {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= stop / (n * n) as f64 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
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

    let values = (0..n).map(|i| a.get(i, i)).collect();
    Ok((values, v))
}

/// Principal component analysis over the rows of `diffs` with mean-centering
/// (the default used everywhere in this crate).
pub fn pca(diffs: &Matrix, k: usize) -> Result<Basis> {
    pca_with(diffs, k, true)
}

/// PCA with the centering step selectable. `center = false` analyses the raw
/// second-moment matrix of the rows instead of their covariance.
pub fn pca_with(diffs: &Matrix, k: usize, center: bool) -> Result<Basis> {
    let n = diffs.rows();
    let d = diffs.cols();
    if k == 0 {
        return Err(Error::InvalidParameter {
            name: "k",
            detail: "component count must be at least 1".into(),
        });
    }
    if n < k || d < k {
        return Err(Error::InsufficientRank {
            requested: k,
            rank: n.min(d),
        });
    }

    let mut mean = vec![0.0; d];
    if center {
        for row in diffs.iter_rows() {
            for (m, &x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
    }

    // Population covariance of the (optionally centered) rows.
    let mut cov = Matrix::zeros(d, d);
    for row in diffs.iter_rows() {
        for i in 0..d {
            let xi = row[i] - mean[i];
            for j in i..d {
                let xj = row[j] - mean[j];
                let v = cov.get(i, j) + xi * xj;
                cov.set(i, j, v);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov.get(i, j) / n as f64;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }

    let (values, vectors) = jacobi_eigen(&cov)?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap());

    // Numerical noise can leave slightly negative eigenvalues on a PSD matrix.
    let clamped: Vec<f64> = order.iter().map(|&i| values[i].max(0.0)).collect();
    let trace: f64 = clamped.iter().sum();
    if trace <= 0.0 {
        return Err(Error::InsufficientRank {
            requested: k,
            rank: 0,
        });
    }
    let rank = clamped
        .iter()
        .filter(|&&l| l > (1e-9 * clamped[0]).max(1e-12))
        .count();
    if rank < k {
        return Err(Error::InsufficientRank { requested: k, rank });
    }

    let mut out_vectors = Vec::with_capacity(k);
    let mut out_weights = Vec::with_capacity(k);
    for (rank_idx, &col) in order.iter().take(k).enumerate() {
        let mut vec: Vec<f64> = (0..d).map(|r| vectors.get(r, col)).collect();
        let nrm = norm(&vec);
        for x in &mut vec {
            *x /= nrm;
        }
        normalize_sign(&mut vec);
        out_vectors.push(vec);
        out_weights.push(clamped[rank_idx] / trace);
    }
    Basis::new(out_vectors, out_weights)
}

/// Sign convention: the first coordinate with magnitude above 1e-12 is made
/// positive, so repeated runs produce identical components.
pub fn normalize_sign(v: &mut [f64]) {
    for &x in v.iter() {
        if x.abs() > 1e-12 {
            if x < 0.0 {
                for y in v.iter_mut() {
                    *y = -*y;
                }
            }
            return;
        }
    }
}
