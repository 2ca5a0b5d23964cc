//! Sparse assembly and direct solves (backed by faer's sparse LU).

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{Error, Result};

/// Coordinate-format builder; duplicate entries are summed.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    n: usize,
    entries: Vec<Triplet<usize, usize, f64>>,
}

impl TripletBuilder {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n: usize, cap: usize) -> Self {
        Self {
            n,
            entries: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, v: f64) {
        if v != 0.0 {
            self.entries.push(Triplet::new(row, col, v));
        }
    }

    pub fn build(&self) -> Result<SparseMatrix> {
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(self.n, self.n, &self.entries)
            .map_err(|e| Error::Linear(format!("{e:?}")))?;
        Ok(SparseMatrix { mat })
    }
}

#[derive(Debug, Clone)]
pub struct SparseMatrix {
    mat: SparseColMat<usize, f64>,
}

/// LU factorization ready for repeated solves.
pub struct Factorization {
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    n: usize,
}

impl SparseMatrix {
    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn factor(&self) -> Result<Factorization> {
        let lu = self.mat.sp_lu().map_err(|e| Error::Linear(format!("{e:?}")))?;
        Ok(Factorization { lu, n: self.dim() })
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        let sym = self.mat.symbolic();
        let vals = self.mat.val();
        for (j, xj) in x.iter().enumerate() {
            let range = sym.col_range(j);
            for (r, v) in sym.row_idx()[range.clone()].iter().zip(&vals[range]) {
                y[*r] += v * xj;
            }
        }
        y
    }

    /// `y = A^T x`.
    pub fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        let sym = self.mat.symbolic();
        let vals = self.mat.val();
        (0..self.dim())
            .map(|j| {
                let range = sym.col_range(j);
                sym.row_idx()[range.clone()].iter().zip(&vals[range]).map(|(r, v)| v * x[*r]).sum()
            })
            .collect()
    }

    /// Builder holding the entries of this matrix, resized to `n`.
    pub fn to_builder(&self, n: usize) -> TripletBuilder {
        let mut tb = TripletBuilder::with_capacity(n, self.mat.compute_nnz() + 2 * n);
        let sym = self.mat.symbolic();
        let vals = self.mat.val();
        for j in 0..self.dim() {
            let range = sym.col_range(j);
            for (r, v) in sym.row_idx()[range.clone()].iter().zip(&vals[range]) {
                tb.push(*r, j, *v);
            }
        }
        tb
    }

    /// Entry `(i, j)` (0 when structurally absent).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let sym = self.mat.symbolic();
        let range = sym.col_range(j);
        for (r, v) in sym.row_idx()[range.clone()].iter().zip(&self.mat.val()[range]) {
            if *r == i {
                return *v;
            }
        }
        0.0
    }
}

impl Factorization {
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        let out: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Linear("singular system (non-finite solution)".into()));
        }
        Ok(out)
    }
}

/// Solve with one step of iterative refinement; returns the solution and the
/// relative residual `|A x - b| / |b|` (max norms).
pub fn solve_refined(a: &SparseMatrix, lu: &Factorization, b: &[f64]) -> Result<(Vec<f64>, f64)> {
    let mut x = lu.solve(b)?;
    let ax = a.apply(&x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let dx = lu.solve(&r)?;
    for (xi, d) in x.iter_mut().zip(&dx) {
        *xi += d;
    }
    let ax = a.apply(&x);
    let bn = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let rn = b.iter().zip(&ax).fold(0.0f64, |m, (bi, ai)| m.max((bi - ai).abs()));
    Ok((x, rn / bn))
}

/// Eigen-decomposition of a small symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues ascending and eigenvectors as columns (row-major `k x k`).
pub fn symmetric_eigen(a: &[f64], k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut m = a.to_vec();
    let mut v = vec![0.0; k * k];
    for i in 0..k {
        v[i * k + i] = 1.0;
    }
    for _ in 0..100 {
        let off: f64 = (0..k)
            .flat_map(|i| (0..k).filter(move |j| *j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * k + j] * m[i * k + j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..k {
            for q in p + 1..k {
                let apq = m[p * k + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q * k + q] - m[p * k + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..k {
                    let (mrp, mrq) = (m[r * k + p], m[r * k + q]);
                    m[r * k + p] = c * mrp - s * mrq;
                    m[r * k + q] = s * mrp + c * mrq;
                }
                for r in 0..k {
                    let (mpr, mqr) = (m[p * k + r], m[q * k + r]);
                    m[p * k + r] = c * mpr - s * mqr;
                    m[q * k + r] = s * mpr + c * mqr;
                }
                for r in 0..k {
                    let (vrp, vrq) = (v[r * k + p], v[r * k + q]);
                    v[r * k + p] = c * vrp - s * vrq;
                    v[r * k + q] = s * vrp + c * vrq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|a, b| m[a * k + a].partial_cmp(&m[b * k + b]).unwrap_or(std::cmp::Ordering::Equal));
    let vals = order.iter().map(|i| m[i * k + i]).collect();
    let mut vecs = vec![0.0; k * k];
    for (new, old) in order.iter().enumerate() {
        for r in 0..k {
            vecs[r * k + new] = v[r * k + old];
        }
    }
    (vals, vecs)
}
