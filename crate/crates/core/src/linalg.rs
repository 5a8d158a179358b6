//! Dense/sparse kernels shared by the solver and the trajectory engine.
//!
//! Operators are stored densely (see [`crate::hilbert::Operator`]); the hot
//! loops use a compressed-row view that drops exact zeros, which makes the
//! block structure of the models (conserved qubit index, conserved
//! excitation number) free to exploit.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::C64;

pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Largest entry modulus, `‖A‖_max`.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// `‖A − A†‖_max`.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Compressed-row matrix holding only the nonzero entries of a dense matrix.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
    diagonal: Option<Vec<C64>>,
}

impl SparseMatrix {
    pub fn from_dense(m: &CMatrix) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "sparse view requires a square matrix");
        let dim = m.nrows();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut is_diag = true;
        row_ptr.push(0);
        for i in 0..dim {
            for j in 0..dim {
                let v = m[(i, j)];
                if v.re != 0.0 || v.im != 0.0 {
                    if i != j {
                        is_diag = false;
                    }
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        let diagonal = is_diag.then(|| (0..dim).map(|i| m[(i, i)]).collect());
        SparseMatrix { dim, row_ptr, cols, vals, diagonal }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal.is_some()
    }

    /// `out = A x`.
    pub fn matvec_into(&self, x: &[C64], out: &mut [C64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        if let Some(d) = &self.diagonal {
            for ((o, &a), &b) in out.iter_mut().zip(d).zip(x) {
                *o = a * b;
            }
            return;
        }
        for i in 0..self.dim {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            out[i] = acc;
        }
    }

    pub fn matvec(&self, x: &CVector) -> CVector {
        let mut out = CVector::zeros(self.dim);
        self.matvec_into(x.as_slice(), out.as_mut_slice());
        out
    }

    /// `⟨x|A|x⟩` without allocating.
    pub fn expectation(&self, x: &[C64]) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..self.dim {
            if x[i].re == 0.0 && x[i].im == 0.0 {
                continue;
            }
            let mut row = C64::new(0.0, 0.0);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                row += self.vals[k] * x[self.cols[k]];
            }
            acc += x[i].conj() * row;
        }
        acc
    }

    /// `A M` for a dense square `M`, column by column.
    pub fn mul_dense(&self, m: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim, m.ncols());
        for c in 0..m.ncols() {
            let col = m.column(c);
            let x = col.as_slice();
            let mut dst = out.column_mut(c);
            let y = dst.as_mut_slice();
            self.matvec_into(x, y);
        }
        out
    }

    /// `tr(A M)`.
    pub fn trace_product(&self, m: &CMatrix) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..self.dim {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * m[(self.cols[k], i)];
            }
        }
        acc
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.cols[k])] = self.vals[k];
            }
        }
        m
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Groups basis indices into the connected components of the nonzero pattern
/// of `m` (treated as an undirected graph).
pub fn connected_components(m: &CMatrix) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    for j in 0..n {
        for i in 0..n {
            if i != j && m[(i, j)] != C64::new(0.0, 0.0) {
                let a = find(&mut parent, i);
                let b = find(&mut parent, j);
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

/// Matrix exponential `e^{A}`.
///
/// The matrix is split into the connected components of its nonzero pattern
/// and each block is exponentiated separately (Padé scaling and squaring),
/// so entries outside every block are exact zeros in the result.
pub fn expm(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    let mut out = CMatrix::zeros(n, n);
    for block in connected_components(a) {
        if block.len() == 1 {
            let i = block[0];
            out[(i, i)] = a[(i, i)].exp();
            continue;
        }
        let k = block.len();
        let sub = CMatrix::from_fn(k, k, |r, c| a[(block[r], block[c])]);
        let e = sub.exp();
        for r in 0..k {
            for c in 0..k {
                out[(block[r], block[c])] = e[(r, c)];
            }
        }
    }
    out
}

/// Eigenvalues of a Hermitian matrix (the anti-Hermitian part is discarded).
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    eig.eigenvalues.iter().copied().collect()
}

/// Trace distance `½ Σ |λᵢ(ρ − σ)|`.
pub fn trace_distance(rho: &CMatrix, sigma: &CMatrix) -> f64 {
    let diff = rho - sigma;
    0.5 * hermitian_eigenvalues(&diff).iter().map(|l| l.abs()).sum::<f64>()
}

/// Euclidean norm of a complex slice.
pub fn norm_sqr(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

/// `⟨x|y⟩`.
pub fn inner(x: &CVector, y: &CVector) -> C64 {
    x.iter().zip(y.iter()).map(|(a, b)| a.conj() * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn sparse_matches_dense_product() {
        let m = CMatrix::from_fn(5, 5, |i, j| {
            if (i + j) % 3 == 0 { c(i as f64 - 1.0, j as f64 * 0.5) } else { c(0.0, 0.0) }
        });
        let x = CVector::from_fn(5, |i, _| c(1.0 + i as f64, -0.3 * i as f64));
        let s = SparseMatrix::from_dense(&m);
        assert!((s.matvec(&x) - &m * &x).norm() < 1e-14);
        let r = CMatrix::from_fn(5, 5, |i, j| c((i * j) as f64, 1.0));
        assert!((s.mul_dense(&r) - &m * &r).norm() < 1e-12);
        assert_eq!(s.to_dense(), m);
        assert!((s.trace_product(&r) - (&m * &r).trace()).norm() < 1e-12);
    }

    #[test]
    fn expm_of_block_diagonal_matches_series() {
        // rotation generator on (0,1) plus a scalar on 2
        let mut a = CMatrix::zeros(3, 3);
        a[(0, 1)] = c(0.0, -0.7);
        a[(1, 0)] = c(0.0, -0.7);
        a[(2, 2)] = c(-0.2, 0.4);
        let e = expm(&a);
        assert!((e[(0, 0)] - c(0.7f64.cos(), 0.0)).norm() < 1e-13);
        assert!((e[(0, 1)] - c(0.0, -(0.7f64.sin()))).norm() < 1e-13);
        assert!((e[(2, 2)] - c(-0.2, 0.4).exp()).norm() < 1e-14);
        assert_eq!(e[(0, 2)], c(0.0, 0.0));
    }

    #[test]
    fn components_split_disconnected_pairs() {
        let mut a = CMatrix::zeros(4, 4);
        a[(0, 3)] = c(1.0, 0.0);
        a[(1, 2)] = c(1.0, 0.0);
        let g = connected_components(&a);
        assert_eq!(g, vec![vec![0, 3], vec![1, 2]]);
    }

    #[test]
    fn trace_distance_of_orthogonal_projectors_is_one() {
        let mut p = CMatrix::zeros(2, 2);
        p[(0, 0)] = c(1.0, 0.0);
        let mut q = CMatrix::zeros(2, 2);
        q[(1, 1)] = c(1.0, 0.0);
        assert!((trace_distance(&p, &q) - 1.0).abs() < 1e-12);
    }
}
