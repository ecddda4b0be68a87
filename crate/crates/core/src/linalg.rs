//! Thin wrappers over faer's sparse factorizations for the symmetric
//! finite-element systems, plus small dense helpers.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::{MatMut, Side};
use nalgebra::{DMatrix, SymmetricEigen};

use crate::{exec, Error, Result};

/// Square sparse matrix in compressed-column form with a guaranteed
/// diagonal entry in every column.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    mat: SparseColMat<usize, f64>,
    diag: Vec<usize>,
}

impl SparseMatrix {
    /// Duplicate entries are summed.
    pub fn from_triplets(n: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        let mut t: Vec<Triplet<usize, usize, f64>> = entries.iter().map(|&(i, j, v)| Triplet::new(i, j, v)).collect();
        t.extend((0..n).map(|i| Triplet::new(i, i, 0.0)));
        let mat = SparseColMat::try_new_from_triplets(n, n, &t)
            .map_err(|e| Error::Config(format!("sparse matrix assembly failed: {e:?}")))?;
        let diag = (0..n)
            .map(|j| {
                let (lo, hi) = (mat.col_ptr()[j], mat.col_ptr()[j + 1]);
                lo + mat.row_idx()[lo..hi].iter().position(|&r| r == j).expect("diagonal inserted above")
            })
            .collect();
        Ok(Self { mat, diag })
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn nnz(&self) -> usize {
        self.mat.val().len()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.diag.iter().map(|&k| self.mat.val()[k]).collect()
    }

    fn same_pattern(&self, other: &Self) -> bool {
        self.mat.col_ptr() == other.mat.col_ptr() && self.mat.row_idx() == other.mat.row_idx()
    }

    /// `y = A x` for symmetric `A` (each output is a column dot product).
    pub fn mul_sym(&self, x: &[f64]) -> Vec<f64> {
        let (cp, ri, v) = (self.mat.col_ptr(), self.mat.row_idx(), self.mat.val());
        exec::map_range(self.n(), |j| (cp[j]..cp[j + 1]).map(|k| v[k] * x[ri[k]]).sum())
    }

    /// `A + diag(d)`.
    pub fn add_diagonal(&self, d: &[f64]) -> Self {
        let mut out = self.clone();
        let vals = out.mat.val_mut();
        for (&k, &dk) in self.diag.iter().zip(d) {
            vals[k] += dk;
        }
        out
    }

    /// `a A + b B` for matrices sharing one sparsity pattern.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if !self.same_pattern(other) {
            return Err(Error::Config("sparsity patterns differ".into()));
        }
        let mut out = self.clone();
        for (o, (x, y)) in out.mat.val_mut().iter_mut().zip(self.mat.val().iter().zip(other.mat.val())) {
            *o = a * x + b * y;
        }
        Ok(out)
    }

    /// `xᵀ A y` for symmetric `A`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        self.mul_sym(y).iter().zip(x).map(|(a, b)| a * b).sum()
    }
}

fn solve_columns<S: Solve<f64>>(f: &S, cols: &mut [Vec<f64>]) {
    let Some(n) = cols.first().map(Vec::len) else { return };
    let mut flat: Vec<f64> = cols.iter().flat_map(|c| c.iter().copied()).collect();
    f.solve_in_place(MatMut::from_column_major_slice_mut(&mut flat, n, cols.len()));
    for (c, chunk) in cols.iter_mut().zip(flat.chunks(n)) {
        c.copy_from_slice(chunk);
    }
}

/// Reusable LU analysis for a fixed sparsity pattern.
#[derive(Debug, Clone)]
pub struct LuPattern(SymbolicLu<usize>);

impl LuPattern {
    pub fn analyze(a: &SparseMatrix) -> Result<Self> {
        SymbolicLu::try_new(a.mat.symbolic())
            .map(Self)
            .map_err(|e| Error::Config(format!("symbolic LU failed: {e:?}")))
    }

    pub fn factor(&self, a: &SparseMatrix) -> Result<LuFactor> {
        Lu::try_new_with_symbolic(self.0.clone(), a.mat.as_ref())
            .map(LuFactor)
            .map_err(|e| Error::NoConvergence(format!("sparse LU failed: {e:?}")))
    }
}

#[derive(Debug)]
pub struct LuFactor(Lu<usize, f64>);

impl LuFactor {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        LuPattern::analyze(a)?.factor(a)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut cols = vec![b.to_vec()];
        solve_columns(&self.0, &mut cols);
        cols.pop().unwrap_or_default()
    }

    pub fn solve_many(&self, cols: &mut [Vec<f64>]) {
        solve_columns(&self.0, cols);
    }
}

/// Sparse Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug)]
pub struct CholFactor(Llt<usize, f64>);

impl CholFactor {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        let sym = SymbolicLlt::try_new(a.mat.symbolic(), Side::Lower)
            .map_err(|e| Error::Config(format!("symbolic Cholesky failed: {e:?}")))?;
        Llt::try_new_with_symbolic(sym, a.mat.as_ref(), Side::Lower)
            .map(CholFactor)
            .map_err(|e| Error::EigenSolverFailed(format!("matrix not positive definite: {e:?}")))
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut cols = vec![b.to_vec()];
        solve_columns(&self.0, &mut cols);
        cols.pop().unwrap_or_default()
    }

    pub fn solve_many(&self, cols: &mut [Vec<f64>]) {
        solve_columns(&self.0, cols);
    }
}

/// Eigenpairs of the dense symmetric-definite pencil `(a, b)`, ascending.
pub fn generalized_symmetric_eigen(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let l = b
        .clone()
        .cholesky()
        .ok_or_else(|| Error::EigenSolverFailed("Ritz mass matrix is not positive definite".into()))?
        .l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::EigenSolverFailed("singular Ritz mass factor".into()))?;
    let c = &linv * a * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = linv.transpose() * DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((vals, vecs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        SparseMatrix::from_triplets(n, &t).unwrap()
    }

    #[test]
    fn lu_and_cholesky_invert_the_matvec() {
        let a = laplacian_1d(50);
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.mul_sym(&x);
        for y in [LuFactor::new(&a).unwrap().solve(&b), CholFactor::new(&a).unwrap().solve(&b)] {
            let err = y.iter().zip(&x).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
            assert!(err < 1e-12, "{err}");
        }
    }

    #[test]
    fn shifted_pattern_reuses_symbolic_analysis() {
        let a = laplacian_1d(20);
        let pat = LuPattern::analyze(&a).unwrap();
        let shifted = a.add_diagonal(&[-0.5; 20]);
        let x = vec![1.0; 20];
        let y = pat.factor(&shifted).unwrap().solve(&shifted.mul_sym(&x));
        assert!(y.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn dense_pencil_matches_scaled_problem() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 6.0]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let (vals, vecs) = generalized_symmetric_eigen(&a, &b).unwrap();
        assert!((vals[0] - 2.0).abs() < 1e-14 && (vals[1] - 3.0).abs() < 1e-14);
        let m = vecs.transpose() * &b * &vecs;
        assert!((m - DMatrix::identity(2, 2)).norm() < 1e-12);
    }
}
