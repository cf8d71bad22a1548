//! Small dense linear-algebra and finite-difference helpers shared by the
//! matching, condition and control modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Scale-aware central-difference step for coordinate `x`.
pub fn fd_step(x: f64) -> f64 {
    1e-6 * x.abs().max(1.0)
}

/// Central-difference gradient of a scalar field.
pub fn fd_gradient<F>(f: F, q: &DVector<f64>) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let n = q.len();
    let mut grad = DVector::zeros(n);
    let mut probe = q.clone();
    for i in 0..n {
        let h = fd_step(q[i]);
        probe[i] = q[i] + h;
        let plus = f(&probe);
        probe[i] = q[i] - h;
        let minus = f(&probe);
        probe[i] = q[i];
        grad[i] = (plus - minus) / (2.0 * h);
    }
    grad
}

/// Central-difference Jacobian of a vector field; entry (i, j) is df_i/dq_j.
pub fn fd_jacobian<F>(f: F, q: &DVector<f64>, rows: usize) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = q.len();
    let mut jac = DMatrix::zeros(rows, n);
    let mut probe = q.clone();
    for j in 0..n {
        let h = fd_step(q[j]);
        probe[j] = q[j] + h;
        let plus = f(&probe)?;
        probe[j] = q[j] - h;
        let minus = f(&probe)?;
        probe[j] = q[j];
        let col = (plus - minus) / (2.0 * h);
        jac.set_column(j, &col);
    }
    Ok(jac)
}

/// Gradient of the quadratic form q -> p' A(q) p, one central difference of the
/// matrix map per coordinate, contracted with p on both sides.
pub fn quadratic_form_gradient<F>(map: F, q: &DVector<f64>, p: &DVector<f64>) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DMatrix<f64>>,
{
    let n = q.len();
    let mut grad = DVector::zeros(n);
    let mut probe = q.clone();
    for i in 0..n {
        let h = fd_step(q[i]);
        probe[i] = q[i] + h;
        let plus = map(&probe)?;
        probe[i] = q[i] - h;
        let minus = map(&probe)?;
        probe[i] = q[i];
        let diff = (plus - minus) / (2.0 * h);
        grad[i] = (p.transpose() * diff * p)[(0, 0)];
    }
    Ok(grad)
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Eigenvalues of the symmetrized matrix, ascending.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let sym = symmetrize(a);
    let mut eigs: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    eigs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eigs
}

pub fn min_sym_eigenvalue(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a).first().copied().unwrap_or(f64::NAN)
}

/// Positive definiteness after symmetrization: smallest eigenvalue > tol.
pub fn is_positive_definite(a: &DMatrix<f64>, tol: f64) -> bool {
    min_sym_eigenvalue(a) > tol
}

/// Condition number of G'G through its (symmetric) eigenvalues.
pub fn gram_condition(g: &DMatrix<f64>) -> f64 {
    let gram = g.transpose() * g;
    let eigs = sym_eigenvalues(&gram);
    let min = eigs.first().copied().unwrap_or(0.0);
    let max = eigs.last().copied().unwrap_or(0.0);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Minimum-norm least-squares solution of A x = b via SVD.
pub fn min_norm_least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    svd.solve(b, 1e-13)
        .map(|x| x.column(0).into_owned())
        .map_err(|e| Error::DimensionMismatch {
            context: "least-squares solve".into(),
            expected: "solvable system".into(),
            got: e.to_string(),
        })
}

/// Orthonormal basis of the null space of the row-stacked matrix `rows`.
/// Returns an n x k matrix whose columns span {v : rows * v = 0}, computed
/// from the eigendecomposition of the n x n Gram matrix (eigenvalues are the
/// squared singular values).
pub fn null_space_basis(rows: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = rows.ncols();
    let gram = rows.transpose() * rows;
    let eigen = symmetrize(&gram).symmetric_eigen();
    let mut kernel_cols = Vec::new();
    for i in 0..n {
        if eigen.eigenvalues[i].max(0.0).sqrt() <= tol {
            kernel_cols.push(eigen.eigenvectors.column(i).into_owned());
        }
    }
    let mut basis = DMatrix::zeros(n, kernel_cols.len());
    for (j, col) in kernel_cols.iter().enumerate() {
        basis.set_column(j, col);
    }
    basis
}
