//! Matching-equation residuals and the pointwise solve for the free skew
//! interconnection matrix.
//!
//! The kinetic row is
//! `G_perp {grad_q(p' M^{-1} p) - M_d M^{-1} grad_q(p' M_d^{-1} p) + 2 J2 M_d^{-1} p}`,
//! the potential row is `G_perp {grad V - M_d M^{-1} grad V_d}`, and the
//! homogeneous row is `G_perp M_d M^{-1} grad f` per basis function f.
//! Gradients of the quadratic forms fall back to central differences of the
//! matrix maps.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{ClosedLoopDesign, J2Policy, ScalarField, SystemModel};

/// Coefficient norm below which the pointwise J2 solve treats the linear term
/// as vanishing.
pub const J2_COEFFICIENT_TOL: f64 = 1e-12;
/// Residual norm the pointwise J2 solve must reach.
pub const J2_RESIDUAL_TOL: f64 = 1e-10;
/// Absolute floor under which the constant term counts as finite-difference
/// noise rather than a genuine obstruction (two FD layers leave ~1e-9).
pub const J2_NOISE_FLOOR: f64 = 1e-8;

/// Residual of one matching row, tagged with the state it was evaluated at.
#[derive(Debug, Clone)]
pub struct ResidualVector {
    pub values: DVector<f64>,
    pub q: DVector<f64>,
    pub p: Option<DVector<f64>>,
}

impl ResidualVector {
    pub fn max_abs(&self) -> f64 {
        self.values.amax()
    }

    pub fn norm(&self) -> f64 {
        self.values.norm()
    }
}

struct KineticParts {
    quad_open: DVector<f64>,
    quad_desired: DVector<f64>,
    md_m_inv: DMatrix<f64>,
    md_inv: DMatrix<f64>,
}

fn kinetic_parts(
    model: &SystemModel,
    design: &ClosedLoopDesign,
    q: &DVector<f64>,
    p: &DVector<f64>,
) -> Result<KineticParts> {
    let quad_open = linalg::quadratic_form_gradient(|x| model.mass_inverse(x), q, p)?;
    let quad_desired =
        linalg::quadratic_form_gradient(|x| Ok(design.md_inverse(x)), q, p)?;
    let md = design.md(q)?;
    let m_inv = model.mass_inverse(q)?;
    Ok(KineticParts {
        quad_open,
        quad_desired,
        md_m_inv: &md * &m_inv,
        md_inv: design.md_inverse(q),
    })
}

/// Canonical basis of skew-symmetric n x n matrices (E_ij with +1 at (i, j),
/// -1 at (j, i), i < j).
pub fn skew_basis(n: usize) -> Vec<DMatrix<f64>> {
    let mut basis = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut e = DMatrix::zeros(n, n);
            e[(i, j)] = 1.0;
            e[(j, i)] = -1.0;
            basis.push(e);
        }
    }
    basis
}

/// J2 according to the design policy at the given state.
pub fn resolve_j2(
    model: &SystemModel,
    design: &ClosedLoopDesign,
    q: &DVector<f64>,
    p: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    match &design.j2_policy {
        J2Policy::Zero => Ok(DMatrix::zeros(model.n, model.n)),
        J2Policy::Supplied(map) => Ok(map(q, p)),
        J2Policy::PointwiseSolve => solve_j2_pointwise(model, design, q, p),
    }
}

/// Kinetic matching residual with J2 taken from the design policy.
pub fn kinetic_residual(
    model: &SystemModel,
    design: &ClosedLoopDesign,
    q: &DVector<f64>,
    p: &DVector<f64>,
) -> Result<ResidualVector> {
    let j2 = resolve_j2(model, design, q, p)?;
    kinetic_residual_with_j2(model, design, q, p, &j2)
}

/// Kinetic matching residual for an explicit J2.
pub fn kinetic_residual_with_j2(
    model: &SystemModel,
    design: &ClosedLoopDesign,
    q: &DVector<f64>,
    p: &DVector<f64>,
    j2: &DMatrix<f64>,
) -> Result<ResidualVector> {
    let parts = kinetic_parts(model, design, q, p)?;
    let inner = &parts.quad_open - &parts.md_m_inv * &parts.quad_desired
        + j2 * (&parts.md_inv * p) * 2.0;
    let values = model.annihilator(q) * inner;
    Ok(ResidualVector {
        values,
        q: q.clone(),
        p: Some(p.clone()),
    })
}

/// Potential matching residual for the design's shaped potential.
pub fn potential_residual(
    model: &SystemModel,
    design: &ClosedLoopDesign,
    q: &DVector<f64>,
) -> Result<ResidualVector> {
    let grad_vd = design.vdh_gradient(q);
    potential_residual_for_gradient(model, design, q, &grad_vd)
}

/// Potential matching residual for a raw desired potential, bypassing the
/// quadratic gain form (used to check full published solutions).
pub fn potential_residual_raw(
    model: &SystemModel,
    design: &ClosedLoopDesign,
    vd: &ScalarField,
    q: &DVector<f64>,
) -> Result<ResidualVector> {
    let grad_vd = vd.gradient(q);
    potential_residual_for_gradient(model, design, q, &grad_vd)
}

fn potential_residual_for_gradient(
    model: &SystemModel,
    design: &ClosedLoopDesign,
    q: &DVector<f64>,
    grad_vd: &DVector<f64>,
) -> Result<ResidualVector> {
    let md = design.md(q)?;
    let m_inv = model.mass_inverse(q)?;
    let inner = model.potential_gradient(q) - &md * &m_inv * grad_vd;
    Ok(ResidualVector {
        values: model.annihilator(q) * inner,
        q: q.clone(),
        p: None,
    })
}

/// Homogeneous-PDE residual G_perp M_d M^{-1} grad f_i, one vector per basis
/// function. Valid bases make every entry vanish.
pub fn homogeneous_residual(
    model: &SystemModel,
    design: &ClosedLoopDesign,
    q: &DVector<f64>,
) -> Result<Vec<ResidualVector>> {
    let md = design.md(q)?;
    let m_inv = model.mass_inverse(q)?;
    let projector = model.annihilator(q) * md * m_inv;
    Ok(design
        .vdh_basis
        .iter()
        .map(|f| ResidualVector {
            values: &projector * f.gradient(q),
            q: q.clone(),
            p: None,
        })
        .collect())
}

/// Largest homogeneous-residual entry over all basis functions.
pub fn homogeneous_residual_max(
    model: &SystemModel,
    design: &ClosedLoopDesign,
    q: &DVector<f64>,
) -> Result<f64> {
    Ok(homogeneous_residual(model, design, q)?
        .iter()
        .map(|r| r.max_abs())
        .fold(0.0, f64::max))
}

/// Solves the kinetic matching row for J2 at one state, minimal-norm over the
/// canonical skew basis. Exact for underactuation degree one.
pub fn solve_j2_pointwise(
    model: &SystemModel,
    design: &ClosedLoopDesign,
    q: &DVector<f64>,
    p: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let n = model.n;
    let parts = kinetic_parts(model, design, q, p)?;
    let g_perp = model.annihilator(q);
    let base = &g_perp * (&parts.quad_open - &parts.md_m_inv * &parts.quad_desired);
    let md_inv_p = &parts.md_inv * p;

    let basis = skew_basis(n);
    let rows = g_perp.nrows();
    let mut coeff = DMatrix::zeros(rows, basis.len());
    for (k, e) in basis.iter().enumerate() {
        coeff.set_column(k, &(&g_perp * (e * &md_inv_p) * 2.0));
    }

    let coeff_norm = coeff.amax();
    let base_norm = base.amax();
    let noise_floor = J2_NOISE_FLOOR * (1.0 + p.norm_squared());
    if coeff_norm < J2_COEFFICIENT_TOL {
        if base_norm <= noise_floor {
            return Ok(DMatrix::zeros(n, n));
        }
        return Err(Error::NoSolution {
            coefficient: coeff_norm,
            constant: base_norm,
        });
    }

    let x = linalg::min_norm_least_squares(&coeff, &(-&base))?;
    let achieved = (&coeff * &x + &base).amax();
    if achieved > (J2_RESIDUAL_TOL * (1.0 + base_norm)).max(noise_floor) {
        return Err(Error::NoSolution {
            coefficient: coeff_norm,
            constant: achieved,
        });
    }

    let mut j2 = DMatrix::zeros(n, n);
    for (k, e) in basis.iter().enumerate() {
        j2 += e * x[k];
    }
    Ok(j2)
}
