//! Equilibrium stability condition: Hessians of the shaped potential and of
//! the gravity-correction functional, scenario classification for the 2-DOF
//! case with the closed-form gain lower bound, and a feasibility search over
//! multiple gains.

use nalgebra::{DMatrix, DVector, Matrix2, RowDVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{ClosedLoopDesign, SystemModel};

/// Default strict-positivity margin for the smallest eigenvalue.
pub const LAMBDA_TOL: f64 = 1e-9;
/// Allowed violation of the equilibrium manifold before the Hessian of the
/// correction functional is refused.
pub const EQUILIBRIUM_MANIFOLD_TOL: f64 = 1e-6;

/// Sign pattern of the 2x2 beta matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    A1,
    A2,
    A3,
    NegDef,
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scenario::A1 => write!(f, "A1"),
            Scenario::A2 => write!(f, "A2"),
            Scenario::A3 => write!(f, "A3"),
            Scenario::NegDef => write!(f, "NEGDEF"),
        }
    }
}

/// Everything the stability check produced at the equilibrium.
#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub vdh_hessian: DMatrix<f64>,
    pub eta_hessian: DMatrix<f64>,
    /// Eigenvalues of the sum, ascending.
    pub total_eigenvalues: Vec<f64>,
    pub satisfied: bool,
    pub tolerance: f64,
    /// Populated for the 2-DOF single-gain case.
    pub scenario: Option<Scenario>,
    pub rho: Option<f64>,
    pub k_min: Option<f64>,
}

/// Row covector w(q) = sum_i (G_i_perp grad V / |G_i_perp|^2) G_i_perp
/// M_d^{-1} M; its time integral along trajectories is the correction
/// functional added to the desired energy.
pub fn eta_covector(
    model: &SystemModel,
    design: &ClosedLoopDesign,
    q: &DVector<f64>,
) -> Result<RowDVector<f64>> {
    let g_perp = model.annihilator(q);
    let grad_v = model.potential_gradient(q);
    let md_inv_m = design.md_inverse(q) * model.mass(q);
    let mut w = RowDVector::zeros(model.n);
    for i in 0..g_perp.nrows() {
        let row = g_perp.row(i);
        let norm_sq = row.norm_squared();
        if norm_sq <= 1e-24 {
            return Err(Error::ZeroAnnihilatorRow {
                row: i,
                at: q.iter().copied().collect(),
            });
        }
        let scale = row.dot(&grad_v.transpose()) / norm_sq;
        w += (row * &md_inv_m) * scale;
    }
    Ok(w)
}

/// Hessian of the correction functional at the equilibrium, from the
/// product-rule-reduced closed form
/// 1/2 sum_i [grad(G_i_perp grad V) (G_i_perp M_d^{-1} M) / |G_i_perp|^2 + transpose],
/// valid because G_perp grad V vanishes there. The independent oracle is the
/// symmetrized finite-difference Jacobian of [`eta_covector`].
pub fn eta_hessian(
    model: &SystemModel,
    design: &ClosedLoopDesign,
    q_d: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let n = model.n;
    let g_perp_d = model.annihilator(q_d);
    let grad_v_d = model.potential_gradient(q_d);
    let manifold = (&g_perp_d * &grad_v_d).amax();
    if manifold > EQUILIBRIUM_MANIFOLD_TOL {
        return Err(Error::NotAtEquilibrium {
            violation: manifold,
            tol: EQUILIBRIUM_MANIFOLD_TOL,
        });
    }

    let md_inv_m = design.md_inverse(q_d) * model.mass(q_d);
    let mut hessian = DMatrix::zeros(n, n);
    for i in 0..g_perp_d.nrows() {
        let row_d = g_perp_d.row(i);
        let norm_sq = row_d.norm_squared();
        if norm_sq <= 1e-24 {
            return Err(Error::ZeroAnnihilatorRow {
                row: i,
                at: q_d.iter().copied().collect(),
            });
        }
        // grad of the scalar field s_i(q) = G_i_perp(q) grad V(q).
        let grad_s = linalg::fd_gradient(
            |x| {
                let row = model.annihilator(x).row(i).into_owned();
                row.transpose().dot(&model.potential_gradient(x))
            },
            q_d,
        );
        let gamma = (row_d * &md_inv_m) / norm_sq;
        hessian += (&grad_s * &gamma + gamma.transpose() * grad_s.transpose()) * 0.5;
    }
    Ok(hessian)
}

/// Hessian of the shaped potential at the equilibrium:
/// sum_i k_i grad f_i grad f_i' (the curvature terms vanish because the
/// basis offsets are recorded there). Positive semidefinite by construction.
pub fn vdh_hessian(design: &ClosedLoopDesign, q_d: &DVector<f64>) -> DMatrix<f64> {
    let n = q_d.len();
    let mut hessian = DMatrix::zeros(n, n);
    for (f, k) in design.vdh_basis.iter().zip(design.gains.iter()) {
        let grad = f.gradient(q_d);
        hessian += &grad * grad.transpose() * *k;
    }
    hessian
}

/// Evaluates the stability condition: the sum of the two Hessians must be
/// positive definite with margin `tol`. The two-DOF fields are filled in when
/// n = 2, m = 1 and the design has exactly one basis function.
pub fn check_condition(
    model: &SystemModel,
    design: &ClosedLoopDesign,
    tol: f64,
) -> Result<ConditionReport> {
    let q_d = &model.equilibrium;
    let vdh = vdh_hessian(design, q_d);
    let eta = eta_hessian(model, design, q_d)?;
    let total = &vdh + &eta;
    let eigenvalues = linalg::sym_eigenvalues(&total);
    let satisfied = eigenvalues.first().copied().unwrap_or(f64::NEG_INFINITY) > tol;

    let mut report = ConditionReport {
        vdh_hessian: vdh,
        eta_hessian: eta,
        total_eigenvalues: eigenvalues,
        satisfied,
        tolerance: tol,
        scenario: None,
        rho: None,
        k_min: None,
    };

    if model.n == 2 && model.m == 1 && design.vdh_basis.len() == 1 {
        let (alpha, beta) = decompose_two_dof(model, design)?;
        let scenario = classify_scenario(&beta);
        report.scenario = Some(scenario);
        match gain_lower_bound(&alpha, &beta) {
            Ok(bound) => {
                report.rho = Some(bound.rho);
                report.k_min = Some(bound.k_min);
            }
            Err(Error::RhoNotPositive { rho }) => {
                report.rho = Some(rho);
            }
            Err(Error::NegativeDefiniteBeta) => {}
            Err(e) => return Err(e),
        }
    }

    Ok(report)
}

/// Splits the 2-DOF condition into k * alpha + beta with alpha the unit-gain
/// rank-one shaped-potential Hessian and beta the correction Hessian.
pub fn decompose_two_dof(
    model: &SystemModel,
    design: &ClosedLoopDesign,
) -> Result<(Matrix2<f64>, Matrix2<f64>)> {
    if model.n != 2 || model.m != 1 || design.vdh_basis.len() != 1 {
        return Err(Error::WrongDimensions {
            n: model.n,
            m: model.m,
            basis: design.vdh_basis.len(),
        });
    }
    let q_d = &model.equilibrium;
    let grad = design.vdh_basis[0].gradient(q_d);
    let alpha = Matrix2::new(
        grad[0] * grad[0],
        grad[0] * grad[1],
        grad[0] * grad[1],
        grad[1] * grad[1],
    );
    let eta = eta_hessian(model, design, q_d)?;
    let beta = Matrix2::new(eta[(0, 0)], eta[(0, 1)], eta[(1, 0)], eta[(1, 1)]);
    Ok((alpha, beta))
}

/// Sign-pattern classification of beta. Overlaps resolve with precedence
/// A1 > A2 > A3; a negative definite beta means the desired inertia must be
/// altered. A positive definite beta needs no gain at all and classifies as
/// A2 (its bound formula stays valid there).
pub fn classify_scenario(beta: &Matrix2<f64>) -> Scenario {
    let b1 = beta[(0, 0)];
    let b2 = 0.5 * (beta[(0, 1)] + beta[(1, 0)]);
    let b3 = beta[(1, 1)];
    let det = b1 * b3 - b2 * b2;
    if b1 <= 0.0 && b3 <= 0.0 && det <= 0.0 {
        Scenario::A1
    } else if b1 >= 0.0 && b3 >= 0.0 && det <= 0.0 {
        Scenario::A2
    } else if b1 * b3 <= 0.0 {
        Scenario::A3
    } else if b1 < 0.0 {
        Scenario::NegDef
    } else {
        Scenario::A2
    }
}

/// Gain lower bound for the 2-DOF case.
#[derive(Debug, Clone, Copy)]
pub struct GainBound {
    pub scenario: Scenario,
    pub rho: f64,
    pub k_min: f64,
}

fn diag_ratio(beta_i: f64, alpha_i: f64) -> f64 {
    if alpha_i > 0.0 {
        -beta_i / alpha_i
    } else if beta_i >= 0.0 {
        // Unconstrained diagonal; the determinant term governs.
        f64::NEG_INFINITY
    } else {
        // alpha cannot lift a negative diagonal it does not touch.
        f64::INFINITY
    }
}

/// Closed-form smallest gain making k * alpha + beta positive definite.
/// Requires rho = alpha1 beta3 + alpha3 beta1 - 2 alpha2 beta2 > 0.
pub fn gain_lower_bound(alpha: &Matrix2<f64>, beta: &Matrix2<f64>) -> Result<GainBound> {
    let scenario = classify_scenario(beta);
    if scenario == Scenario::NegDef {
        return Err(Error::NegativeDefiniteBeta);
    }
    let a1 = alpha[(0, 0)];
    let a2 = 0.5 * (alpha[(0, 1)] + alpha[(1, 0)]);
    let a3 = alpha[(1, 1)];
    let b1 = beta[(0, 0)];
    let b2 = 0.5 * (beta[(0, 1)] + beta[(1, 0)]);
    let b3 = beta[(1, 1)];

    let rho = a1 * b3 + a3 * b1 - 2.0 * a2 * b2;
    if rho <= 0.0 {
        return Err(Error::RhoNotPositive { rho });
    }
    let det_term = (b2 * b2 - b1 * b3) / rho;
    let k_min = match scenario {
        Scenario::A1 | Scenario::A3 => diag_ratio(b1, a1).max(diag_ratio(b3, a3)).max(det_term),
        Scenario::A2 => det_term,
        Scenario::NegDef => unreachable!(),
    };
    Ok(GainBound {
        scenario,
        rho,
        k_min,
    })
}

/// Options for the multi-gain feasibility search.
#[derive(Debug, Clone)]
pub struct GainSearchOptions {
    pub lower: f64,
    pub upper: f64,
    /// Grid points per decade of the initial logarithmic sweep.
    pub grid_per_decade: usize,
    /// Relative width at which per-gain bisection stops.
    pub bisect_rel_tol: f64,
    /// Strict-positivity margin for the smallest eigenvalue.
    pub lambda_tol: f64,
}

impl Default for GainSearchOptions {
    fn default() -> Self {
        Self {
            lower: 1e-2,
            upper: 1e6,
            grid_per_decade: 2,
            bisect_rel_tol: 1e-3,
            lambda_tol: LAMBDA_TOL,
        }
    }
}

/// Outcome of the feasibility search: gains with their certified margin, or a
/// direction of persistent negative curvature no gain can fix.
#[derive(Debug, Clone)]
pub enum GainSearchOutcome {
    Feasible {
        gains: Vec<f64>,
        lambda_min: f64,
    },
    Infeasible {
        /// Unit direction v with v' (eta Hessian) v < 0 that is (numerically)
        /// orthogonal to every basis gradient.
        certificate: DVector<f64>,
        curvature: f64,
    },
}

/// Feasibility search over the gains: logarithmic sweep with all gains equal,
/// then per-coordinate bisection toward the lower bound. Sound because adding
/// a positive semidefinite rank-one term never decreases the smallest
/// eigenvalue.
pub fn feasible_gains_search(
    model: &SystemModel,
    design: &ClosedLoopDesign,
    opts: &GainSearchOptions,
) -> Result<GainSearchOutcome> {
    let q_d = &model.equilibrium;
    let eta = eta_hessian(model, design, q_d)?;
    let grads: Vec<DVector<f64>> = design
        .vdh_basis
        .iter()
        .map(|f| f.gradient(q_d))
        .collect();

    let lambda_min_for = |gains: &[f64]| -> f64 {
        let mut total = eta.clone();
        for (grad, k) in grads.iter().zip(gains.iter()) {
            total += grad * grad.transpose() * *k;
        }
        linalg::min_sym_eigenvalue(&total)
    };

    // Exact obstruction: negative curvature in the common kernel of the
    // basis gradients can never be lifted.
    if !grads.is_empty() {
        let mut rows = DMatrix::zeros(grads.len(), model.n);
        for (i, g) in grads.iter().enumerate() {
            rows.set_row(i, &g.transpose());
        }
        let kernel = linalg::null_space_basis(&rows, 1e-10);
        if kernel.ncols() > 0 {
            let restricted = kernel.transpose() * &eta * &kernel;
            let eigen = linalg::symmetrize(&restricted).symmetric_eigen();
            let (mut min_idx, mut min_val) = (0, f64::INFINITY);
            for (i, v) in eigen.eigenvalues.iter().enumerate() {
                if *v < min_val {
                    min_val = *v;
                    min_idx = i;
                }
            }
            if min_val <= opts.lambda_tol {
                let direction = &kernel * eigen.eigenvectors.column(min_idx);
                let direction = &direction / direction.norm();
                return Ok(GainSearchOutcome::Infeasible {
                    curvature: (direction.transpose() * &eta * &direction)[(0, 0)],
                    certificate: direction,
                });
            }
        }
    } else {
        let lambda = linalg::min_sym_eigenvalue(&eta);
        if lambda > opts.lambda_tol {
            return Ok(GainSearchOutcome::Feasible {
                gains: vec![],
                lambda_min: lambda,
            });
        }
        let eigen = linalg::symmetrize(&eta).symmetric_eigen();
        let (mut min_idx, mut min_val) = (0, f64::INFINITY);
        for (i, v) in eigen.eigenvalues.iter().enumerate() {
            if *v < min_val {
                min_val = *v;
                min_idx = i;
            }
        }
        return Ok(GainSearchOutcome::Infeasible {
            certificate: eigen.eigenvectors.column(min_idx).into_owned(),
            curvature: min_val,
        });
    }

    // Logarithmic sweep with all gains equal.
    let decades = (opts.upper / opts.lower).log10();
    let steps = (decades * opts.grid_per_decade as f64).ceil() as usize;
    let mut feasible_level = None;
    for i in 0..=steps {
        let level = opts.lower * 10f64.powf(i as f64 / opts.grid_per_decade as f64);
        let level = level.min(opts.upper);
        if lambda_min_for(&vec![level; grads.len()]) > opts.lambda_tol {
            feasible_level = Some(level);
            break;
        }
    }
    let Some(level) = feasible_level else {
        // The kernel test passed but the cap is too low; certify with the
        // most negative direction at the cap.
        let gains = vec![opts.upper; grads.len()];
        let mut total = eta.clone();
        for (grad, k) in grads.iter().zip(gains.iter()) {
            total += grad * grad.transpose() * *k;
        }
        let eigen = linalg::symmetrize(&total).symmetric_eigen();
        let (mut min_idx, mut min_val) = (0, f64::INFINITY);
        for (i, v) in eigen.eigenvalues.iter().enumerate() {
            if *v < min_val {
                min_val = *v;
                min_idx = i;
            }
        }
        let direction = eigen.eigenvectors.column(min_idx).into_owned();
        return Ok(GainSearchOutcome::Infeasible {
            curvature: (direction.transpose() * &eta * &direction)[(0, 0)],
            certificate: direction,
        });
    };

    // Per-coordinate bisection down from the feasible level.
    let mut gains = vec![level; grads.len()];
    for i in 0..gains.len() {
        let mut lo = opts.lower;
        let mut hi = gains[i];
        let mut probe = gains.clone();
        probe[i] = lo;
        if lambda_min_for(&probe) > opts.lambda_tol {
            gains[i] = lo;
            continue;
        }
        while (hi - lo) > opts.bisect_rel_tol * hi.max(1e-12) {
            let mid = 0.5 * (hi + lo);
            probe[i] = mid;
            if lambda_min_for(&probe) > opts.lambda_tol {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        gains[i] = hi;
    }

    let lambda_min = lambda_min_for(&gains);
    Ok(GainSearchOutcome::Feasible { gains, lambda_min })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks;
    use crate::model::{J2Policy, ScalarField};
    use nalgebra::{dmatrix, dvector};
    use std::sync::Arc;

    /// Independent oracle: symmetrized central-difference Jacobian of the
    /// covector field.
    fn eta_hessian_fd_oracle(
        model: &SystemModel,
        design: &ClosedLoopDesign,
        q_d: &DVector<f64>,
    ) -> DMatrix<f64> {
        let jac = linalg::fd_jacobian(
            |q| Ok(eta_covector(model, design, q)?.transpose()),
            q_d,
            model.n,
        )
        .unwrap();
        linalg::symmetrize(&jac)
    }

    #[test]
    fn covector_vanishes_on_the_manifold() {
        let (model, design) = benchmarks::cable_robot(&Default::default()).unwrap();
        // z = 0 keeps G_perp grad V = 0 for the cable robot.
        let w = eta_covector(&model, &design, &dvector![0.3, -0.8, 0.0]).unwrap();
        assert!(w.amax() < 1e-14);
    }

    #[test]
    fn cable_robot_covector_closed_form() {
        let params = benchmarks::CableRobotParams::default();
        let (model, design) = benchmarks::cable_robot(&params).unwrap();
        let q = dvector![0.1, -1.0, 0.2];
        let w = eta_covector(&model, &design, &q).unwrap();
        // M_d = M, so w = (G_perp grad V / |G_perp|^2) G_perp directly.
        let g_perp = model.annihilator(&q);
        let grad_v = dvector![0.0, params.mass * params.gravity, 0.0];
        let scale = (&g_perp * &grad_v)[(0, 0)] / g_perp.row(0).norm_squared();
        let expected = g_perp.row(0) * scale;
        assert!((w - expected).amax() < 1e-12);
    }

    #[test]
    fn acrobot_covector_closed_form() {
        let params = benchmarks::AcrobotParams::default();
        let (model, design) = benchmarks::acrobot(&params).unwrap();
        let q = dvector![0.1, 0.0];
        let w = eta_covector(&model, &design, &q).unwrap();
        let dv1 = -(params.c4 + params.c5) * params.gravity * 0.1f64.sin();
        let md_inv_m = design.md_inverse(&q) * model.mass(&q);
        let expected = dmatrix![1.0, 0.0] * md_inv_m * dv1;
        assert!((w - expected.row(0)).amax() < 1e-12);
    }

    #[test]
    fn cable_robot_eta_hessian_closed_form() {
        let (model, design) = benchmarks::cable_robot(&Default::default()).unwrap();
        let h = eta_hessian(&model, &design, &model.equilibrium).unwrap();
        // diag(0, 0, -m g y_d / (y_d^2 + z_d^2)) = diag(0, 0, 9.81).
        let expected = DMatrix::from_diagonal(&dvector![0.0, 0.0, 9.81]);
        assert!((h - expected).amax() < 1e-5);
    }

    #[test]
    fn constant_potential_gives_zero_hessian() {
        let params = benchmarks::CableRobotParams::default();
        let (model, design) = benchmarks::cable_robot(&params).unwrap();
        let mut flat = model.clone();
        flat.potential = ScalarField::with_gradient(
            Arc::new(|_q: &DVector<f64>| 1.0),
            Arc::new(|_q: &DVector<f64>| dvector![0.0, 0.0, 0.0]),
        );
        let h = eta_hessian(&flat, &design, &flat.equilibrium).unwrap();
        assert!(h.amax() < 1e-12);
    }

    #[test]
    fn eta_hessian_matches_fd_oracle_on_all_benchmarks() {
        for bench in benchmarks::ALL {
            let (model, design) = bench.build_default().unwrap();
            let implemented = eta_hessian(&model, &design, &model.equilibrium).unwrap();
            let oracle = eta_hessian_fd_oracle(&model, &design, &model.equilibrium);
            let diff = (&implemented - &oracle).amax();
            assert!(diff < 1e-5, "{}: |impl - oracle| = {diff}", bench.name);
        }
    }

    #[test]
    fn vanishing_annihilator_row_is_an_error() {
        // The cable-robot annihilator row is the cable cross product, which
        // collapses when both cables align (y = z = 0).
        let (model, design) = benchmarks::cable_robot(&Default::default()).unwrap();
        let err = eta_covector(&model, &design, &dvector![0.3, 0.0, 0.0]);
        assert!(matches!(err, Err(Error::ZeroAnnihilatorRow { .. })));
    }

    #[test]
    fn off_manifold_equilibrium_is_refused() {
        let (model, design) = benchmarks::acrobot(&Default::default()).unwrap();
        let err = eta_hessian(&model, &design, &dvector![0.4, 0.1]);
        assert!(matches!(err, Err(Error::NotAtEquilibrium { .. })));
    }

    #[test]
    fn acrobot_vdh_hessian_is_k_times_alpha() {
        let params = benchmarks::AcrobotParams {
            k: 7.0,
            ..Default::default()
        };
        let (model, design) = benchmarks::acrobot(&params).unwrap();
        let h = vdh_hessian(&design, &model.equilibrium);
        let mu = benchmarks::acrobot_mu(4.0, 1.0);
        assert!((mu + 1.0 / 3.0).abs() < 1e-15);
        let expected = benchmarks::acrobot_alpha(mu) * 7.0;
        assert!((h - expected).amax() < 1e-12);
    }

    #[test]
    fn zero_gain_gives_zero_hessian() {
        let (model, mut design) = benchmarks::acrobot(&Default::default()).unwrap();
        design.gains = vec![0.0];
        let h = vdh_hessian(&design, &model.equilibrium);
        assert!(h.amax() == 0.0);
    }

    #[test]
    fn vtol_vdh_hessian_reproduces_condition_display() {
        let params = benchmarks::VtolParams {
            k1: 2.0,
            k2: 3.0,
            ..Default::default()
        };
        let (model, design) = benchmarks::vtol(&params).unwrap();
        let h = vdh_hessian(&design, &model.equilibrium);
        let coupling = -params.lambda3 / (params.lambda1 - params.lambda2 * params.epsilon);
        let mut expected = DMatrix::zeros(3, 3);
        expected[(0, 0)] = 2.0;
        expected[(0, 2)] = 2.0 * coupling;
        expected[(2, 0)] = 2.0 * coupling;
        expected[(2, 2)] = 2.0 * coupling * coupling;
        expected[(1, 1)] = 3.0;
        assert!((h - expected).amax() < 1e-12);
    }

    #[test]
    fn cable_robot_condition_holds_for_any_positive_gains() {
        for (k1, k2) in [(0.1, 0.1), (1.0, 10.0), (100.0, 0.1)] {
            let params = benchmarks::CableRobotParams {
                k1,
                k2,
                ..Default::default()
            };
            let (model, design) = benchmarks::cable_robot(&params).unwrap();
            let report = check_condition(&model, &design, LAMBDA_TOL).unwrap();
            assert!(report.satisfied, "k1={k1}, k2={k2}");
        }
    }

    #[test]
    fn scenario_classification_reference_cases() {
        assert_eq!(
            classify_scenario(&Matrix2::new(-550.0, -420.0, -420.0, -290.0)),
            Scenario::A1
        );
        assert_eq!(
            classify_scenario(&Matrix2::new(1.0, 2.0, 2.0, 1.0)),
            Scenario::A2
        );
        assert_eq!(
            classify_scenario(&Matrix2::new(-1.0, 0.0, 0.0, -1.0)),
            Scenario::NegDef
        );
    }

    #[test]
    fn gain_bound_boundary_cases() {
        // PSD boundary: k_min = 0.
        let alpha = Matrix2::new(1.0, 0.0, 0.0, 0.0);
        let beta = Matrix2::new(0.0, 0.0, 0.0, 1.0);
        let bound = gain_lower_bound(&alpha, &beta).unwrap();
        assert_eq!(bound.scenario, Scenario::A2);
        assert!((bound.rho - 1.0).abs() < 1e-15);
        assert!(bound.k_min.abs() < 1e-15);

        // A3 with an untouched positive diagonal.
        let beta = Matrix2::new(-1.0, 0.0, 0.0, 1.0);
        let bound = gain_lower_bound(&alpha, &beta).unwrap();
        assert_eq!(bound.scenario, Scenario::A3);
        assert!((bound.rho - 1.0).abs() < 1e-15);
        assert!((bound.k_min - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rho_failure_is_reported_with_its_value() {
        let alpha = Matrix2::new(1.0, 0.0, 0.0, 0.0);
        let beta = Matrix2::new(0.0, 1.0, 1.0, 0.0);
        match gain_lower_bound(&alpha, &beta) {
            Err(Error::RhoNotPositive { rho }) => assert!(rho.abs() < 1e-15),
            other => panic!("expected RhoNotPositive, got {other:?}"),
        }
    }

    #[test]
    fn negdef_beta_is_refused() {
        let alpha = Matrix2::new(1.0, 0.0, 0.0, 0.0);
        let beta = Matrix2::new(-1.0, 0.0, 0.0, -1.0);
        assert!(matches!(
            gain_lower_bound(&alpha, &beta),
            Err(Error::NegativeDefiniteBeta)
        ));
    }

    #[test]
    fn dense_scan_brackets_the_closed_form_bound() {
        // The oracle for the bound formula: scan lambda_min(k alpha + beta).
        let alpha = Matrix2::new(1.0, 5.0 / 9.0, 5.0 / 9.0, 25.0 / 81.0);
        let beta = Matrix2::new(-550.0, -420.0, -420.0, -290.0);
        let bound = gain_lower_bound(&alpha, &beta).unwrap();
        let lambda = |k: f64| {
            let total = alpha * k + beta;
            let half_tr = 0.5 * (total[(0, 0)] + total[(1, 1)]);
            let det = total[(0, 0)] * total[(1, 1)] - total[(0, 1)] * total[(1, 0)];
            half_tr - (half_tr * half_tr - det).sqrt()
        };
        assert!(lambda(bound.k_min + 1e-6 * bound.k_min) > 0.0);
        assert!(lambda(bound.k_min - 1e-3 * bound.k_min) <= 0.0);
        // Dense sweep: no feasible k below the bound.
        for i in 0..2000 {
            let k = bound.k_min * (i as f64) / 2000.0;
            assert!(lambda(k) <= 1e-9, "feasible below bound at k = {k}");
        }
    }

    #[test]
    fn closed_form_bound_brackets_every_two_dof_design() {
        // Brute-force oracle on the benchmark decompositions themselves.
        for name in ["acrobot", "pendubot"] {
            let (model, design) = benchmarks::by_name(name).unwrap().build_default().unwrap();
            let (alpha, beta) = decompose_two_dof(&model, &design).unwrap();
            let bound = gain_lower_bound(&alpha, &beta).unwrap();
            assert!(bound.k_min > 0.0, "{name}");
            let lambda = |k: f64| {
                let total = alpha * k + beta;
                let half_tr = 0.5 * (total[(0, 0)] + total[(1, 1)]);
                let det = total[(0, 0)] * total[(1, 1)] - total[(0, 1)] * total[(1, 0)];
                half_tr - (half_tr * half_tr - det).max(0.0).sqrt()
            };
            assert!(lambda(bound.k_min + 1e-6 * bound.k_min.max(1.0)) > 0.0, "{name}");
            assert!(lambda(bound.k_min * (1.0 - 1e-3)) <= 0.0, "{name}");
            for i in 0..400 {
                let k = bound.k_min * i as f64 / 400.0;
                assert!(lambda(k) <= 1e-9, "{name}: feasible below the bound at {k}");
            }
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn gain_bound_agrees_with_brute_force(
            v0 in -2.0f64..2.0,
            v1 in -2.0f64..2.0,
            b1 in -50.0f64..50.0,
            b2 in -50.0f64..50.0,
            b3 in -50.0f64..50.0,
        ) {
            use proptest::prelude::*;
            prop_assume!(v0.abs() + v1.abs() > 0.1);
            let alpha = Matrix2::new(v0 * v0, v0 * v1, v0 * v1, v1 * v1);
            let beta = Matrix2::new(b1, b2, b2, b3);
            let lambda = |k: f64| {
                let total = alpha * k + beta;
                let half_tr = 0.5 * (total[(0, 0)] + total[(1, 1)]);
                let det = total[(0, 0)] * total[(1, 1)] - total[(0, 1)] * total[(1, 0)];
                half_tr - (half_tr * half_tr - det).max(0.0).sqrt()
            };
            match gain_lower_bound(&alpha, &beta) {
                Ok(bound) if bound.k_min.is_finite() => {
                    let above = bound.k_min + 1e-6 * (1.0 + bound.k_min.abs());
                    prop_assert!(lambda(above) > 0.0, "not PD just above {}", bound.k_min);
                    if bound.k_min > 0.0 {
                        let below = bound.k_min - 1e-3 * bound.k_min.abs() - 1e-9;
                        prop_assert!(lambda(below) <= 1e-9, "PD below the bound");
                    }
                }
                Ok(_) => {
                    // Infinite bound: even a huge gain cannot fix the row.
                    prop_assert!(lambda(1e12) <= 1e-6);
                }
                Err(Error::RhoNotPositive { .. }) => {
                    // No finite gain works along the determinant constraint.
                    prop_assert!(lambda(1e12) <= 1e-6);
                }
                Err(Error::NegativeDefiniteBeta) => {
                    prop_assert!(linalg::min_sym_eigenvalue(&DMatrix::from_row_slice(
                        2, 2, &[b1, b2, b2, b3],
                    )) < 0.0);
                }
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }
    }

    #[test]
    fn two_dof_alpha_is_rank_one_with_nonnegative_diagonal() {
        for name in ["acrobot", "pendubot", "cart_pole"] {
            let (model, design) = benchmarks::by_name(name).unwrap().build_default().unwrap();
            let (alpha, _beta) = decompose_two_dof(&model, &design).unwrap();
            let det = alpha[(0, 0)] * alpha[(1, 1)] - alpha[(0, 1)] * alpha[(1, 0)];
            assert!(det.abs() < 1e-12, "{name}: det = {det}");
            assert!(alpha[(0, 0)] >= 0.0 && alpha[(1, 1)] >= 0.0);
        }
    }

    #[test]
    fn wrong_dimensions_are_rejected() {
        let (model, design) = benchmarks::cable_robot(&Default::default()).unwrap();
        assert!(matches!(
            decompose_two_dof(&model, &design),
            Err(Error::WrongDimensions { .. })
        ));
    }

    #[test]
    fn condition_is_invariant_under_annihilator_rescaling() {
        let params = benchmarks::AcrobotParams::default();
        let (model, design) = benchmarks::acrobot(&params).unwrap();
        let report = check_condition(&model, &design, LAMBDA_TOL).unwrap();

        let base = model.clone();
        let scaled = SystemModel::new(
            2,
            1,
            Arc::new({
                let m = base.clone();
                move |q: &DVector<f64>| m.mass(q)
            }),
            base.potential.clone(),
            Arc::new({
                let m = base.clone();
                move |q: &DVector<f64>| m.input(q)
            }),
            Arc::new({
                let m = base.clone();
                move |q: &DVector<f64>| m.annihilator(q) * (-3.7)
            }),
            base.equilibrium.clone(),
        );
        let scaled_report = check_condition(&scaled, &design, LAMBDA_TOL).unwrap();
        let diff = (&report.eta_hessian - &scaled_report.eta_hessian).amax();
        assert!(diff < 1e-10, "rescaled annihilator changed eta: {diff}");
    }

    #[test]
    fn gradient_of_shaped_potential_plus_correction_vanishes_at_equilibrium() {
        for bench in benchmarks::ALL {
            let (model, design) = bench.build_default().unwrap();
            let q_d = &model.equilibrium;
            let total = design.vdh_gradient(q_d)
                + eta_covector(&model, &design, q_d).unwrap().transpose();
            assert!(total.norm() < 1e-8, "{}: {}", bench.name, total.norm());
        }
    }

    #[test]
    fn vtol_search_finds_feasible_gains() {
        let (model, design) = benchmarks::vtol(&Default::default()).unwrap();
        match feasible_gains_search(&model, &design, &GainSearchOptions::default()).unwrap() {
            GainSearchOutcome::Feasible { gains, lambda_min } => {
                assert_eq!(gains.len(), 2);
                assert!(lambda_min > LAMBDA_TOL);
                // k1 must exceed its analytic floor (about 0.087 for the
                // reference parameters); k2 bisects to the lower bound.
                assert!(gains[0] > 0.05 && gains[0] < 1.0, "k1 = {}", gains[0]);
                assert!(gains[1] <= 0.011, "k2 = {}", gains[1]);
            }
            other => panic!("expected feasible gains, got {other:?}"),
        }
    }

    #[test]
    fn psd_eta_accepts_the_smallest_grid_point() {
        // Cable robot: eta Hessian is PSD with positive curvature only along
        // z, and the basis gradients cover x and y.
        let (model, design) = benchmarks::cable_robot(&Default::default()).unwrap();
        match feasible_gains_search(&model, &design, &GainSearchOptions::default()).unwrap() {
            GainSearchOutcome::Feasible { gains, .. } => {
                for k in gains {
                    assert!(k <= 0.011, "expected the lower bound, got {k}");
                }
            }
            other => panic!("expected feasible, got {other:?}"),
        }
    }

    #[test]
    fn kernel_obstruction_yields_certificate() {
        // Flip the cable-robot gravity so the correction curvature along z
        // is negative; z is in the kernel of both basis gradients.
        let params = benchmarks::CableRobotParams {
            y_d: -1.0,
            ..Default::default()
        };
        let (model, design) = benchmarks::cable_robot(&params).unwrap();
        let mut flipped = model.clone();
        let mg = params.mass * params.gravity;
        flipped.potential = ScalarField::with_gradient(
            Arc::new(move |q: &DVector<f64>| -mg * q[1]),
            Arc::new(move |_q: &DVector<f64>| dvector![0.0, -mg, 0.0]),
        );
        match feasible_gains_search(&flipped, &design, &GainSearchOptions::default()).unwrap() {
            GainSearchOutcome::Infeasible {
                certificate,
                curvature,
            } => {
                assert!(curvature < 0.0);
                assert!(certificate[2].abs() > 0.99, "certificate should be +-z");
                for f in &design.vdh_basis {
                    let overlap = f.gradient(&flipped.equilibrium).dot(&certificate);
                    assert!(overlap.abs() < 1e-8);
                }
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn pendubot_reference_numeric_case() {
        let alpha = Matrix2::new(1.0, 5.0 / 9.0, 5.0 / 9.0, 25.0 / 81.0);
        let beta = Matrix2::new(-550.0, -420.0, -420.0, -290.0);
        assert_eq!(classify_scenario(&beta), Scenario::A1);
        let bound = gain_lower_bound(&alpha, &beta).unwrap();
        assert!((bound.rho - 560.0 / 81.0).abs() < 1e-12);
        // k = 100 sits far below the bound, k = 3000 above it.
        let lambda = |k: f64| {
            let total = alpha * k + beta;
            linalg::min_sym_eigenvalue(&DMatrix::from_row_slice(
                2,
                2,
                &[total[(0, 0)], total[(0, 1)], total[(1, 0)], total[(1, 1)]],
            ))
        };
        assert!(lambda(100.0) < 0.0);
        assert!(lambda(3000.0) > 0.0);
        assert!(bound.k_min > 2444.0 && bound.k_min < 2445.0);
    }

    #[test]
    fn j2_supplied_skew_and_zero_policies_share_the_condition() {
        // The condition does not involve J2; sanity-check by swapping policy.
        let (model, mut design) = benchmarks::acrobot(&Default::default()).unwrap();
        let report_a = check_condition(&model, &design, LAMBDA_TOL).unwrap();
        design.j2_policy = J2Policy::Zero;
        let report_b = check_condition(&model, &design, LAMBDA_TOL).unwrap();
        assert_eq!(report_a.satisfied, report_b.satisfied);
    }
}
