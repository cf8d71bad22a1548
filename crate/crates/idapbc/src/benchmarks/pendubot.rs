//! Pendubot: 2R serial robot actuated at the first joint. The desired inertia
//! inverse carries a configuration-dependent exponent a(q2); the shaped
//! potential comes from the delta-expression whose leading factor multiplies
//! the log term. Log arguments in a(q2) are taken in absolute value since the
//! published forms change sign on the workspace; residuals for this benchmark
//! are reported rather than gated.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, dmatrix, dvector};

use super::{ensure, unknown_key};
use crate::error::Result;
use crate::model::{ClosedLoopDesign, J2Policy, MatrixMap, ScalarField, SystemModel};

#[derive(Debug, Clone)]
pub struct PendubotParams {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub gravity: f64,
    pub a1: f64,
    /// Must satisfy a1 c1 + a1 c2 + b1 c2 = 0.
    pub b1: f64,
    /// Free constant b in the desired inertia inverse.
    pub b_free: f64,
    pub lambda: f64,
    pub k: f64,
    pub kv: f64,
}

impl Default for PendubotParams {
    fn default() -> Self {
        Self {
            c1: 4.0,
            c2: 1.0,
            c3: 1.5,
            c4: 1.5,
            c5: 2.0,
            gravity: 9.81,
            a1: 0.1,
            b1: -0.5, // = -a1 (c1 + c2) / c2
            b_free: 1.0,
            lambda: 1.0,
            k: 1200.0,
            kv: 1.0,
        }
    }
}

impl PendubotParams {
    pub fn to_map(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            ("c1".into(), self.c1),
            ("c2".into(), self.c2),
            ("c3".into(), self.c3),
            ("c4".into(), self.c4),
            ("c5".into(), self.c5),
            ("g".into(), self.gravity),
            ("a1".into(), self.a1),
            ("b1".into(), self.b1),
            ("b".into(), self.b_free),
            ("lambda".into(), self.lambda),
            ("k".into(), self.k),
            ("kv".into(), self.kv),
        ])
    }

    pub fn from_map(overrides: &BTreeMap<String, f64>) -> Result<Self> {
        let mut p = Self::default();
        for (key, value) in overrides {
            match key.as_str() {
                "c1" => p.c1 = *value,
                "c2" => p.c2 = *value,
                "c3" => p.c3 = *value,
                "c4" => p.c4 = *value,
                "c5" => p.c5 = *value,
                "g" => p.gravity = *value,
                "a1" => p.a1 = *value,
                "b1" => p.b1 = *value,
                "b" => p.b_free = *value,
                "lambda" => p.lambda = *value,
                "k" => p.k = *value,
                "kv" => p.kv = *value,
                other => return Err(unknown_key("pendubot", other)),
            }
        }
        Ok(p)
    }
}

/// delta_1..delta_4 of the shaped-potential expression.
pub fn pendubot_deltas(p: &PendubotParams) -> [f64; 4] {
    [
        -p.b1 * p.c2 - p.a1 * p.c2,
        -p.a1 * p.c3,
        p.b1 * p.c2 + p.a1 * p.c1 + p.a1 * p.c2,
        p.b1 * p.c3 + 2.0 * p.a1 * p.c3,
    ]
}

/// Configuration-dependent exponent of the desired inertia inverse, as
/// published with absolute values inside every log.
pub fn pendubot_exponent(p: &PendubotParams, q2: f64) -> f64 {
    let (c1, c2, c3) = (p.c1, p.c2, p.c3);
    let (a1, b1) = (p.a1, p.b1);
    let cos = q2.cos();
    let d4c = b1 * c3 + 2.0 * a1 * c3;

    let t1 = (-a1 * c1 * c2 * c3 + b1 * c1 * c2 * c3) / (c1 * c2 * d4c)
        * (c1 * c2 - c3 * c3 * cos * cos).abs().ln();
    let t2 = (2.0 * a1 * c1 * c2 * c3 - 2.0 * b1 * c1 * c2 * c3) / (c1 * c2 * d4c) * cos;
    let ratio = (c3 * c3 / (c1 * c2)).sqrt();
    let t3 = ((1.0 + ratio * cos) / (1.0 - ratio * cos)).abs().ln()
        * (2.0 * a1 * c3.powi(3) + 2.0 * a1 * c3 * c3 * (c1 + c2)
            + 2.0 * b1 * c2 * c3 * c3 * (b1 - 2.0))
        / (2.0 * a1 * (c1 * c2 * c3 * c3).sqrt() * d4c);
    let t4 = b1 * c3.powi(3) / (c3 * c3 * d4c) * (c3 * c3 * cos * cos - c1 * c2).abs().ln();

    t1 + t2 + t3 + t4
}

/// d22 entry of the desired inertia inverse, (lambda e^{a(q2)} + b^2) / a1.
fn d22(p: &PendubotParams, q2: f64) -> f64 {
    (p.lambda * pendubot_exponent(p, q2).exp() + p.b_free * p.b_free) / p.a1
}

/// Published beta formulas, evaluated with the d22 entry of the desired
/// inertia inverse at the equilibrium (report-only helper).
pub fn pendubot_beta_published(p: &PendubotParams) -> DMatrix<f64> {
    let g = p.gravity;
    let (c1, c2, c3, c5) = (p.c1, p.c2, p.c3, p.c5);
    let dv = d22(p, 0.0) * p.a1; // lambda e^{a(0)} + b^2
    let b1 = p.b1;
    let a1 = p.a1;
    let beta1 = -b1 * c5 * g * (c1 + c2 + 2.0 * c3) - dv / a1 * c5 * g * (c2 + c3);
    let beta2 = -b1 * c5 * g * (c2 + c3) / 2.0 - dv / (2.0 * a1) * c2 * c5 * g
        - b1 * c5 * g * (c1 + c2 + 2.0 * c3) / 2.0
        - dv / (2.0 * a1) * c5 * g * (c2 + c3);
    let beta3 = -b1 * c5 * g * (c2 + c3) - dv / a1 * c2 * c5 * g;
    dmatrix![beta1, beta2; beta2, beta3]
}

pub(crate) fn build_from_map(
    overrides: &BTreeMap<String, f64>,
) -> Result<(SystemModel, ClosedLoopDesign)> {
    pendubot(&PendubotParams::from_map(overrides)?)
}

pub(crate) fn default_map() -> BTreeMap<String, f64> {
    PendubotParams::default().to_map()
}

pub fn pendubot(params: &PendubotParams) -> Result<(SystemModel, ClosedLoopDesign)> {
    let p = params.clone();
    ensure(
        p.c1 > 0.0 && p.c2 > 0.0 && p.c3 > 0.0 && p.c4 > 0.0 && p.c5 > 0.0,
        "pendubot: inertia constants c1..c5 must be positive",
    )?;
    ensure(p.gravity > 0.0, "pendubot: g must be positive")?;
    ensure(
        p.c1 * p.c2 > p.c3 * p.c3,
        "pendubot: c1 c2 must exceed c3^2 so M stays positive definite",
    )?;
    let constraint = p.a1 * p.c1 + p.a1 * p.c2 + p.b1 * p.c2;
    ensure(
        constraint.abs() <= 1e-9 * (1.0 + (p.a1 * p.c1).abs()),
        "pendubot: a1 c1 + a1 c2 + b1 c2 = 0 must hold",
    )?;
    ensure(p.a1 > 0.0, "pendubot: a1 must be positive")?;
    ensure(p.lambda > 0.0, "pendubot: lambda must be positive")?;
    let [d1, d2, d3, d4] = pendubot_deltas(&p);
    ensure(
        d4 * d4 > d3 * d3,
        "pendubot: delta4^2 must exceed delta3^2",
    )?;
    ensure(p.k > 0.0, "pendubot: k must be positive")?;
    ensure(p.kv > 0.0, "pendubot: kv must be positive")?;

    let q_d = dvector![0.0, 0.0];
    let (c1, c2, c3, c4, c5, g) = (p.c1, p.c2, p.c3, p.c4, p.c5, p.gravity);

    let mass: MatrixMap = Arc::new(move |q: &DVector<f64>| {
        let cos2 = q[1].cos();
        dmatrix![
            c1 + c2 + 2.0 * c3 * cos2, c2 + c3 * cos2;
            c2 + c3 * cos2, c2
        ]
    });

    let potential = ScalarField::with_gradient(
        Arc::new(move |q: &DVector<f64>| c4 * g * q[0].cos() + c5 * g * (q[0] + q[1]).cos()),
        Arc::new(move |q: &DVector<f64>| {
            let s12 = (q[0] + q[1]).sin();
            dvector![-c4 * g * q[0].sin() - c5 * g * s12, -c5 * g * s12]
        }),
    );

    let input: MatrixMap = Arc::new(|_q: &DVector<f64>| dmatrix![1.0; 0.0]);
    let annihilator: MatrixMap = Arc::new(|_q: &DVector<f64>| dmatrix![0.0, 1.0]);

    let model = SystemModel::new(2, 1, mass, potential, input, annihilator, q_d.clone())
        .with_params(p.to_map());

    let p_md = p.clone();
    let md_inv: MatrixMap = Arc::new(move |q: &DVector<f64>| {
        dmatrix![
            p_md.a1, p_md.b1;
            p_md.b1, d22(&p_md, q[1])
        ]
    });

    // Shaped-potential argument. The (d1 d4 - d2 d3) factor multiplies the
    // log; a constant factor inside the log cannot affect the gradient and
    // the PDE fixes this scale.
    let root = (d4 * d4 - d3 * d3).sqrt();
    let c_ln = (d1 * d4 - d2 * d3) / (d4 * root);
    let value = move |q: &DVector<f64>| {
        let (sin, cos) = q[1].sin_cos();
        let num = d4 + d3 * cos + root * sin;
        let den = d3 + d4 * cos;
        c_ln * (num / den).abs().ln() + d2 / d4 * q[1] - q[0]
    };
    let gradient = move |q: &DVector<f64>| {
        let (sin, cos) = q[1].sin_cos();
        let num = d4 + d3 * cos + root * sin;
        let den = d3 + d4 * cos;
        let dnum = -d3 * sin + root * cos;
        let dden = -d4 * sin;
        dvector![-1.0, c_ln * (dnum / num - dden / den) + d2 / d4]
    };
    let basis = vec![ScalarField::with_gradient(
        Arc::new(value),
        Arc::new(gradient),
    )];

    // The published desired inertia does not solve the kinetic PDE, so the
    // pointwise J2 is unbounded on the momentum line a1 p1 + b1 p2 = 0.
    // J2 = 0 keeps the loop well posed; the kinetic residual is reported.
    let design = ClosedLoopDesign::new(
        md_inv,
        basis,
        vec![p.k],
        dmatrix![p.kv],
        J2Policy::Zero,
        &q_d,
    )
    .with_free_params(BTreeMap::from([
        ("a1".into(), p.a1),
        ("b1".into(), p.b1),
        ("b".into(), p.b_free),
        ("lambda".into(), p.lambda),
        ("delta1".into(), d1),
        ("delta2".into(), d2),
        ("delta3".into(), d3),
        ("delta4".into(), d4),
    ]));

    Ok((model, design))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::homogeneous_residual_max;
    use crate::model::sample_workspace;

    #[test]
    fn delta4_matches_its_published_formula() {
        let p = PendubotParams::default();
        let [_, _, d3, d4] = pendubot_deltas(&p);
        assert!((d4 - (p.b1 * p.c3 + 2.0 * p.a1 * p.c3)).abs() < 1e-15);
        // The enforced constraint collapses delta3 to zero.
        assert!(d3.abs() < 1e-12);
    }

    #[test]
    fn basis_gradient_reproduces_reference_alpha() {
        // With c1 = 4, c2 = 1, c3 = 1.5 the decomposition alpha is
        // [[1, 5/9], [5/9, 25/81]] independently of a1.
        for a1 in [0.1, 0.5, 1.0194] {
            let p = PendubotParams {
                a1,
                b1: -5.0 * a1,
                ..Default::default()
            };
            let (_model, design) = pendubot(&p).unwrap();
            let grad = design.vdh_basis[0].gradient(&dvector![0.0, 0.0]);
            assert!((grad[0] - (-1.0)).abs() < 1e-12);
            assert!((grad[1] - (-5.0 / 9.0)).abs() < 1e-12, "grad2 = {}", grad[1]);
        }
    }

    #[test]
    fn corrected_basis_solves_homogeneous_pde() {
        let (model, design) = pendubot(&PendubotParams::default()).unwrap();
        for q in sample_workspace(&model, 50, 8) {
            let max = homogeneous_residual_max(&model, &design, &q).unwrap();
            assert!(max < 1e-8, "residual {max} at {q:?}");
        }
    }

    #[test]
    fn broken_coupling_constraint_is_rejected() {
        let p = PendubotParams {
            b1: -0.4,
            ..Default::default()
        };
        assert!(pendubot(&p).is_err());
    }

    #[test]
    fn analytic_basis_gradient_matches_finite_differences() {
        let (model, design) = pendubot(&PendubotParams::default()).unwrap();
        for q in sample_workspace(&model, 20, 10) {
            let f = &design.vdh_basis[0];
            let analytic = f.gradient(&q);
            let fd = crate::linalg::fd_gradient(|x| f.value(x), &q);
            assert!((analytic - fd).amax() < 1e-6);
        }
    }
}
