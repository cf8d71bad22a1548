//! Planar VTOL aircraft with strong input coupling, q = (x, y, theta),
//! M = I and V = (g/epsilon) cos(theta). The published 3x3 design matrix is
//! used as M_d: with that convention G_perp M_d = (lambda3 cos, (lambda3 -
//! lambda1 eps) sin, lambda1 - lambda2 eps) and the published two-function basis
//! solves the homogeneous PDE exactly.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, dmatrix, dvector};

use super::{ensure, unknown_key};
use crate::error::Result;
use crate::model::{ClosedLoopDesign, J2Policy, MatrixMap, ScalarField, SystemModel};

#[derive(Debug, Clone)]
pub struct VtolParams {
    pub epsilon: f64,
    pub gravity: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub x_d: f64,
    pub y_d: f64,
    pub k1: f64,
    pub k2: f64,
    pub kv: f64,
}

impl Default for VtolParams {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            gravity: 9.81,
            lambda1: 1.0,
            lambda2: 1.5,
            lambda3: 3.0,
            x_d: 0.0,
            y_d: 0.0,
            k1: 1.0,
            k2: 1.0,
            kv: 1.0,
        }
    }
}

impl VtolParams {
    pub fn to_map(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            ("epsilon".into(), self.epsilon),
            ("g".into(), self.gravity),
            ("lambda1".into(), self.lambda1),
            ("lambda2".into(), self.lambda2),
            ("lambda3".into(), self.lambda3),
            ("x_d".into(), self.x_d),
            ("y_d".into(), self.y_d),
            ("k1".into(), self.k1),
            ("k2".into(), self.k2),
            ("kv".into(), self.kv),
        ])
    }

    pub fn from_map(overrides: &BTreeMap<String, f64>) -> Result<Self> {
        let mut p = Self::default();
        for (key, value) in overrides {
            match key.as_str() {
                "epsilon" => p.epsilon = *value,
                "g" => p.gravity = *value,
                "lambda1" => p.lambda1 = *value,
                "lambda2" => p.lambda2 = *value,
                "lambda3" => p.lambda3 = *value,
                "x_d" => p.x_d = *value,
                "y_d" => p.y_d = *value,
                "k1" => p.k1 = *value,
                "k2" => p.k2 = *value,
                "kv" => p.kv = *value,
                other => return Err(unknown_key("vtol", other)),
            }
        }
        Ok(p)
    }
}

/// Published theta_1 of the condition display. The published formula omits the
/// |G_perp|^2 = 1 + epsilon^2 normalization carried by the correction
/// functional, so it equals (1 + eps^2) times the corresponding eta-Hessian
/// coupling entry.
pub fn vtol_theta1_published(p: &VtolParams) -> f64 {
    let (e, g) = (p.epsilon, p.gravity);
    let (l1, l2, l3) = (p.lambda1, p.lambda2, p.lambda3);
    let num = g * e * (-l1 * l2 * e + l2 * l3 - l1 * l1 * e * e + l1 * l3 * e);
    let den = (l1 * e + l3) * (-l1 * e + l3) * l2 - l1 * (-l1 * e + l3) * l1;
    num / den
}

fn published_design_matrix(p: &VtolParams, q3: f64) -> DMatrix<f64> {
    let (sin, cos) = q3.sin_cos();
    let (e, l1, l2, l3) = (p.epsilon, p.lambda1, p.lambda2, p.lambda3);
    dmatrix![
        l1 * e * cos * cos + l3, l1 * e * cos * sin, l1 * cos;
        l1 * e * cos * sin, -l1 * e * cos * cos + l3, l1 * sin;
        l1 * cos, l1 * sin, l2
    ]
}

pub(crate) fn build_from_map(
    overrides: &BTreeMap<String, f64>,
) -> Result<(SystemModel, ClosedLoopDesign)> {
    vtol(&VtolParams::from_map(overrides)?)
}

pub(crate) fn default_map() -> BTreeMap<String, f64> {
    VtolParams::default().to_map()
}

pub fn vtol(params: &VtolParams) -> Result<(SystemModel, ClosedLoopDesign)> {
    let p = params.clone();
    ensure(p.epsilon > 0.0, "vtol: epsilon must be positive")?;
    ensure(p.gravity > 0.0, "vtol: g must be positive")?;
    ensure(
        p.lambda1 > 0.0 && p.lambda2 > 0.0 && p.lambda3 > 0.0,
        "vtol: lambda1, lambda2, lambda3 must be positive",
    )?;
    ensure(
        p.lambda3 > 5.0 * p.lambda1 * p.epsilon,
        "vtol: lambda3 must exceed 5 lambda1 epsilon",
    )?;
    ensure(
        p.lambda1 / p.epsilon > p.lambda2,
        "vtol: lambda2 must stay below lambda1 / epsilon",
    )?;
    ensure(
        p.lambda2 > p.lambda1 / (2.0 * p.epsilon),
        "vtol: lambda2 must exceed lambda1 / (2 epsilon)",
    )?;
    ensure(p.k1 > 0.0 && p.k2 > 0.0, "vtol: gains must be positive")?;
    ensure(p.kv > 0.0, "vtol: kv must be positive")?;

    let q_d = dvector![p.x_d, p.y_d, 0.0];
    let (e, g) = (p.epsilon, p.gravity);

    let mass: MatrixMap = Arc::new(|_q: &DVector<f64>| DMatrix::identity(3, 3));

    let potential = ScalarField::with_gradient(
        Arc::new(move |q: &DVector<f64>| g / e * q[2].cos()),
        Arc::new(move |q: &DVector<f64>| dvector![0.0, 0.0, -g / e * q[2].sin()]),
    );

    let input: MatrixMap = Arc::new(move |q: &DVector<f64>| {
        let (sin, cos) = q[2].sin_cos();
        dmatrix![
            1.0, 0.0;
            0.0, 1.0;
            cos / e, sin / e
        ]
    });

    let annihilator: MatrixMap = Arc::new(move |q: &DVector<f64>| {
        let (sin, cos) = q[2].sin_cos();
        DMatrix::from_row_slice(1, 3, &[cos, sin, -e])
    });

    let model = SystemModel::new(3, 2, mass, potential, input, annihilator, q_d.clone())
        .with_params(p.to_map());

    // The published matrix acts as M_d; store its inverse as the design map.
    let p_md = p.clone();
    let md_inv: MatrixMap = Arc::new(move |q: &DVector<f64>| {
        published_design_matrix(&p_md, q[2])
            .try_inverse()
            .unwrap_or_else(|| DMatrix::from_element(3, 3, f64::NAN))
    });

    let c1 = p.lambda3 / (p.lambda1 - p.lambda2 * e);
    let c2 = (p.lambda3 - p.lambda1 * e) / (p.lambda1 - p.lambda2 * e);
    let basis = vec![
        ScalarField::with_gradient(
            Arc::new(move |q: &DVector<f64>| q[0] - c1 * q[2].sin()),
            Arc::new(move |q: &DVector<f64>| dvector![1.0, 0.0, -c1 * q[2].cos()]),
        ),
        ScalarField::with_gradient(
            Arc::new(move |q: &DVector<f64>| q[1] + c2 * (q[2].cos() - 1.0)),
            Arc::new(move |q: &DVector<f64>| dvector![0.0, 1.0, -c2 * q[2].sin()]),
        ),
    ];

    let design = ClosedLoopDesign::new(
        md_inv,
        basis,
        vec![p.k1, p.k2],
        DMatrix::identity(2, 2) * p.kv,
        J2Policy::PointwiseSolve,
        &q_d,
    )
    .with_free_params(BTreeMap::from([
        ("lambda1".into(), p.lambda1),
        ("lambda2".into(), p.lambda2),
        ("lambda3".into(), p.lambda3),
        ("epsilon".into(), e),
    ]));

    Ok((model, design))
}
