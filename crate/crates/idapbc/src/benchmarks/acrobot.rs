//! Acrobot: 2R serial robot with only the second joint actuated. The desired
//! inertia is a constant 2x2 matrix and the shaped potential uses the single
//! basis function q1 - mu q2. With the default a2 = a1 / (1 - sqrt(c1/c2))
//! the basis solves the homogeneous PDE exactly.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, dmatrix, dvector};

use super::{ensure, unknown_key};
use crate::error::Result;
use crate::model::{ClosedLoopDesign, J2Policy, MatrixMap, ScalarField, SystemModel};

#[derive(Debug, Clone)]
pub struct AcrobotParams {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub gravity: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub k: f64,
    pub kv: f64,
}

impl Default for AcrobotParams {
    fn default() -> Self {
        Self {
            c1: 4.0,
            c2: 1.0,
            c3: 1.5,
            c4: 1.5,
            c5: 1.0,
            gravity: 9.81,
            a1: 1.0,
            a2: -1.0, // = a1 / (1 - sqrt(c1/c2)), kinetic-PDE compatible
            a3: 2.0,
            k: 3000.0,
            kv: 1.0,
        }
    }
}

impl AcrobotParams {
    pub fn to_map(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            ("c1".into(), self.c1),
            ("c2".into(), self.c2),
            ("c3".into(), self.c3),
            ("c4".into(), self.c4),
            ("c5".into(), self.c5),
            ("g".into(), self.gravity),
            ("a1".into(), self.a1),
            ("a2".into(), self.a2),
            ("a3".into(), self.a3),
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
                "a2" => p.a2 = *value,
                "a3" => p.a3 = *value,
                "k" => p.k = *value,
                "kv" => p.kv = *value,
                other => return Err(unknown_key("acrobot", other)),
            }
        }
        Ok(p)
    }
}

/// mu = -1 / (1 + sqrt(c1/c2)).
pub fn acrobot_mu(c1: f64, c2: f64) -> f64 {
    -1.0 / (1.0 + (c1 / c2).sqrt())
}

/// Rank-one alpha matrix of the two-DOF decomposition, [[1, -mu], [-mu, mu^2]].
pub fn acrobot_alpha(mu: f64) -> DMatrix<f64> {
    dmatrix![1.0, -mu; -mu, mu * mu]
}

/// Published closed-form beta matrix (the eta Hessian at the origin), valid
/// for any constant desired inertia [[a1, a2], [a2, a3]].
pub fn acrobot_beta_published(p: &AcrobotParams) -> DMatrix<f64> {
    let g = p.gravity;
    let det = p.a1 * p.a3 - p.a2 * p.a2;
    let row1 = p.a3 * p.c1 + p.a3 * p.c2 + 2.0 * p.a3 * p.c3 - p.a2 * p.c2 - p.a2 * p.c3;
    let row2 = p.a3 * p.c2 + p.a3 * p.c3 - p.a2 * p.c2;
    let b1 = (-p.c4 * g - p.c5 * g) / det * row1;
    let b2 = (-p.c5 * g) / (2.0 * det) * row1 + (-p.c4 * g - p.c5 * g) / (2.0 * det) * row2;
    let b3 = (-p.c5 * g) / det * row2;
    dmatrix![b1, b2; b2, b3]
}

pub(crate) fn build_from_map(
    overrides: &BTreeMap<String, f64>,
) -> Result<(SystemModel, ClosedLoopDesign)> {
    acrobot(&AcrobotParams::from_map(overrides)?)
}

pub(crate) fn default_map() -> BTreeMap<String, f64> {
    AcrobotParams::default().to_map()
}

pub fn acrobot(params: &AcrobotParams) -> Result<(SystemModel, ClosedLoopDesign)> {
    let p = params.clone();
    ensure(
        p.c1 > 0.0 && p.c2 > 0.0 && p.c3 > 0.0 && p.c4 > 0.0 && p.c5 > 0.0,
        "acrobot: inertia constants c1..c5 must be positive",
    )?;
    ensure(p.gravity > 0.0, "acrobot: g must be positive")?;
    ensure(
        p.c1 * p.c2 > p.c3 * p.c3,
        "acrobot: c1 c2 must exceed c3^2 so M stays positive definite",
    )?;
    ensure(p.c1 != p.c2, "acrobot: c1 = c2 makes the a3 bound singular")?;
    let s = (p.c1 / p.c2).sqrt();
    let bound = p.a2 / (1.0 - s);
    ensure(
        p.a3 > bound,
        "acrobot: a3 must exceed a2 / (1 - sqrt(c1/c2))",
    )?;
    ensure(p.a1 > 0.0, "acrobot: a1 must be positive")?;
    ensure(
        p.a1 * p.a3 - p.a2 * p.a2 > 0.0,
        "acrobot: desired inertia must be positive definite",
    )?;
    ensure(p.k > 0.0, "acrobot: k must be positive")?;
    ensure(p.kv > 0.0, "acrobot: kv must be positive")?;

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

    let input: MatrixMap = Arc::new(|_q: &DVector<f64>| dmatrix![0.0; 1.0]);
    let annihilator: MatrixMap = Arc::new(|_q: &DVector<f64>| dmatrix![1.0, 0.0]);

    let model = SystemModel::new(2, 1, mass, potential, input, annihilator, q_d.clone())
        .with_params(p.to_map());

    let det = p.a1 * p.a3 - p.a2 * p.a2;
    let md_inv_const = dmatrix![p.a3 / det, -p.a2 / det; -p.a2 / det, p.a1 / det];
    let md_inv: MatrixMap = Arc::new(move |_q: &DVector<f64>| md_inv_const.clone());

    let mu = acrobot_mu(p.c1, p.c2);
    let basis = vec![ScalarField::with_gradient(
        Arc::new(move |q: &DVector<f64>| q[0] - mu * q[1]),
        Arc::new(move |_q: &DVector<f64>| dvector![1.0, -mu]),
    )];

    let design = ClosedLoopDesign::new(
        md_inv,
        basis,
        vec![p.k],
        dmatrix![p.kv],
        J2Policy::PointwiseSolve,
        &q_d,
    )
    .with_free_params(BTreeMap::from([
        ("a1".into(), p.a1),
        ("a2".into(), p.a2),
        ("a3".into(), p.a3),
        ("mu".into(), mu),
    ]));

    Ok((model, design))
}
