//! Spatial underactuated cable-driven robot: a point mass suspended from two
//! cables whose lengths are actuated. M = m I, V = m g y, and the desired
//! inertia equals the open-loop one; the shaped potential uses the basis
//! {x, y^2 + z^2} which solves the homogeneous PDE for any gains.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, dvector};

use super::{ensure, unknown_key};
use crate::error::Result;
use crate::model::{
    ClosedLoopDesign, J2Policy, MatrixMap, ScalarField, SystemModel, Workspace,
};

#[derive(Debug, Clone)]
pub struct CableRobotParams {
    /// End-effector mass.
    pub mass: f64,
    pub gravity: f64,
    /// Horizontal offset of the second cable anchor.
    pub base_offset: f64,
    pub x_d: f64,
    /// Must be negative: the mass hangs below the anchors.
    pub y_d: f64,
    pub z_d: f64,
    pub k1: f64,
    pub k2: f64,
    pub kv: f64,
}

impl Default for CableRobotParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            gravity: 9.81,
            base_offset: 1.0,
            x_d: 0.5,
            y_d: -1.0,
            z_d: 0.0,
            k1: 1.0,
            k2: 1.0,
            kv: 1.0,
        }
    }
}

impl CableRobotParams {
    pub fn to_map(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            ("m".into(), self.mass),
            ("g".into(), self.gravity),
            ("b".into(), self.base_offset),
            ("x_d".into(), self.x_d),
            ("y_d".into(), self.y_d),
            ("z_d".into(), self.z_d),
            ("k1".into(), self.k1),
            ("k2".into(), self.k2),
            ("kv".into(), self.kv),
        ])
    }

    pub fn from_map(overrides: &BTreeMap<String, f64>) -> Result<Self> {
        let mut p = Self::default();
        for (key, value) in overrides {
            match key.as_str() {
                "m" => p.mass = *value,
                "g" => p.gravity = *value,
                "b" => p.base_offset = *value,
                "x_d" => p.x_d = *value,
                "y_d" => p.y_d = *value,
                "z_d" => p.z_d = *value,
                "k1" => p.k1 = *value,
                "k2" => p.k2 = *value,
                "kv" => p.kv = *value,
                other => return Err(unknown_key("cable_robot", other)),
            }
        }
        Ok(p)
    }
}

/// Cable lengths (l1, l2) at the configuration q = (x, y, z).
pub fn cable_lengths(q: &DVector<f64>, base_offset: f64) -> (f64, f64) {
    let l1 = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt();
    let dx = q[0] - base_offset;
    let l2 = (dx * dx + q[1] * q[1] + q[2] * q[2]).sqrt();
    (l1, l2)
}

pub(crate) fn build_from_map(
    overrides: &BTreeMap<String, f64>,
) -> Result<(SystemModel, ClosedLoopDesign)> {
    cable_robot(&CableRobotParams::from_map(overrides)?)
}

pub(crate) fn default_map() -> BTreeMap<String, f64> {
    CableRobotParams::default().to_map()
}

pub fn cable_robot(params: &CableRobotParams) -> Result<(SystemModel, ClosedLoopDesign)> {
    ensure(params.mass > 0.0, "cable_robot: m must be positive")?;
    ensure(params.gravity > 0.0, "cable_robot: g must be positive")?;
    ensure(params.base_offset != 0.0, "cable_robot: b must be nonzero")?;
    ensure(params.y_d < 0.0, "cable_robot: y_d must be negative")?;
    ensure(params.k1 > 0.0 && params.k2 > 0.0, "cable_robot: gains must be positive")?;
    ensure(params.kv > 0.0, "cable_robot: kv must be positive")?;

    let m = params.mass;
    let g = params.gravity;
    let b = params.base_offset;
    let q_d = dvector![params.x_d, params.y_d, params.z_d];

    let mass: MatrixMap = Arc::new(move |_q: &DVector<f64>| DMatrix::identity(3, 3) * m);

    let potential = ScalarField::with_gradient(
        Arc::new(move |q: &DVector<f64>| m * g * q[1]),
        Arc::new(move |_q: &DVector<f64>| dvector![0.0, m * g, 0.0]),
    );

    let input: MatrixMap = Arc::new(move |q: &DVector<f64>| {
        let (l1, l2) = cable_lengths(q, b);
        let mut gmat = DMatrix::zeros(3, 2);
        gmat[(0, 0)] = q[0] / l1;
        gmat[(1, 0)] = q[1] / l1;
        gmat[(2, 0)] = q[2] / l1;
        gmat[(0, 1)] = (q[0] - b) / l2;
        gmat[(1, 1)] = q[1] / l2;
        gmat[(2, 1)] = q[2] / l2;
        gmat
    });

    // Cross product of the two unit cable directions annihilates both columns.
    let annihilator: MatrixMap = Arc::new(move |q: &DVector<f64>| {
        let (l1, l2) = cable_lengths(q, b);
        let u1 = dvector![q[0] / l1, q[1] / l1, q[2] / l1];
        let u2 = dvector![(q[0] - b) / l2, q[1] / l2, q[2] / l2];
        let cross = u1.cross(&u2);
        DMatrix::from_row_slice(1, 3, &[cross[0], cross[1], cross[2]])
    });

    // Keep y strictly negative inside the sampling box.
    let half_y = 0.5f64.min(0.9 * params.y_d.abs());
    let workspace = Workspace::with_half_widths(q_d.clone(), dvector![0.5, half_y, 0.5]);

    let model = SystemModel::new(3, 2, mass, potential, input, annihilator, q_d.clone())
        .with_params(CableRobotParams::to_map(params))
        .with_workspace(workspace);

    let md_inv: MatrixMap = Arc::new(move |_q: &DVector<f64>| DMatrix::identity(3, 3) / m);

    let basis = vec![
        ScalarField::with_gradient(
            Arc::new(|q: &DVector<f64>| q[0]),
            Arc::new(|_q: &DVector<f64>| dvector![1.0, 0.0, 0.0]),
        ),
        ScalarField::with_gradient(
            Arc::new(|q: &DVector<f64>| q[1] * q[1] + q[2] * q[2]),
            Arc::new(|q: &DVector<f64>| dvector![0.0, 2.0 * q[1], 2.0 * q[2]]),
        ),
    ];

    let design = ClosedLoopDesign::new(
        md_inv,
        basis,
        vec![params.k1, params.k2],
        DMatrix::identity(2, 2) * params.kv,
        J2Policy::Zero,
        &q_d,
    );

    Ok((model, design))
}
