//! The five benchmark systems with their published desired inertias,
//! homogeneous potential bases, parameter constraints and default equilibria.

mod acrobot;
mod cable_robot;
mod cart_pole;
mod pendubot;
mod vtol;

use std::collections::BTreeMap;

pub use acrobot::{acrobot, acrobot_alpha, acrobot_beta_published, acrobot_mu, AcrobotParams};
pub use cable_robot::{cable_lengths, cable_robot, CableRobotParams};
pub use cart_pole::{
    cart_pole, cart_pole_alpha_published, cart_pole_beta_published, cart_pole_constants,
    cart_pole_exponent, CartPoleParams,
};
pub use pendubot::{
    pendubot, pendubot_beta_published, pendubot_deltas, pendubot_exponent, PendubotParams,
};
pub use vtol::{vtol, vtol_theta1_published, VtolParams};

use crate::error::{Error, Result};
use crate::model::{ClosedLoopDesign, SystemModel};

type BuildFn = fn(&BTreeMap<String, f64>) -> Result<(SystemModel, ClosedLoopDesign)>;

pub(crate) fn ensure(cond: bool, message: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::ConstraintViolation(message.to_string()))
    }
}

pub(crate) fn unknown_key(benchmark: &str, key: &str) -> Error {
    Error::ConstraintViolation(format!("unknown {benchmark} parameter `{key}`"))
}

/// Registry entry: name, one-line description, factory from a named-scalar
/// parameter record (unknown keys are rejected) and the default record.
pub struct Benchmark {
    pub name: &'static str,
    pub description: &'static str,
    build_from_map: BuildFn,
    default_map: fn() -> BTreeMap<String, f64>,
}

impl Benchmark {
    pub fn build(&self, overrides: &BTreeMap<String, f64>) -> Result<(SystemModel, ClosedLoopDesign)> {
        (self.build_from_map)(overrides)
    }

    pub fn build_default(&self) -> Result<(SystemModel, ClosedLoopDesign)> {
        (self.build_from_map)(&BTreeMap::new())
    }

    pub fn default_params(&self) -> BTreeMap<String, f64> {
        (self.default_map)()
    }
}

pub static ALL: &[Benchmark] = &[
    Benchmark {
        name: "cable_robot",
        description: "spatial mass suspended from two actuated cables (3 DOF, 2 inputs)",
        build_from_map: cable_robot::build_from_map,
        default_map: cable_robot::default_map,
    },
    Benchmark {
        name: "acrobot",
        description: "2R serial robot actuated at the second joint",
        build_from_map: acrobot::build_from_map,
        default_map: acrobot::default_map,
    },
    Benchmark {
        name: "pendubot",
        description: "2R serial robot actuated at the first joint",
        build_from_map: pendubot::build_from_map,
        default_map: pendubot::default_map,
    },
    Benchmark {
        name: "cart_pole",
        description: "pendulum on a cart, stabilized without partial feedback linearization",
        build_from_map: cart_pole::build_from_map,
        default_map: cart_pole::default_map,
    },
    Benchmark {
        name: "vtol",
        description: "planar VTOL aircraft with strong input coupling (3 DOF, 2 inputs)",
        build_from_map: vtol::build_from_map,
        default_map: vtol::default_map,
    },
];

pub fn by_name(name: &str) -> Option<&'static Benchmark> {
    ALL.iter().find(|b| b.name == name)
}
