use thiserror::Error;

/// Errors surfaced by model validation, matching-equation evaluation,
/// condition checks, the control law, and the simulator.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: String,
        got: String,
    },

    #[error("mass-type matrix {which} is singular or indefinite at q = {at:?} (min eigenvalue {min_eig:.3e})")]
    SingularMass {
        which: &'static str,
        at: Vec<f64>,
        min_eig: f64,
    },

    #[error("no skew interconnection solves the kinetic matching row at this state (coefficient norm {coefficient:.3e}, constant norm {constant:.3e})")]
    NoSolution { coefficient: f64, constant: f64 },

    #[error("annihilator row {row} has zero norm at q = {at:?}")]
    ZeroAnnihilatorRow { row: usize, at: Vec<f64> },

    #[error("configuration is off the equilibrium manifold: |G_perp grad V| = {violation:.3e} exceeds {tol:.1e}")]
    NotAtEquilibrium { violation: f64, tol: f64 },

    #[error("two-DOF decomposition needs n = 2, m = 1 and one basis function (got n = {n}, m = {m}, basis = {basis})")]
    WrongDimensions { n: usize, m: usize, basis: usize },

    #[error("rho = {rho:.6e} is not positive; the free design parameters must change")]
    RhoNotPositive { rho: f64 },

    #[error("beta is negative definite; the desired inertia must be altered")]
    NegativeDefiniteBeta,

    #[error("input Gram matrix is ill conditioned (cond = {cond:.3e})")]
    SingularGram { cond: f64 },

    #[error("integration failed at t = {t:.6}: {reason}")]
    IntegrationFailure { t: f64, reason: String },

    #[error("benchmark constraint violated: {0}")]
    ConstraintViolation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
