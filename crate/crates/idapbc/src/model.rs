//! Mechanical-system and controller-design data model.
//!
//! A [`SystemModel`] holds the open-loop data q -> M(q), V(q), G(q), G_perp(q)
//! together with the desired equilibrium and a sampling workspace. A
//! [`ClosedLoopDesign`] holds the desired inertia (as its inverse map), the
//! basis functions of the homogeneous desired potential with their gains, the
//! damping gain and the skew-interconnection policy. Everything is immutable
//! after construction and safe to share across threads.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;

pub type ScalarMap = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
pub type VectorMap = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MatrixMap = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type StateMatrixMap = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Smallest symmetrized eigenvalue accepted as positive definite.
pub const SPD_TOL: f64 = 1e-10;
/// Eigenvalue below which a mass-type matrix counts as singular.
pub const SINGULAR_TOL: f64 = 1e-12;
/// Entrywise bound on G_perp * G.
pub const ANNIHILATOR_TOL: f64 = 1e-10;
/// Bound on |G_perp grad V| at the equilibrium.
pub const EQUILIBRIUM_TOL: f64 = 1e-8;
/// Entrywise bound on J2 + J2'.
pub const SKEW_TOL: f64 = 1e-12;

/// Scalar field with an optional analytic gradient and a central-difference
/// fallback (step 1e-6 * max(1, |q_i|) per coordinate).
#[derive(Clone)]
pub struct ScalarField {
    value: ScalarMap,
    gradient: Option<VectorMap>,
}

impl ScalarField {
    pub fn new(value: ScalarMap) -> Self {
        Self {
            value,
            gradient: None,
        }
    }

    pub fn with_gradient(value: ScalarMap, gradient: VectorMap) -> Self {
        Self {
            value,
            gradient: Some(gradient),
        }
    }

    pub fn value(&self, q: &DVector<f64>) -> f64 {
        (self.value)(q)
    }

    pub fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        match &self.gradient {
            Some(g) => g(q),
            None => linalg::fd_gradient(|x| (self.value)(x), q),
        }
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.gradient.is_some()
    }
}

/// Phase-space point (q, p).
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub q: DVector<f64>,
    pub p: DVector<f64>,
}

impl PhaseState {
    pub fn new(q: DVector<f64>, p: DVector<f64>) -> Self {
        assert_eq!(q.len(), p.len(), "q and p must have equal dimension");
        Self { q, p }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }
}

/// Axis-aligned sampling box around a center configuration.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub center: DVector<f64>,
    pub half_width: DVector<f64>,
}

impl Workspace {
    pub fn uniform(center: DVector<f64>, half_width: f64) -> Self {
        let n = center.len();
        Self {
            center,
            half_width: DVector::from_element(n, half_width),
        }
    }

    pub fn with_half_widths(center: DVector<f64>, half_width: DVector<f64>) -> Self {
        assert_eq!(center.len(), half_width.len());
        Self { center, half_width }
    }

    pub fn contains(&self, q: &DVector<f64>) -> bool {
        q.iter()
            .zip(self.center.iter().zip(self.half_width.iter()))
            .all(|(qi, (ci, hi))| (qi - ci).abs() <= *hi)
    }

    pub fn sample_q<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_iterator(
            self.center.len(),
            self.center
                .iter()
                .zip(self.half_width.iter())
                .map(|(c, h)| rng.random_range(c - h..=c + h)),
        )
    }

    /// Random phase state: q uniform in the box, p uniform in [-1, 1]^n.
    pub fn sample_state<R: Rng>(&self, rng: &mut R) -> PhaseState {
        let q = self.sample_q(rng);
        let p = DVector::from_iterator(
            self.center.len(),
            (0..self.center.len()).map(|_| rng.random_range(-1.0..=1.0)),
        );
        PhaseState::new(q, p)
    }
}

/// Open-loop mechanical system in port-Hamiltonian form.
#[derive(Clone)]
pub struct SystemModel {
    pub n: usize,
    pub m: usize,
    mass_matrix: MatrixMap,
    pub potential: ScalarField,
    input_map: MatrixMap,
    input_annihilator: MatrixMap,
    pub equilibrium: DVector<f64>,
    pub params: BTreeMap<String, f64>,
    pub workspace: Workspace,
}

impl std::fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SystemModel")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("equilibrium", &self.equilibrium)
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

impl SystemModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        m: usize,
        mass_matrix: MatrixMap,
        potential: ScalarField,
        input_map: MatrixMap,
        input_annihilator: MatrixMap,
        equilibrium: DVector<f64>,
    ) -> Self {
        assert!(m < n, "underactuated systems require m < n");
        assert_eq!(equilibrium.len(), n);
        let workspace = Workspace::uniform(equilibrium.clone(), 0.5);
        Self {
            n,
            m,
            mass_matrix,
            potential,
            input_map,
            input_annihilator,
            equilibrium,
            params: BTreeMap::new(),
            workspace,
        }
    }

    pub fn with_params(mut self, params: BTreeMap<String, f64>) -> Self {
        self.params = params;
        self
    }

    pub fn with_workspace(mut self, workspace: Workspace) -> Self {
        assert_eq!(workspace.center.len(), self.n);
        self.workspace = workspace;
        self
    }

    pub fn mass(&self, q: &DVector<f64>) -> DMatrix<f64> {
        (self.mass_matrix)(q)
    }

    /// Inverse of M(q); errors if the smallest symmetrized eigenvalue is
    /// below the singularity threshold.
    pub fn mass_inverse(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        invert_mass_like(&self.mass(q), "M", q)
    }

    pub fn input(&self, q: &DVector<f64>) -> DMatrix<f64> {
        (self.input_map)(q)
    }

    pub fn annihilator(&self, q: &DVector<f64>) -> DMatrix<f64> {
        (self.input_annihilator)(q)
    }

    pub fn potential_value(&self, q: &DVector<f64>) -> f64 {
        self.potential.value(q)
    }

    pub fn potential_gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        self.potential.gradient(q)
    }
}

pub(crate) fn invert_mass_like(
    mat: &DMatrix<f64>,
    which: &'static str,
    q: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let min_eig = linalg::min_sym_eigenvalue(mat);
    if !min_eig.is_finite() || min_eig <= SINGULAR_TOL {
        return Err(Error::SingularMass {
            which,
            at: q.iter().copied().collect(),
            min_eig,
        });
    }
    mat.clone().try_inverse().ok_or(Error::SingularMass {
        which,
        at: q.iter().copied().collect(),
        min_eig,
    })
}

/// Policy for the free skew-symmetric interconnection matrix J2.
#[derive(Clone)]
pub enum J2Policy {
    /// J2 = 0 everywhere.
    Zero,
    /// Caller-supplied map (q, p) -> J2, validated for skew symmetry.
    Supplied(StateMatrixMap),
    /// Solve the kinetic matching row pointwise at every evaluation
    /// (minimal-norm, exact for underactuation degree one).
    PointwiseSolve,
}

impl std::fmt::Debug for J2Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            J2Policy::Zero => write!(f, "Zero"),
            J2Policy::Supplied(_) => write!(f, "Supplied"),
            J2Policy::PointwiseSolve => write!(f, "PointwiseSolve"),
        }
    }
}

/// Closed-loop design data: desired inertia inverse, homogeneous potential
/// basis with recorded offsets, gains, damping and the J2 policy.
#[derive(Clone)]
pub struct ClosedLoopDesign {
    desired_inertia_inverse: MatrixMap,
    pub vdh_basis: Vec<ScalarField>,
    pub vdh_offsets: Vec<f64>,
    pub gains: Vec<f64>,
    pub damping: DMatrix<f64>,
    pub j2_policy: J2Policy,
    pub free_params: BTreeMap<String, f64>,
}

impl std::fmt::Debug for ClosedLoopDesign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClosedLoopDesign")
            .field("basis", &self.vdh_basis.len())
            .field("gains", &self.gains)
            .field("damping", &self.damping)
            .field("j2_policy", &self.j2_policy)
            .field("free_params", &self.free_params)
            .finish_non_exhaustive()
    }
}

impl ClosedLoopDesign {
    /// Records the basis offsets V*_i at the supplied equilibrium.
    pub fn new(
        desired_inertia_inverse: MatrixMap,
        vdh_basis: Vec<ScalarField>,
        gains: Vec<f64>,
        damping: DMatrix<f64>,
        j2_policy: J2Policy,
        equilibrium: &DVector<f64>,
    ) -> Self {
        assert_eq!(vdh_basis.len(), gains.len(), "one gain per basis function");
        let vdh_offsets = vdh_basis.iter().map(|f| f.value(equilibrium)).collect();
        Self {
            desired_inertia_inverse,
            vdh_basis,
            vdh_offsets,
            gains,
            damping,
            j2_policy,
            free_params: BTreeMap::new(),
        }
    }

    pub fn with_free_params(mut self, params: BTreeMap<String, f64>) -> Self {
        self.free_params = params;
        self
    }

    pub fn md_inverse(&self, q: &DVector<f64>) -> DMatrix<f64> {
        (self.desired_inertia_inverse)(q)
    }

    /// M_d(q), inverted from the stored inverse map.
    pub fn md(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        invert_mass_like(&self.md_inverse(q), "M_d^{-1}", q)
    }

    /// Shaped potential V_dh(q) = sum_i (k_i / 2) (f_i(q) - f_i*)^2.
    pub fn vdh_value(&self, q: &DVector<f64>) -> f64 {
        self.vdh_basis
            .iter()
            .zip(self.vdh_offsets.iter().zip(self.gains.iter()))
            .map(|(f, (off, k))| {
                let d = f.value(q) - off;
                0.5 * k * d * d
            })
            .sum()
    }

    pub fn vdh_gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        let mut grad = DVector::zeros(q.len());
        for (f, (off, k)) in self
            .vdh_basis
            .iter()
            .zip(self.vdh_offsets.iter().zip(self.gains.iter()))
        {
            let d = f.value(q) - off;
            grad += f.gradient(q) * (k * d);
        }
        grad
    }
}

/// One validated invariant with its worst observed violation.
#[derive(Debug, Clone)]
pub struct InvariantCheck {
    pub name: String,
    pub passed: bool,
    pub worst_violation: f64,
    pub threshold: f64,
}

/// Outcome of [`validate_model`] / [`validate_design`].
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub checks: Vec<InvariantCheck>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&InvariantCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    fn push(&mut self, name: &str, worst: f64, threshold: f64) {
        self.checks.push(InvariantCheck {
            name: name.to_string(),
            passed: worst <= threshold,
            worst_violation: worst,
            threshold,
        });
    }
}

fn expect_shape(
    context: &str,
    mat: &DMatrix<f64>,
    rows: usize,
    cols: usize,
) -> Result<()> {
    if mat.nrows() != rows || mat.ncols() != cols {
        return Err(Error::DimensionMismatch {
            context: context.to_string(),
            expected: format!("{rows}x{cols}"),
            got: format!("{}x{}", mat.nrows(), mat.ncols()),
        });
    }
    Ok(())
}

/// Checks the structural invariants of a model on the supplied sample
/// configurations. Shape errors and singular mass matrices are hard errors;
/// everything else lands in the report.
pub fn validate_model(model: &SystemModel, samples: &[DVector<f64>]) -> Result<ValidationReport> {
    if samples.is_empty() {
        return Err(Error::DimensionMismatch {
            context: "validate_model samples".into(),
            expected: "at least one sample".into(),
            got: "0".into(),
        });
    }
    let n = model.n;
    let m = model.m;
    let mut report = ValidationReport::default();

    let mut worst_mass = f64::INFINITY; // min eigenvalue of M over samples
    let mut worst_rank = f64::INFINITY; // smallest singular value of G
    let mut worst_annihilation: f64 = 0.0; // max |G_perp G| entry

    for q in samples {
        if q.len() != n {
            return Err(Error::DimensionMismatch {
                context: "sample configuration".into(),
                expected: format!("{n}"),
                got: format!("{}", q.len()),
            });
        }
        let mass = model.mass(q);
        expect_shape("mass_matrix(q)", &mass, n, n)?;
        let min_eig = linalg::min_sym_eigenvalue(&mass);
        if min_eig < SINGULAR_TOL {
            return Err(Error::SingularMass {
                which: "M",
                at: q.iter().copied().collect(),
                min_eig,
            });
        }
        worst_mass = worst_mass.min(min_eig);

        let g = model.input(q);
        expect_shape("input_map(q)", &g, n, m)?;
        let sigma_min = g
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        worst_rank = worst_rank.min(sigma_min);

        let g_perp = model.annihilator(q);
        expect_shape("input_annihilator(q)", &g_perp, n - m, n)?;
        let product = &g_perp * &g;
        worst_annihilation = worst_annihilation.max(product.amax());
    }

    // Positive definiteness is reported as a violation of the SPD floor.
    report.push(
        "mass matrix positive definite (min eig above floor)",
        (SPD_TOL - worst_mass).max(0.0),
        0.0,
    );
    report.push(
        "input map full column rank (min singular value above floor)",
        (SPD_TOL - worst_rank).max(0.0),
        0.0,
    );
    report.push("annihilator kills input map", worst_annihilation, ANNIHILATOR_TOL);

    let q_d = &model.equilibrium;
    let g_perp_d = model.annihilator(q_d);
    let mut worst_row_norm = f64::INFINITY;
    for i in 0..(n - m) {
        worst_row_norm = worst_row_norm.min(g_perp_d.row(i).norm());
    }
    report.push(
        "annihilator rows nonzero at equilibrium",
        (SINGULAR_TOL - worst_row_norm).max(0.0),
        0.0,
    );

    let manifold = (&g_perp_d * model.potential_gradient(q_d)).amax();
    report.push("equilibrium on G_perp grad V = 0 manifold", manifold, EQUILIBRIUM_TOL);

    Ok(report)
}

/// Checks the design invariants (M_d^{-1} SPD on the samples, positive gains,
/// SPD damping, skew J2 when supplied, matching basis/gain/offset lengths).
pub fn validate_design(
    model: &SystemModel,
    design: &ClosedLoopDesign,
    samples: &[DVector<f64>],
) -> Result<ValidationReport> {
    let n = model.n;
    let m = model.m;
    let mut report = ValidationReport::default();

    let mut worst_md = f64::INFINITY;
    for q in samples {
        let md_inv = design.md_inverse(q);
        expect_shape("desired_inertia_inverse(q)", &md_inv, n, n)?;
        worst_md = worst_md.min(linalg::min_sym_eigenvalue(&md_inv));
    }
    report.push(
        "desired inertia inverse positive definite on samples",
        (SPD_TOL - worst_md).max(0.0),
        0.0,
    );

    let gains_ok = !design.gains.is_empty() && design.gains.iter().all(|k| *k > 0.0);
    report.checks.push(InvariantCheck {
        name: "gains positive".into(),
        passed: gains_ok || design.gains.is_empty(),
        worst_violation: design
            .gains
            .iter()
            .copied()
            .fold(0.0f64, |acc, k| acc.max(-k.min(0.0))),
        threshold: 0.0,
    });

    expect_shape("damping", &design.damping, m, m)?;
    let kv_min = linalg::min_sym_eigenvalue(&design.damping);
    report.push("damping positive definite", (SPD_TOL - kv_min).max(0.0), 0.0);
    let kv_asym = (&design.damping - design.damping.transpose()).amax();
    report.push("damping symmetric", kv_asym, SKEW_TOL.max(1e-12));

    if let J2Policy::Supplied(map) = &design.j2_policy {
        let mut worst_skew: f64 = 0.0;
        for q in samples {
            let p = DVector::from_element(n, 1.0);
            let j2 = map(q, &p);
            expect_shape("j2(q, p)", &j2, n, n)?;
            worst_skew = worst_skew.max((&j2 + j2.transpose()).amax());
        }
        report.push("supplied J2 skew symmetric", worst_skew, SKEW_TOL);
    }

    if design.vdh_basis.len() != design.vdh_offsets.len() {
        return Err(Error::DimensionMismatch {
            context: "vdh offsets".into(),
            expected: format!("{}", design.vdh_basis.len()),
            got: format!("{}", design.vdh_offsets.len()),
        });
    }

    Ok(report)
}


/// Deterministic workspace samples for validation and residual scans.
pub fn sample_workspace(model: &SystemModel, count: usize, seed: u64) -> Vec<DVector<f64>> {
    use rand::SeedableRng;
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    (0..count).map(|_| model.workspace.sample_q(&mut rng)).collect()
}

/// Deterministic phase-state samples (q in the box, p in [-1, 1]^n).
pub fn sample_states(model: &SystemModel, count: usize, seed: u64) -> Vec<PhaseState> {
    use rand::SeedableRng;
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    (0..count)
        .map(|_| model.workspace.sample_state(&mut rng))
        .collect()
}
