//! Closed-loop simulation with Lyapunov bookkeeping.
//!
//! The state vector is (q, p, eta, z): eta integrates w(q) qdot so the
//! Lyapunov function V = H_d + eta is well defined even when the covector is
//! not an exact differential, and z integrates the analytic decay rate so the
//! energy audit can compare V increments against integrated rates at
//! integrator accuracy. Integration uses an adaptive Dormand-Prince 5(4) pair
//! with PI step control.

use nalgebra::DVector;

use crate::condition::eta_covector;
use crate::control::{control_input, desired_hamiltonian, lyapunov_rate, open_loop_rhs};
use crate::error::{Error, Result};
use crate::model::{ClosedLoopDesign, PhaseState, SystemModel};

/// Simulation options. The escape box is centered on the equilibrium.
#[derive(Debug, Clone)]
pub struct SimOptions {
    pub horizon: f64,
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    /// Interval between recorded samples.
    pub sample_interval: f64,
    /// Half width of the escape box around the equilibrium, per coordinate.
    pub escape_half_width: f64,
    pub max_steps: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            horizon: 10.0,
            rtol: 1e-9,
            atol: 1e-11,
            max_step: 0.05,
            sample_interval: 0.01,
            escape_half_width: 2.0,
            max_steps: 10_000_000,
        }
    }
}

impl SimOptions {
    pub fn with_horizon(horizon: f64) -> Self {
        Self {
            horizon,
            ..Default::default()
        }
    }
}

/// How a simulation ended.
#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Completed,
    /// The configuration left the escape box; the trajectory is truncated.
    Escaped { time: f64 },
}

#[derive(Debug, Clone, Default)]
pub struct IntegratorStats {
    pub accepted_steps: u64,
    pub rejected_steps: u64,
    pub rhs_evaluations: u64,
    pub rtol: f64,
    pub atol: f64,
}

/// Time-stamped closed-loop trajectory with energy diagnostics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhaseState>,
    pub inputs: Vec<DVector<f64>>,
    /// H_d at each sample.
    pub desired_hamiltonian: Vec<f64>,
    /// V = H_d + eta at each sample.
    pub lyapunov: Vec<f64>,
    /// Analytic decay rate at each sample.
    pub lyapunov_rate: Vec<f64>,
    /// Running quadrature of the decay rate (energy-audit reference).
    pub rate_quadrature: Vec<f64>,
    /// Accumulated correction functional eta at each sample.
    pub eta: Vec<f64>,
    pub stats: IntegratorStats,
    pub termination: Termination,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &PhaseState {
        self.states.last().expect("trajectory has samples")
    }

    /// Largest positive increment of V between consecutive samples.
    pub fn max_lyapunov_increment(&self) -> f64 {
        self.lyapunov
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Largest |dV - d(integral of rate)| between consecutive samples.
    pub fn energy_audit_defect(&self) -> f64 {
        self.lyapunov
            .windows(2)
            .zip(self.rate_quadrature.windows(2))
            .map(|(v, z)| ((v[1] - v[0]) - (z[1] - z[0])).abs())
            .fold(0.0, f64::max)
    }
}

/// Convergence summary of a trajectory.
#[derive(Debug, Clone)]
pub struct ConvergenceMetrics {
    pub final_error: f64,
    /// First time after which the configuration error stays inside the
    /// 2 percent band of the initial error (absolute floor 1e-9).
    pub settling_time: Option<f64>,
    pub lyapunov_min: f64,
    pub lyapunov_max: f64,
    /// Monotonicity violation measure.
    pub max_lyapunov_increment: f64,
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;
const PI_ALPHA: f64 = 0.7 / 5.0;
const PI_BETA: f64 = 0.4 / 5.0;
const H_MIN: f64 = 1e-13;

struct ClosedLoopRhs<'a> {
    model: &'a SystemModel,
    design: &'a ClosedLoopDesign,
    evals: u64,
}

impl<'a> ClosedLoopRhs<'a> {
    /// y = [q, p, eta, z]; returns dy/dt.
    fn eval(&mut self, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.evals += 1;
        let n = self.model.n;
        let q = y.rows(0, n).into_owned();
        let p = y.rows(n, n).into_owned();
        let u = control_input(self.model, self.design, &q, &p)?.u;
        let (q_dot, p_dot) = open_loop_rhs(self.model, &q, &p, &u)?;
        let w = eta_covector(self.model, self.design, &q)?;
        let eta_dot = w.transpose().dot(&q_dot);
        let z_dot = lyapunov_rate(self.model, self.design, &q, &p);
        let mut dy = DVector::zeros(2 * n + 2);
        dy.rows_mut(0, n).copy_from(&q_dot);
        dy.rows_mut(n, n).copy_from(&p_dot);
        dy[2 * n] = eta_dot;
        dy[2 * n + 1] = z_dot;
        Ok(dy)
    }
}

fn error_norm(err: &DVector<f64>, y_old: &DVector<f64>, y_new: &DVector<f64>, rtol: f64, atol: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..err.len() {
        let scale = atol + rtol * y_old[i].abs().max(y_new[i].abs());
        let e = err[i] / scale;
        acc += e * e;
    }
    (acc / err.len() as f64).sqrt()
}

/// Integrates the closed loop from `x0` and records diagnostics every
/// `sample_interval`. The caller is expected to have validated the model and
/// checked the stability condition; the simulation itself only enforces the
/// escape box.
pub fn simulate(
    model: &SystemModel,
    design: &ClosedLoopDesign,
    x0: &PhaseState,
    opts: &SimOptions,
) -> Result<Trajectory> {
    if opts.horizon <= 0.0 || opts.rtol <= 0.0 || opts.atol <= 0.0 {
        return Err(Error::IntegrationFailure {
            t: 0.0,
            reason: "horizon and tolerances must be positive".into(),
        });
    }
    let n = model.n;
    if x0.dim() != n {
        return Err(Error::DimensionMismatch {
            context: "initial state".into(),
            expected: format!("{n}"),
            got: format!("{}", x0.dim()),
        });
    }

    let mut rhs = ClosedLoopRhs {
        model,
        design,
        evals: 0,
    };

    let mut y = DVector::zeros(2 * n + 2);
    y.rows_mut(0, n).copy_from(&x0.q);
    y.rows_mut(n, n).copy_from(&x0.p);

    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        inputs: Vec::new(),
        desired_hamiltonian: Vec::new(),
        lyapunov: Vec::new(),
        lyapunov_rate: Vec::new(),
        rate_quadrature: Vec::new(),
        eta: Vec::new(),
        stats: IntegratorStats {
            rtol: opts.rtol,
            atol: opts.atol,
            ..Default::default()
        },
        termination: Termination::Completed,
    };

    let record = |traj: &mut Trajectory, t: f64, y: &DVector<f64>| -> Result<()> {
        let q = y.rows(0, n).into_owned();
        let p = y.rows(n, n).into_owned();
        let u = control_input(model, design, &q, &p)?.u;
        let eta = y[2 * n];
        let hd = desired_hamiltonian(design, &q, &p);
        traj.times.push(t);
        traj.inputs.push(u);
        traj.desired_hamiltonian.push(hd);
        traj.lyapunov.push(hd + eta);
        traj.lyapunov_rate.push(lyapunov_rate(model, design, &q, &p));
        traj.rate_quadrature.push(y[2 * n + 1]);
        traj.eta.push(eta);
        traj.states.push(PhaseState::new(q, p));
        Ok(())
    };

    record(&mut traj, 0.0, &y)?;

    let escaped = |q: &DVector<f64>| -> bool {
        (0..n).any(|i| (q[i] - model.equilibrium[i]).abs() > opts.escape_half_width)
    };

    let mut t = 0.0;
    let mut h = opts.max_step.min(opts.sample_interval).min(1e-2);
    let mut err_prev: f64 = 1.0;
    let mut next_sample = opts.sample_interval;
    let mut k: Vec<DVector<f64>> = vec![DVector::zeros(2 * n + 2); 7];

    while t < opts.horizon - 1e-12 {
        if traj.stats.accepted_steps + traj.stats.rejected_steps >= opts.max_steps {
            return Err(Error::IntegrationFailure {
                t,
                reason: format!("exceeded {} steps", opts.max_steps),
            });
        }
        let target = next_sample.min(opts.horizon);
        h = h.min(opts.max_step).min(target - t);
        if h < H_MIN {
            return Err(Error::IntegrationFailure {
                t,
                reason: "step size collapsed".into(),
            });
        }

        k[0] = rhs.eval(&y)?;
        for stage in 1..7 {
            let mut y_stage = y.clone();
            for (j, kj) in k.iter().take(stage).enumerate() {
                if A[stage][j] != 0.0 {
                    y_stage += kj * (h * A[stage][j]);
                }
            }
            let _ = C[stage]; // autonomous dynamics
            k[stage] = rhs.eval(&y_stage)?;
        }

        let mut y5 = y.clone();
        let mut y4 = y.clone();
        for (j, kj) in k.iter().enumerate() {
            if B5[j] != 0.0 {
                y5 += kj * (h * B5[j]);
            }
            if B4[j] != 0.0 {
                y4 += kj * (h * B4[j]);
            }
        }
        let err_vec = &y5 - &y4;
        let err = error_norm(&err_vec, &y, &y5, opts.rtol, opts.atol);

        if err <= 1.0 {
            traj.stats.accepted_steps += 1;
            t += h;
            y = y5;
            if !y.iter().all(|v| v.is_finite()) {
                return Err(Error::IntegrationFailure {
                    t,
                    reason: "state became non-finite".into(),
                });
            }

            if (t - target).abs() < 1e-12 && (target - next_sample).abs() < 1e-12 {
                record(&mut traj, t, &y)?;
                next_sample += opts.sample_interval;
            } else if (t - opts.horizon).abs() < 1e-12 {
                record(&mut traj, t, &y)?;
            }

            let q_now = y.rows(0, n).into_owned();
            if escaped(&q_now) {
                if *traj.times.last().unwrap() < t {
                    record(&mut traj, t, &y)?;
                }
                traj.termination = Termination::Escaped { time: t };
                break;
            }

            let err_floor = err.max(1e-10);
            let factor = SAFETY * err_floor.powf(-PI_ALPHA) * err_prev.powf(PI_BETA);
            h *= factor.clamp(FAC_MIN, FAC_MAX);
            err_prev = err_floor;
        } else {
            traj.stats.rejected_steps += 1;
            let factor = SAFETY * err.powf(-PI_ALPHA);
            h *= factor.clamp(FAC_MIN, 1.0);
        }
    }

    traj.stats.rhs_evaluations = rhs.evals;
    Ok(traj)
}

/// Summarizes convergence toward `q_d`.
pub fn convergence_metrics(traj: &Trajectory, q_d: &DVector<f64>) -> ConvergenceMetrics {
    assert!(!traj.is_empty(), "trajectory must be nonempty");
    let errors: Vec<f64> = traj
        .states
        .iter()
        .map(|s| (&s.q - q_d).norm())
        .collect();
    let final_error = *errors.last().unwrap();
    let band = (0.02 * errors[0]).max(1e-9);
    let mut settling_time = None;
    for i in 0..errors.len() {
        if errors[i..].iter().all(|e| *e <= band) {
            settling_time = Some(traj.times[i]);
            break;
        }
    }
    let lyapunov_min = traj.lyapunov.iter().copied().fold(f64::INFINITY, f64::min);
    let lyapunov_max = traj
        .lyapunov
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    ConvergenceMetrics {
        final_error,
        settling_time,
        lyapunov_min,
        lyapunov_max,
        max_lyapunov_increment: traj.max_lyapunov_increment(),
    }
}
