//! Command-line front end: config ingestion, subcommand dispatch, JSON/CSV
//! emission. Exit codes: 0 success, 1 error, 2 stability condition not
//! satisfied (verify), 3 infeasible gains (gains).

mod config;
mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::{DVector, Matrix2};

use idapbc::benchmarks::{self, Benchmark};
use idapbc::condition::{
    check_condition, classify_scenario, decompose_two_dof, eta_hessian, feasible_gains_search,
    gain_lower_bound, GainSearchOptions, GainSearchOutcome, LAMBDA_TOL,
};
use idapbc::matching::{homogeneous_residual_max, kinetic_residual, potential_residual};
use idapbc::model::{sample_states, ClosedLoopDesign, J2Policy, PhaseState, SystemModel};
use idapbc::simulator::{convergence_metrics, simulate, SimOptions, Termination};
use idapbc::Error as CoreError;

use config::RunConfig;
use report::{
    GainsReport, MatrixJson, ResidualStats, ResidualsSummary, SimulateSummary, ThetaReport,
    VerifyReport,
};

const EXIT_UNSATISFIED: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "idapbc",
    about = "Synthesis and certification of IDA-PBC controllers on the benchmark systems",
    version
)]
struct Cli {
    /// Flat key-value config file (benchmark.params.c1 = 4, ...).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config entry, repeatable (KEY=VALUE).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory (default: $IDAPBC_OUTPUT_DIR or the working directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for workspace sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DesignArgs {
    /// Benchmark name (see `list`).
    #[arg(long)]
    benchmark: Option<String>,
    /// Set every gain to this value.
    #[arg(long)]
    k: Option<f64>,
    /// Comma-separated gain list matching the benchmark's basis.
    #[arg(long)]
    gains: Option<String>,
    /// Damping gain (K_v = kv * I).
    #[arg(long)]
    kv: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the equilibrium stability condition and print the report.
    Verify {
        #[command(flatten)]
        design: DesignArgs,
        /// Positivity margin for the smallest eigenvalue.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Scenario classification, rho and gain bounds (or a feasibility search).
    Gains {
        #[command(flatten)]
        design: DesignArgs,
        /// Use the published pendubot numeric-case matrices directly.
        #[arg(long = "numeric-case")]
        numeric_case: bool,
        #[arg(long = "min-gain")]
        min_gain: Option<f64>,
        #[arg(long = "max-gain")]
        max_gain: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Integrate the closed loop and write trajectory CSV plus a summary.
    Simulate {
        #[command(flatten)]
        design: DesignArgs,
        /// Initial state q1..qn,p1..pn (default: the equilibrium at rest).
        #[arg(long)]
        x0: Option<String>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        rtol: Option<f64>,
        #[arg(long)]
        atol: Option<f64>,
        #[arg(long = "sample-interval")]
        sample_interval: Option<f64>,
    },
    /// Sample the workspace and write matching-residual norms as CSV.
    Residuals {
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// List the available benchmarks.
    List,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<u8> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for assignment in &cli.sets {
        config.apply_set(assignment)?;
    }
    let out_dir = resolve_out_dir(cli, &config)?;
    let seed = match cli.seed {
        Some(seed) => seed,
        None => config.get_u64("seed")?.unwrap_or(0),
    };

    match &cli.command {
        Command::Verify { design, tol } => {
            let (bench, model, loop_design) = build_system(&config, design)?;
            let tol = resolve_f64(*tol, &config, "verify.tol")?.unwrap_or(LAMBDA_TOL);
            cmd_verify(bench, &model, &loop_design, tol, &out_dir)
        }
        Command::Gains {
            design,
            numeric_case,
            min_gain,
            max_gain,
            tol,
        } => {
            let numeric = *numeric_case
                || config.get_bool("gains.numeric_case")?.unwrap_or(false);
            if numeric {
                return cmd_gains_numeric_case(design.benchmark.as_deref(), &out_dir);
            }
            let (bench, model, loop_design) = build_system(&config, design)?;
            let opts = GainSearchOptions {
                lower: resolve_f64(*min_gain, &config, "gains.min")?.unwrap_or(1e-2),
                upper: resolve_f64(*max_gain, &config, "gains.max")?.unwrap_or(1e6),
                lambda_tol: resolve_f64(*tol, &config, "gains.tol")?.unwrap_or(LAMBDA_TOL),
                ..Default::default()
            };
            cmd_gains(bench, &model, &loop_design, &opts, &out_dir)
        }
        Command::Simulate {
            design,
            x0,
            horizon,
            rtol,
            atol,
            sample_interval,
        } => {
            let (bench, model, loop_design) = build_system(&config, design)?;
            let defaults = SimOptions::default();
            let opts = SimOptions {
                horizon: resolve_f64(*horizon, &config, "simulate.horizon")?.unwrap_or(10.0),
                rtol: resolve_f64(*rtol, &config, "simulate.rtol")?.unwrap_or(defaults.rtol),
                atol: resolve_f64(*atol, &config, "simulate.atol")?.unwrap_or(defaults.atol),
                sample_interval: resolve_f64(*sample_interval, &config, "simulate.sample_interval")?
                    .unwrap_or(defaults.sample_interval),
                escape_half_width: config
                    .get_f64("simulate.escape")?
                    .unwrap_or(defaults.escape_half_width),
                ..defaults
            };
            let x0_text = match x0 {
                Some(text) => Some(text.clone()),
                None => config.get("simulate.x0").map(str::to_string),
            };
            let x0 = parse_initial_state(&model, x0_text.as_deref())?;
            cmd_simulate(bench, &model, &loop_design, &x0, &opts, &out_dir)
        }
        Command::Residuals { design, samples } => {
            let (bench, model, loop_design) = build_system(&config, design)?;
            let samples = match samples {
                Some(n) => *n,
                None => config.get_usize("residuals.samples")?.unwrap_or(50),
            };
            cmd_residuals(bench, &model, &loop_design, samples, seed, &out_dir)
        }
        Command::List => {
            for bench in benchmarks::ALL {
                println!("{:<12} {}", bench.name, bench.description);
            }
            Ok(0)
        }
    }
}

fn resolve_out_dir(cli: &Cli, config: &RunConfig) -> Result<PathBuf> {
    let dir = cli
        .out
        .clone()
        .or_else(|| config.get("output.dir").map(PathBuf::from))
        .or_else(|| std::env::var_os("IDAPBC_OUTPUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}

fn resolve_f64(flag: Option<f64>, config: &RunConfig, key: &str) -> Result<Option<f64>> {
    Ok(match flag {
        Some(value) => Some(value),
        None => config.get_f64(key)?,
    })
}

/// Merges benchmark parameters from the config and design flags, then builds
/// the model/design pair through the benchmark registry.
fn build_system(
    config: &RunConfig,
    args: &DesignArgs,
) -> Result<(&'static Benchmark, SystemModel, ClosedLoopDesign)> {
    let name = args
        .benchmark
        .clone()
        .or_else(|| config.get("benchmark").map(str::to_string))
        .ok_or_else(|| anyhow!("no benchmark selected (use --benchmark or the config file)"))?;
    let bench = benchmarks::by_name(&name)
        .ok_or_else(|| anyhow!("unknown benchmark `{name}` (see `idapbc list`)"))?;

    let mut params = config.benchmark_params()?;
    let defaults = bench.default_params();
    let gain_keys: Vec<&str> = if defaults.contains_key("k") {
        vec!["k"]
    } else {
        vec!["k1", "k2"]
    };

    if let Some(k) = args.k {
        for key in &gain_keys {
            params.insert((*key).to_string(), k);
        }
    }
    let gains_list = match &args.gains {
        Some(text) => Some(config::parse_list(text, "--gains")?),
        None => config.get_list("design.gains")?,
    };
    if let Some(gains) = gains_list {
        if gains.len() != gain_keys.len() {
            bail!(
                "`{name}` takes {} gain(s), got {}",
                gain_keys.len(),
                gains.len()
            );
        }
        for (key, value) in gain_keys.iter().zip(gains) {
            params.insert((*key).to_string(), value);
        }
    }
    if let Some(kv) = resolve_f64(args.kv, config, "design.kv")? {
        params.insert("kv".to_string(), kv);
    }

    let (model, mut design) = bench.build(&params).map_err(core_err)?;
    if let Some(policy) = config.get("design.j2") {
        design.j2_policy = match policy {
            "zero" => J2Policy::Zero,
            "pointwise" => J2Policy::PointwiseSolve,
            other => bail!("design.j2 must be `zero` or `pointwise`, got `{other}`"),
        };
    }
    Ok((bench, model, design))
}

fn core_err(err: CoreError) -> anyhow::Error {
    anyhow!("{err}")
}

fn parse_initial_state(model: &SystemModel, text: Option<&str>) -> Result<PhaseState> {
    let n = model.n;
    match text {
        None => Ok(PhaseState::new(
            model.equilibrium.clone(),
            DVector::zeros(n),
        )),
        Some(text) => {
            let values = config::parse_list(text, "x0")?;
            if values.len() != 2 * n {
                bail!("x0 needs {} entries (q then p), got {}", 2 * n, values.len());
            }
            Ok(PhaseState::new(
                DVector::from_column_slice(&values[..n]),
                DVector::from_column_slice(&values[n..]),
            ))
        }
    }
}

fn cmd_verify(
    bench: &Benchmark,
    model: &SystemModel,
    design: &ClosedLoopDesign,
    tol: f64,
    out_dir: &Path,
) -> Result<u8> {
    let report = check_condition(model, design, tol).map_err(core_err)?;
    let payload = VerifyReport {
        benchmark: bench.name.to_string(),
        params: model.params.clone(),
        gains: design.gains.clone(),
        tolerance: tol,
        satisfied: report.satisfied,
        scenario: report.scenario.map(|s| s.to_string()),
        rho: report.rho,
        k_min: report.k_min,
        total_eigenvalues: report.total_eigenvalues.clone(),
        vdh_hessian: MatrixJson::from_matrix(&report.vdh_hessian),
        eta_hessian: MatrixJson::from_matrix(&report.eta_hessian),
    };
    report::emit_json(&out_dir.join("verify.json"), &payload)?;
    Ok(if report.satisfied { 0 } else { EXIT_UNSATISFIED })
}

fn cmd_gains_numeric_case(benchmark: Option<&str>, out_dir: &Path) -> Result<u8> {
    let alpha = Matrix2::new(1.0, 5.0 / 9.0, 5.0 / 9.0, 25.0 / 81.0);
    let beta = Matrix2::new(-550.0, -420.0, -420.0, -290.0);
    let scenario = classify_scenario(&beta);
    let bound = gain_lower_bound(&alpha, &beta).map_err(core_err)?;
    let payload = GainsReport {
        benchmark: benchmark.map(str::to_string),
        mode: "numeric_case".to_string(),
        scenario: Some(scenario.to_string()),
        rho: Some(bound.rho),
        k_min: Some(bound.k_min),
        feasible: Some(true),
        gains: None,
        lambda_min: None,
        infeasible_certificate: None,
        certificate_curvature: None,
        theta: None,
    };
    report::emit_json(&out_dir.join("gains.json"), &payload)?;
    Ok(0)
}

fn vtol_theta(model: &SystemModel, design: &ClosedLoopDesign) -> Result<ThetaReport> {
    let eta = eta_hessian(model, design, &model.equilibrium).map_err(core_err)?;
    let params = benchmarks::VtolParams::from_map(&model.params).map_err(core_err)?;
    Ok(ThetaReport {
        theta1_published: benchmarks::vtol_theta1_published(&params),
        theta1_from_hessian: 2.0 * eta[(0, 2)],
        theta2_from_hessian: eta[(2, 2)],
    })
}

fn cmd_gains(
    bench: &Benchmark,
    model: &SystemModel,
    design: &ClosedLoopDesign,
    opts: &GainSearchOptions,
    out_dir: &Path,
) -> Result<u8> {
    let path = out_dir.join("gains.json");

    // Two-DOF single-gain designs get the closed-form bound.
    if model.n == 2 && model.m == 1 && design.vdh_basis.len() == 1 {
        let (alpha, beta) = decompose_two_dof(model, design).map_err(core_err)?;
        let scenario = classify_scenario(&beta);
        return match gain_lower_bound(&alpha, &beta) {
            Ok(bound) => {
                let payload = GainsReport {
                    benchmark: Some(bench.name.to_string()),
                    mode: "two_dof".to_string(),
                    scenario: Some(scenario.to_string()),
                    rho: Some(bound.rho),
                    k_min: Some(bound.k_min),
                    feasible: Some(true),
                    gains: Some(vec![bound.k_min]),
                    lambda_min: None,
                    infeasible_certificate: None,
                    certificate_curvature: None,
                    theta: None,
                };
                report::emit_json(&path, &payload)?;
                Ok(0)
            }
            Err(CoreError::RhoNotPositive { rho }) => {
                let payload = GainsReport {
                    benchmark: Some(bench.name.to_string()),
                    mode: "two_dof".to_string(),
                    scenario: Some(scenario.to_string()),
                    rho: Some(rho),
                    k_min: None,
                    feasible: Some(false),
                    gains: None,
                    lambda_min: None,
                    infeasible_certificate: None,
                    certificate_curvature: None,
                    theta: None,
                };
                report::emit_json(&path, &payload)?;
                eprintln!("rho = {rho:.6e} is not positive; adjust the free design parameters");
                Ok(EXIT_INFEASIBLE)
            }
            Err(CoreError::NegativeDefiniteBeta) => {
                let payload = GainsReport {
                    benchmark: Some(bench.name.to_string()),
                    mode: "two_dof".to_string(),
                    scenario: Some(scenario.to_string()),
                    rho: None,
                    k_min: None,
                    feasible: Some(false),
                    gains: None,
                    lambda_min: None,
                    infeasible_certificate: None,
                    certificate_curvature: None,
                    theta: None,
                };
                report::emit_json(&path, &payload)?;
                eprintln!("beta is negative definite; the desired inertia must be altered");
                Ok(EXIT_INFEASIBLE)
            }
            Err(e) => Err(core_err(e)),
        };
    }

    // General case: coordinate feasibility search.
    let theta = if bench.name == "vtol" {
        Some(vtol_theta(model, design)?)
    } else {
        None
    };
    match feasible_gains_search(model, design, opts).map_err(core_err)? {
        GainSearchOutcome::Feasible { gains, lambda_min } => {
            let payload = GainsReport {
                benchmark: Some(bench.name.to_string()),
                mode: "search".to_string(),
                scenario: None,
                rho: None,
                k_min: None,
                feasible: Some(true),
                gains: Some(gains),
                lambda_min: Some(lambda_min),
                infeasible_certificate: None,
                certificate_curvature: None,
                theta,
            };
            report::emit_json(&path, &payload)?;
            Ok(0)
        }
        GainSearchOutcome::Infeasible {
            certificate,
            curvature,
        } => {
            let payload = GainsReport {
                benchmark: Some(bench.name.to_string()),
                mode: "search".to_string(),
                scenario: None,
                rho: None,
                k_min: None,
                feasible: Some(false),
                gains: None,
                lambda_min: None,
                infeasible_certificate: Some(certificate.iter().copied().collect()),
                certificate_curvature: Some(curvature),
                theta,
            };
            report::emit_json(&path, &payload)?;
            eprintln!("no feasible gains: persistent negative curvature {curvature:.3e}");
            Ok(EXIT_INFEASIBLE)
        }
    }
}

fn cmd_simulate(
    bench: &Benchmark,
    model: &SystemModel,
    design: &ClosedLoopDesign,
    x0: &PhaseState,
    opts: &SimOptions,
    out_dir: &Path,
) -> Result<u8> {
    // Structural validation and the condition check warn but do not block.
    let samples = idapbc::model::sample_workspace(model, 20, 0);
    match idapbc::model::validate_model(model, &samples) {
        Ok(report) if !report.all_passed() => {
            for check in report.failed() {
                eprintln!(
                    "warning: model invariant failed: {} (violation {:.3e})",
                    check.name, check.worst_violation
                );
            }
        }
        Ok(_) => {}
        Err(err) => eprintln!("warning: model validation aborted ({err}); simulating anyway"),
    }
    let condition_satisfied = match check_condition(model, design, LAMBDA_TOL) {
        Ok(report) => {
            if !report.satisfied {
                eprintln!("warning: stability condition not satisfied; simulating anyway");
            }
            Some(report.satisfied)
        }
        Err(err) => {
            eprintln!("warning: stability condition unchecked ({err}); simulating anyway");
            None
        }
    };

    let traj = simulate(model, design, x0, opts).map_err(core_err)?;
    let metrics = convergence_metrics(&traj, &model.equilibrium);

    let n = model.n;
    let m = model.m;
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("q{i}")));
    header.extend((1..=n).map(|i| format!("p{i}")));
    header.extend((1..=m).map(|i| format!("u{i}")));
    header.push("H_d".to_string());
    header.push("V_lyap".to_string());
    header.push("V_dot".to_string());

    let rows: Vec<Vec<f64>> = (0..traj.len())
        .map(|i| {
            let mut row = Vec::with_capacity(2 * n + m + 4);
            row.push(traj.times[i]);
            row.extend(traj.states[i].q.iter().copied());
            row.extend(traj.states[i].p.iter().copied());
            row.extend(traj.inputs[i].iter().copied());
            row.push(traj.desired_hamiltonian[i]);
            row.push(traj.lyapunov[i]);
            row.push(traj.lyapunov_rate[i]);
            row
        })
        .collect();
    let csv_path = out_dir.join("simulate.csv");
    report::write_csv(&csv_path, &header, &rows)?;
    eprintln!("wrote {}", csv_path.display());

    let (termination, escape_time) = match traj.termination {
        Termination::Completed => ("completed".to_string(), None),
        Termination::Escaped { time } => ("escaped".to_string(), Some(time)),
    };
    let summary = SimulateSummary {
        benchmark: bench.name.to_string(),
        x0: x0.q.iter().chain(x0.p.iter()).copied().collect(),
        horizon: opts.horizon,
        rtol: opts.rtol,
        atol: opts.atol,
        sample_interval: opts.sample_interval,
        samples: traj.len(),
        termination,
        escape_time,
        condition_satisfied,
        final_error: metrics.final_error,
        settling_time: metrics.settling_time,
        lyapunov_min: metrics.lyapunov_min,
        lyapunov_max: metrics.lyapunov_max,
        max_lyapunov_increment: metrics.max_lyapunov_increment,
        energy_audit_defect: traj.energy_audit_defect(),
        accepted_steps: traj.stats.accepted_steps,
        rejected_steps: traj.stats.rejected_steps,
        rhs_evaluations: traj.stats.rhs_evaluations,
    };
    report::emit_json(&out_dir.join("simulate_summary.json"), &summary)?;
    Ok(0)
}

fn cmd_residuals(
    bench: &Benchmark,
    model: &SystemModel,
    design: &ClosedLoopDesign,
    samples: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<u8> {
    if samples == 0 {
        bail!("residuals needs at least one sample");
    }
    let n = model.n;
    let mut header = vec!["sample".to_string()];
    header.extend((1..=n).map(|i| format!("q{i}")));
    header.extend((1..=n).map(|i| format!("p{i}")));
    header.push("homogeneous".to_string());
    header.push("kinetic".to_string());
    header.push("potential".to_string());

    let states = sample_states(model, samples, seed);
    let mut rows = Vec::with_capacity(samples);
    let mut stats = BTreeMap::from([
        ("homogeneous", (0.0f64, 0.0f64)),
        ("kinetic", (0.0f64, 0.0f64)),
        ("potential", (0.0f64, 0.0f64)),
    ]);
    for (idx, state) in states.iter().enumerate() {
        let hom = homogeneous_residual_max(model, design, &state.q).map_err(core_err)?;
        let kin = kinetic_residual(model, design, &state.q, &state.p)
            .map_err(core_err)?
            .max_abs();
        let pot = potential_residual(model, design, &state.q)
            .map_err(core_err)?
            .max_abs();
        for (key, value) in [("homogeneous", hom), ("kinetic", kin), ("potential", pot)] {
            let entry = stats.get_mut(key).unwrap();
            entry.0 = entry.0.max(value);
            entry.1 += value / samples as f64;
        }
        let mut row = vec![idx as f64];
        row.extend(state.q.iter().copied());
        row.extend(state.p.iter().copied());
        row.extend([hom, kin, pot]);
        rows.push(row);
    }
    let csv_path = out_dir.join("residuals.csv");
    report::write_csv(&csv_path, &header, &rows)?;
    eprintln!("wrote {}", csv_path.display());

    let summary = ResidualsSummary {
        benchmark: bench.name.to_string(),
        samples,
        seed,
        homogeneous: ResidualStats {
            max: stats["homogeneous"].0,
            mean: stats["homogeneous"].1,
        },
        kinetic: ResidualStats {
            max: stats["kinetic"].0,
            mean: stats["kinetic"].1,
        },
        potential: ResidualStats {
            max: stats["potential"].0,
            mean: stats["potential"].1,
        },
    };
    report::emit_json(&out_dir.join("residuals_summary.json"), &summary)?;
    Ok(0)
}
