//! JSON report types and the CSV writer. Matrices are serialized row-major
//! with explicit dimensions; every numeric is checked finite before writing;
//! CSV carries 17 significant digits.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixJson {
    pub fn from_matrix(mat: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(mat.nrows() * mat.ncols());
        for i in 0..mat.nrows() {
            for j in 0..mat.ncols() {
                data.push(mat[(i, j)]);
            }
        }
        Self {
            rows: mat.nrows(),
            cols: mat.ncols(),
            data,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub benchmark: String,
    pub params: BTreeMap<String, f64>,
    pub gains: Vec<f64>,
    pub tolerance: f64,
    pub satisfied: bool,
    pub scenario: Option<String>,
    pub rho: Option<f64>,
    pub k_min: Option<f64>,
    pub total_eigenvalues: Vec<f64>,
    pub vdh_hessian: MatrixJson,
    pub eta_hessian: MatrixJson,
}

#[derive(Debug, Serialize)]
pub struct ThetaReport {
    /// Published closed-form theta_1 (omits the |G_perp|^2 normalization).
    pub theta1_published: f64,
    /// Coupling entry of the correction Hessian, 2 H(1,3).
    pub theta1_from_hessian: f64,
    /// Lower-right entry of the correction Hessian, H(3,3).
    pub theta2_from_hessian: f64,
}

#[derive(Debug, Serialize)]
pub struct GainsReport {
    pub benchmark: Option<String>,
    pub mode: String,
    pub scenario: Option<String>,
    pub rho: Option<f64>,
    pub k_min: Option<f64>,
    pub feasible: Option<bool>,
    pub gains: Option<Vec<f64>>,
    pub lambda_min: Option<f64>,
    pub infeasible_certificate: Option<Vec<f64>>,
    pub certificate_curvature: Option<f64>,
    pub theta: Option<ThetaReport>,
}

#[derive(Debug, Serialize)]
pub struct SimulateSummary {
    pub benchmark: String,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub rtol: f64,
    pub atol: f64,
    pub sample_interval: f64,
    pub samples: usize,
    pub termination: String,
    pub escape_time: Option<f64>,
    pub condition_satisfied: Option<bool>,
    pub final_error: f64,
    pub settling_time: Option<f64>,
    pub lyapunov_min: f64,
    pub lyapunov_max: f64,
    pub max_lyapunov_increment: f64,
    pub energy_audit_defect: f64,
    pub accepted_steps: u64,
    pub rejected_steps: u64,
    pub rhs_evaluations: u64,
}

#[derive(Debug, Serialize)]
pub struct ResidualStats {
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Serialize)]
pub struct ResidualsSummary {
    pub benchmark: String,
    pub samples: usize,
    pub seed: u64,
    pub homogeneous: ResidualStats,
    pub kinetic: ResidualStats,
    pub potential: ResidualStats,
}

/// Serializes to pretty JSON after checking every number is finite, writes
/// the file and echoes the payload to stdout.
pub fn emit_json<T: Serialize>(path: &Path, report: &T) -> Result<()> {
    let value = serde_json::to_value(report).context("serializing report")?;
    ensure_finite(&value)?;
    let text = serde_json::to_string_pretty(&value).context("rendering report")?;
    std::fs::write(path, format!("{text}\n"))
        .with_context(|| format!("writing {}", path.display()))?;
    println!("{text}");
    Ok(())
}

fn ensure_finite(value: &serde_json::Value) -> Result<()> {
    match value {
        serde_json::Value::Number(n) => {
            if n.as_f64().map(|x| !x.is_finite()).unwrap_or(false) {
                bail!("report contains a non-finite number");
            }
        }
        // serde_json encodes NaN/inf as null, so a null inside an array of
        // numbers is also a finiteness failure.
        serde_json::Value::Array(items) => {
            for item in items {
                if item.is_null() {
                    bail!("report contains a non-finite number");
                }
                ensure_finite(item)?;
            }
        }
        serde_json::Value::Object(map) => {
            for item in map.values() {
                ensure_finite(item)?;
            }
        }
        _ => {}
    }
    Ok(())
}

/// CSV with a header row, comma separator and 17 significant digits.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let mut first = true;
        for value in row {
            if !value.is_finite() {
                bail!("CSV contains a non-finite number");
            }
            if !first {
                write!(out, ",")?;
            }
            write!(out, "{value:.16e}")?;
            first = false;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}
