//! Flat key-value run configuration with dotted sections, e.g.
//!
//! ```text
//! benchmark = acrobot
//! benchmark.params.c1 = 4
//! design.gains = 3000
//! simulate.horizon = 30
//! ```
//!
//! Later sources win: file < --set overrides < dedicated flags.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};

const KNOWN_PREFIXES: &[&str] = &["benchmark.params."];
const KNOWN_KEYS: &[&str] = &[
    "benchmark",
    "design.gains",
    "design.kv",
    "design.j2",
    "verify.tol",
    "gains.min",
    "gains.max",
    "gains.tol",
    "gains.numeric_case",
    "simulate.horizon",
    "simulate.x0",
    "simulate.rtol",
    "simulate.atol",
    "simulate.sample_interval",
    "simulate.escape",
    "residuals.samples",
    "seed",
    "output.dir",
];

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    entries: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut config = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("config parse error at line {}: expected key = value", lineno + 1);
            };
            config.insert(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    pub fn apply_set(&mut self, assignment: &str) -> Result<()> {
        let Some((key, value)) = assignment.split_once('=') else {
            bail!("--set expects KEY=VALUE, got `{assignment}`");
        };
        self.insert(key.trim(), value.trim())
    }

    pub fn insert(&mut self, key: &str, value: &str) -> Result<()> {
        let known = KNOWN_KEYS.contains(&key)
            || KNOWN_PREFIXES.iter().any(|p| key.starts_with(p));
        if !known {
            bail!("config parse error: unknown key `{key}`");
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| {
                v.parse::<f64>()
                    .with_context(|| format!("config value `{key} = {v}` is not a number"))
            })
            .transpose()
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        self.get(key)
            .map(|v| {
                v.parse::<usize>()
                    .with_context(|| format!("config value `{key} = {v}` is not an integer"))
            })
            .transpose()
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        self.get(key)
            .map(|v| {
                v.parse::<u64>()
                    .with_context(|| format!("config value `{key} = {v}` is not an integer"))
            })
            .transpose()
    }

    pub fn get_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key).map(|v| parse_list(v, key)).transpose()
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        self.get(key)
            .map(|v| match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                other => bail!("config value `{key} = {other}` is not a boolean"),
            })
            .transpose()
    }

    /// All `benchmark.params.*` entries parsed as named scalars.
    pub fn benchmark_params(&self) -> Result<BTreeMap<String, f64>> {
        let mut params = BTreeMap::new();
        for (key, value) in &self.entries {
            if let Some(name) = key.strip_prefix("benchmark.params.") {
                let parsed = value.parse::<f64>().with_context(|| {
                    format!("config value `{key} = {value}` is not a number")
                })?;
                params.insert(name.to_string(), parsed);
            }
        }
        Ok(params)
    }
}

pub fn parse_list(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .with_context(|| format!("`{what}` entry `{part}` is not a number"))
        })
        .collect()
}
