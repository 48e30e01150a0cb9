//! Experiment configuration: JSON schema, dotted-path overrides, and the
//! canonical content hash that reproducibility checks key on.
//!
//! A config is kept in two forms: the raw `serde_json::Value` (what the
//! hash and the echoed `config.json` are computed from) and the typed
//! `ExperimentConfig` it deserializes into. Overrides are applied to the
//! raw value first so that the hash always reflects exactly what ran.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::Coeff;

/// What an experiment run produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Deterministic filter schedule (P, K, Σ, band), or a filtered
    /// trajectory when an observation file is configured.
    Filter,
    /// Monte Carlo policy runs at one λ with per-path cost ledgers.
    Simulate,
    /// Cost and band scaling across a λ grid.
    Scaling,
    /// Rescaled-error histogram against the triangular reference.
    Density,
    /// Shrinking-band Bernoulli tracker run.
    Bernoulli,
    /// Dynamic-programming oracle vs the closed-form band.
    DpOracle,
    /// Switching cost ↔ test size conversion table.
    TestSize,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Filter => "filter",
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Scaling => "scaling",
            ExperimentKind::Density => "density",
            ExperimentKind::Bernoulli => "bernoulli",
            ExperimentKind::DpOracle => "dp-oracle",
            ExperimentKind::TestSize => "test-size",
        }
    }
}

/// A scalar, a dense matrix, or a piecewise-constant schedule of either.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
    Piecewise {
        times: Vec<f64>,
        values: Vec<MatrixValue>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixValue {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<nalgebra::DMatrix<f64>> {
    if rows.is_empty() {
        return Err(Error::Config(format!("{what}: matrix has no rows")));
    }
    let ncols = rows[0].len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(format!(
            "{what}: matrix rows must be nonempty and equal length"
        )));
    }
    Ok(nalgebra::DMatrix::from_fn(rows.len(), ncols, |i, j| {
        rows[i][j]
    }))
}

impl MatrixValue {
    fn to_matrix(&self, what: &str) -> Result<nalgebra::DMatrix<f64>> {
        match self {
            MatrixValue::Scalar(v) => Ok(nalgebra::DMatrix::from_element(1, 1, *v)),
            MatrixValue::Matrix(rows) => rows_to_matrix(rows, what),
        }
    }
}

impl MatrixSpec {
    /// Converts to a (possibly time-varying) coefficient. `what` names the
    /// field in error messages.
    pub fn to_coeff(&self, what: &str) -> Result<Coeff> {
        match self {
            MatrixSpec::Scalar(v) => Ok(Coeff::Constant(nalgebra::DMatrix::from_element(
                1, 1, *v,
            ))),
            MatrixSpec::Matrix(rows) => Ok(Coeff::Constant(rows_to_matrix(rows, what)?)),
            MatrixSpec::Piecewise { times, values } => {
                if times.len() != values.len() {
                    return Err(Error::Config(format!(
                        "{what}: piecewise needs equally many times and values \
                         ({} vs {})",
                        times.len(),
                        values.len()
                    )));
                }
                let mats = values
                    .iter()
                    .map(|v| v.to_matrix(what))
                    .collect::<Result<Vec<_>>>()?;
                Coeff::piecewise(times.clone(), mats)
                    .map_err(|e| Error::Config(format!("{what}: {e}")))
            }
        }
    }

    /// Scalar view for fields that must be plain numbers.
    pub fn as_scalar(&self, what: &str) -> Result<f64> {
        match self {
            MatrixSpec::Scalar(v) => Ok(*v),
            _ => Err(Error::Config(format!("{what}: expected a scalar"))),
        }
    }

    /// Dense-matrix view for fields that cannot be time-varying.
    pub fn to_constant(&self, what: &str) -> Result<nalgebra::DMatrix<f64>> {
        match self {
            MatrixSpec::Scalar(v) => Ok(nalgebra::DMatrix::from_element(1, 1, *v)),
            MatrixSpec::Matrix(rows) => rows_to_matrix(rows, what),
            MatrixSpec::Piecewise { .. } => Err(Error::Config(format!(
                "{what}: must be constant, not piecewise"
            ))),
        }
    }
}

/// Linear-Gaussian model section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "zero_spec")]
    pub f: MatrixSpec,
    #[serde(default = "one_spec")]
    pub a: MatrixSpec,
    #[serde(default = "zero_spec")]
    pub q: MatrixSpec,
    #[serde(default = "one_spec")]
    pub r: MatrixSpec,
    #[serde(default)]
    pub x0_mean: Option<Vec<f64>>,
    #[serde(default = "one_spec")]
    pub p0: MatrixSpec,
    pub horizon: f64,
}

fn zero_spec() -> MatrixSpec {
    MatrixSpec::Scalar(0.0)
}

fn one_spec() -> MatrixSpec {
    MatrixSpec::Scalar(1.0)
}

/// Bernoulli tracker section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BernoulliConfig {
    pub p_true: f64,
    pub horizon: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in_fraction: f64,
}

fn default_burn_in() -> f64 {
    0.01
}

/// Switching and tracking cost section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    pub lambda: f64,
    #[serde(default = "one_spec")]
    pub gamma: MatrixSpec,
}

/// Monte Carlo section.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Step size; defaults to horizon/1000.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub n_paths: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Keep every k-th rescaled error sample (density runs).
    #[serde(default)]
    pub xi_stride: Option<usize>,
}

/// Oracle section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    /// Error-variance rate Σ of the filtered-error walk.
    pub sigma: f64,
    #[serde(default = "default_n_grid")]
    pub n_grid: usize,
    #[serde(default = "default_oracle_steps")]
    pub horizon_steps: usize,
    pub dt: f64,
    /// Grid radius override (defaults to 5 band half-widths).
    #[serde(default)]
    pub radius: Option<f64>,
}

fn default_n_grid() -> usize {
    201
}

fn default_oracle_steps() -> usize {
    10_000
}

/// Scaling-study section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    pub lambda_grid: Vec<f64>,
}

/// Test-size mapping section: give either a cost λ or a size α.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TestSizeConfig {
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
}

/// Output section (excluded from the config hash).
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<String>,
}

/// Full experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub kind: Option<ExperimentKind>,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub bernoulli: Option<BernoulliConfig>,
    #[serde(default)]
    pub penalty: Option<PenaltyConfig>,
    #[serde(default)]
    pub sim: Option<SimConfig>,
    #[serde(default)]
    pub oracle: Option<OracleConfig>,
    #[serde(default)]
    pub scaling: Option<ScalingConfig>,
    #[serde(default)]
    pub test_size: Option<TestSizeConfig>,
    /// Path to a CSV of observation increments for `filter`.
    #[serde(default)]
    pub observations: Option<String>,
    #[serde(default)]
    pub output: Option<OutputConfig>,
}

/// Parses a JSON config file, reporting the file name and line/column on
/// syntax or schema errors.
pub fn parse_config_file(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read config {}: {e}", path.display()))
    })?;
    parse_config_str(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Parses JSON config text into a raw value.
pub fn parse_config_str(text: &str) -> Result<Value> {
    let value: Value = serde_json::from_str(text).map_err(|e| {
        Error::Config(format!("line {}, column {}: {e}", e.line(), e.column()))
    })?;
    if !value.is_object() {
        return Err(Error::Config("config must be a JSON object".into()));
    }
    Ok(value)
}

/// Typed view of a raw config value.
pub fn typed_config(raw: &Value) -> Result<ExperimentConfig> {
    serde_json::from_value(raw.clone())
        .map_err(|e| Error::Config(format!("invalid config: {e}")))
}

/// Applies one `key.path=value` override in place. The value is parsed as
/// JSON when possible and kept as a string otherwise, so `--set
/// penalty.lambda=1e-4` and `--set output.dir=runs/a` both work.
pub fn apply_override(raw: &mut Value, assignment: &str) -> Result<()> {
    let (path, text) = assignment.split_once('=').ok_or_else(|| {
        Error::Config(format!("override '{assignment}' is not of the form KEY=VALUE"))
    })?;
    if path.is_empty() {
        return Err(Error::Config(format!(
            "override '{assignment}' has an empty key"
        )));
    }
    let new_value: Value = serde_json::from_str(text)
        .unwrap_or_else(|_| Value::String(text.to_string()));
    let mut cursor = raw;
    let parts: Vec<&str> = path.split('.').collect();
    for (depth, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::Config(format!(
                "override '{assignment}' has an empty path segment"
            )));
        }
        let obj = cursor.as_object_mut().ok_or_else(|| {
            Error::Config(format!(
                "override '{assignment}': '{}' is not an object",
                parts[..depth].join(".")
            ))
        })?;
        if depth + 1 == parts.len() {
            obj.insert((*part).to_string(), new_value);
            return Ok(());
        }
        cursor = obj
            .entry((*part).to_string())
            .or_insert_with(|| Value::Object(serde_json::Map::new()));
    }
    unreachable!("override path always has at least one segment")
}

/// Strips the output section (paths should not change scientific content).
pub fn without_output(raw: &Value) -> Value {
    let mut clone = raw.clone();
    if let Some(obj) = clone.as_object_mut() {
        obj.remove("output");
    }
    clone
}

/// SHA-256 of the canonical (key-sorted, compact) JSON encoding of the
/// config with the output section removed. Two runs with equal hashes are
/// byte-for-byte reproducible.
pub fn config_hash(raw: &Value) -> String {
    // serde_json's default map is a BTreeMap, so object keys are already
    // emitted in sorted order; compact encoding removes whitespace choice.
    let canonical =
        serde_json::to_string(&without_output(raw)).expect("JSON value always serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    let mut hex = String::with_capacity(64);
    for byte in digest {
        write!(hex, "{byte:02x}").expect("writing to a String cannot fail");
    }
    hex
}
