//! Fully resolved run configuration. Every run echoes one of these in its
//! manifest, and `--config` replays it.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use specden_core::model::{AdmissibleRanges, ModelFile};
use specden_core::{ElementDistribution, SolverOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: usize,
    pub out: PathBuf,
    pub task: Task,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "params", rename_all = "lowercase")]
pub enum Task {
    Solve(SolveParams),
    Density(DensityParams),
    Support(SupportParams),
    Noeig(NoeigParams),
    Sinr(SinrParams),
    Zf(ZfParams),
    Validate(ValidateParams),
}

/// Serializable mirror of [`SolverOptions`] (without warm starts).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub anderson_depth: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = SolverOptions::default();
        Self {
            tol: o.tol,
            max_iter: o.max_iter,
            damping: o.damping,
            anderson_depth: o.anderson_depth,
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            damping: self.damping,
            anderson_depth: self.anderson_depth,
            ..SolverOptions::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveParams {
    pub model: ModelFile,
    pub solver: SolverConfig,
    pub re: f64,
    pub im: f64,
    pub include_deltas: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityParams {
    pub model: ModelFile,
    pub solver: SolverConfig,
    pub v: f64,
    pub points: usize,
    /// Grid range; automatic when absent.
    pub range: Option<[f64; 2]>,
    pub measures: Vec<usize>,
    /// Ensemble draws written next to the density.
    pub samples: usize,
    pub distribution: ElementDistribution,
    pub allow_assumption_violating: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportParams {
    pub model: ModelFile,
    pub solver: SolverConfig,
    pub points: usize,
    pub threshold: f64,
    pub refine: bool,
    pub inclusion: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoeigParams {
    pub model: ModelFile,
    pub solver: SolverConfig,
    pub trials: usize,
    pub points: usize,
    /// Probe interval; the largest support gap shrunk by `shrink` when absent.
    pub interval: Option<[f64; 2]>,
    pub shrink: f64,
    pub probe_points: usize,
    pub distribution: ElementDistribution,
    pub allow_assumption_violating: bool,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinrParams {
    pub antennas: usize,
    pub interferers: usize,
    pub tau: f64,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub solver: SolverConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ZfCorrelation {
    Identity,
    Exponential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZfParams {
    pub p: usize,
    pub n: usize,
    pub correlation: ZfCorrelation,
    pub trials: usize,
    pub distribution: ElementDistribution,
    pub allow_assumption_violating: bool,
    pub solver: SolverConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateParams {
    pub model: ModelFile,
    pub ranges: AdmissibleRanges,
}

/// What `manifest.json` holds.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    /// Seconds since the Unix epoch. The only field that changes between
    /// identical runs.
    pub timestamp: u64,
    pub config: RunConfig,
    pub outputs: Vec<String>,
}

/// Reads either a manifest or a bare run configuration.
pub fn load(text: &str) -> Result<RunConfig, String> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| format!("line {} column {}: {e}", e.line(), e.column()))?;
    let is_manifest = value.get("config").is_some();
    let parsed = if is_manifest {
        serde_json::from_value::<Manifest>(value).map(|m| m.config)
    } else {
        serde_json::from_value::<RunConfig>(value)
    };
    parsed.map_err(|e| e.to_string())
}
