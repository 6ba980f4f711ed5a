//! JSON model files.
//!
//! Two forms are accepted. The constructor form names a canonical model:
//!
//! ```json
//! { "constructor": { "name": "fig2", "params": { "p": 200, "n": 400 } }, "seed": 7 }
//! ```
//!
//! The explicit form lists everything. Complex entries are `[re, im]` pairs,
//! matrices are flattened row-major; a correlation or factor may instead be
//! given as `{ "diag": [..] }`.
//!
//! ```json
//! { "p": 2, "n": 1, "d": [2],
//!   "mean": [[1, 0], [0, 0]],
//!   "correlations": [{ "diag": [1, 2] }] }
//! ```

use serde::{Deserialize, Serialize};

use super::{marchenko_pastur, Constructor, Correlation, Factor, Figure, ModelSpec};
use crate::error::{Error, Result};
use crate::{CMat, C64};

/// JSON schema of the model file, also published under `docs/`.
pub const MODEL_SCHEMA: &str = include_str!("../../../../docs/model.schema.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixEntry {
    Diag { diag: Vec<f64> },
    Dense(Vec<[f64; 2]>),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlations: Option<Vec<MatrixEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<Vec<MatrixEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constructor: Option<Constructor>,
}

fn dense(field: &str, data: &[[f64; 2]], rows: usize, cols: usize) -> Result<CMat> {
    if data.len() != rows * cols {
        return Err(Error::Format(format!(
            "{field}: expected {rows}x{cols} = {} entries, found {}",
            rows * cols,
            data.len()
        )));
    }
    Ok(CMat::from_fn(rows, cols, |i, j| {
        let [re, im] = data[i * cols + j];
        C64::new(re, im)
    }))
}

fn flatten(m: &CMat) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let c = m[(i, j)];
            out.push([c.re, c.im]);
        }
    }
    out
}

fn param_usize(c: &Constructor, key: &str, default: usize) -> Result<usize> {
    match c.params.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_u64()
            .map(|x| x as usize)
            .ok_or_else(|| Error::Format(format!("constructor.params.{key}: expected a positive integer, found {v}"))),
    }
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            Error::Format(format!("line {} column {}: {e}", e.line(), e.column()))
        })
    }

    pub fn build(&self) -> Result<ModelSpec> {
        if let Some(c) = &self.constructor {
            let explicit = self.p.is_some()
                || self.n.is_some()
                || self.d.is_some()
                || self.mean.is_some()
                || self.correlations.is_some()
                || self.factors.is_some();
            if explicit {
                return Err(Error::Format(
                    "constructor form cannot be combined with explicit p/n/d/mean/correlations/factors".into(),
                ));
            }
            let allowed: &[&str] = &["p", "n"];
            if let Some(k) = c.params.keys().find(|k| !allowed.contains(&k.as_str())) {
                return Err(Error::Format(format!("constructor.params: unknown key {k:?}")));
            }
            let seed = self.seed.unwrap_or(0);
            return match c.name.as_str() {
                "marchenko-pastur" | "mp" => {
                    let p = param_usize(c, "p", 0)?;
                    let n = param_usize(c, "n", 0)?;
                    marchenko_pastur(p, n)
                }
                name => {
                    let fig: Figure = name
                        .parse()
                        .map_err(|_| Error::Format(format!("constructor.name: unknown constructor {name:?}")))?;
                    let (dp, dn) = fig.default_dims();
                    let p = param_usize(c, "p", dp)?;
                    let n = param_usize(c, "n", dn)?;
                    super::figure_setup_with_dims(fig, p, n, seed)
                }
            };
        }

        let p = self.p.ok_or_else(|| Error::Format("missing field `p`".into()))?;
        let n = self.n.ok_or_else(|| Error::Format("missing field `n`".into()))?;
        let mean = match &self.mean {
            Some(m) => dense("mean", m, p, n)?,
            None => CMat::zeros(p, n),
        };
        let correlations = self
            .correlations
            .as_ref()
            .ok_or_else(|| Error::Format("missing field `correlations`".into()))?;
        if correlations.len() != n {
            return Err(Error::Format(format!(
                "correlations: expected {n} matrices, found {}",
                correlations.len()
            )));
        }
        let correlations = correlations
            .iter()
            .enumerate()
            .map(|(j, e)| match e {
                MatrixEntry::Diag { diag } => {
                    if diag.len() != p {
                        Err(Error::Format(format!(
                            "correlations[{j}].diag: expected {p} entries, found {}",
                            diag.len()
                        )))
                    } else {
                        Ok(Correlation::Diagonal(diag.clone()))
                    }
                }
                MatrixEntry::Dense(data) => dense(&format!("correlations[{j}]"), data, p, p).map(Correlation::Dense),
            })
            .collect::<Result<Vec<_>>>()?;
        let d = match &self.d {
            Some(d) => {
                if d.len() != n {
                    return Err(Error::Format(format!("d: expected {n} entries, found {}", d.len())));
                }
                d.clone()
            }
            None => vec![p; n],
        };
        let factors = match &self.factors {
            None => None,
            Some(fs) => {
                if fs.len() != n {
                    return Err(Error::Format(format!("factors: expected {n} matrices, found {}", fs.len())));
                }
                Some(
                    fs.iter()
                        .enumerate()
                        .map(|(j, e)| match e {
                            MatrixEntry::Diag { diag } => {
                                if diag.len() != p || d[j] != p {
                                    Err(Error::Format(format!(
                                        "factors[{j}].diag: diagonal factor must be {p}x{p} (d[{j}] = {})",
                                        d[j]
                                    )))
                                } else {
                                    Ok(Factor::Diagonal(diag.clone()))
                                }
                            }
                            MatrixEntry::Dense(data) => {
                                dense(&format!("factors[{j}]"), data, p, d[j]).map(Factor::Dense)
                            }
                        })
                        .collect::<Result<Vec<_>>>()?,
                )
            }
        };
        if factors.is_none() && self.d.is_some() && d.iter().any(|&x| x != p) {
            return Err(Error::Format("d differs from p but no factors were given".into()));
        }
        ModelSpec::new(mean, correlations, factors)
    }

    /// Constructor form when the model has a named origin, explicit
    /// otherwise.
    pub fn from_model(model: &ModelSpec) -> Self {
        if let Some((c, seed)) = model.origin() {
            return ModelFile {
                constructor: Some(c.clone()),
                seed,
                ..Default::default()
            };
        }
        let entry = |c: &Correlation| match c {
            Correlation::Diagonal(d) => MatrixEntry::Diag { diag: d.clone() },
            Correlation::Dense(m) => MatrixEntry::Dense(flatten(m)),
        };
        ModelFile {
            p: Some(model.p()),
            n: Some(model.n()),
            d: Some(model.d().to_vec()),
            mean: Some(flatten(model.mean())),
            correlations: Some(model.correlations().iter().map(entry).collect()),
            factors: model.factors().map(|fs| {
                fs.iter()
                    .map(|f| match f {
                        Factor::Diagonal(d) => MatrixEntry::Diag { diag: d.clone() },
                        Factor::Dense(m) => MatrixEntry::Dense(flatten(m)),
                    })
                    .collect()
            }),
            seed: None,
            constructor: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model file serializes")
    }
}

impl ModelSpec {
    /// Parses and builds a model from JSON text.
    pub fn from_json(text: &str) -> Result<Self> {
        ModelFile::parse(text)?.build()
    }
}
