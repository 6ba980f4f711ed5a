//! Random-matrix model `Σ = A + Y`, `Y = n^{-1/2}[B₁x₁ … Bₙxₙ]`, with
//! per-column correlations `Ω_j = B_j B_jᴴ`.

mod distribution;
mod io;
mod presets;

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::{CMat, C64};

pub use distribution::ElementDistribution;
pub use io::{ModelFile, MODEL_SCHEMA};
pub use presets::{figure_setup, figure_setup_with_dims, marchenko_pastur, variance_profile, Figure};

/// Entrywise tolerance on `|Ω − Ωᴴ|`.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Smallest eigenvalue accepted for a correlation matrix.
pub const PSD_TOL: f64 = -1e-10;
/// Entrywise tolerance on `|B Bᴴ − Ω|` when factors are supplied.
pub const FACTOR_TOL: f64 = 1e-10;

/// A Hermitian non-negative `p×p` correlation matrix.
///
/// Diagonal matrices are stored as their (real) diagonal; the fixed-point
/// solver has a fast path when every `Ω_j` is diagonal.
#[derive(Clone, Debug, PartialEq)]
pub enum Correlation {
    Diagonal(Vec<f64>),
    Dense(CMat),
}

impl Correlation {
    pub fn dim(&self) -> usize {
        match self {
            Correlation::Diagonal(d) => d.len(),
            Correlation::Dense(m) => m.nrows(),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self, Correlation::Diagonal(_))
    }

    pub fn trace(&self) -> f64 {
        match self {
            Correlation::Diagonal(d) => d.iter().sum(),
            Correlation::Dense(m) => m.diagonal().iter().map(|c| c.re).sum(),
        }
    }

    pub fn to_dense(&self) -> CMat {
        match self {
            Correlation::Diagonal(d) => {
                CMat::from_fn(d.len(), d.len(), |i, j| if i == j { C64::new(d[i], 0.0) } else { C64::new(0.0, 0.0) })
            }
            Correlation::Dense(m) => m.clone(),
        }
    }

    /// Smallest and largest eigenvalue.
    pub fn eigen_range(&self) -> (f64, f64) {
        match self {
            Correlation::Diagonal(d) => d.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            }),
            Correlation::Dense(m) => {
                let ev = linalg::hermitian_eigenvalues(m);
                (ev[0], ev[ev.len() - 1])
            }
        }
    }

    /// Spectral norm (largest eigenvalue magnitude).
    pub fn spectral_norm(&self) -> f64 {
        let (lo, hi) = self.eigen_range();
        lo.abs().max(hi.abs())
    }

    pub fn scaled(&self, s: f64) -> Correlation {
        match self {
            Correlation::Diagonal(d) => Correlation::Diagonal(d.iter().map(|x| x * s).collect()),
            Correlation::Dense(m) => Correlation::Dense(m * C64::new(s, 0.0)),
        }
    }

    /// `U Ω Uᴴ`.
    pub fn conjugated_by(&self, u: &CMat) -> Correlation {
        let m = u * self.to_dense() * u.adjoint();
        Correlation::Dense(linalg::hermitian_part(&m))
    }

    /// `Ω^{1/2}` as a square factor, negative eigenvalues clipped to zero.
    pub fn sqrt_factor(&self) -> Factor {
        match self {
            Correlation::Diagonal(d) => Factor::Diagonal(d.iter().map(|x| x.max(0.0).sqrt()).collect()),
            Correlation::Dense(m) => Factor::Dense(linalg::hermitian_sqrt(m)),
        }
    }

    /// `Tr(Ω M)`.
    pub fn trace_with(&self, m: &CMat) -> C64 {
        match self {
            Correlation::Diagonal(d) => d.iter().enumerate().map(|(l, &w)| m[(l, l)] * w).sum(),
            Correlation::Dense(o) => {
                let p = o.nrows();
                let mut acc = C64::new(0.0, 0.0);
                for l in 0..p {
                    for k in 0..p {
                        acc += o[(k, l)] * m[(l, k)];
                    }
                }
                acc
            }
        }
    }

    /// `M += s Ω`.
    pub(crate) fn add_scaled_to(&self, m: &mut CMat, s: C64) {
        match self {
            Correlation::Diagonal(d) => {
                for (l, &w) in d.iter().enumerate() {
                    m[(l, l)] += s * w;
                }
            }
            Correlation::Dense(o) => {
                for (dst, src) in m.iter_mut().zip(o.iter()) {
                    *dst += s * src;
                }
            }
        }
    }
}

/// A `p×d_j` factor `B_j`. `Diagonal` is square (`d_j = p`).
#[derive(Clone, Debug, PartialEq)]
pub enum Factor {
    Diagonal(Vec<f64>),
    Dense(CMat),
}

impl Factor {
    pub fn rows(&self) -> usize {
        match self {
            Factor::Diagonal(d) => d.len(),
            Factor::Dense(m) => m.nrows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Factor::Diagonal(d) => d.len(),
            Factor::Dense(m) => m.ncols(),
        }
    }

    /// `B Bᴴ`.
    pub fn gram(&self) -> Correlation {
        match self {
            Factor::Diagonal(d) => Correlation::Diagonal(d.iter().map(|x| x * x).collect()),
            Factor::Dense(m) => Correlation::Dense(linalg::hermitian_part(&(m * m.adjoint()))),
        }
    }

    /// `out += s · B x`.
    pub fn apply_into(&self, x: &[C64], s: f64, out: &mut [C64]) {
        match self {
            Factor::Diagonal(d) => {
                for ((o, &b), xi) in out.iter_mut().zip(d).zip(x) {
                    *o += xi * (b * s);
                }
            }
            Factor::Dense(m) => {
                for (k, xk) in x.iter().enumerate() {
                    let c = xk * s;
                    for (o, b) in out.iter_mut().zip(m.column(k).iter()) {
                        *o += b * c;
                    }
                }
            }
        }
    }

    pub fn to_dense(&self) -> CMat {
        match self {
            Factor::Diagonal(d) => Correlation::Diagonal(d.clone()).to_dense(),
            Factor::Dense(m) => m.clone(),
        }
    }
}

/// Where a model came from, when it was built by a named constructor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constructor {
    pub name: String,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
}

/// A fully specified, structurally consistent model. Immutable once built.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    p: usize,
    n: usize,
    d: Vec<usize>,
    mean: CMat,
    correlations: Vec<Correlation>,
    factors: Option<Vec<Factor>>,
    mean_columns: Vec<usize>,
    origin: Option<(Constructor, Option<u64>)>,
}

impl ModelSpec {
    /// Builds a model from `A` and the `Ω_j`, optionally with factors `B_j`.
    ///
    /// Checks dimensions, Hermiticity (`≤ 1e-12` entrywise), non-negativity
    /// (`λ_min ≥ −1e-10`) and, when factors are given, `|B_j B_jᴴ − Ω_j| ≤ 1e-10`.
    pub fn new(mean: CMat, correlations: Vec<Correlation>, factors: Option<Vec<Factor>>) -> Result<Self> {
        let p = mean.nrows();
        let n = mean.ncols();
        if p == 0 || n == 0 {
            return Err(Error::Dimension(format!("mean is {p}x{n}; p and n must be positive")));
        }
        if correlations.len() != n {
            return Err(Error::Dimension(format!(
                "{} correlation matrices for n = {n} columns",
                correlations.len()
            )));
        }
        let mut cleaned = Vec::with_capacity(n);
        for (j, c) in correlations.into_iter().enumerate() {
            if c.dim() != p {
                return Err(Error::Dimension(format!("correlations[{j}] is {0}x{0}, expected {p}x{p}", c.dim())));
            }
            let c = match c {
                Correlation::Diagonal(d) => {
                    if let Some(x) = d.iter().find(|x| !x.is_finite()) {
                        return Err(Error::InvalidModel(format!("correlations[{j}] has non-finite entry {x}")));
                    }
                    Correlation::Diagonal(d)
                }
                Correlation::Dense(m) => {
                    let defect = linalg::hermitian_defect(&m);
                    if !(defect <= HERMITIAN_TOL) {
                        return Err(Error::InvalidModel(format!(
                            "correlations[{j}] is not Hermitian (max |Ω − Ωᴴ| = {defect:e})"
                        )));
                    }
                    Correlation::Dense(linalg::hermitian_part(&m))
                }
            };
            let (lo, _) = c.eigen_range();
            if lo < PSD_TOL {
                return Err(Error::InvalidModel(format!(
                    "correlations[{j}] is not non-negative (λ_min = {lo:e})"
                )));
            }
            cleaned.push(c);
        }
        let d = match &factors {
            Some(fs) => {
                if fs.len() != n {
                    return Err(Error::Dimension(format!("{} factors for n = {n} columns", fs.len())));
                }
                let mut d = Vec::with_capacity(n);
                for (j, (f, c)) in fs.iter().zip(&cleaned).enumerate() {
                    if f.rows() != p {
                        return Err(Error::Dimension(format!("factors[{j}] has {} rows, expected {p}", f.rows())));
                    }
                    if f.cols() == 0 {
                        return Err(Error::Dimension(format!("factors[{j}] has no columns")));
                    }
                    let err = (f.gram().to_dense() - c.to_dense()).camax();
                    if !(err <= FACTOR_TOL) {
                        return Err(Error::InvalidModel(format!(
                            "factors[{j}]: max |B Bᴴ − Ω| = {err:e} exceeds {FACTOR_TOL:e}"
                        )));
                    }
                    d.push(f.cols());
                }
                d
            }
            None => vec![p; n],
        };
        if mean.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidModel("mean has non-finite entries".into()));
        }
        let mean_columns = (0..n)
            .filter(|&j| mean.column(j).iter().any(|c| *c != C64::new(0.0, 0.0)))
            .collect();
        Ok(Self {
            p,
            n,
            d,
            mean,
            correlations: cleaned,
            factors,
            mean_columns,
            origin: None,
        })
    }

    /// Builds a model from its factors, with `Ω_j = B_j B_jᴴ`.
    pub fn from_factors(mean: CMat, factors: Vec<Factor>) -> Result<Self> {
        let correlations = factors.iter().map(Factor::gram).collect();
        Self::new(mean, correlations, Some(factors))
    }

    pub(crate) fn with_origin(mut self, constructor: Constructor, seed: Option<u64>) -> Self {
        self.origin = Some((constructor, seed));
        self
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Inner dimensions `d_j`.
    pub fn d(&self) -> &[usize] {
        &self.d
    }

    pub fn mean(&self) -> &CMat {
        &self.mean
    }

    pub fn correlations(&self) -> &[Correlation] {
        &self.correlations
    }

    pub fn factors(&self) -> Option<&[Factor]> {
        self.factors.as_deref()
    }

    /// Named constructor and seed this model was built from, if any.
    pub fn origin(&self) -> Option<(&Constructor, Option<u64>)> {
        self.origin.as_ref().map(|(c, s)| (c, *s))
    }

    /// Columns of `A` with at least one nonzero entry.
    pub fn mean_columns(&self) -> &[usize] {
        &self.mean_columns
    }

    /// `B_j`, or `Ω_j^{1/2}` when no factors were supplied.
    pub fn factor(&self, j: usize) -> Cow<'_, Factor> {
        match &self.factors {
            Some(fs) => Cow::Borrowed(&fs[j]),
            None => Cow::Owned(self.correlations[j].sqrt_factor()),
        }
    }

    pub fn all_diagonal(&self) -> bool {
        self.correlations.iter().all(Correlation::is_diagonal)
    }

    /// The model with all `Ω_j` conjugated by a common unitary `U` and the
    /// mean replaced by `UA`. Factors become `U B_j`.
    pub fn rotated(&self, u: &CMat) -> Result<Self> {
        if u.nrows() != self.p || u.ncols() != self.p {
            return Err(Error::Dimension(format!("rotation must be {0}x{0}", self.p)));
        }
        let mean = u * &self.mean;
        let correlations = self.correlations.iter().map(|c| c.conjugated_by(u)).collect();
        let factors = self
            .factors
            .as_ref()
            .map(|fs| fs.iter().map(|f| Factor::Dense(u * f.to_dense())).collect());
        Self::new(mean, correlations, factors)
    }

    /// `(1/n) Tr Ω_j`, the mass of the measure behind `δ_j`.
    pub fn delta_mass(&self, j: usize) -> f64 {
        self.correlations[j].trace() / self.n as f64
    }
}

/// Admissible ranges for [`validate`]. The defaults are wide sanity bounds;
/// the asymptotic assumptions carry no finite-n numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdmissibleRanges {
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub min_trace_ratio: f64,
    pub max_corr_norm: f64,
    pub max_mean_norm: f64,
}

impl Default for AdmissibleRanges {
    fn default() -> Self {
        Self {
            min_ratio: 0.01,
            max_ratio: 100.0,
            min_trace_ratio: 1e-6,
            max_corr_norm: 1e6,
            max_mean_norm: 1e6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Index of the breached assumption (1: regime, 3: correlations, 4: mean).
    pub assumption: u8,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub ratio_p_n: f64,
    /// `min_j Tr Ω_j / p`.
    pub min_trace_ratio: f64,
    /// `max_j ‖Ω_j‖`.
    pub max_corr_norm: f64,
    /// `‖A‖`.
    pub mean_norm: f64,
    pub violations: Vec<Violation>,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Computes the scalar diagnostics of the model and compares them against
/// `bounds`.
pub fn validate(model: &ModelSpec, bounds: &AdmissibleRanges) -> AssumptionReport {
    let p = model.p() as f64;
    let ratio_p_n = p / model.n() as f64;
    let min_trace_ratio = model
        .correlations()
        .iter()
        .map(|c| c.trace() / p)
        .fold(f64::INFINITY, f64::min);
    let max_corr_norm = model
        .correlations()
        .iter()
        .map(Correlation::spectral_norm)
        .fold(0.0, f64::max);
    let mean_norm = linalg::spectral_norm(model.mean());

    let mut violations = Vec::new();
    if !(bounds.min_ratio..=bounds.max_ratio).contains(&ratio_p_n) {
        violations.push(Violation {
            assumption: 1,
            message: format!(
                "p/n = {ratio_p_n} outside [{}, {}]",
                bounds.min_ratio, bounds.max_ratio
            ),
        });
    }
    if !(min_trace_ratio >= bounds.min_trace_ratio) {
        violations.push(Violation {
            assumption: 3,
            message: format!(
                "min_j Tr Ω_j / p = {min_trace_ratio} below {}",
                bounds.min_trace_ratio
            ),
        });
    }
    if !(max_corr_norm <= bounds.max_corr_norm) {
        violations.push(Violation {
            assumption: 3,
            message: format!("max_j ‖Ω_j‖ = {max_corr_norm} above {}", bounds.max_corr_norm),
        });
    }
    if !(mean_norm <= bounds.max_mean_norm) {
        violations.push(Violation {
            assumption: 4,
            message: format!("‖A‖ = {mean_norm} above {}", bounds.max_mean_norm),
        });
    }
    AssumptionReport {
        ratio_p_n,
        min_trace_ratio,
        max_corr_norm,
        mean_norm,
        violations,
    }
}
