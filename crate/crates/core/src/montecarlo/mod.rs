//! Sampling of `Σ = A + Y`, empirical spectra and the Monte Carlo
//! experiments that check the deterministic equivalents.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fixedpoint::{solve, trace_functional, bilinear_functional, SolverOptions, SpectralPoint};
use crate::linalg;
use crate::model::ModelSpec;
use crate::rng::{stream_rng, Domain};
use crate::spectrum::{self, edge_gap_condition, DensityProfile, EdgeGapReport, SupportSet};
use crate::{CMat, CVec, C64};

pub use crate::model::ElementDistribution;

/// Entry law used by the figure presets: real uniform for `fig4`, complex
/// Gaussian otherwise.
pub fn default_distribution(model: &ModelSpec) -> ElementDistribution {
    match model.origin() {
        Some((c, _)) if c.name == "fig4" => ElementDistribution::UniformReal,
        _ => ElementDistribution::ComplexGaussian,
    }
}

/// One draw of the ensemble.
#[derive(Clone, Debug, Serialize)]
pub struct EnsembleSample {
    #[serde(skip)]
    pub sigma: CMat,
    /// Eigenvalues of `S = ΣΣᴴ`, descending, `p` of them.
    pub eigenvalues: Vec<f64>,
    pub seed: u64,
    pub trial: u64,
    pub distribution: ElementDistribution,
}

impl EnsembleSample {
    /// Empirical CDF on `grid`.
    pub fn esd(&self, grid: &[f64]) -> Vec<f64> {
        esd(&self.eigenvalues, grid)
    }
}

/// `Σ` for trial `trial`: column `j` is `a_j + B_j x_j / √n` with `x_j`
/// drawn from the stream `(seed, trial, j)`.
pub fn sample_sigma(model: &ModelSpec, dist: ElementDistribution, seed: u64, trial: u64) -> CMat {
    let (p, n) = (model.p(), model.n());
    let s = 1.0 / (n as f64).sqrt();
    let mut sigma = model.mean().clone();
    let mut x = Vec::new();
    let mut col = vec![C64::new(0.0, 0.0); p];
    for j in 0..n {
        let factor = model.factor(j);
        let mut rng = stream_rng(seed, Domain::Ensemble, trial, j as u64);
        x.resize(factor.cols(), C64::new(0.0, 0.0));
        dist.fill(&mut rng, &mut x);
        col.iter_mut().for_each(|c| *c = C64::new(0.0, 0.0));
        factor.apply_into(&x, s, &mut col);
        for (i, c) in col.iter().enumerate() {
            sigma[(i, j)] += c;
        }
    }
    sigma
}

/// Eigenvalues of `ΣΣᴴ`, descending. The smaller Gram matrix is
/// diagonalised and padded with zeros.
pub fn gram_spectrum(sigma: &CMat) -> Vec<f64> {
    let (p, n) = sigma.shape();
    let mut ev = if p <= n {
        linalg::hermitian_eigenvalues(&(sigma * sigma.adjoint()))
    } else {
        let mut ev = linalg::hermitian_eigenvalues(&(sigma.adjoint() * sigma));
        ev.resize(p, 0.0);
        ev
    };
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Draws trial `trial` of the ensemble.
pub fn sample_trial(model: &ModelSpec, dist: ElementDistribution, seed: u64, trial: u64) -> Result<EnsembleSample> {
    dist.check(true)?;
    let sigma = sample_sigma(model, dist, seed, trial);
    let eigenvalues = gram_spectrum(&sigma);
    Ok(EnsembleSample {
        sigma,
        eigenvalues,
        seed,
        trial,
        distribution: dist,
    })
}

/// Draws trial 0.
pub fn sample(model: &ModelSpec, dist: ElementDistribution, seed: u64) -> Result<EnsembleSample> {
    sample_trial(model, dist, seed, 0)
}

/// Right-continuous empirical CDF of `eigenvalues` on `grid`.
pub fn esd(eigenvalues: &[f64], grid: &[f64]) -> Vec<f64> {
    let mut sorted = eigenvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    let p = sorted.len() as f64;
    grid.iter()
        .map(|&x| sorted.partition_point(|&l| l <= x) as f64 / p)
        .collect()
}

/// Kolmogorov distance between the empirical distribution of
/// `eigenvalues` and the (normalised) limiting CDF of `profile`.
pub fn ks_distance(eigenvalues: &[f64], profile: &DensityProfile) -> f64 {
    let cdf = profile.cdf();
    let mut sorted = eigenvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    let p = sorted.len() as f64;
    let mut worst: f64 = 0.0;
    for (k, &l) in sorted.iter().enumerate() {
        let f = profile.cdf_at(&cdf, l);
        worst = worst.max((k as f64 / p - f).abs()).max(((k + 1) as f64 / p - f).abs());
    }
    // the limiting CDF may rise between grid nodes without an eigenvalue
    for (&x, &f) in profile.grid.iter().zip(&cdf) {
        let e = sorted.partition_point(|&l| l <= x) as f64 / p;
        worst = worst.max((e - f).abs());
    }
    worst
}

fn run_trials<T: Send, F>(trials: usize, f: F) -> Result<Vec<T>>
where
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    if trials == 0 {
        return Err(Error::InvalidArgument("at least one trial is required".into()));
    }
    (0..trials as u64).into_par_iter().map(f).collect()
}

/// Aggregate of repeated draws.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialReport {
    pub trials: usize,
    /// Probe interval, when escapes were counted.
    pub interval: Option<[f64; 2]>,
    /// Trials with at least one eigenvalue inside the interval.
    pub escapes: usize,
    pub max_eig: Vec<f64>,
    pub min_eig: Vec<f64>,
    /// Mean Kolmogorov distance to the limiting law, when compared.
    pub ks_distance: Option<f64>,
}

/// An interval checked to avoid the detected support and to satisfy the
/// separation condition on `δ`, `δ̃`.
#[derive(Clone, Debug, Serialize)]
pub struct ProbeInterval {
    interval: [f64; 2],
    report: EdgeGapReport,
}

impl ProbeInterval {
    /// Verifies `[a, b]` against `support` with [`edge_gap_condition`] on
    /// `grid_points` nodes. Refuses intervals meeting the support and
    /// intervals where the condition fails or is inconclusive.
    pub fn verify(
        model: &ModelSpec,
        support: &SupportSet,
        interval: [f64; 2],
        grid_points: usize,
        opts: &SolverOptions,
    ) -> Result<Self> {
        let report = edge_gap_condition(model, interval, grid_points, support, opts)?;
        if !report.holds(0.0) {
            return Err(Error::Precondition(format!(
                "separation condition not established on [{}, {}]: min |δ̃| = {:e}, min |1 + δ| = {:e}, {} inconclusive points",
                interval[0],
                interval[1],
                report.min_abs_delta_tilde,
                report.min_abs_one_plus_delta,
                report.inconclusive.len()
            )));
        }
        Ok(Self { interval, report })
    }

    pub fn interval(&self) -> [f64; 2] {
        self.interval
    }

    pub fn report(&self) -> &EdgeGapReport {
        &self.report
    }
}

fn extremes(
    model: &ModelSpec,
    dist: ElementDistribution,
    interval: Option<[f64; 2]>,
    trials: usize,
    seed: u64,
) -> Result<TrialReport> {
    dist.check(true)?;
    let per = run_trials(trials, |t| {
        let ev = gram_spectrum(&sample_sigma(model, dist, seed, t));
        let hit = interval.is_some_and(|[a, b]| ev.iter().any(|&l| l >= a && l <= b));
        Ok((hit, ev[0], ev[ev.len() - 1]))
    })?;
    Ok(TrialReport {
        trials,
        interval,
        escapes: per.iter().filter(|r| r.0).count(),
        max_eig: per.iter().map(|r| r.1).collect(),
        min_eig: per.iter().map(|r| r.2).collect(),
        ks_distance: None,
    })
}

/// Counts trials with eigenvalues in `[a, b]` without any check on the
/// interval. Useful as a sanity inversion inside the bulk.
pub fn count_escapes(
    model: &ModelSpec,
    dist: ElementDistribution,
    interval: [f64; 2],
    trials: usize,
    seed: u64,
) -> Result<TrialReport> {
    let [a, b] = interval;
    if !(a.is_finite() && b.is_finite() && a <= b) {
        return Err(Error::InvalidArgument(format!("invalid interval [{a}, {b}]")));
    }
    extremes(model, dist, Some(interval), trials, seed)
}

/// Counts eigenvalue escapes into a verified probe interval.
pub fn no_eigenvalue_trial(
    model: &ModelSpec,
    dist: ElementDistribution,
    probe: &ProbeInterval,
    trials: usize,
    seed: u64,
) -> Result<TrialReport> {
    count_escapes(model, dist, probe.interval, trials, seed)
}

/// Kolmogorov distances between the ESD of each trial and `profile`.
pub fn esd_lsd_trial(
    model: &ModelSpec,
    dist: ElementDistribution,
    profile: &DensityProfile,
    trials: usize,
    seed: u64,
) -> Result<(TrialReport, Vec<f64>)> {
    dist.check(true)?;
    let per = run_trials(trials, |t| {
        let ev = gram_spectrum(&sample_sigma(model, dist, seed, t));
        Ok((ks_distance(&ev, profile), ev[0], ev[ev.len() - 1]))
    })?;
    let ks: Vec<f64> = per.iter().map(|r| r.0).collect();
    let report = TrialReport {
        trials,
        interval: None,
        escapes: 0,
        max_eig: per.iter().map(|r| r.1).collect(),
        min_eig: per.iter().map(|r| r.2).collect(),
        ks_distance: Some(ks.iter().sum::<f64>() / trials as f64),
    };
    Ok((report, ks))
}

/// Largest eigenvalues across trials against the right endpoint `e_n^+`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LargestEigenvalueSummary {
    pub trials: usize,
    pub max: f64,
    pub mean: f64,
    pub right_endpoint: f64,
    pub per_trial: Vec<f64>,
}

impl LargestEigenvalueSummary {
    /// `max ≤ (1 + rel)·e_n^+`.
    pub fn within(&self, rel: f64) -> bool {
        self.max <= (1.0 + rel) * self.right_endpoint
    }
}

/// Largest eigenvalue over `trials` draws, with `e_n^+` located by the
/// density pipeline.
pub fn largest_eigenvalue_stat(
    model: &ModelSpec,
    dist: ElementDistribution,
    trials: usize,
    seed: u64,
    opts: &SolverOptions,
) -> Result<LargestEigenvalueSummary> {
    let (_, support) = spectrum::locate_support(model, spectrum::DEFAULT_GRID_POINTS, false, opts)?;
    let Some(right_endpoint) = support.right_endpoint else {
        return Err(Error::Precondition("the limiting distribution has no detected support".into()));
    };
    largest_eigenvalue_against(model, dist, trials, seed, right_endpoint)
}

/// As [`largest_eigenvalue_stat`] with a given `e_n^+`.
pub fn largest_eigenvalue_against(
    model: &ModelSpec,
    dist: ElementDistribution,
    trials: usize,
    seed: u64,
    right_endpoint: f64,
) -> Result<LargestEigenvalueSummary> {
    let report = extremes(model, dist, None, trials, seed)?;
    let per_trial = report.max_eig;
    Ok(LargestEigenvalueSummary {
        trials,
        max: per_trial.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean: per_trial.iter().sum::<f64>() / trials as f64,
        right_endpoint,
        per_trial,
    })
}

/// Resolvent functional compared between simulation and its deterministic
/// equivalent.
#[derive(Clone, Debug, PartialEq)]
pub enum Functional {
    /// `(1/p) Tr(C Q)`.
    Trace(CMat),
    /// `uᴴ Q v`.
    Bilinear(CVec, CVec),
}

impl Functional {
    fn check(&self, p: usize) -> Result<()> {
        let ok = match self {
            Functional::Trace(c) => c.nrows() == p && c.ncols() == p,
            Functional::Bilinear(u, v) => u.len() == p && v.len() == p,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(format!("functional does not match p = {p}")))
        }
    }

    fn of(&self, m: &CMat) -> C64 {
        match self {
            Functional::Trace(c) => {
                let p = m.nrows() as f64;
                c.transpose().iter().zip(m.iter()).map(|(a, b)| a * b).sum::<C64>() / p
            }
            Functional::Bilinear(u, v) => linalg::sesquilinear(m, u, v),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub trials: usize,
    pub mc_mean: C64,
    /// Standard error of `mc_mean` (complex modulus).
    pub mc_se: f64,
    pub deterministic: C64,
    /// `|mc_mean − deterministic| / mc_se`.
    pub z_score: f64,
    /// Root mean square of the per-draw gaps `|f(Q) − f(Θ)|`.
    pub rms_gap: f64,
}

impl ConvergenceReport {
    pub fn gap(&self) -> f64 {
        (self.mc_mean - self.deterministic).norm()
    }
}

/// Averages the functional of `Q(z) = (S − zI)⁻¹` over `trials` draws.
pub fn resolvent_convergence_trial(
    model: &ModelSpec,
    dist: ElementDistribution,
    point: SpectralPoint,
    functional: &Functional,
    trials: usize,
    seed: u64,
    opts: &SolverOptions,
) -> Result<ConvergenceReport> {
    let p = model.p();
    functional.check(p)?;
    dist.check(true)?;
    if trials < 2 {
        return Err(Error::InvalidArgument("a standard error needs at least two trials".into()));
    }
    let sol = solve(model, point, opts)?;
    let deterministic = match functional {
        Functional::Trace(c) => trace_functional(&sol, c)?,
        Functional::Bilinear(u, v) => bilinear_functional(&sol, u, v)?,
    };
    let z = point.z();
    let values = run_trials(trials, |t| {
        let sigma = sample_sigma(model, dist, seed, t);
        let mut s = &sigma * sigma.adjoint();
        for i in 0..p {
            s[(i, i)] -= z;
        }
        Ok(functional.of(&linalg::inverse(&s)?))
    })?;
    let tf = trials as f64;
    let mc_mean = values.iter().sum::<C64>() / tf;
    let var = values.iter().map(|v| (v - mc_mean).norm_sqr()).sum::<f64>() / (tf - 1.0);
    let mc_se = (var / tf).sqrt();
    let rms_gap = (values.iter().map(|v| (v - deterministic).norm_sqr()).sum::<f64>() / tf).sqrt();
    let gap = (mc_mean - deterministic).norm();
    let z_score = if mc_se > 0.0 {
        gap / mc_se
    } else if gap == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(ConvergenceReport {
        trials,
        mc_mean,
        mc_se,
        deterministic,
        z_score,
        rms_gap,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuadraticFormStats {
    pub draws: usize,
    pub mean_gap: f64,
    pub p99_gap: f64,
    #[serde(skip)]
    pub gaps: Vec<f64>,
}

/// Statistics of `|xᴴ M x − Tr M|` for `x` with i.i.d. entries from `dist`.
pub fn quadratic_form_concentration(dist: ElementDistribution, m: &CMat, draws: usize, seed: u64) -> Result<QuadraticFormStats> {
    if !m.is_square() {
        return Err(Error::Dimension("M must be square".into()));
    }
    if linalg::hermitian_defect(m) > 1e-12 * (1.0 + m.camax()) {
        return Err(Error::InvalidArgument("M must be Hermitian".into()));
    }
    dist.check(true)?;
    let p = m.nrows();
    let tr = m.trace();
    let gaps = run_trials(draws, |t| {
        let mut rng = stream_rng(seed, Domain::Auxiliary, t, 0);
        let mut x = vec![C64::new(0.0, 0.0); p];
        dist.fill(&mut rng, &mut x);
        let x = CVec::from_vec(x);
        Ok((linalg::sesquilinear(m, &x, &x) - tr).norm())
    })?;
    let mean_gap = gaps.iter().sum::<f64>() / draws as f64;
    let mut sorted = gaps.clone();
    sorted.sort_by(f64::total_cmp);
    let idx = ((0.99 * draws as f64).ceil() as usize).clamp(1, draws) - 1;
    Ok(QuadraticFormStats {
        draws,
        mean_gap,
        p99_gap: sorted[idx],
        gaps,
    })
}

/// Writes `trial,index,value` rows, one per eigenvalue.
pub fn write_eigenvalues_csv<W: Write>(mut w: W, samples: &[EnsembleSample]) -> Result<()> {
    let io = |e: std::io::Error| Error::InvalidArgument(format!("write failed: {e}"));
    writeln!(w, "trial,index,value").map_err(io)?;
    for s in samples {
        for (k, l) in s.eigenvalues.iter().enumerate() {
            writeln!(w, "{},{k},{l:.16e}", s.trial).map_err(io)?;
        }
    }
    Ok(())
}
