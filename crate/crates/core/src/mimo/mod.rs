//! Multi-user MIMO applications: the LMMSE SINR over correlated Rician
//! channels and the smallest eigenvalue of the ZF Gram matrix over
//! correlated Rayleigh channels.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fixedpoint::{bilinear_functional, solve, SolverOptions, SpectralPoint};
use crate::linalg;
use crate::model::{Correlation, ElementDistribution, Factor, ModelSpec};
use crate::montecarlo::{gram_spectrum, sample_sigma};
use crate::rng::{stream_rng, Domain};
use crate::spectrum;
use crate::{CMat, CVec, C64};

/// `[C]_{kl} = q^{|k−l|}`.
pub fn exponential_correlation(p: usize, q: f64) -> Correlation {
    Correlation::Dense(CMat::from_fn(p, p, |k, l| C64::new(q.powi(k.abs_diff(l) as i32), 0.0)))
}

/// `[1, e^{iπ sinθ}, …, e^{iπ(p−1) sinθ}]ᵀ`, not normalised.
pub fn steering_vector(p: usize, theta: f64) -> CVec {
    let s = theta.sin();
    CVec::from_fn(p, |k, _| C64::from_polar(1.0, PI * k as f64 * s))
}

fn check_correlations(p: usize, correlations: &[Correlation]) -> Result<()> {
    for (j, c) in correlations.iter().enumerate() {
        if c.dim() != p {
            return Err(Error::Dimension(format!("C_{j} is {0}x{0}, expected {p}x{p}", c.dim())));
        }
        if let Correlation::Dense(m) = c {
            if linalg::hermitian_defect(m) > 1e-12 * (1.0 + m.camax()) {
                return Err(Error::InvalidModel(format!("C_{j} is not Hermitian")));
            }
        }
        let (lo, _) = c.eigen_range();
        if lo < -1e-10 {
            return Err(Error::InvalidModel(format!("C_{j} has eigenvalue {lo:e} < 0")));
        }
    }
    Ok(())
}

/// Uplink Rician channels `h_j = C_j^{1/2} z_j/√(1+τ) + √(τ/(1+τ)) z̄_j`,
/// `z_j ~ CN(0, I/n)`, for users `j = 0, …, n`; user 0 is the one decoded.
#[derive(Clone, Debug)]
pub struct RicianChannelSpec {
    correlations: Vec<Correlation>,
    los: Vec<CVec>,
    tau: f64,
    powers: Vec<f64>,
}

impl RicianChannelSpec {
    /// `correlations` and `los` hold one entry per user, user 0 first.
    /// `powers` scale the scattered part of the `n` interferers and default
    /// to one.
    pub fn new(correlations: Vec<Correlation>, los: Vec<CVec>, tau: f64, powers: Option<Vec<f64>>) -> Result<Self> {
        if correlations.is_empty() {
            return Err(Error::InvalidModel("at least the decoded user is required".into()));
        }
        if los.len() != correlations.len() {
            return Err(Error::Dimension(format!(
                "{} LoS vectors for {} users",
                los.len(),
                correlations.len()
            )));
        }
        let p = correlations[0].dim();
        if p == 0 {
            return Err(Error::Dimension("p must be positive".into()));
        }
        check_correlations(p, &correlations)?;
        for (j, z) in los.iter().enumerate() {
            if z.len() != p {
                return Err(Error::Dimension(format!("z̄_{j} has length {}, expected {p}", z.len())));
            }
            if !z.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidModel(format!("z̄_{j} is not finite")));
            }
        }
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::InvalidModel(format!("tau must be finite and non-negative, got {tau}")));
        }
        let n = correlations.len() - 1;
        let powers = powers.unwrap_or_else(|| vec![1.0; n]);
        if powers.len() != n {
            return Err(Error::Dimension(format!("{} powers for {n} interferers", powers.len())));
        }
        if let Some(w) = powers.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidModel(format!("power {w} is not a finite non-negative number")));
        }
        Ok(Self {
            correlations,
            los,
            tau,
            powers,
        })
    }

    /// Exponential correlation with `q(j) = 0.7 + 0.2 j/n` and steering
    /// vectors at `θ(j) = π/2 + jπ/n`, `j = 0, …, n`.
    pub fn exponential_los(p: usize, n: usize, tau: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("n must be positive".into()));
        }
        let nf = n as f64;
        let correlations = (0..=n).map(|j| exponential_correlation(p, 0.7 + 0.2 * j as f64 / nf)).collect();
        let los = (0..=n).map(|j| steering_vector(p, PI / 2.0 + j as f64 * PI / nf)).collect();
        Self::new(correlations, los, tau, None)
    }

    /// Preset `fig5`: 64 antennas, 32 interferers, `τ = 1`.
    pub fn fig5() -> Self {
        Self::exponential_los(64, 32, 1.0).expect("valid preset")
    }

    pub fn p(&self) -> usize {
        self.correlations[0].dim()
    }

    /// Number of interfering users.
    pub fn n(&self) -> usize {
        self.correlations.len() - 1
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    /// Interference-plus-channel model: `Ω_j = p_j C_j/(1+τ)`,
    /// `A = Z̄ √(τ/(1+τ))` over the interferers.
    pub fn interference_model(&self) -> Result<ModelSpec> {
        let (p, n) = (self.p(), self.n());
        if n == 0 {
            return Err(Error::InvalidModel("no interfering users".into()));
        }
        let a = (self.tau / (1.0 + self.tau)).sqrt();
        let mean = CMat::from_fn(p, n, |i, j| self.los[j + 1][i] * a);
        let correlations: Vec<Correlation> = (1..=n)
            .map(|j| self.correlations[j].scaled(self.powers[j - 1] / (1.0 + self.tau)))
            .collect();
        let factors: Vec<Factor> = correlations.iter().map(|c| c.sqrt_factor()).collect();
        ModelSpec::new(mean, correlations, Some(factors))
    }
}

fn check_sigma2(sigma2: f64) -> Result<SpectralPoint> {
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(Error::InvalidArgument(format!("noise variance must be positive, got {sigma2}")));
    }
    SpectralPoint::negative(-sigma2)
}

/// Deterministic equivalent of the LMMSE SINR of user 0,
/// `Tr(C₀Θ)/(n(1+τ)) + τ z̄₀ᴴ Θ z̄₀/(1+τ)` with `Θ` at `z = −σ²`.
pub fn sinr_lmmse_asymptotic(chan: &RicianChannelSpec, sigma2: f64, opts: &SolverOptions) -> Result<f64> {
    let point = check_sigma2(sigma2)?;
    let model = chan.interference_model()?;
    let sol = solve(&model, point, opts)?;
    let tau = chan.tau;
    let n = chan.n() as f64;
    let scattered = chan.correlations[0].trace_with(&sol.theta) / (n * (1.0 + tau));
    let los = bilinear_functional(&sol, &chan.los[0], &chan.los[0])? * (tau / (1.0 + tau));
    Ok((scattered + los).re)
}

/// Monte Carlo mean and standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub trials: usize,
    pub mean: f64,
    pub se: f64,
}

impl McEstimate {
    fn from_values(values: &[f64]) -> Self {
        let t = values.len() as f64;
        let mean = values.iter().sum::<f64>() / t;
        let se = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1.0) / t).sqrt()
        } else {
            0.0
        };
        Self {
            trials: values.len(),
            mean,
            se,
        }
    }
}

/// Averages `γ₀ = h₀ᴴ (H₍₀₎H₍₀₎ᴴ + σ²I)⁻¹ h₀` over channel draws. With no
/// interferers the scattered part of `h₀` has unit variance per entry.
pub fn sinr_lmmse_empirical(chan: &RicianChannelSpec, sigma2: f64, trials: usize, seed: u64) -> Result<McEstimate> {
    check_sigma2(sigma2)?;
    if trials == 0 {
        return Err(Error::InvalidArgument("at least one trial is required".into()));
    }
    let p = chan.p();
    let n = chan.n();
    let model = if n > 0 { Some(chan.interference_model()?) } else { None };
    let f0 = chan.correlations[0].sqrt_factor();
    let s0 = 1.0 / ((n.max(1) as f64) * (1.0 + chan.tau)).sqrt();
    let a0 = (chan.tau / (1.0 + chan.tau)).sqrt();
    let values: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, Domain::Channel, t, 0);
            let mut x = vec![C64::new(0.0, 0.0); f0.cols()];
            ElementDistribution::ComplexGaussian.fill(&mut rng, &mut x);
            let mut h0: Vec<C64> = chan.los[0].iter().map(|c| c * a0).collect();
            f0.apply_into(&x, s0, &mut h0);
            let h0 = CVec::from_vec(h0);
            let mut r = match &model {
                Some(m) => {
                    let h = sample_sigma(m, ElementDistribution::ComplexGaussian, seed, t);
                    &h * h.adjoint()
                }
                None => CMat::zeros(p, p),
            };
            for i in 0..p {
                r[(i, i)] += C64::new(sigma2, 0.0);
            }
            let y = r.lu().solve(&h0).ok_or_else(|| Error::Singular("H Hᴴ + σ²I".into()))?;
            Ok(h0.dotc(&y).re)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(McEstimate::from_values(&values))
}

/// One row of an SINR sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SinrPoint {
    pub snr_db: f64,
    pub sigma2: f64,
    pub asymptotic: f64,
    pub mc: Option<McEstimate>,
}

/// `σ² = 10^{−SNR/10}`.
pub fn sigma2_from_snr_db(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Asymptotic SINR at each SNR (in dB) and, when `trials > 0`, the Monte
/// Carlo estimate from the same seed at every point.
pub fn sinr_sweep(
    chan: &RicianChannelSpec,
    snr_db: &[f64],
    trials: usize,
    seed: u64,
    opts: &SolverOptions,
) -> Result<Vec<SinrPoint>> {
    snr_db
        .iter()
        .map(|&db| {
            let sigma2 = sigma2_from_snr_db(db);
            let asymptotic = sinr_lmmse_asymptotic(chan, sigma2, opts)?;
            let mc = if trials > 0 {
                Some(sinr_lmmse_empirical(chan, sigma2, trials, seed)?)
            } else {
                None
            };
            Ok(SinrPoint {
                snr_db: db,
                sigma2,
                asymptotic,
                mc,
            })
        })
        .collect()
}

/// Writes `snr_db,asymptotic,mc_mean,mc_se`; the Monte Carlo columns are
/// empty when not computed.
pub fn write_sinr_csv<W: Write>(mut w: W, points: &[SinrPoint]) -> Result<()> {
    let io = |e: std::io::Error| Error::InvalidArgument(format!("write failed: {e}"));
    writeln!(w, "snr_db,asymptotic,mc_mean,mc_se").map_err(io)?;
    for pt in points {
        let (m, s) = match pt.mc {
            Some(mc) => (format!("{:.16e}", mc.mean), format!("{:.16e}", mc.se)),
            None => (String::new(), String::new()),
        };
        writeln!(w, "{:.16e},{:.16e},{m},{s}", pt.snr_db, pt.asymptotic).map_err(io)?;
    }
    Ok(())
}

/// Downlink Rayleigh channels `h_j = C_j^{1/2} z_j`, `j = 1, …, n`.
#[derive(Clone, Debug)]
pub struct RayleighChannelSpec {
    correlations: Vec<Correlation>,
    min_eigenvalue: f64,
}

impl RayleighChannelSpec {
    pub fn new(correlations: Vec<Correlation>) -> Result<Self> {
        let Some(first) = correlations.first() else {
            return Err(Error::InvalidModel("no users".into()));
        };
        check_correlations(first.dim(), &correlations)?;
        let min_eigenvalue = correlations.iter().map(|c| c.eigen_range().0).fold(f64::INFINITY, f64::min);
        Ok(Self {
            correlations,
            min_eigenvalue,
        })
    }

    /// `C_j = I_p` for `n` users.
    pub fn identity(p: usize, n: usize) -> Result<Self> {
        Self::new(vec![Correlation::Diagonal(vec![1.0; p]); n])
    }

    /// `[C_j]_{kl} = q(j)^{|k−l|}` with `q(j) = 0.7 + 0.2 j/n`.
    pub fn exponential(p: usize, n: usize) -> Result<Self> {
        let nf = n as f64;
        Self::new((1..=n).map(|j| exponential_correlation(p, 0.7 + 0.2 * j as f64 / nf)).collect())
    }

    pub fn p(&self) -> usize {
        self.correlations[0].dim()
    }

    pub fn n(&self) -> usize {
        self.correlations.len()
    }

    /// `min_j λ_min(C_j)`.
    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    /// `A = 0`, `Ω_j = C_j`.
    pub fn model(&self) -> Result<ModelSpec> {
        let factors = self.correlations.iter().map(|c| c.sqrt_factor()).collect();
        ModelSpec::new(CMat::zeros(self.p(), self.n()), self.correlations.clone(), Some(factors))
    }
}

/// Grid size used to locate the left edge of the support; the edge is then
/// refined locally.
pub const ZF_GRID_POINTS: usize = 400;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZfReport {
    pub trials: usize,
    pub min_over_trials: f64,
    pub per_trial: Vec<f64>,
    /// Left endpoint of the detected limiting support.
    pub analytic_floor_estimate: f64,
}

/// Smallest eigenvalue of `HHᴴ` over `trials` draws, with the left edge
/// of the limiting support as a reference.
pub fn zf_min_eig_check(
    chan: &RayleighChannelSpec,
    dist: ElementDistribution,
    trials: usize,
    seed: u64,
    opts: &SolverOptions,
) -> Result<ZfReport> {
    let (p, n) = (chan.p(), chan.n());
    if p >= n {
        return Err(Error::Precondition(format!(
            "p/n = {p}/{n} must be below one for the Gram matrix to be invertible"
        )));
    }
    if chan.min_eigenvalue <= 0.0 {
        return Err(Error::Precondition(format!(
            "min λ_min(C_j) = {:e} must be positive",
            chan.min_eigenvalue
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("at least one trial is required".into()));
    }
    dist.check(true)?;
    let model = chan.model()?;
    let (_, support) = spectrum::locate_support(&model, ZF_GRID_POINTS, false, opts)?;
    let Some(&[floor, _]) = support.intervals.first() else {
        return Err(Error::Precondition("no limiting support detected".into()));
    };
    let per_trial: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let ev = gram_spectrum(&sample_sigma(&model, dist, seed, t));
            ev[ev.len() - 1]
        })
        .collect();
    Ok(ZfReport {
        trials,
        min_over_trials: per_trial.iter().copied().fold(f64::INFINITY, f64::min),
        per_trial,
        analytic_floor_estimate: floor,
    })
}
