//! Densities by Stieltjes inversion, support detection and the support
//! checks built on them.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixedpoint::{solve_fixed_point, solve_points, FixedPoint, SolverOptions, SpectralPoint, MIN_IMAG};
use crate::linalg;
use crate::model::ModelSpec;

/// Default imaginary offset for density evaluation.
pub const DEFAULT_V: f64 = 1e-4;
/// Imaginary offset of the edge-refinement pass.
pub const REFINE_V: f64 = 1e-5;
/// Default density cutoff for support detection.
pub const DEFAULT_THRESHOLD: f64 = 1e-3;
/// Default number of grid points.
pub const DEFAULT_GRID_POINTS: usize = 2000;

/// Densities sampled on a real grid at height `v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub grid: Vec<f64>,
    pub v: f64,
    /// `(1/π) Im m_n(x + iv)`.
    pub lsd: Vec<f64>,
    /// `mu[j][k] = (1/π) Im δ_j(x_k + iv)`.
    pub mu: Option<Vec<Vec<f64>>>,
    /// `mu_tilde[j][k] = (1/π) Im δ̃_j(x_k + iv)`.
    pub mu_tilde: Option<Vec<Vec<f64>>>,
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1])).sum()
}

impl DensityProfile {
    /// Trapezoid integral of the limiting spectral density over the grid.
    pub fn mass(&self) -> f64 {
        trapezoid(&self.grid, &self.lsd)
    }

    /// Trapezoid integral of `lsd` restricted to `[lo, hi]` (grid points only).
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        let (x, y): (Vec<f64>, Vec<f64>) = self
            .grid
            .iter()
            .zip(&self.lsd)
            .filter(|(x, _)| **x >= lo && **x <= hi)
            .map(|(x, y)| (*x, *y))
            .unzip();
        trapezoid(&x, &y)
    }

    /// Masses of `μ_j` and `μ̃_j`, when the measures were computed.
    pub fn measure_masses(&self, j: usize) -> Option<(f64, f64)> {
        let mu = self.mu.as_ref()?.get(j)?;
        let mt = self.mu_tilde.as_ref()?.get(j)?;
        Some((trapezoid(&self.grid, mu), trapezoid(&self.grid, mt)))
    }

    /// Trapezoid integral of `f(x)·lsd(x)` over the grid.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let y: Vec<f64> = self.grid.iter().zip(&self.lsd).map(|(&x, &d)| f(x) * d).collect();
        trapezoid(&self.grid, &y)
    }

    /// Normalised limiting CDF at `x`, linearly interpolated between grid
    /// points; zero left of the grid and one right of it.
    pub fn cdf_at(&self, cdf: &[f64], x: f64) -> f64 {
        let g = &self.grid;
        if x <= g[0] {
            return 0.0;
        }
        if x >= g[g.len() - 1] {
            return 1.0;
        }
        let k = g.partition_point(|&t| t <= x);
        let (x0, x1) = (g[k - 1], g[k]);
        cdf[k - 1] + (x - x0) / (x1 - x0) * (cdf[k] - cdf[k - 1])
    }

    /// Cumulative trapezoid integral of `lsd`, normalised to end at one.
    pub fn cdf(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.grid.len());
        let mut acc = 0.0;
        out.push(0.0);
        for k in 1..self.grid.len() {
            acc += 0.5 * (self.grid[k] - self.grid[k - 1]) * (self.lsd[k] + self.lsd[k - 1]);
            out.push(acc);
        }
        if acc > 0.0 {
            for c in &mut out {
                *c /= acc;
            }
        }
        out
    }

    /// Mean grid spacing.
    pub fn step(&self) -> f64 {
        let n = self.grid.len();
        if n < 2 {
            0.0
        } else {
            (self.grid[n - 1] - self.grid[0]) / (n - 1) as f64
        }
    }

    /// Writes `x,lsd` plus `mu_j,mu_tilde_j` for each requested `j`.
    pub fn write_csv<W: Write>(&self, mut w: W, measures: &[usize]) -> Result<()> {
        let n = self.mu.as_ref().map_or(0, |m| m.len());
        if let Some(&j) = measures.iter().find(|&&j| j >= n) {
            return Err(Error::InvalidArgument(format!("measure index {j} unavailable ({n} measures computed)")));
        }
        let io = |e: std::io::Error| Error::InvalidArgument(format!("write failed: {e}"));
        let mut header = String::from("x,lsd");
        for j in measures {
            header.push_str(&format!(",mu_{j},mu_tilde_{j}"));
        }
        writeln!(w, "{header}").map_err(io)?;
        for k in 0..self.grid.len() {
            let mut line = format!("{:.16e},{:.16e}", self.grid[k], self.lsd[k]);
            for &j in measures {
                let mu = self.mu.as_ref().expect("checked")[j][k];
                let mt = self.mu_tilde.as_ref().expect("checked")[j][k];
                line.push_str(&format!(",{mu:.16e},{mt:.16e}"));
            }
            writeln!(w, "{line}").map_err(io)?;
        }
        Ok(())
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("grid has non-finite values".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("grid must be strictly increasing".into()));
    }
    Ok(())
}

fn check_v(v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("v must be positive, got {v}")))
    }
}

fn profile_from(grid: &[f64], v: f64, fps: &[FixedPoint], include_measures: bool) -> DensityProfile {
    let lsd = fps.iter().map(|fp| fp.m_n.im / PI).collect();
    let (mu, mu_tilde) = if include_measures {
        let n = fps.first().map_or(0, |fp| fp.delta.len());
        let mu = (0..n).map(|j| fps.iter().map(|fp| fp.delta[j].im / PI).collect()).collect();
        let mt = (0..n).map(|j| fps.iter().map(|fp| fp.delta_tilde[j].im / PI).collect()).collect();
        (Some(mu), Some(mt))
    } else {
        (None, None)
    };
    DensityProfile {
        grid: grid.to_vec(),
        v,
        lsd,
        mu,
        mu_tilde,
    }
}

/// Evaluates the densities on `grid` at height `v`.
pub fn density(
    model: &ModelSpec,
    grid: &[f64],
    v: f64,
    include_measures: bool,
    opts: &SolverOptions,
) -> Result<DensityProfile> {
    check_v(v)?;
    check_grid(grid)?;
    let points = grid
        .iter()
        .map(|&x| SpectralPoint::above(x, v))
        .collect::<Result<Vec<_>>>()?;
    let fps = solve_points(model, &points, opts)?;
    Ok(profile_from(grid, v, &fps, include_measures))
}

/// Upper estimate of the spectrum, `(‖A‖ + √(max_j ‖Ω_j‖) (1 + √(p/n)))²`.
pub fn spectrum_upper_bound(model: &ModelSpec) -> f64 {
    let a = linalg::spectral_norm(model.mean());
    let w = model.correlations().iter().map(|c| c.spectral_norm()).fold(0.0, f64::max);
    let c = model.p() as f64 / model.n() as f64;
    (a + w.sqrt() * (1.0 + c.sqrt())).powi(2)
}

/// Uniform grid over `[0, 1.1·bound + 0.1]` with `points` nodes.
pub fn auto_grid(model: &ModelSpec, points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::InvalidArgument("a grid needs at least two points".into()));
    }
    let hi = 1.1 * spectrum_upper_bound(model) + 0.1;
    Ok(linspace(0.0, hi, points))
}

pub(crate) fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let h = (b - a) / (n - 1) as f64;
    (0..n).map(|k| if k + 1 == n { b } else { a + h * k as f64 }).collect()
}

/// Detected support of the limiting spectral distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportSet {
    pub intervals: Vec<[f64; 2]>,
    /// Largest right endpoint; `None` for an empty support.
    pub right_endpoint: Option<f64>,
    pub threshold: f64,
    pub v: f64,
}

impl SupportSet {
    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Whether `x` lies in an interval inflated by `pad` on both sides.
    pub fn contains(&self, x: f64, pad: f64) -> bool {
        self.intervals.iter().any(|[a, b]| x >= a - pad && x <= b + pad)
    }

    /// Whether `[a, b]` meets an interval.
    pub fn overlaps(&self, a: f64, b: f64) -> bool {
        self.intervals.iter().any(|[l, r]| a <= *r && b >= *l)
    }

    /// Gaps between consecutive intervals.
    pub fn gaps(&self) -> Vec<[f64; 2]> {
        self.intervals.windows(2).map(|w| [w[0][1], w[1][0]]).collect()
    }

    /// Widest gap between two intervals.
    pub fn largest_gap(&self) -> Option<[f64; 2]> {
        self.gaps().into_iter().max_by(|a, b| (a[1] - a[0]).total_cmp(&(b[1] - b[0])))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("support sets serialize")
    }
}

fn crossing(x0: f64, y0: f64, x1: f64, y1: f64, t: f64) -> f64 {
    if y1 == y0 {
        0.5 * (x0 + x1)
    } else {
        x0 + (t - y0) / (y1 - y0) * (x1 - x0)
    }
}

/// Maximal runs of grid points with `lsd > threshold`, endpoints
/// interpolated to the crossing, gaps under two grid steps merged.
pub fn detect_support(profile: &DensityProfile, threshold: f64) -> Result<SupportSet> {
    if !(threshold.is_finite() && threshold >= 0.0) {
        return Err(Error::InvalidArgument(format!("threshold must be non-negative, got {threshold}")));
    }
    let g = &profile.grid;
    let l = &profile.lsd;
    let m = g.len();
    let mut intervals: Vec<[f64; 2]> = Vec::new();
    let mut k = 0;
    while k < m {
        if l[k] <= threshold {
            k += 1;
            continue;
        }
        let start = k;
        while k + 1 < m && l[k + 1] > threshold {
            k += 1;
        }
        let end = k;
        let a = if start == 0 {
            g[0]
        } else {
            crossing(g[start - 1], l[start - 1], g[start], l[start], threshold)
        };
        let b = if end + 1 == m {
            g[m - 1]
        } else {
            crossing(g[end], l[end], g[end + 1], l[end + 1], threshold)
        };
        intervals.push([a, b]);
        k += 1;
    }
    let h = profile.step();
    let mut merged: Vec<[f64; 2]> = Vec::with_capacity(intervals.len());
    for iv in intervals {
        match merged.last_mut() {
            Some(last) if iv[0] - last[1] < 2.0 * h => last[1] = iv[1],
            _ => merged.push(iv),
        }
    }
    let right_endpoint = merged.last().map(|iv| iv[1]);
    Ok(SupportSet {
        intervals: merged,
        right_endpoint,
        threshold,
        v: profile.v,
    })
}

/// Re-locates each endpoint of `support` from densities at height
/// [`REFINE_V`] on a 17-point sub-grid spanning the neighbouring grid cells.
pub fn refine_edges(
    model: &ModelSpec,
    profile: &DensityProfile,
    support: &SupportSet,
    opts: &SolverOptions,
) -> Result<SupportSet> {
    const SUB: usize = 17;
    let h = profile.step();
    let lo_grid = profile.grid[0];
    let hi_grid = *profile.grid.last().expect("non-empty grid");
    let mut windows = Vec::new();
    for iv in &support.intervals {
        for (side, &e) in iv.iter().enumerate() {
            let a = (e - 1.5 * h).max(lo_grid);
            let b = (e + 1.5 * h).min(hi_grid);
            windows.push((side, e, linspace(a, b, SUB)));
        }
    }
    if windows.is_empty() {
        return Ok(support.clone());
    }
    let grid: Vec<f64> = windows.iter().flat_map(|w| w.2.iter().copied()).collect();
    let points = grid
        .iter()
        .map(|&x| SpectralPoint::above(x, REFINE_V))
        .collect::<Result<Vec<_>>>()?;
    let fps = solve_points(model, &points, opts)?;
    let t = support.threshold;
    let mut endpoints = Vec::with_capacity(windows.len());
    for (w, (side, e, xs)) in windows.iter().enumerate() {
        let ys: Vec<f64> = fps[w * SUB..(w + 1) * SUB].iter().map(|fp| fp.m_n.im / PI).collect();
        // crossing nearest to the coarse endpoint, upward on the left edge
        let mut best: Option<f64> = None;
        for k in 0..SUB - 1 {
            let up = ys[k] <= t && ys[k + 1] > t;
            let down = ys[k] > t && ys[k + 1] <= t;
            if (*side == 0 && up) || (*side == 1 && down) {
                let c = crossing(xs[k], ys[k], xs[k + 1], ys[k + 1], t);
                if best.map_or(true, |b| (c - e).abs() < (b - e).abs()) {
                    best = Some(c);
                }
            }
        }
        endpoints.push(best.unwrap_or(*e));
    }
    let mut intervals: Vec<[f64; 2]> = endpoints.chunks(2).map(|c| [c[0], c[1].max(c[0])]).collect();
    intervals.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let mut merged: Vec<[f64; 2]> = Vec::with_capacity(intervals.len());
    for iv in intervals {
        match merged.last_mut() {
            Some(last) if iv[0] <= last[1] => last[1] = last[1].max(iv[1]),
            _ => merged.push(iv),
        }
    }
    Ok(SupportSet {
        right_endpoint: merged.last().map(|iv| iv[1]),
        intervals: merged,
        threshold: t,
        v: REFINE_V,
    })
}

/// Density on an [`auto_grid`] of `grid_points` nodes at [`DEFAULT_V`],
/// support at [`DEFAULT_THRESHOLD`] with refined edges.
pub fn locate_support(
    model: &ModelSpec,
    grid_points: usize,
    include_measures: bool,
    opts: &SolverOptions,
) -> Result<(DensityProfile, SupportSet)> {
    let grid = auto_grid(model, grid_points)?;
    let profile = density(model, &grid, DEFAULT_V, include_measures, opts)?;
    let coarse = detect_support(&profile, DEFAULT_THRESHOLD)?;
    let support = refine_edges(model, &profile, &coarse, opts)?;
    Ok((profile, support))
}

/// Which measure a violation refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Mu(usize),
    MuTilde(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InclusionViolation {
    pub measure: Measure,
    pub x: f64,
    pub density: f64,
}

/// Outcome of [`check_support_inclusion`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InclusionReport {
    pub threshold: f64,
    /// Points with `|x|` below this radius were skipped (see
    /// [`origin_radius`]).
    pub excluded_radius: f64,
    pub measures: usize,
    pub grid_points: usize,
    pub violations: Vec<InclusionViolation>,
}

impl InclusionReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Radius around the origin inside which a unit point mass at zero,
/// smoothed at height `v`, has density above `threshold`:
/// `√(v / (π·threshold))`.
pub fn origin_radius(v: f64, threshold: f64) -> f64 {
    if threshold > 0.0 {
        (v / (PI * threshold)).sqrt()
    } else {
        f64::INFINITY
    }
}

/// Checks that wherever some `μ_j` or `μ̃_j` density exceeds `threshold`
/// away from the origin, `x` lies in the support inflated by one grid step.
/// The measures may carry point masses at zero (`μ̃_j` does whenever
/// `p < n`), so the comparison is made on `ℝ∖{0}` at the resolution of the
/// profile: points within [`origin_radius`] of zero are skipped.
pub fn check_support_inclusion(profile: &DensityProfile, support: &SupportSet, threshold: f64) -> Result<InclusionReport> {
    let (Some(mu), Some(mt)) = (&profile.mu, &profile.mu_tilde) else {
        return Err(Error::Precondition("profile was computed without the measures".into()));
    };
    let h = profile.step();
    let r0 = origin_radius(profile.v, threshold);
    let mut violations = Vec::new();
    for (label, rows) in [(0u8, mu), (1u8, mt)] {
        for (j, row) in rows.iter().enumerate() {
            for (&x, &d) in profile.grid.iter().zip(row) {
                if d > threshold && x.abs() >= r0 && !support.contains(x, h) {
                    let measure = if label == 0 { Measure::Mu(j) } else { Measure::MuTilde(j) };
                    violations.push(InclusionViolation { measure, x, density: d });
                }
            }
        }
    }
    Ok(InclusionReport {
        threshold,
        excluded_radius: r0,
        measures: mu.len(),
        grid_points: profile.grid.len(),
        violations,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EdgeGapPoint {
    pub x: f64,
    pub min_abs_delta_tilde: f64,
    pub min_abs_one_plus_delta: f64,
}

/// Outcome of [`edge_gap_condition`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EdgeGapReport {
    pub interval: [f64; 2],
    pub points: Vec<EdgeGapPoint>,
    /// Grid values where the continuation to the axis failed.
    pub inconclusive: Vec<f64>,
    pub min_abs_delta_tilde: f64,
    pub min_abs_one_plus_delta: f64,
}

impl EdgeGapReport {
    /// Both minima exceed `floor` and every point was conclusive.
    pub fn holds(&self, floor: f64) -> bool {
        self.inconclusive.is_empty() && self.min_abs_delta_tilde > floor && self.min_abs_one_plus_delta > floor
    }
}

/// Evaluates `min_j |δ̃_j(x)|` and `min_j |1 + δ_j(x)|` on `grid_points`
/// nodes of `[a, b]`, approximating boundary values by continuation down to
/// `Im z = 1e-6`. The interval must avoid `support`.
pub fn edge_gap_condition(
    model: &ModelSpec,
    interval: [f64; 2],
    grid_points: usize,
    support: &SupportSet,
    opts: &SolverOptions,
) -> Result<EdgeGapReport> {
    let [a, b] = interval;
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::InvalidArgument(format!("invalid interval [{a}, {b}]")));
    }
    if grid_points < 2 {
        return Err(Error::InvalidArgument("at least two grid points are needed".into()));
    }
    if support.overlaps(a, b) {
        return Err(Error::Precondition(format!("[{a}, {b}] overlaps the detected support")));
    }
    let xs = linspace(a, b, grid_points);
    let cold = opts.cold();
    let solved: Vec<(f64, Result<FixedPoint>)> = xs
        .par_iter()
        .map(|&x| {
            let r = SpectralPoint::above(x, MIN_IMAG).and_then(|pt| solve_fixed_point(model, pt, &cold));
            (x, r)
        })
        .collect();
    let mut points = Vec::new();
    let mut inconclusive = Vec::new();
    for (x, r) in solved {
        match r {
            Ok(fp) => {
                let dt = fp.delta_tilde.iter().map(|d| d.norm()).fold(f64::INFINITY, f64::min);
                let od = fp.delta.iter().map(|d| (1.0 + d).norm()).fold(f64::INFINITY, f64::min);
                points.push(EdgeGapPoint {
                    x,
                    min_abs_delta_tilde: dt,
                    min_abs_one_plus_delta: od,
                });
            }
            Err(e) if e.is_numerical() => inconclusive.push(x),
            Err(e) => return Err(e),
        }
    }
    let min_dt = points.iter().map(|p| p.min_abs_delta_tilde).fold(f64::INFINITY, f64::min);
    let min_od = points.iter().map(|p| p.min_abs_one_plus_delta).fold(f64::INFINITY, f64::min);
    Ok(EdgeGapReport {
        interval,
        points,
        inconclusive,
        min_abs_delta_tilde: min_dt,
        min_abs_one_plus_delta: min_od,
    })
}
