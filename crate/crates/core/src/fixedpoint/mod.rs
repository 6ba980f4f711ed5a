//! Fixed-point system for `δ(z)`, `δ̃(z)` and the deterministic equivalent
//! `Θ(z)` of the resolvent.

mod anderson;
mod kernel;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::{CMat, CVec, C64};

use anderson::Mixer;
pub use kernel::{assemble, fixed_point_residual, Equivalents, FixedPointMap, MapValue};
use kernel::sup_distance;

/// Imaginary part where the continuation towards the real axis starts.
pub const CONTINUATION_START: f64 = 0.1;
/// Smallest imaginary part used to approximate real-axis boundary values.
pub const MIN_IMAG: f64 = 1e-6;
/// Grid points solved sequentially (warm-started) per parallel task.
pub const GRID_CHUNK: usize = 16;

/// A point `z` with `Im z > 0`, or `Im z = 0` and `Re z < 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpectralPoint(C64);

impl SpectralPoint {
    pub fn new(z: C64) -> Result<Self> {
        let ok = z.is_finite() && (z.im > 0.0 || (z.im == 0.0 && z.re < 0.0));
        if ok {
            Ok(Self(z))
        } else {
            Err(Error::InvalidPoint(z))
        }
    }

    /// `x + iv` with `v > 0`.
    pub fn above(x: f64, v: f64) -> Result<Self> {
        Self::new(C64::new(x, v))
    }

    /// Real `x < 0`.
    pub fn negative(x: f64) -> Result<Self> {
        Self::new(C64::new(x, 0.0))
    }

    pub fn z(&self) -> C64 {
        self.0
    }

    pub fn is_real(&self) -> bool {
        self.0.im == 0.0
    }
}

/// Starting point of the iteration.
#[derive(Clone, Debug, Default)]
pub enum Init {
    /// `δ⁰ = δ̃⁰ = −1/z`, the transform of a unit mass at 0. Points close to
    /// the real axis are reached by continuation from `Im z = 0.1`.
    #[default]
    Cold,
    Warm(FixedPoint),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Stop when `‖f(x) − x‖∞ ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Mixing weight `λ` in `x ← x + λ(f(x) − x)`.
    pub damping: f64,
    /// Anderson history length; 0 gives plain damped Picard.
    pub anderson_depth: usize,
    #[serde(skip)]
    pub init: Init,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 5000,
            damping: 0.5,
            anderson_depth: 6,
            init: Init::Cold,
        }
    }
}

impl SolverOptions {
    pub fn check(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidArgument(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be positive".into()));
        }
        Ok(())
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn warm(&self, start: FixedPoint) -> Self {
        let mut o = self.clone();
        o.init = Init::Warm(start);
        o
    }

    pub fn cold(&self) -> Self {
        let mut o = self.clone();
        o.init = Init::Cold;
        o
    }
}

/// Converged `(δ, δ̃)` at one point, without the matrices.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FixedPoint {
    pub z: C64,
    pub delta: Vec<C64>,
    pub delta_tilde: Vec<C64>,
    /// `Tr Θ(z) / p`.
    pub m_n: C64,
    pub iterations: usize,
    /// `‖f(δ, δ̃) − (δ, δ̃)‖∞` at the returned iterate.
    pub residual: f64,
}

/// Full solution at one point: `δ`, `δ̃` and the matrices `F`, `F̃`, `Θ`, `Θ̃`.
#[derive(Clone, Debug)]
pub struct Solution {
    pub z: C64,
    pub delta: Vec<C64>,
    pub delta_tilde: Vec<C64>,
    pub theta: CMat,
    pub theta_tilde: CMat,
    pub f_mat: CMat,
    pub f_tilde_diag: Vec<C64>,
    pub m_n: C64,
    pub iterations: usize,
    pub residual: f64,
}

impl Solution {
    pub fn fixed_point(&self) -> FixedPoint {
        FixedPoint {
            z: self.z,
            delta: self.delta.clone(),
            delta_tilde: self.delta_tilde.clone(),
            m_n: self.m_n,
            iterations: self.iterations,
            residual: self.residual,
        }
    }
}

fn pack(fp: &FixedPoint) -> Vec<C64> {
    fp.delta.iter().chain(&fp.delta_tilde).copied().collect()
}

/// Admissibility of an iterate: finite, `1 + δ_j ≠ 0`, and inside the
/// closure of the Stieltjes class up to `slack` (`Im ≥ 0` above the axis,
/// real and positive on the negative axis).
fn admissible(z: C64, x: &[C64], n: usize, slack: f64) -> bool {
    x.iter().enumerate().all(|(k, c)| {
        if !c.is_finite() {
            return false;
        }
        if k < n && (C64::new(1.0, 0.0) + c).norm() < 1e-300 {
            return false;
        }
        let tol = slack * (1.0 + c.norm());
        if z.im > 0.0 {
            c.im >= -tol
        } else {
            c.re > 0.0 && c.im.abs() <= tol
        }
    })
}

/// Iterates from `x` at a fixed `z` until the residual drops below `tol`.
fn iterate(map: &FixedPointMap<'_>, z: C64, mut x: Vec<C64>, opts: &SolverOptions, spent: usize) -> Result<FixedPoint> {
    let n = map.model().n();
    let beta = opts.damping;
    let mut value = map.apply(z, &x)?;
    let mut g: Vec<C64> = value.image.iter().zip(&x).map(|(f, xi)| f - xi).collect();
    let mut res = g.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut mixer = Mixer::new(opts.anderson_depth);
    let mut iterations = 0usize;
    loop {
        if res <= opts.tol {
            return Ok(FixedPoint {
                z,
                delta: x[..n].to_vec(),
                delta_tilde: x[n..].to_vec(),
                m_n: value.m_n,
                iterations: spent + iterations,
                residual: res,
            });
        }
        if iterations >= opts.max_iter {
            return Err(Error::NonConvergence {
                z,
                iterations: spent + iterations,
                residual: res,
                last: Box::new(FixedPoint {
                    z,
                    delta: x[..n].to_vec(),
                    delta_tilde: x[n..].to_vec(),
                    m_n: value.m_n,
                    iterations: spent + iterations,
                    residual: res,
                }),
            });
        }
        iterations += 1;

        let mut accelerated = !mixer.is_empty();
        let mut next = mixer.propose(&x, &g, beta);
        if accelerated && !admissible(z, &next, n, 1e-12) {
            mixer.clear();
            accelerated = false;
            next = x.iter().zip(&g).map(|(xi, gi)| xi + gi * beta).collect();
        }
        let mut next_value = match map.apply(z, &next) {
            Ok(v) => Some(v),
            Err(e) if accelerated => {
                let _ = e;
                None
            }
            Err(e) => return Err(e),
        };
        let mut next_g = next_value.as_ref().map(|v| {
            v.image.iter().zip(&next).map(|(f, xi)| f - xi).collect::<Vec<C64>>()
        });
        let mut next_res = next_g
            .as_ref()
            .map(|g| g.iter().map(|c| c.norm()).fold(0.0, f64::max))
            .unwrap_or(f64::INFINITY);
        if accelerated && !(next_res <= 4.0 * res) {
            // reject the extrapolated step
            mixer.clear();
            next = x.iter().zip(&g).map(|(xi, gi)| xi + gi * beta).collect();
            let v = map.apply(z, &next)?;
            next_g = Some(v.image.iter().zip(&next).map(|(f, xi)| f - xi).collect());
            next_res = next_g.as_ref().unwrap().iter().map(|c| c.norm()).fold(0.0, f64::max);
            next_value = Some(v);
        }
        let next_g = next_g.expect("set above");
        let dx = next.iter().zip(&x).map(|(a, b)| a - b).collect();
        let dg = next_g.iter().zip(&g).map(|(a, b)| a - b).collect();
        mixer.push(dx, dg);
        x = next;
        g = next_g;
        res = next_res;
        value = next_value.expect("set above");
    }
}

fn cold_start(z: C64, n: usize) -> Vec<C64> {
    vec![-C64::new(1.0, 0.0) / z; 2 * n]
}

/// Cold solve, with continuation in `Im z` for points near the real axis.
fn solve_cold(map: &FixedPointMap<'_>, z: C64, opts: &SolverOptions) -> Result<FixedPoint> {
    let n = map.model().n();
    if z.im > 0.0 && z.im < CONTINUATION_START {
        let mut v = CONTINUATION_START;
        let mut fp = iterate(map, C64::new(z.re, v), cold_start(C64::new(z.re, v), n), opts, 0)?;
        loop {
            v *= 0.5;
            if v <= z.im {
                break;
            }
            fp = iterate(map, C64::new(z.re, v), pack(&fp), opts, fp.iterations)?;
        }
        iterate(map, z, pack(&fp), opts, fp.iterations)
    } else {
        iterate(map, z, cold_start(z, n), opts, 0)
    }
}

fn in_stieltjes_class(fp: &FixedPoint) -> bool {
    let x = pack(fp);
    admissible(fp.z, &x, fp.delta.len(), 1e-9)
}

pub(crate) fn solve_with_map(map: &FixedPointMap<'_>, point: SpectralPoint, opts: &SolverOptions) -> Result<FixedPoint> {
    opts.check()?;
    let z = point.z();
    let n = map.model().n();
    if let Init::Warm(start) = &opts.init {
        if start.delta.len() == n && start.delta_tilde.len() == n {
            if let Ok(fp) = iterate(map, z, pack(start), opts, 0) {
                if in_stieltjes_class(&fp) {
                    return Ok(fp);
                }
            }
        }
    }
    let fp = solve_cold(map, z, opts)?;
    if !in_stieltjes_class(&fp) {
        return Err(Error::NonConvergence {
            z,
            iterations: fp.iterations,
            residual: fp.residual,
            last: Box::new(fp),
        });
    }
    Ok(fp)
}

/// Solves for `(δ, δ̃)` at `point` without forming the matrices.
pub fn solve_fixed_point(model: &ModelSpec, point: SpectralPoint, opts: &SolverOptions) -> Result<FixedPoint> {
    solve_with_map(&FixedPointMap::new(model), point, opts)
}

fn complete(model: &ModelSpec, fp: FixedPoint) -> Result<Solution> {
    let eq = assemble(model, fp.z, &fp.delta, &fp.delta_tilde)?;
    let m_n = eq.theta.trace() / model.p() as f64;
    Ok(Solution {
        z: fp.z,
        delta: fp.delta,
        delta_tilde: fp.delta_tilde,
        theta: eq.theta,
        theta_tilde: eq.theta_tilde,
        f_mat: eq.f_mat,
        f_tilde_diag: eq.f_tilde_diag,
        m_n,
        iterations: fp.iterations,
        residual: fp.residual,
    })
}

/// Solves the fixed-point system at `point` and builds `Θ`, `Θ̃`, `F`, `F̃`.
pub fn solve(model: &ModelSpec, point: SpectralPoint, opts: &SolverOptions) -> Result<Solution> {
    let fp = solve_fixed_point(model, point, opts)?;
    complete(model, fp)
}

/// Lean grid solve shared with the spectrum module. Points are visited in
/// order of `(Re z, Im z)` in fixed-size chunks; inside a chunk each point
/// is warm-started from its predecessor, chunks run in parallel. The result
/// does not depend on the number of threads.
pub(crate) fn solve_points(model: &ModelSpec, points: &[SpectralPoint], opts: &SolverOptions) -> Result<Vec<FixedPoint>> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("no spectral points given".into()));
    }
    opts.check()?;
    let map = FixedPointMap::new(model);
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let (za, zb) = (points[a].z(), points[b].z());
        za.re.total_cmp(&zb.re).then(za.im.total_cmp(&zb.im))
    });
    let chunks: Vec<&[usize]> = order.chunks(GRID_CHUNK).collect();
    let solved: Vec<Vec<(usize, Result<FixedPoint>)>> = chunks
        .par_iter()
        .map(|chunk| {
            let mut out = Vec::with_capacity(chunk.len());
            let mut prev: Option<FixedPoint> = None;
            for &idx in chunk.iter() {
                let o = match &prev {
                    Some(fp) => opts.warm(fp.clone()),
                    None => opts.clone(),
                };
                let r = solve_with_map(&map, points[idx], &o);
                if let Ok(fp) = &r {
                    prev = Some(fp.clone());
                }
                out.push((idx, r));
            }
            out
        })
        .collect();
    let mut results: Vec<Option<FixedPoint>> = vec![None; points.len()];
    let mut failures = Vec::new();
    for (idx, r) in solved.into_iter().flatten() {
        match r {
            Ok(fp) => results[idx] = Some(fp),
            Err(e) => failures.push((idx, e)),
        }
    }
    if !failures.is_empty() {
        failures.sort_by_key(|(i, _)| *i);
        return Err(Error::Grid {
            failures,
            total: points.len(),
        });
    }
    Ok(results.into_iter().map(|r| r.expect("all points solved")).collect())
}

/// [`solve`] over many points, warm-starting neighbours (see the ordering
/// rules on the lean variant). Failures are collected with their indices.
pub fn solve_grid(model: &ModelSpec, points: &[SpectralPoint], opts: &SolverOptions) -> Result<Vec<Solution>> {
    let fps = solve_points(model, points, opts)?;
    fps.into_par_iter().map(|fp| complete(model, fp)).collect()
}

/// `(1/p) Tr(C Θ)`.
pub fn trace_functional(sol: &Solution, c: &CMat) -> Result<C64> {
    let p = sol.theta.nrows();
    if c.nrows() != p || c.ncols() != p {
        return Err(Error::Dimension(format!("C is {}x{}, expected {p}x{p}", c.nrows(), c.ncols())));
    }
    let ct = c.transpose();
    let s: C64 = ct.iter().zip(sol.theta.iter()).map(|(a, b)| a * b).sum();
    Ok(s / p as f64)
}

/// `uᴴ Θ v`.
pub fn bilinear_functional(sol: &Solution, u: &CVec, v: &CVec) -> Result<C64> {
    let p = sol.theta.nrows();
    if u.len() != p || v.len() != p {
        return Err(Error::Dimension(format!(
            "vectors have lengths {} and {}, expected {p}",
            u.len(),
            v.len()
        )));
    }
    Ok(crate::linalg::sesquilinear(&sol.theta, u, v))
}

/// Distance between two fixed points in the sup norm over `(δ, δ̃)`.
pub fn fixed_point_distance(a: &FixedPoint, b: &FixedPoint) -> f64 {
    sup_distance(&pack(a), &pack(b))
}
