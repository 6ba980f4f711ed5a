//! Canonical model constructors.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

use super::{Constructor, Correlation, Factor, ModelSpec};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Domain};
use crate::{CMat, C64};

fn constructor(name: &str, params: serde_json::Value) -> Constructor {
    let params = match params {
        serde_json::Value::Object(m) => m,
        _ => serde_json::Map::new(),
    };
    Constructor {
        name: name.to_string(),
        params,
    }
}

/// `A = 0`, `Ω_j = B_j = I_p`.
pub fn marchenko_pastur(p: usize, n: usize) -> Result<ModelSpec> {
    if p == 0 || n == 0 {
        return Err(Error::InvalidArgument(format!("p = {p}, n = {n}: both must be ≥ 1")));
    }
    let factors = vec![Factor::Diagonal(vec![1.0; p]); n];
    Ok(ModelSpec::from_factors(CMat::zeros(p, n), factors)?
        .with_origin(constructor("marchenko-pastur", json!({ "p": p, "n": n })), None))
}

/// Named simulation setups: `fig2` (density), `fig3` (measure supports) and
/// `fig4` (eigenvalue locations).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Figure {
    Fig2,
    Fig3,
    Fig4,
}

impl Figure {
    /// `(p, n)` used when none are given. For `fig4` the ratio `p/n = 1/8`
    /// keeps both mean spikes separated from the bulk.
    pub fn default_dims(self) -> (usize, usize) {
        match self {
            Figure::Fig2 => (200, 400),
            Figure::Fig3 => (6, 20),
            Figure::Fig4 => (200, 1600),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig2" => Ok(Figure::Fig2),
            "fig3" => Ok(Figure::Fig3),
            "fig4" => Ok(Figure::Fig4),
            other => Err(Error::InvalidArgument(format!("unknown figure setup {other:?}"))),
        }
    }
}

/// Figure setup at its default dimensions.
pub fn figure_setup(which: Figure, seed: u64) -> ModelSpec {
    let (p, n) = which.default_dims();
    figure_setup_with_dims(which, p, n, seed).expect("default dimensions are valid")
}

/// Figure setup at arbitrary dimensions. Row and column blocks scale with
/// `p` and `n`. Only `Fig2` consumes `seed` (its `K_j` are quenched draws).
pub fn figure_setup_with_dims(which: Figure, p: usize, n: usize, seed: u64) -> Result<ModelSpec> {
    if p < 2 || n < 2 {
        return Err(Error::InvalidArgument(format!(
            "{which} needs p ≥ 2 and n ≥ 2, got p = {p}, n = {n}"
        )));
    }
    let pn = (p + n) as f64;
    let mut mean = CMat::zeros(p, n);
    let correlations: Vec<Correlation> = match which {
        Figure::Fig2 => {
            // Ω_j = diag{I, 8I + (n+j)/(2n) K_j}, K_j = diag(z²) with z ~ N(0,1)
            let half = p / 2;
            mean[(0, 0)] = C64::new(2.0, 0.0);
            mean[(1, 1)] = -2.0 * C64::from_polar(1.0, -0.6 * PI);
            (1..=n)
                .map(|j| {
                    let mut rng = stream_rng(seed, Domain::Model, 0, j as u64);
                    let w = (n + j) as f64 / (2 * n) as f64;
                    let diag = (0..p)
                        .map(|l| {
                            if l < half {
                                1.0
                            } else {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                8.0 + w * z * z
                            }
                        })
                        .collect();
                    Correlation::Diagonal(diag)
                })
                .collect()
        }
        Figure::Fig3 => {
            // first quarter of columns keeps the upper half of rows, last
            // quarter keeps the lower half
            let half = p / 2;
            let quarter = n / 4;
            mean[(0, 0)] = C64::new(2.0, 0.0);
            mean[(1, 1)] = C64::from_polar(1.0, 0.4 * PI);
            (1..=n)
                .map(|j| {
                    let diag = (1..=p)
                        .map(|i| {
                            let base = 1.0 + (i + j) as f64 / pn;
                            let keep = if j <= quarter {
                                i <= half
                            } else if j > n - quarter {
                                i > half
                            } else {
                                true
                            };
                            if keep {
                                base
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    Correlation::Diagonal(diag)
                })
                .collect()
        }
        Figure::Fig4 => {
            mean[(0, 0)] = C64::new(1.0, 0.0);
            mean[(1, 1)] = 1.5 * C64::from_polar(1.0, -0.2 * PI);
            (1..=n)
                .map(|j| Correlation::Diagonal((1..=p).map(|i| 1.0 + (i + j) as f64 / pn).collect()))
                .collect()
        }
    };
    let factors = correlations.iter().map(Correlation::sqrt_factor).collect();
    let seed_used = (which == Figure::Fig2).then_some(seed);
    Ok(ModelSpec::new(mean, correlations, Some(factors))?
        .with_origin(constructor(which.name(), json!({ "p": p, "n": n })), seed_used))
}

/// Variance-profile model: `Ω_j = U diag(f_Ω(l/p, j/n); l ≤ p) Uᴴ` and
/// `A = U rect-diag(f_A(j/p); j ≤ min(p, n))`, indices starting at 1.
/// `U` defaults to the identity, in which case everything stays diagonal.
pub fn variance_profile<FO, FA>(f_omega: FO, f_a: FA, p: usize, n: usize, u: Option<&CMat>) -> Result<ModelSpec>
where
    FO: Fn(f64, f64) -> f64,
    FA: Fn(f64) -> f64,
{
    if p == 0 || n == 0 {
        return Err(Error::InvalidArgument(format!("p = {p}, n = {n}: both must be ≥ 1")));
    }
    if let Some(u) = u {
        if u.nrows() != p || u.ncols() != p {
            return Err(Error::Dimension(format!("U must be {p}x{p}")));
        }
    }
    let mut profiles = Vec::with_capacity(n);
    for j in 1..=n {
        let mut col = Vec::with_capacity(p);
        for l in 1..=p {
            let v = f_omega(l as f64 / p as f64, j as f64 / n as f64);
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "f_omega({}, {}) = {v} is not a positive finite value",
                    l as f64 / p as f64,
                    j as f64 / n as f64
                )));
            }
            col.push(v);
        }
        profiles.push(col);
    }
    let mut mean = CMat::zeros(p, n);
    for j in 1..=p.min(n) {
        let v = f_a(j as f64 / p as f64);
        if !v.is_finite() {
            return Err(Error::InvalidArgument(format!("f_A({}) is not finite", j as f64 / p as f64)));
        }
        mean[(j - 1, j - 1)] = C64::new(v, 0.0);
    }
    match u {
        None => {
            let factors = profiles
                .into_iter()
                .map(|d| Factor::Diagonal(d.into_iter().map(f64::sqrt).collect()))
                .collect();
            ModelSpec::from_factors(mean, factors)
        }
        Some(u) => {
            let factors = profiles
                .into_iter()
                .map(|d| {
                    let mut b = u.clone();
                    for (k, v) in d.iter().enumerate() {
                        b.column_mut(k).scale_mut(v.sqrt());
                    }
                    Factor::Dense(b)
                })
                .collect();
            ModelSpec::from_factors(u * mean, factors)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, AdmissibleRanges};

    #[test]
    fn marchenko_pastur_small() {
        let m = marchenko_pastur(2, 4).unwrap();
        assert_eq!(m.mean(), &CMat::zeros(2, 4));
        assert_eq!(m.correlations().len(), 4);
        for c in m.correlations() {
            assert_eq!(c, &Correlation::Diagonal(vec![1.0, 1.0]));
        }
        assert_eq!(m.d(), &[2, 2, 2, 2]);
        assert!(marchenko_pastur(0, 3).is_err());
    }

    #[test]
    fn marchenko_pastur_validates() {
        let r = validate(&marchenko_pastur(100, 200).unwrap(), &AdmissibleRanges::default());
        assert!(r.passed());
        assert_eq!(r.ratio_p_n, 0.5);
        assert_eq!(r.min_trace_ratio, 1.0);
        assert_eq!(r.max_corr_norm, 1.0);
        let r = validate(&marchenko_pastur(100, 400).unwrap(), &AdmissibleRanges::default());
        assert!(r.passed());
        assert_eq!(r.ratio_p_n, 0.25);
    }

    #[test]
    fn fig4_mean_entries() {
        let m = figure_setup(Figure::Fig4, 0);
        let nonzero: Vec<_> = m
            .mean()
            .iter()
            .filter(|c| **c != C64::new(0.0, 0.0))
            .collect();
        assert_eq!(nonzero.len(), 2);
        assert_eq!(m.mean()[(0, 0)], C64::new(1.0, 0.0));
        let want = 1.5 * C64::new((-0.2 * PI).cos(), (-0.2 * PI).sin());
        assert!((m.mean()[(1, 1)] - want).norm() < 1e-15);
        let Correlation::Diagonal(d) = &m.correlations()[0] else { panic!() };
        // Ω_1 = diag(1 + (i+1)/(p+n))
        assert!((d[0] - (1.0 + 2.0 / 1800.0)).abs() < 1e-15);
    }

    #[test]
    fn fig2_mean_and_validation() {
        let m = figure_setup(Figure::Fig2, 5);
        assert_eq!(m.mean()[(0, 0)], C64::new(2.0, 0.0));
        let want = -2.0 * C64::new((-0.6 * PI).cos(), (-0.6 * PI).sin());
        assert!((m.mean()[(1, 1)] - want).norm() < 1e-15);
        let others = m.mean().iter().filter(|c| **c != C64::new(0.0, 0.0)).count();
        assert_eq!(others, 2);
        let r = validate(&m, &AdmissibleRanges::default());
        assert!(r.passed());
        assert!(r.max_corr_norm >= 8.0);
        // quenched: same seed, same model
        let again = figure_setup(Figure::Fig2, 5);
        assert_eq!(m.correlations(), again.correlations());
        let other = figure_setup(Figure::Fig2, 6);
        assert_ne!(m.correlations(), other.correlations());
        let Correlation::Diagonal(d) = &m.correlations()[7] else { panic!() };
        assert!(d[..100].iter().all(|&x| x == 1.0));
        assert!(d[100..].iter().all(|&x| x >= 8.0));
    }

    #[test]
    fn fig3_masking() {
        let m = figure_setup(Figure::Fig3, 0);
        assert_eq!((m.p(), m.n()), (6, 20));
        for (j, c) in m.correlations().iter().enumerate() {
            let Correlation::Diagonal(d) = c else { panic!() };
            let j1 = j + 1;
            if j1 <= 5 {
                assert!(d[3..].iter().all(|&x| x == 0.0));
                assert!(d[..3].iter().all(|&x| x > 1.0));
            } else if j1 >= 16 {
                assert!(d[..3].iter().all(|&x| x == 0.0));
                assert!(d[3..].iter().all(|&x| x > 1.0));
            } else {
                assert!(d.iter().all(|&x| x > 1.0));
            }
        }
        assert!(validate(&m, &AdmissibleRanges::default()).passed());
    }

    #[test]
    fn constant_profile_is_marchenko_pastur() {
        let vp = variance_profile(|_, _| 1.0, |_| 0.0, 5, 8, None).unwrap();
        let mp = marchenko_pastur(5, 8).unwrap();
        assert_eq!(vp.mean(), mp.mean());
        assert_eq!(vp.correlations(), mp.correlations());
        assert_eq!(vp.factors(), mp.factors());
    }

    #[test]
    fn separable_profile() {
        let vp = variance_profile(|a, _| 1.0 + a, |_| 0.0, 4, 6, None).unwrap();
        for c in vp.correlations() {
            let Correlation::Diagonal(d) = c else { panic!("dense") };
            for (a, b) in d.iter().zip([1.25, 1.5, 1.75, 2.0]) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn profile_rejects_non_positive() {
        assert!(variance_profile(|a, _| a - 0.5, |_| 0.0, 4, 4, None).is_err());
    }

    #[test]
    fn rotated_profile_matches_rotation() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let u = crate::linalg::haar_unitary(4, &mut rng);
        let base = variance_profile(|a, b| 1.0 + a * b, |t| 1.0 + t, 4, 6, None).unwrap();
        let rot = variance_profile(|a, b| 1.0 + a * b, |t| 1.0 + t, 4, 6, Some(&u)).unwrap();
        let expect = base.rotated(&u).unwrap();
        assert!((rot.mean() - expect.mean()).camax() < 1e-12);
        for (a, b) in rot.correlations().iter().zip(expect.correlations()) {
            assert!((a.to_dense() - b.to_dense()).camax() < 1e-12);
        }
    }
}
