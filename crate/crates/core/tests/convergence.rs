//! Finite-size agreement between simulated spectra and their deterministic
//! equivalents.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use specden_core::model::{figure_setup_with_dims, marchenko_pastur, variance_profile};
use specden_core::montecarlo::{self, Functional, ProbeInterval};
use specden_core::spectrum::{self, DEFAULT_V};
use specden_core::{ElementDistribution, Figure, ModelSpec, SolverOptions, SpectralPoint, C64};

const GAUSS: ElementDistribution = ElementDistribution::ComplexGaussian;

fn opts() -> SolverOptions {
    SolverOptions::default()
}

fn profile(m: &ModelSpec, points: usize) -> specden_core::DensityProfile {
    let grid = spectrum::auto_grid(m, points).unwrap();
    spectrum::density(m, &grid, DEFAULT_V, false, &opts()).unwrap()
}

/// Sum over `bins` equal bins on `[lo, hi]` of |empirical mass − limiting mass|.
fn histogram_l1(eigenvalues: &[f64], lsd: &specden_core::DensityProfile, lo: f64, hi: f64, bins: usize) -> f64 {
    let p = eigenvalues.len() as f64;
    let w = (hi - lo) / bins as f64;
    let total = lsd.mass();
    (0..bins)
        .map(|b| {
            let (a, c) = (lo + b as f64 * w, lo + (b + 1) as f64 * w);
            let last = b + 1 == bins;
            let emp = eigenvalues.iter().filter(|&&l| l >= a && (l < c || last && l <= c)).count() as f64 / p;
            (emp - lsd.mass_between(a, c) / total).abs()
        })
        .sum()
}

#[test]
fn marchenko_pastur_largest_eigenvalue_stays_near_the_edge() {
    let m = marchenko_pastur(400, 1600).unwrap();
    let s = montecarlo::largest_eigenvalue_stat(&m, GAUSS, 50, 11, &opts()).unwrap();
    assert!((s.right_endpoint - 2.25).abs() < 0.02, "e+ = {}", s.right_endpoint);
    assert!(s.max <= 2.4, "max = {}", s.max);
}

#[test]
fn square_marchenko_pastur_trace_matches() {
    let m = marchenko_pastur(400, 400).unwrap();
    let point = SpectralPoint::new(C64::new(-1.0, 0.0)).unwrap();
    let f = Functional::Trace(DMatrix::identity(400, 400));
    let r = montecarlo::resolvent_convergence_trial(&m, GAUSS, point, &f, 50, 3, &opts()).unwrap();
    assert!((r.deterministic.re - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-9);
    assert!(r.z_score <= 3.0, "z = {}", r.z_score);
}

#[test]
fn trace_gap_shrinks_with_dimension() {
    let point = SpectralPoint::new(C64::new(-1.0, 0.0)).unwrap();
    let report = |p: usize| {
        let m = marchenko_pastur(p, p).unwrap();
        let f = Functional::Trace(DMatrix::identity(p, p));
        montecarlo::resolvent_convergence_trial(&m, GAUSS, point, &f, 50, 5, &opts()).unwrap()
    };
    let (small, big) = (report(50), report(400));
    assert!(big.gap() < small.gap(), "{} vs {}", big.gap(), small.gap());
    assert!(big.rms_gap < small.rms_gap, "{} vs {}", big.rms_gap, small.rms_gap);
}

#[test]
fn random_weight_trace_matches() {
    let m = figure_setup_with_dims(Figure::Fig2, 200, 400, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let g = DMatrix::<C64>::from_fn(200, 200, |_, _| {
        C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
    });
    let c = &g * g.adjoint() / C64::from(400.0);
    let point = SpectralPoint::new(C64::new(-1.0, 0.0)).unwrap();
    let r = montecarlo::resolvent_convergence_trial(&m, GAUSS, point, &Functional::Trace(c), 50, 8, &opts()).unwrap();
    assert!(r.z_score <= 3.0, "z = {}", r.z_score);
    assert!(r.gap() < 1e-2 * r.deterministic.norm(), "{r:?}");
}

#[test]
fn marchenko_pastur_gap_beyond_the_edge_stays_empty() {
    let m = marchenko_pastur(200, 800).unwrap();
    let (_, support) = spectrum::locate_support(&m, spectrum::DEFAULT_GRID_POINTS, false, &opts()).unwrap();
    let probe = ProbeInterval::verify(&m, &support, [2.5, 3.0], 200, &opts()).unwrap();
    let r = montecarlo::no_eigenvalue_trial(&m, GAUSS, &probe, 100, 13).unwrap();
    assert_eq!(r.escapes, 0);
}

#[test]
fn smooth_test_function_averages_agree() {
    let models = [
        ("mp", marchenko_pastur(200, 400).unwrap()),
        ("fig2", figure_setup_with_dims(Figure::Fig2, 200, 400, 0).unwrap()),
        ("fig4", figure_setup_with_dims(Figure::Fig4, 200, 1600, 0).unwrap()),
    ];
    for (name, m) in models {
        let lsd = profile(&m, 2000);
        let limit = lsd.integrate(|x| (-x).exp()) / lsd.mass();
        let dist = montecarlo::default_distribution(&m);
        let ev = montecarlo::sample(&m, dist, 4).unwrap().eigenvalues;
        let empirical = ev.iter().map(|l| (-l).exp()).sum::<f64>() / ev.len() as f64;
        assert!((empirical - limit).abs() <= 0.02, "{name}: {empirical} vs {limit}");
    }
}

#[test]
fn kolmogorov_distance_falls_when_dimension_doubles() {
    let mean_ks = |m: &ModelSpec| {
        let (_, ks) = montecarlo::esd_lsd_trial(m, GAUSS, &profile(m, 2000), 20, 17).unwrap();
        ks.iter().sum::<f64>() / ks.len() as f64
    };
    for (name, small, big) in [
        ("mp", marchenko_pastur(100, 200).unwrap(), marchenko_pastur(200, 400).unwrap()),
        (
            "fig2",
            figure_setup_with_dims(Figure::Fig2, 100, 200, 0).unwrap(),
            figure_setup_with_dims(Figure::Fig2, 200, 400, 0).unwrap(),
        ),
    ] {
        let (a, b) = (mean_ks(&small), mean_ks(&big));
        assert!(b < a, "{name}: {b} at 2p vs {a} at p");
    }
}

#[test]
fn fig2_histogram_follows_the_density() {
    let m = figure_setup_with_dims(Figure::Fig2, 200, 400, 0).unwrap();
    let lsd = profile(&m, 2000);
    let ev = montecarlo::sample(&m, GAUSS, 0).unwrap().eigenvalues;
    let hi = ev[0].max(*lsd.grid.last().unwrap());
    let l1 = histogram_l1(&ev, &lsd, 0.0, hi, 50);
    assert!(l1 <= 0.15, "L1 = {l1}");
}

#[test]
fn flat_profile_reduces_to_information_plus_noise() {
    let (p, n) = (400, 800);
    let cap = (n as f64 / p as f64).min(1.0);
    let m = variance_profile(|_, _| 1.0, |t| if t <= cap { 1.0 } else { 0.0 }, p, n, None).unwrap();
    let lsd = profile(&m, 2000);
    let ev = montecarlo::sample(&m, GAUSS, 6).unwrap().eigenvalues;
    let hi = ev[0].max(*lsd.grid.last().unwrap());
    let l1 = histogram_l1(&ev, &lsd, 0.0, hi, 50);
    assert!(l1 <= 0.1, "L1 = {l1}");
    // A = [I 0] and unit noise give (1/p) Tr E[S] = 2.
    let mean = ev.iter().sum::<f64>() / p as f64;
    assert!((mean - 2.0).abs() < 0.02, "{mean}");
}
