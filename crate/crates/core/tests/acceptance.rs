//! Acceptance suite. Runs as a plain binary and prints one line per
//! criterion; the process fails if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use specden_core::fixedpoint::{assemble, fixed_point_residual};
use specden_core::linalg::{self, haar_unitary};
use specden_core::mimo::{self, RayleighChannelSpec, RicianChannelSpec};
use specden_core::model::{figure_setup, figure_setup_with_dims, marchenko_pastur};
use specden_core::montecarlo::{self, Functional};
use specden_core::rng::{stream_rng, Domain};
use specden_core::spectrum::{self, DEFAULT_GRID_POINTS, DEFAULT_THRESHOLD, DEFAULT_V};
use specden_core::{
    solve, solve_fixed_point, CMat, CVec, ElementDistribution, Figure, ModelSpec, SolverOptions, SpectralPoint,
    C64,
};

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn opts() -> SolverOptions {
    SolverOptions::default()
}

fn main() -> ExitCode {
    let criteria: [(&str, u64, fn() -> Outcome); 9] = [
        ("1 MP degeneration at z = -1", 5, mp_degeneration),
        ("2 fig2 ESD against LSD", 600, fig2_esd_lsd),
        ("3 fig3 support inclusion", 120, fig3_inclusion),
        ("4 fig4 no eigenvalue outside the support", 600, fig4_no_eigenvalue),
        ("5 fig2 largest eigenvalue bound", 600, fig2_largest_eigenvalue),
        ("6 resolvent functionals against simulation", 1200, resolvent_convergence),
        ("7 fig5 LMMSE SINR against simulation", 1200, fig5_sinr),
        ("8 ZF smallest eigenvalue floor", 600, zf_floor),
        ("9 invariants on every preset", 1200, invariants),
    ];
    let mut failed = 0;
    for (name, budget, f) in criteria {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let over = elapsed > Duration::from_secs(budget);
        let (pass, detail) = match outcome {
            Ok(d) if !over => (true, d),
            Ok(d) => (false, format!("{d}; over the {budget} s budget")),
            Err(d) => (false, d),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {name} ({:.1} s): {detail}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn mp_degeneration() -> Outcome {
    let model = marchenko_pastur(200, 200).map_err(err)?;
    let sol = solve(&model, SpectralPoint::negative(-1.0).map_err(err)?, &opts()).map_err(err)?;
    // c = 1, z = −1: m² + m − 1 = 0
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    let e = (sol.m_n - C64::new(golden, 0.0)).norm();
    ensure(e <= 1e-6, format!("|m_n − (√5−1)/2| = {e:.2e}"))
}

fn fig2_esd_lsd() -> Outcome {
    let model = figure_setup(Figure::Fig2, 0);
    let grid = spectrum::auto_grid(&model, DEFAULT_GRID_POINTS).map_err(err)?;
    let profile = spectrum::density(&model, &grid, DEFAULT_V, false, &opts()).map_err(err)?;
    let dist = montecarlo::default_distribution(&model);
    let ks: Vec<f64> = (0..20u64)
        .map(|seed| montecarlo::sample(&model, dist, seed).map(|s| montecarlo::ks_distance(&s.eigenvalues, &profile)))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let mean = ks.iter().sum::<f64>() / ks.len() as f64;
    ensure(
        ks[0] <= 0.05 && mean <= 0.04,
        format!("KS(seed 0) = {:.4}, mean KS over 20 seeds = {mean:.4}", ks[0]),
    )
}

fn fig3_inclusion() -> Outcome {
    let model = figure_setup(Figure::Fig3, 0);
    let (profile, support) = spectrum::locate_support(&model, DEFAULT_GRID_POINTS, true, &opts()).map_err(err)?;
    let report = spectrum::check_support_inclusion(&profile, &support, DEFAULT_THRESHOLD).map_err(err)?;
    ensure(
        report.passed(),
        format!(
            "{} violations over {} measures, support {:?}",
            report.violations.len(),
            report.measures,
            support.intervals
        ),
    )
}

fn fig4_no_eigenvalue() -> Outcome {
    let model = figure_setup(Figure::Fig4, 0);
    let dist = montecarlo::default_distribution(&model);
    let (_, support) = spectrum::locate_support(&model, DEFAULT_GRID_POINTS, false, &opts()).map_err(err)?;
    let [a, b] = support.largest_gap().ok_or_else(|| format!("no gap in {:?}", support.intervals))?;
    let w = 0.1 * (b - a);
    let probe = montecarlo::ProbeInterval::verify(&model, &support, [a + w, b - w], 200, &opts()).map_err(err)?;
    let report = montecarlo::no_eigenvalue_trial(&model, dist, &probe, 100, 0).map_err(err)?;
    // sanity inversion: the middle fifth of the widest component
    let [lo, hi] = support
        .intervals
        .iter()
        .copied()
        .max_by(|x, y| (x[1] - x[0]).total_cmp(&(y[1] - y[0])))
        .expect("non-empty support");
    let mid = 0.5 * (lo + hi);
    let half = 0.1 * (hi - lo);
    let bulk = montecarlo::count_escapes(&model, dist, [mid - half, mid + half], 100, 0).map_err(err)?;
    ensure(
        report.escapes == 0 && bulk.escapes == 100,
        format!(
            "probe [{:.3}, {:.3}]: {} escapes in 100 trials; bulk [{:.3}, {:.3}]: {} of 100",
            a + w,
            b - w,
            report.escapes,
            mid - half,
            mid + half,
            bulk.escapes
        ),
    )
}

fn fig2_largest_eigenvalue() -> Outcome {
    let model = figure_setup(Figure::Fig2, 0);
    let dist = montecarlo::default_distribution(&model);
    let s = montecarlo::largest_eigenvalue_stat(&model, dist, 50, 0, &opts()).map_err(err)?;
    ensure(
        s.within(0.05),
        format!("max λ_max = {:.4}, e+ = {:.4}, ratio {:.4}", s.max, s.right_endpoint, s.max / s.right_endpoint),
    )
}

fn resolvent_convergence() -> Outcome {
    let z = SpectralPoint::negative(-1.0).map_err(err)?;
    let mut lines = Vec::new();
    let mut ok = true;
    for fig in [Figure::Fig2, Figure::Fig4] {
        let (p, n) = fig.default_dims();
        let full = figure_setup(fig, 0);
        let half = figure_setup_with_dims(fig, p / 2, n / 2, 0).map_err(err)?;
        let dist = montecarlo::default_distribution(&full);
        for (label, functional) in [("trace(I)", 0), ("bilinear(e1,e1)", 1)] {
            let make = |p: usize| match functional {
                0 => Functional::Trace(CMat::identity(p, p)),
                _ => {
                    let mut e = CVec::zeros(p);
                    e[0] = C64::new(1.0, 0.0);
                    Functional::Bilinear(e.clone(), e)
                }
            };
            let big =
                montecarlo::resolvent_convergence_trial(&full, dist, z, &make(p), 200, 0, &opts()).map_err(err)?;
            let small = montecarlo::resolvent_convergence_trial(&half, dist, z, &make(p / 2), 200, 0, &opts())
                .map_err(err)?;
            let pass = big.z_score <= 3.0 && big.rms_gap < small.rms_gap;
            ok &= pass;
            lines.push(format!(
                "{fig} {label}: z = {:.2}, rms gap {:.2e} at p = {} vs {:.2e} at p = {p}",
                big.z_score,
                small.rms_gap,
                p / 2,
                big.rms_gap
            ));
        }
    }
    ensure(ok, lines.join("; "))
}

fn fig5_sinr() -> Outcome {
    let chan = RicianChannelSpec::fig5();
    let snr: Vec<f64> = (0..6).map(|k| 4.0 * k as f64).collect();
    let points = mimo::sinr_sweep(&chan, &snr, 1000, 0, &opts()).map_err(err)?;
    let mut ok = true;
    let mut lines = Vec::new();
    for pt in &points {
        let mc = pt.mc.as_ref().ok_or("missing simulation")?;
        let dev = (pt.asymptotic - mc.mean).abs() / mc.se;
        ok &= dev <= 3.0;
        lines.push(format!("{} dB: {:.4} vs {:.4} ({dev:.2} SE)", pt.snr_db, pt.asymptotic, mc.mean));
    }
    // SNR increases along the sweep, so σ² decreases
    let monotone = points.windows(2).all(|w| {
        w[1].asymptotic > w[0].asymptotic && w[1].mc.as_ref().unwrap().mean > w[0].mc.as_ref().unwrap().mean
    });
    ensure(ok && monotone, format!("{}; monotone in σ²: {monotone}", lines.join(", ")))
}

fn zf_floor() -> Outcome {
    let chan = RayleighChannelSpec::identity(100, 200).map_err(err)?;
    let r = mimo::zf_min_eig_check(&chan, ElementDistribution::ComplexGaussian, 100, 0, &opts()).map_err(err)?;
    let floor = (1.0 - 0.5f64.sqrt()).powi(2) - 0.03;
    ensure(
        r.min_over_trials >= floor && r.min_over_trials > 0.0,
        format!(
            "min λ_min = {:.4} against floor {floor:.4} (detected left edge {:.4})",
            r.min_over_trials, r.analytic_floor_estimate
        ),
    )
}

/// Model presets at their shipped dimensions, with smaller instances of the
/// same construction for the rotation check (a Haar rotation densifies every
/// correlation matrix). The `fig5` interference model rides along; see
/// [`normalization`] for the one check that is scaled for it.
fn presets() -> Result<Vec<(&'static str, ModelSpec, ModelSpec)>, String> {
    Ok(vec![
        (
            "marchenko-pastur",
            marchenko_pastur(200, 400).map_err(err)?,
            marchenko_pastur(40, 80).map_err(err)?,
        ),
        (
            "fig2",
            figure_setup(Figure::Fig2, 0),
            figure_setup_with_dims(Figure::Fig2, 40, 80, 0).map_err(err)?,
        ),
        ("fig3", figure_setup(Figure::Fig3, 0), figure_setup(Figure::Fig3, 0)),
        (
            "fig4",
            figure_setup(Figure::Fig4, 0),
            figure_setup_with_dims(Figure::Fig4, 25, 200, 0).map_err(err)?,
        ),
        (
            "fig5",
            RicianChannelSpec::fig5().interference_model().map_err(err)?,
            RicianChannelSpec::fig5().interference_model().map_err(err)?,
        ),
    ])
}

fn invariants() -> Outcome {
    let mut failures = Vec::new();
    let presets = presets()?;
    for (name, model, small) in &presets {
        for (check, result) in [
            ("Stieltjes class", stieltjes_class(model)),
            ("conjugate symmetry", conjugate_symmetry(model)),
            ("normalization", normalization(model, *name == "fig5")),
            ("mass limits", mass_limits(model)),
            ("rotation invariance", rotation_invariance(small)),
            ("threshold monotonicity", threshold_monotonicity(model)),
        ] {
            if let Err(e) = result {
                failures.push(format!("{name} {check}: {e}"));
            }
        }
    }
    if failures.is_empty() {
        let names: Vec<&str> = presets.iter().map(|p| p.0).collect();
        Ok(format!(
            "6 invariants on {} (fig5 normalization against 2‖E S‖/y)",
            names.join(", ")
        ))
    } else {
        Err(failures.join("; "))
    }
}

fn stieltjes_class(model: &ModelSpec) -> Result<(), String> {
    for z in [C64::new(0.5, 0.1), C64::new(2.0, 0.01), C64::new(-1.0, 0.5)] {
        let sol = solve(model, SpectralPoint::new(z).map_err(err)?, &opts()).map_err(err)?;
        for (d, dt) in sol.delta.iter().zip(&sol.delta_tilde) {
            if !(d.im > 0.0 && dt.im > 0.0) {
                return Err(format!("Im δ = {:e}, Im δ̃ = {:e} at {z}", d.im, dt.im));
            }
        }
        let im = (&sol.theta - sol.theta.adjoint()) * C64::new(0.0, -0.5);
        let lo = linalg::hermitian_eigenvalues(&im)[0];
        if lo < -1e-12 {
            return Err(format!("λ_min(Im Θ) = {lo:e} at {z}"));
        }
    }
    Ok(())
}

fn conjugate_symmetry(model: &ModelSpec) -> Result<(), String> {
    let z = C64::new(1.7, 0.05);
    let sol = solve(model, SpectralPoint::new(z).map_err(err)?, &opts()).map_err(err)?;
    let dc: Vec<C64> = sol.delta.iter().map(|c| c.conj()).collect();
    let dtc: Vec<C64> = sol.delta_tilde.iter().map(|c| c.conj()).collect();
    let r = fixed_point_residual(model, z.conj(), &dc, &dtc).map_err(err)?;
    let eq = assemble(model, z.conj(), &dc, &dtc).map_err(err)?;
    let d = (&eq.theta - sol.theta.adjoint()).camax();
    if r > 1e-9 || d > 1e-10 {
        return Err(format!("residual at z̄ {r:e}, ‖Θ(z̄) − Θ(z)ᴴ‖ = {d:e}"));
    }
    Ok(())
}

/// `‖(−iy)Θ(iy) − I‖ ≤ 10/y`. The deviation behaves like `‖E S‖/y` for
/// large `y`, so the constant 10 presumes `‖E S‖` of order one. The `fig5`
/// line-of-sight vectors have unit-modulus entries, `‖E S‖ ≈ 74`, and that
/// model is held to `2‖E S‖/y` instead.
fn normalization(model: &ModelSpec, scaled: bool) -> Result<(), String> {
    let p = model.p();
    let constant = if scaled {
        let mut mean_gram = model.mean() * model.mean().adjoint();
        for c in model.correlations() {
            mean_gram += c.to_dense().unscale(model.n() as f64);
        }
        2.0 * linalg::spectral_norm(&mean_gram)
    } else {
        10.0
    };
    for y in [1e2, 1e3, 1e4] {
        let z = C64::new(0.0, y);
        let sol = solve(model, SpectralPoint::new(z).map_err(err)?, &opts()).map_err(err)?;
        let dev = linalg::spectral_norm(&(&sol.theta * (-z) - CMat::identity(p, p)));
        if dev > constant / y {
            return Err(format!("‖(−iy)Θ(iy) − I‖ = {dev:e} at y = {y}, bound {:e}", constant / y));
        }
    }
    Ok(())
}

fn mass_limits(model: &ModelSpec) -> Result<(), String> {
    let fp = solve_fixed_point(model, SpectralPoint::negative(-1e6).map_err(err)?, &opts()).map_err(err)?;
    let z = fp.z;
    for j in 0..model.n() {
        let mass = model.delta_mass(j);
        let mu = -(z * fp.delta[j]).re;
        let mu_tilde = -(z * fp.delta_tilde[j]).re;
        let rel = if mass > 0.0 { (mu - mass).abs() / mass } else { mu.abs() };
        if rel > 1e-3 || (mu_tilde - 1.0).abs() > 1e-3 {
            return Err(format!("j = {j}: μ mass {mu} vs {mass}, μ̃ mass {mu_tilde}"));
        }
    }
    Ok(())
}

fn rotation_invariance(model: &ModelSpec) -> Result<(), String> {
    let mut rng = stream_rng(7, Domain::Auxiliary, 0, 0);
    let u = haar_unitary(model.p(), &mut rng);
    let rotated = model.rotated(&u).map_err(err)?;
    let o = opts().with_tol(1e-12);
    let top = spectrum::spectrum_upper_bound(model);
    let grid: Vec<f64> = (0..24).map(|k| top * (k as f64 + 0.5) / 24.0).collect();
    let a = spectrum::density(model, &grid, 1e-3, false, &o).map_err(err)?;
    let b = spectrum::density(&rotated, &grid, 1e-3, false, &o).map_err(err)?;
    let d = a.lsd.iter().zip(&b.lsd).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    if d > 1e-8 {
        return Err(format!("lsd moved by {d:e} under rotation"));
    }
    Ok(())
}

fn threshold_monotonicity(model: &ModelSpec) -> Result<(), String> {
    let grid = spectrum::auto_grid(model, 1000).map_err(err)?;
    let profile = spectrum::density(model, &grid, DEFAULT_V, false, &opts()).map_err(err)?;
    let mut previous: Option<spectrum::SupportSet> = None;
    for t in [1e-4, 1e-3, 1e-2, 1e-1] {
        let s = spectrum::detect_support(&profile, t).map_err(err)?;
        if let Some(prev) = &previous {
            for iv in &s.intervals {
                if !prev.intervals.iter().any(|w| w[0] <= iv[0] && iv[1] <= w[1]) {
                    return Err(format!("{iv:?} at threshold {t} escapes {:?}", prev.intervals));
                }
            }
        }
        previous = Some(s);
    }
    Ok(())
}
