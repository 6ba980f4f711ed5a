//! Execution of a resolved configuration.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::json;
use specden_core::mimo::{self, RayleighChannelSpec, RicianChannelSpec};
use specden_core::model::validate;
use specden_core::montecarlo::{self, EnsembleSample, ProbeInterval};
use specden_core::spectrum::{self, SupportSet};
use specden_core::{solve, ModelSpec, SpectralPoint, C64};

use crate::config::{
    DensityParams, Manifest, NoeigParams, RunConfig, SinrParams, SolveParams, SupportParams, Task, ValidateParams,
    ZfCorrelation, ZfParams,
};
use crate::CliError;

/// Files written by one run; removed again if the run fails.
struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.written.push(name.to_string());
        Ok(BufWriter::new(file))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Io(e.to_string()))?;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::Io(e.to_string()))
    }

    fn with<F>(&mut self, name: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> specden_core::Result<()>,
    {
        let mut w = self.create(name)?;
        f(&mut w)?;
        w.flush().map_err(|e| CliError::Io(e.to_string()))
    }

    fn discard(&self) {
        for name in &self.written {
            let _ = std::fs::remove_file(self.dir.join(name));
        }
    }
}

/// Runs `cfg`, writing its artifacts and the manifest into `cfg.out`.
pub fn execute(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::Io(format!("{}: {e}", cfg.out.display())))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.max(1))
        .build()
        .map_err(|e| CliError::Input(e.to_string()))?;
    let mut out = Outputs {
        dir: cfg.out.clone(),
        written: Vec::new(),
    };
    let result = pool.install(|| dispatch(cfg, &mut out));
    let result = result.and_then(|()| {
        let manifest = Manifest {
            tool: "specden".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            config: cfg.clone(),
            outputs: out.written.clone(),
        };
        out.json("manifest.json", &manifest)
    });
    match result {
        Ok(()) => Ok(out.written),
        Err(e) => {
            out.discard();
            Err(e)
        }
    }
}

fn dispatch(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    match &cfg.task {
        Task::Solve(p) => run_solve(p, out),
        Task::Density(p) => run_density(p, cfg.seed, out),
        Task::Support(p) => run_support(p, out),
        Task::Noeig(p) => run_noeig(p, cfg.seed, out),
        Task::Sinr(p) => run_sinr(p, cfg.seed, out),
        Task::Zf(p) => run_zf(p, cfg.seed, out),
        Task::Validate(p) => run_validate(p, out),
    }
}

fn model(file: &specden_core::model::ModelFile) -> Result<ModelSpec, CliError> {
    file.build().map_err(|e| CliError::Input(e.to_string()))
}

fn pair(c: C64) -> [f64; 2] {
    [c.re, c.im]
}

fn run_solve(p: &SolveParams, out: &mut Outputs) -> Result<(), CliError> {
    let m = model(&p.model)?;
    let point = SpectralPoint::new(C64::new(p.re, p.im))?;
    let sol = solve(&m, point, &p.solver.options())?;
    let mut report = json!({
        "z": pair(sol.z),
        "m_n": pair(sol.m_n),
        "residual": sol.residual,
        "iterations": sol.iterations,
    });
    if p.include_deltas {
        report["delta"] = json!(sol.delta.iter().copied().map(pair).collect::<Vec<_>>());
        report["delta_tilde"] = json!(sol.delta_tilde.iter().copied().map(pair).collect::<Vec<_>>());
    }
    out.json("solve.json", &report)
}

fn samples(
    m: &ModelSpec,
    dist: specden_core::ElementDistribution,
    seed: u64,
    count: usize,
) -> Result<Vec<EnsembleSample>, CliError> {
    Ok((0..count as u64)
        .map(|t| montecarlo::sample_trial(m, dist, seed, t))
        .collect::<specden_core::Result<_>>()?)
}

fn run_density(p: &DensityParams, seed: u64, out: &mut Outputs) -> Result<(), CliError> {
    let m = model(&p.model)?;
    if let Some(&j) = p.measures.iter().find(|&&j| j >= m.n()) {
        return Err(CliError::Input(format!("measure index {j} out of range for n = {}", m.n())));
    }
    let grid = match p.range {
        None => spectrum::auto_grid(&m, p.points)?,
        Some([lo, hi]) => {
            if !(lo < hi) || p.points < 2 {
                return Err(CliError::Input(format!("bad grid [{lo}, {hi}] with {} points", p.points)));
            }
            (0..p.points)
                .map(|k| lo + (hi - lo) * k as f64 / (p.points - 1) as f64)
                .collect()
        }
    };
    let profile = spectrum::density(&m, &grid, p.v, !p.measures.is_empty(), &p.solver.options())?;
    out.with("density.csv", |w| profile.write_csv(w, &p.measures))?;
    if p.samples > 0 {
        let draws = samples(&m, p.distribution, seed, p.samples)?;
        out.with("eigenvalues.csv", |w| montecarlo::write_eigenvalues_csv(w, &draws))?;
    }
    Ok(())
}

fn run_support(p: &SupportParams, out: &mut Outputs) -> Result<(), CliError> {
    let m = model(&p.model)?;
    let opts = p.solver.options();
    let grid = spectrum::auto_grid(&m, p.points)?;
    let profile = spectrum::density(&m, &grid, spectrum::DEFAULT_V, p.inclusion, &opts)?;
    let coarse = spectrum::detect_support(&profile, p.threshold)?;
    let support = if p.refine {
        spectrum::refine_edges(&m, &profile, &coarse, &opts)?
    } else {
        coarse
    };
    let inclusion = if p.inclusion {
        Some(spectrum::check_support_inclusion(&profile, &support, p.threshold)?)
    } else {
        None
    };
    out.with("density.csv", |w| profile.write_csv(w, &[]))?;
    out.json(
        "support.json",
        &json!({
            "support": support,
            "gaps": support.gaps(),
            "inclusion": inclusion,
        }),
    )
}

fn probe_interval(p: &NoeigParams, support: &SupportSet) -> Result<[f64; 2], CliError> {
    if let Some(iv) = p.interval {
        return Ok(iv);
    }
    if !(0.0..0.5).contains(&p.shrink) {
        return Err(CliError::Input(format!("--shrink must lie in [0, 0.5), got {}", p.shrink)));
    }
    let [a, b] = support
        .largest_gap()
        .ok_or_else(|| CliError::Input(format!("no gap in the detected support {:?}", support.intervals)))?;
    let w = p.shrink * (b - a);
    Ok([a + w, b - w])
}

fn run_noeig(p: &NoeigParams, seed: u64, out: &mut Outputs) -> Result<(), CliError> {
    let m = model(&p.model)?;
    let opts = p.solver.options();
    let (_, support) = spectrum::locate_support(&m, p.points, false, &opts)?;
    let interval = probe_interval(p, &support)?;
    let probe = ProbeInterval::verify(&m, &support, interval, p.probe_points, &opts)?;
    let report = montecarlo::no_eigenvalue_trial(&m, p.distribution, &probe, p.trials, seed)?;
    out.json(
        "noeig.json",
        &json!({
            "support": support,
            "probe": probe,
            "trials": report,
        }),
    )?;
    if p.samples > 0 {
        let draws = samples(&m, p.distribution, seed, p.samples.min(p.trials))?;
        out.with("eigenvalues.csv", |w| montecarlo::write_eigenvalues_csv(w, &draws))?;
    }
    Ok(())
}

fn run_sinr(p: &SinrParams, seed: u64, out: &mut Outputs) -> Result<(), CliError> {
    let chan = RicianChannelSpec::exponential_los(p.antennas, p.interferers, p.tau)
        .map_err(|e| CliError::Input(e.to_string()))?;
    let points = mimo::sinr_sweep(&chan, &p.snr_db, p.trials, seed, &p.solver.options())?;
    out.with("sinr.csv", |w| mimo::write_sinr_csv(w, &points))
}

fn run_zf(p: &ZfParams, seed: u64, out: &mut Outputs) -> Result<(), CliError> {
    let chan = match p.correlation {
        ZfCorrelation::Identity => RayleighChannelSpec::identity(p.p, p.n),
        ZfCorrelation::Exponential => RayleighChannelSpec::exponential(p.p, p.n),
    }
    .map_err(|e| CliError::Input(e.to_string()))?;
    let report = mimo::zf_min_eig_check(&chan, p.distribution, p.trials, seed, &p.solver.options())?;
    out.json("zf.json", &report)
}

fn run_validate(p: &ValidateParams, out: &mut Outputs) -> Result<(), CliError> {
    let m = model(&p.model)?;
    let report = validate(&m, &p.ranges);
    out.json("validate.json", &report)?;
    if report.passed() {
        Ok(())
    } else {
        let msgs: Vec<&str> = report.violations.iter().map(|v| v.message.as_str()).collect();
        Err(CliError::Input(format!("model violates the admissible ranges: {}", msgs.join("; "))))
    }
}
