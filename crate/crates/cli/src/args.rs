//! Command-line flags and their resolution into a [`RunConfig`].

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use specden_core::model::{AdmissibleRanges, Constructor, ModelFile};
use specden_core::montecarlo::default_distribution;
use specden_core::spectrum::{DEFAULT_GRID_POINTS, DEFAULT_THRESHOLD, DEFAULT_V};
use specden_core::{ElementDistribution, ModelSpec};

use crate::config::{
    DensityParams, NoeigParams, RunConfig, SinrParams, SolveParams, SolverConfig, SupportParams, Task,
    ValidateParams, ZfCorrelation, ZfParams,
};
use crate::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "specden",
    version,
    about = "Deterministic equivalents, spectral densities and their Monte Carlo checks",
    args_conflicts_with_subcommands = true
)]
pub struct Cli {
    /// Worker threads for the parallel loops.
    #[arg(long, global = true, env = "SPECDEN_THREADS")]
    pub threads: Option<usize>,

    /// Master seed for model construction and sampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Replay a manifest or run configuration instead of a subcommand.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the fixed-point system at one point z.
    Solve {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Real part of z.
        #[arg(long, allow_hyphen_values = true)]
        re: f64,
        /// Imaginary part of z.
        #[arg(long, default_value_t = 0.0)]
        im: f64,
        /// Also write δ and δ̃.
        #[arg(long)]
        include_deltas: bool,
    },
    /// Limiting spectral density on a grid, with optional ensemble draws.
    Density {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        sampling: SamplingArgs,
        #[arg(long, default_value_t = DEFAULT_V)]
        v: f64,
        #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
        points: usize,
        #[arg(long, allow_hyphen_values = true)]
        lo: Option<f64>,
        #[arg(long)]
        hi: Option<f64>,
        /// Column indices j whose μ_j and μ̃_j densities are written.
        #[arg(long, value_delimiter = ',')]
        measures: Vec<usize>,
        /// Ensemble draws whose eigenvalues are written.
        #[arg(long, default_value_t = 1)]
        samples: usize,
    },
    /// Support of the limiting distribution.
    Support {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
        points: usize,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Skip the local edge refinement.
        #[arg(long)]
        no_refine: bool,
        /// Also check that every μ_j and μ̃_j lives inside the support.
        #[arg(long)]
        inclusion: bool,
    },
    /// Count eigenvalues falling into a gap of the limiting support.
    Noeig {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        sampling: SamplingArgs,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
        points: usize,
        /// Probe interval `a,b`; defaults to the largest gap shrunk by `--shrink`.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        interval: Option<Vec<f64>>,
        /// Fraction of the gap width removed from each side.
        #[arg(long, default_value_t = 0.1)]
        shrink: f64,
        /// Grid nodes for the separation check on the probe interval.
        #[arg(long, default_value_t = 200)]
        probe_points: usize,
        /// Draws whose eigenvalues are written.
        #[arg(long, default_value_t = 1)]
        samples: usize,
    },
    /// LMMSE SINR against simulation over an SNR sweep.
    Sinr {
        /// `fig5`: 64 antennas, 32 interferers, τ = 1.
        #[arg(long)]
        preset: Option<String>,
        /// Receive antennas.
        #[arg(long)]
        antennas: Option<usize>,
        /// Interfering users besides user 0.
        #[arg(long)]
        interferers: Option<usize>,
        /// Rician factor.
        #[arg(long)]
        tau: Option<f64>,
        /// `start:step:stop` or a comma-separated list, in dB.
        #[arg(long, default_value = "0:4:20")]
        snr: String,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Smallest eigenvalue of the ZF Gram matrix.
    Zf {
        /// Rows of `H`, the size of `HHᴴ`.
        #[arg(long)]
        p: usize,
        /// Columns of `H`; must exceed `p`.
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value_t = ZfCorrelation::Identity)]
        correlation: ZfCorrelation,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[command(flatten)]
        sampling: SamplingArgs,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Check a model against the admissible ranges.
    Validate {
        #[command(flatten)]
        model: ModelArgs,
    },
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    /// `mp`, `fig2`, `fig3` or `fig4`.
    #[arg(long, conflicts_with = "model")]
    pub preset: Option<String>,
    /// JSON model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Row dimension for a preset.
    #[arg(long)]
    pub p: Option<usize>,
    /// Column count for a preset.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SolverArgs {
    /// Residual tolerance [default: 1e-10].
    #[arg(long)]
    pub tol: Option<f64>,
    /// Iteration cap per point [default: 5000].
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Damping β in (0, 1] [default: 0.5].
    #[arg(long)]
    pub damping: Option<f64>,
    /// Anderson history length; 0 gives plain damped iteration [default: 6].
    #[arg(long)]
    pub anderson_depth: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SamplingArgs {
    /// Entry law, e.g. `complex-gaussian`, `uniform-real`, `student-t:5`.
    #[arg(long)]
    pub distribution: Option<String>,
    /// Accept entry laws without a finite 4+ε moment.
    #[arg(long)]
    pub allow_assumption_violating: bool,
}

impl SolverArgs {
    fn resolve(&self) -> SolverConfig {
        let d = SolverConfig::default();
        SolverConfig {
            tol: self.tol.unwrap_or(d.tol),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            damping: self.damping.unwrap_or(d.damping),
            anderson_depth: self.anderson_depth.unwrap_or(d.anderson_depth),
        }
    }
}

impl ModelArgs {
    fn resolve(&self, seed: u64) -> Result<ModelFile, CliError> {
        match (&self.preset, &self.model) {
            (Some(name), None) => {
                let name = match name.as_str() {
                    "mp" | "marchenko-pastur" => "marchenko-pastur",
                    "fig2" | "fig3" | "fig4" => name.as_str(),
                    "fig5" => {
                        return Err(CliError::Input(
                            "fig5 is a channel preset; use the `sinr` subcommand".into(),
                        ))
                    }
                    other => return Err(CliError::Input(format!("unknown preset {other:?}"))),
                };
                if name == "marchenko-pastur" && (self.p.is_none() || self.n.is_none()) {
                    return Err(CliError::Input("preset mp needs --p and --n".into()));
                }
                let mut params = serde_json::Map::new();
                if let Some(p) = self.p {
                    params.insert("p".into(), p.into());
                }
                if let Some(n) = self.n {
                    params.insert("n".into(), n.into());
                }
                Ok(ModelFile {
                    constructor: Some(Constructor {
                        name: name.into(),
                        params,
                    }),
                    seed: (name == "fig2").then_some(seed),
                    ..Default::default()
                })
            }
            (None, Some(path)) => {
                if self.p.is_some() || self.n.is_some() {
                    return Err(CliError::Input("--p and --n only apply to presets".into()));
                }
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
                ModelFile::parse(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
            }
            _ => Err(CliError::Input("give exactly one of --preset and --model".into())),
        }
    }
}

impl SamplingArgs {
    /// The named law, or the preset's default for `model`.
    fn resolve(&self, model: Option<&ModelSpec>) -> Result<ElementDistribution, CliError> {
        let dist = match &self.distribution {
            Some(s) => s.parse::<ElementDistribution>().map_err(|e| CliError::Input(e.to_string()))?,
            None => model.map_or(ElementDistribution::ComplexGaussian, default_distribution),
        };
        dist.check(self.allow_assumption_violating)
            .map_err(|e| CliError::Input(e.to_string()))?;
        Ok(dist)
    }
}

fn build(model: &ModelFile) -> Result<ModelSpec, CliError> {
    model.build().map_err(|e| CliError::Input(e.to_string()))
}

/// Parses `start:step:stop` or `a,b,c`.
pub fn parse_snr(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Input(format!("bad SNR list {s:?}"));
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [one] => one.split(',').map(num).collect(),
        [a, step, b] => {
            let (a, step, b) = (num(a)?, num(step)?, num(b)?);
            if !(step > 0.0) || b < a {
                return Err(bad());
            }
            let count = ((b - a) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|k| a + step * k as f64).collect())
        }
        _ => Err(bad()),
    }
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl Cli {
    /// Resolves flags (or a replayed configuration) into a full config.
    pub fn resolve(self) -> Result<RunConfig, CliError> {
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            let mut cfg = crate::config::load(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            if self.seed.is_some() {
                return Err(CliError::Input("--seed cannot override a replayed configuration".into()));
            }
            if let Some(out) = self.out {
                cfg.out = out;
            }
            if let Some(t) = self.threads {
                cfg.threads = t;
            }
            return Ok(cfg);
        }
        let Some(command) = self.command else {
            return Err(CliError::Input("a subcommand or --config is required".into()));
        };
        let seed = self.seed.unwrap_or(0);
        let task = match command {
            Command::Solve { model, solver, re, im, include_deltas } => Task::Solve(SolveParams {
                model: model.resolve(seed)?,
                solver: solver.resolve(),
                re,
                im,
                include_deltas,
            }),
            Command::Density { model, solver, sampling, v, points, lo, hi, measures, samples } => {
                let model = model.resolve(seed)?;
                let spec = build(&model)?;
                let range = match (lo, hi) {
                    (None, None) => None,
                    (Some(lo), Some(hi)) => Some([lo, hi]),
                    _ => return Err(CliError::Input("--lo and --hi go together".into())),
                };
                Task::Density(DensityParams {
                    distribution: sampling.resolve(Some(&spec))?,
                    allow_assumption_violating: sampling.allow_assumption_violating,
                    model,
                    solver: solver.resolve(),
                    v,
                    points,
                    range,
                    measures,
                    samples,
                })
            }
            Command::Support { model, solver, points, threshold, no_refine, inclusion } => Task::Support(SupportParams {
                model: model.resolve(seed)?,
                solver: solver.resolve(),
                points,
                threshold,
                refine: !no_refine,
                inclusion,
            }),
            Command::Noeig { model, solver, sampling, trials, points, interval, shrink, probe_points, samples } => {
                let model = model.resolve(seed)?;
                let spec = build(&model)?;
                Task::Noeig(NoeigParams {
                    distribution: sampling.resolve(Some(&spec))?,
                    allow_assumption_violating: sampling.allow_assumption_violating,
                    model,
                    solver: solver.resolve(),
                    trials,
                    points,
                    interval: interval.map(|v| [v[0], v[1]]),
                    shrink,
                    probe_points,
                    samples,
                })
            }
            Command::Sinr { preset, antennas, interferers, tau, snr, trials, solver } => {
                let (dp, dn, dt) = match preset.as_deref() {
                    Some("fig5") => (Some(64), Some(32), Some(1.0)),
                    Some(other) => return Err(CliError::Input(format!("unknown channel preset {other:?}"))),
                    None => (None, None, None),
                };
                let missing = |flag: &str| CliError::Input(format!("--{flag} is required without --preset"));
                Task::Sinr(SinrParams {
                    antennas: antennas.or(dp).ok_or_else(|| missing("antennas"))?,
                    interferers: interferers.or(dn).ok_or_else(|| missing("interferers"))?,
                    tau: tau.or(dt).ok_or_else(|| missing("tau"))?,
                    snr_db: parse_snr(&snr)?,
                    trials,
                    solver: solver.resolve(),
                })
            }
            Command::Zf { p, n, correlation, trials, sampling, solver } => Task::Zf(ZfParams {
                p,
                n,
                correlation,
                trials,
                distribution: sampling.resolve(None)?,
                allow_assumption_violating: sampling.allow_assumption_violating,
                solver: solver.resolve(),
            }),
            Command::Validate { model } => Task::Validate(ValidateParams {
                model: model.resolve(seed)?,
                ranges: AdmissibleRanges::default(),
            }),
        };
        Ok(RunConfig {
            seed,
            threads: self.threads.unwrap_or_else(default_threads),
            out: self.out.unwrap_or_else(|| PathBuf::from(".")),
            task,
        })
    }
}
