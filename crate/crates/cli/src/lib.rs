//! Command-line front end for flowpipe monitoring.
//!
//! Exit codes: 0 when every requested verdict holds, 1 when some requirement is
//! violated (or a validated input is invalid), 2 on any error.

pub mod bench;
pub mod commands;
pub mod io;
pub mod stream;

use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use stlu::parallel::with_jobs;
use stlu::{CalibrationWeights, Criterion, McOptions, Schema, Srt};

use crate::commands::{LossSettings, SweepSettings, ValidateTarget, EXIT_OK};
use crate::io::Mode;

/// Seed used when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(name = "stlu", version, about = "Monitor Gaussian flowpipes against temporal requirements")]
pub struct Cli {
    /// Worker threads for data-parallel work (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct FormulaSource {
    /// A single formula, e.g. `always[0,3] x < 10 @ 0.95`.
    #[arg(long)]
    pub formula: Option<String>,
    /// Spec file with one `id: mode: formula` per line.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CriterionArg {
    Sat,
    Cf,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    #[arg(long, value_enum, default_value = "sat")]
    pub criterion: CriterionArg,
    /// Confidence level for `sat` and for the verdict metrics.
    #[arg(long, default_value_t = 0.95)]
    pub epsilon: f64,
    /// Weight of the strong-satisfaction term (default 0.2 for sat, 0.3 for cf).
    #[arg(long)]
    pub beta1: Option<f64>,
    /// Weight of the weak-satisfaction term (default 0.2 for sat, 0.3 for cf).
    #[arg(long)]
    pub beta2: Option<f64>,
    /// Exclude failing pairs instead of aborting.
    #[arg(long)]
    pub skip_errors: bool,
}

impl LossArgs {
    fn settings(&self) -> Result<LossSettings> {
        let criterion = match self.criterion {
            CriterionArg::Sat => Criterion::Sat { eps: self.epsilon },
            CriterionArg::Cf => Criterion::Cf,
        };
        let d = criterion.default_weights();
        let weights = CalibrationWeights::new(self.beta1.unwrap_or(d.beta1), self.beta2.unwrap_or(d.beta2))?;
        Ok(LossSettings { criterion, weights, epsilon: self.epsilon, skip_errors: self.skip_errors })
    }
}

#[derive(Debug, Args)]
pub struct McArgs {
    /// Stochastic regularization technique.
    #[arg(long, default_value = "bernoulli-dropconnect")]
    pub srt: Srt,
    /// Keep probability in (0, 1].
    #[arg(long, default_value_t = 0.9)]
    pub p: f64,
    #[arg(long, default_value_t = 100)]
    pub n_samples: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// AR order when fitting a model per window.
    #[arg(long, default_value_t = 2)]
    pub order: usize,
    /// Draw a fresh mask at every rollout step.
    #[arg(long)]
    pub resample_per_step: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Strong/weak satisfaction of requirements on a flowpipe.
    Monitor {
        #[arg(long)]
        flowpipe: PathBuf,
        #[command(flatten)]
        source: FormulaSource,
        /// Mode for `--formula` (spec files carry their own).
        #[arg(long, value_enum, default_value = "both")]
        mode: Mode,
        /// Evaluation time (default: first timestamp).
        #[arg(long)]
        t: Option<i64>,
        /// Level for atoms written without one.
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Confidence levels under which requirements hold strongly/weakly.
    Confidence {
        #[arg(long)]
        flowpipe: PathBuf,
        #[command(flatten)]
        source: FormulaSource,
        #[arg(long)]
        t: Option<i64>,
    },
    /// Average calibration loss over flowpipe/trace pairs matched by file name.
    Calibrate {
        /// Directory of `<name>.json` flowpipes.
        #[arg(long)]
        flowpipes: PathBuf,
        /// Directory of `<name>.csv` traces.
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        formula: String,
        #[command(flatten)]
        loss: LossArgs,
    },
    /// Pick the SRT and keep probability with the lowest loss on a trace.
    SelectSchema {
        #[arg(long)]
        trace: PathBuf,
        /// Variable to model when the trace has several.
        #[arg(long)]
        variable: Option<String>,
        #[arg(long)]
        formula: String,
        #[arg(long)]
        window: usize,
        #[arg(long)]
        horizon: usize,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Candidate SRTs (default: all four).
        #[arg(long = "srt", value_delimiter = ',')]
        srts: Vec<Srt>,
        /// Keep-probability grid.
        #[arg(long = "p", value_delimiter = ',', default_value = "0.5,0.6,0.7,0.8,0.9")]
        p_grid: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        n_samples: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        order: usize,
        #[arg(long)]
        resample_per_step: bool,
        /// Also write the loss table as CSV.
        #[arg(long)]
        sweep_csv: Option<PathBuf>,
        #[command(flatten)]
        loss: LossArgs,
    },
    /// Sliding-window predictive monitoring; one JSON line per step.
    Stream {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        window: usize,
        #[arg(long)]
        horizon: usize,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Use this model for every window instead of fitting one.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Level for atoms written without one.
        #[arg(long)]
        epsilon: Option<f64>,
        #[command(flatten)]
        mc: McArgs,
    },
    /// Monitoring throughput on random flowpipes.
    Bench {
        #[arg(long, default_value_t = 130_000)]
        count: usize,
        #[arg(long, default_value_t = 8)]
        horizon: usize,
        #[arg(long, default_value = bench::DEFAULT_FORMULA)]
        formula: String,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Run single-threaded even when built with parallel support.
        #[arg(long)]
        sequential: bool,
    },
    /// Check a flowpipe, trace, spec file or formula without evaluating anything.
    Validate {
        #[arg(long)]
        flowpipe: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        formula: Option<String>,
    },
}

/// Runs a parsed command, writing its report to `out`; returns the exit code.
pub fn run(cli: Cli, out: &mut (dyn Write + Send)) -> Result<u8> {
    let jobs = cli.jobs;
    with_jobs(jobs, move || dispatch(cli.command, out))
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<u8> {
    match command {
        Command::Monitor { flowpipe, source, mode, t, epsilon } => {
            let reqs = commands::requirements(source.formula.as_deref(), source.spec.as_deref(), mode)?;
            commands::monitor(&flowpipe, &reqs, t, epsilon, out)
        }
        Command::Confidence { flowpipe, source, t } => {
            let reqs = commands::requirements(source.formula.as_deref(), source.spec.as_deref(), Mode::Range)?;
            commands::confidence(&flowpipe, &reqs, t, out)
        }
        Command::Calibrate { flowpipes, traces, formula, loss } => {
            let reqs = commands::requirements(Some(&formula), None, Mode::Both)?;
            commands::calibrate(&flowpipes, &traces, &reqs, loss.settings()?, out)
        }
        Command::SelectSchema {
            trace,
            variable,
            formula,
            window,
            horizon,
            stride,
            srts,
            p_grid,
            n_samples,
            seed,
            order,
            resample_per_step,
            sweep_csv,
            loss,
        } => {
            let reqs = commands::requirements(Some(&formula), None, Mode::Both)?;
            let trace = commands::select_variable(&io::read_trace(&trace)?, variable.as_deref())?;
            let sweep = SweepSettings {
                window,
                horizon,
                stride,
                order,
                srts,
                p_grid,
                mc: McOptions { n_samples, seed, resample_per_step },
            };
            commands::select(&trace, &reqs, loss.settings()?, &sweep, sweep_csv.as_deref(), out)
        }
        Command::Stream { trace, spec, window, horizon, stride, model, epsilon, mc } => {
            let trace = io::read_trace(&trace)?;
            let reqs = io::read_spec(&spec)?;
            let model = model.as_deref().map(io::read_model).transpose()?;
            let cfg = stream::StreamConfig {
                window,
                horizon,
                stride,
                schema: Schema::new(mc.srt, mc.p)?,
                n_samples: mc.n_samples,
                seed: mc.seed,
                order: mc.order,
                resample_per_step: mc.resample_per_step,
                epsilon,
            };
            stream::run(&trace, &reqs, &cfg, model.as_ref(), out)
        }
        Command::Bench { count, horizon, formula, seed, sequential } => {
            let phi = stlu::parse(&formula)?;
            let report = bench::run(count, horizon, &phi, seed, sequential)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
            Ok(EXIT_OK)
        }
        Command::Validate { flowpipe, trace, spec, formula } => {
            let target = match (&flowpipe, &trace, &spec, &formula) {
                (Some(p), None, None, None) => ValidateTarget::Flowpipe(p),
                (None, Some(p), None, None) => ValidateTarget::Trace(p),
                (None, None, Some(p), None) => ValidateTarget::Spec(p),
                (None, None, None, Some(f)) => ValidateTarget::Formula(f),
                _ => bail!("give exactly one of --flowpipe, --trace, --spec or --formula"),
            };
            commands::validate(target, out)
        }
    }
}
