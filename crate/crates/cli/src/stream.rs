//! Sliding-window predictive monitoring over a recorded trace.
//!
//! At offsets `s = 0, Δt, 2Δt, ...` the last `window` observations feed an AR
//! model per variable; Monte-Carlo rollouts give a flowpipe of `horizon` steps,
//! and every requirement is checked at its first timestamp. A step at `s` is
//! emitted while `s + window + stride <= len(trace)`.

use std::collections::BTreeMap;
use std::io::Write;

use anyhow::{bail, Context, Result};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use stlu::parallel::par_map_indexed;
use stlu::predictor::mc_samples;
use stlu::{fit_ar, flowpipe_from_samples, McOptions, Schema, ToyArModel, Trace};

use crate::commands::{evaluate, Evaluation, EXIT_OK, EXIT_VIOLATED};
use crate::io::Requirement;

#[derive(Debug, Clone)]
pub struct StreamConfig {
    pub window: usize,
    pub horizon: usize,
    pub stride: usize,
    pub schema: Schema,
    pub n_samples: usize,
    pub seed: u64,
    /// AR order when fitting per window.
    pub order: usize,
    pub resample_per_step: bool,
    /// Level for atoms written without one.
    pub epsilon: Option<f64>,
}

#[derive(Debug, Serialize)]
struct StepLine {
    step: usize,
    t: i64,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    ridge: bool,
    results: Vec<Evaluation>,
}

#[derive(Debug, Serialize)]
struct Summary {
    steps: usize,
    violations: BTreeMap<String, usize>,
    total_violations: usize,
}

#[derive(Debug, Serialize)]
struct SummaryLine {
    summary: Summary,
}

/// Number of steps a trace of length `len` yields.
pub fn step_count(len: usize, window: usize, stride: usize) -> usize {
    if stride == 0 || len < window {
        0
    } else {
        (len - window) / stride
    }
}

fn check(trace: &Trace, reqs: &[Requirement], cfg: &StreamConfig, model: Option<&ToyArModel>) -> Result<()> {
    if cfg.stride == 0 || cfg.window == 0 || cfg.horizon == 0 {
        bail!("window, horizon and stride must all be at least 1");
    }
    let needed = reqs.iter().map(|r| r.formula.horizon()).max().unwrap_or(0) + 1;
    if (cfg.horizon as u64) < needed {
        bail!("horizon {} is too short: the requirements look {} steps ahead", cfg.horizon, needed);
    }
    match model {
        Some(m) if cfg.window < m.order => bail!("window {} is shorter than model order {}", cfg.window, m.order),
        None if cfg.window <= cfg.order + 1 => {
            bail!(
                "window {} is too short to fit an order-{} model (needs more than {})",
                cfg.window,
                cfg.order,
                cfg.order + 1
            )
        }
        _ => {}
    }
    if cfg.n_samples < 2 {
        bail!("need at least 2 Monte-Carlo samples");
    }
    if step_count(trace.len(), cfg.window, cfg.stride) == 0 {
        bail!("trace of length {} is too short for window {} and stride {}", trace.len(), cfg.window, cfg.stride);
    }
    Ok(())
}

/// Seed for step `k`, variable `v`: one draw from stream `k·vars + v` of the base seed.
fn derive_seed(seed: u64, k: usize, v: usize, vars: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((k * vars + v) as u64);
    rng.next_u64()
}

fn run_step(
    k: usize,
    trace: &Trace,
    reqs: &[Requirement],
    cfg: &StreamConfig,
    model: Option<&ToyArModel>,
) -> Result<StepLine> {
    let s = k * cfg.stride;
    let nvars = trace.variables().count();
    let mut samples = BTreeMap::new();
    let mut ridge = false;
    for (v, (name, values)) in trace.variables().enumerate() {
        let history = &values[s..s + cfg.window];
        let fitted;
        let m = match model {
            Some(m) => m,
            None => {
                let (fit, r) = fit_ar(history, cfg.order).with_context(|| format!("step {s}, variable `{name}`"))?;
                ridge |= r;
                fitted = fit;
                &fitted
            }
        };
        let opts = McOptions {
            n_samples: cfg.n_samples,
            seed: derive_seed(cfg.seed, k, v, nvars),
            resample_per_step: cfg.resample_per_step,
        };
        samples.insert(name.to_string(), mc_samples(m, history, cfg.horizon, cfg.schema, opts)?);
    }
    let fp = flowpipe_from_samples(&samples)?;
    let results = reqs
        .iter()
        .map(|r| evaluate(r, &fp, 0, cfg.epsilon).with_context(|| format!("step {s}, requirement `{}`", r.id)))
        .collect::<Result<Vec<_>>>()?;
    Ok(StepLine { step: s, t: trace.start() + (s + cfg.window) as i64, ridge, results })
}

/// Writes one JSON line per step plus a summary line. Exit code 1 when any
/// requirement was violated at any step.
pub fn run(
    trace: &Trace,
    reqs: &[Requirement],
    cfg: &StreamConfig,
    model: Option<&ToyArModel>,
    out: &mut dyn Write,
) -> Result<u8> {
    check(trace, reqs, cfg, model)?;
    let steps = step_count(trace.len(), cfg.window, cfg.stride);
    let lines = par_map_indexed(steps, |k| run_step(k, trace, reqs, cfg, model));
    let mut violations: BTreeMap<String, usize> = reqs.iter().map(|r| (r.id.clone(), 0)).collect();
    for line in lines {
        let line = line?;
        for r in line.results.iter().filter(|r| !r.satisfied) {
            *violations.entry(r.id.clone()).or_default() += 1;
        }
        writeln!(out, "{}", serde_json::to_string(&line)?)?;
    }
    let total_violations = violations.values().sum();
    let summary = SummaryLine { summary: Summary { steps, violations, total_violations } };
    writeln!(out, "{}", serde_json::to_string(&summary)?)?;
    Ok(if total_violations == 0 { EXIT_OK } else { EXIT_VIOLATED })
}
