//! One-shot commands: monitor, confidence, validate, calibrate and select-schema.

use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use stlu::calibrate::{AverageLoss, CalibrationSample, LossEntry};
use stlu::confidence::ranges;
use stlu::{
    average_loss, eval_metrics, select_schema, ArGenerator, CalibrationWeights, Candidate, Criterion, EpsilonPolicy,
    Error, Flowpipe, IntervalSet, LabeledPair, McOptions, Metrics, Monitor, Schema, Srt, Trace,
};

use crate::io::{
    files_by_stem, flowpipe_problems, parse_spec, parse_trace, read_flowpipe, read_trace, Mode, Requirement,
};

/// Exit codes shared by all commands.
pub const EXIT_OK: u8 = 0;
pub const EXIT_VIOLATED: u8 = 1;
pub const EXIT_ERROR: u8 = 2;

/// Outcome of evaluating one requirement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub id: String,
    pub mode: Mode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strong: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weak: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strong_range: Option<IntervalSet>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weak_range: Option<IntervalSet>,
    pub satisfied: bool,
}

/// Evaluates `req` on `fp` at `t`. `fill` supplies a level for atoms without one.
pub fn evaluate(req: &Requirement, fp: &Flowpipe, t: i64, fill: Option<f64>) -> stlu::Result<Evaluation> {
    let base = Evaluation {
        id: req.id.clone(),
        mode: req.mode,
        strong: None,
        weak: None,
        strong_range: None,
        weak_range: None,
        satisfied: true,
    };
    if req.mode == Mode::Range {
        let (s, w) = ranges(&req.formula, fp, t)?;
        return Ok(Evaluation { strong_range: Some(s), weak_range: Some(w), ..base });
    }
    let policy = fill.map_or(EpsilonPolicy::Annotated, EpsilonPolicy::Fill);
    let v = Monitor::with_policy(&req.formula, policy)?.verdict(fp, t)?;
    Ok(Evaluation {
        strong: Some(v.strong),
        weak: Some(v.weak),
        satisfied: req.mode.satisfied(v.strong, v.weak),
        ..base
    })
}

/// Requirements from `--formula` (with `mode`) or from a spec file.
pub fn requirements(formula: Option<&str>, spec: Option<&Path>, mode: Mode) -> Result<Vec<Requirement>> {
    match (formula, spec) {
        (Some(f), None) => Ok(vec![Requirement { id: "formula".into(), mode, formula: stlu::parse(f)? }]),
        (None, Some(path)) => crate::io::read_spec(path),
        (Some(_), Some(_)) => bail!("give either --formula or --spec, not both"),
        (None, None) => bail!("one of --formula or --spec is required"),
    }
}

#[derive(Serialize)]
struct MonitorReport<'a> {
    t: i64,
    results: &'a [Evaluation],
}

pub fn monitor(
    fp_path: &Path,
    reqs: &[Requirement],
    t: Option<i64>,
    fill: Option<f64>,
    out: &mut dyn Write,
) -> Result<u8> {
    let fp = read_flowpipe(fp_path)?;
    let t = t.unwrap_or(fp.start());
    let results = reqs
        .iter()
        .map(|r| evaluate(r, &fp, t, fill).with_context(|| format!("requirement `{}`", r.id)))
        .collect::<Result<Vec<_>>>()?;
    writeln!(out, "{}", serde_json::to_string_pretty(&MonitorReport { t, results: &results })?)?;
    Ok(if results.iter().all(|r| r.satisfied) { EXIT_OK } else { EXIT_VIOLATED })
}

#[derive(Serialize)]
struct RangeEntry {
    id: String,
    strong_range: IntervalSet,
    weak_range: IntervalSet,
    /// Supremum of the strong range, 0 when empty.
    eps_s_plus: f64,
    /// Infimum of the weak range, 1 when empty.
    eps_w_minus: f64,
}

pub fn confidence(fp_path: &Path, reqs: &[Requirement], t: Option<i64>, out: &mut dyn Write) -> Result<u8> {
    let fp = read_flowpipe(fp_path)?;
    let t = t.unwrap_or(fp.start());
    let mut entries = Vec::new();
    for r in reqs {
        let (s, w) = ranges(&r.formula, &fp, t).with_context(|| format!("requirement `{}`", r.id))?;
        entries.push(RangeEntry {
            id: r.id.clone(),
            eps_s_plus: s.sup().unwrap_or(0.0),
            eps_w_minus: w.inf().unwrap_or(1.0),
            strong_range: s,
            weak_range: w,
        });
    }
    #[derive(Serialize)]
    struct Report {
        t: i64,
        results: Vec<RangeEntry>,
    }
    writeln!(out, "{}", serde_json::to_string_pretty(&Report { t, results: entries })?)?;
    Ok(EXIT_OK)
}

/// What `validate` should check.
pub enum ValidateTarget<'a> {
    Flowpipe(&'a Path),
    Trace(&'a Path),
    Spec(&'a Path),
    Formula(&'a str),
}

pub fn validate(target: ValidateTarget<'_>, out: &mut dyn Write) -> Result<u8> {
    let read = |p: &Path| std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()));
    let problems: Vec<String> = match target {
        ValidateTarget::Flowpipe(p) => flowpipe_problems(&read(p)?).unwrap_or_else(|e| vec![format!("{e:#}")]),
        ValidateTarget::Trace(p) => parse_trace(&read(p)?).err().map(|e| format!("{e:#}")).into_iter().collect(),
        ValidateTarget::Spec(p) => parse_spec(&read(p)?).err().map(|e| format!("{e:#}")).into_iter().collect(),
        ValidateTarget::Formula(f) => stlu::parse(f).err().map(|e| e.to_string()).into_iter().collect(),
    };
    #[derive(Serialize)]
    struct Report {
        valid: bool,
        problems: Vec<String>,
    }
    let valid = problems.is_empty();
    writeln!(out, "{}", serde_json::to_string_pretty(&Report { valid, problems })?)?;
    Ok(if valid { EXIT_OK } else { EXIT_VIOLATED })
}

/// Settings shared by `calibrate` and `select-schema`.
#[derive(Debug, Clone, Copy)]
pub struct LossSettings {
    pub criterion: Criterion,
    pub weights: CalibrationWeights,
    /// Level for verdict-based metrics.
    pub epsilon: f64,
    pub skip_errors: bool,
}

#[derive(Serialize)]
struct SkippedPair {
    pair: String,
    error: String,
}

#[derive(Serialize)]
struct CalibrationReport {
    criterion: Criterion,
    beta1: f64,
    beta2: f64,
    pairs: usize,
    used: usize,
    loss: f64,
    skipped: Vec<SkippedPair>,
    metrics: Option<Metrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics_error: Option<String>,
}

/// Loads `<stem>.json` flowpipes and `<stem>.csv` traces paired by file stem.
pub fn load_pairs(flowpipes: &Path, traces: &Path) -> Result<Vec<(String, LabeledPair)>> {
    let fps = files_by_stem(flowpipes, "json")?;
    let trs = files_by_stem(traces, "csv")?;
    let orphans: Vec<String> = fps
        .keys()
        .filter(|k| !trs.contains_key(*k))
        .map(|k| format!("{k}.json"))
        .chain(trs.keys().filter(|k| !fps.contains_key(*k)).map(|k| format!("{k}.csv")))
        .collect();
    if !orphans.is_empty() {
        bail!("unpaired files: {}", orphans.join(", "));
    }
    if fps.is_empty() {
        bail!("no flowpipe/trace pairs found");
    }
    fps.iter()
        .map(|(stem, fp_path)| {
            let fp = read_flowpipe(fp_path)?;
            let tr = read_trace(&trs[stem])?;
            let pair = LabeledPair::new(fp, tr).with_context(|| format!("pair `{stem}`"))?;
            Ok((stem.clone(), pair))
        })
        .collect()
}

pub fn calibrate(
    flowpipes: &Path,
    traces: &Path,
    reqs: &[Requirement],
    settings: LossSettings,
    out: &mut dyn Write,
) -> Result<u8> {
    let [req] = reqs else { bail!("calibration takes exactly one formula") };
    let named = load_pairs(flowpipes, traces)?;
    let (names, pairs): (Vec<String>, Vec<LabeledPair>) = named.into_iter().unzip();
    let AverageLoss { mean, used, skipped } =
        average_loss(&pairs, &req.formula, settings.criterion, settings.weights, settings.skip_errors)
            .map_err(|e| describe_pairs(e, &names))?;
    let skipped_idx: Vec<usize> = skipped.iter().filter_map(pair_index).collect();
    let kept: Vec<LabeledPair> =
        pairs.iter().enumerate().filter(|(i, _)| !skipped_idx.contains(i)).map(|(_, p)| p.clone()).collect();
    let (metrics, metrics_error) = match eval_metrics(&kept, &req.formula, settings.epsilon) {
        Ok(m) => (Some(m), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let report = CalibrationReport {
        criterion: settings.criterion,
        beta1: settings.weights.beta1,
        beta2: settings.weights.beta2,
        pairs: pairs.len(),
        used,
        loss: mean,
        skipped: skipped
            .iter()
            .map(|e| SkippedPair {
                pair: pair_index(e).map_or_else(|| "?".into(), |i| names[i].clone()),
                error: e.to_string(),
            })
            .collect(),
        metrics,
        metrics_error,
    };
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(EXIT_OK)
}

fn pair_index(e: &Error) -> Option<usize> {
    match e {
        Error::Pair { index, .. } | Error::Generator { index, .. } => Some(*index),
        _ => None,
    }
}

fn describe_pairs(e: Error, names: &[String]) -> anyhow::Error {
    match e {
        Error::Dataset(errs) => {
            let lines: Vec<String> = errs
                .iter()
                .map(|e| match pair_index(e) {
                    Some(i) => format!("{}: {e}", names[i]),
                    None => e.to_string(),
                })
                .collect();
            anyhow::anyhow!(
                "{} pair(s) failed (use --skip-errors to exclude them):\n  {}",
                errs.len(),
                lines.join("\n  ")
            )
        }
        other => other.into(),
    }
}

/// Sliding-window cut of `trace` into (history, target) samples.
pub fn windows(trace: &Trace, window: usize, horizon: usize, stride: usize) -> Result<Vec<CalibrationSample>> {
    if window == 0 || horizon == 0 || stride == 0 {
        bail!("window, horizon and stride must all be at least 1");
    }
    let mut out = Vec::new();
    let mut s = 0;
    while s + window + horizon <= trace.len() {
        out.push(CalibrationSample { history: slice(trace, s, window)?, target: slice(trace, s + window, horizon)? });
        s += stride;
    }
    if out.is_empty() {
        bail!("trace of length {} is too short for window {window} + horizon {horizon}", trace.len());
    }
    Ok(out)
}

/// `len` timestamps of `trace` starting at offset `from`.
pub fn slice(trace: &Trace, from: usize, len: usize) -> Result<Trace> {
    let vars = trace.variables().map(|(n, v)| (n.to_string(), v[from..from + len].to_vec())).collect();
    Ok(Trace::new(trace.start() + from as i64, vars)?)
}

/// Restricts `trace` to one variable (required when it has several).
pub fn select_variable(trace: &Trace, name: Option<&str>) -> Result<Trace> {
    let names: Vec<&str> = trace.variables().map(|(n, _)| n).collect();
    let name = match (name, names.as_slice()) {
        (Some(n), _) => n,
        (None, [only]) => only,
        (None, _) => bail!("trace has variables {names:?}; pick one with --variable"),
    };
    let values = trace.variable(name).with_context(|| format!("trace has no variable `{name}`"))?;
    Ok(Trace::new(trace.start(), [(name.to_string(), values.to_vec())].into())?)
}

/// Settings for the AR-based schema sweep.
#[derive(Debug, Clone)]
pub struct SweepSettings {
    pub window: usize,
    pub horizon: usize,
    pub stride: usize,
    pub order: usize,
    pub srts: Vec<Srt>,
    pub p_grid: Vec<f64>,
    pub mc: McOptions,
}

#[derive(Serialize)]
struct SelectionReport<'a> {
    criterion: Criterion,
    samples: usize,
    best: Schema,
    loss: f64,
    table: &'a [LossEntry],
}

pub fn select(
    trace: &Trace,
    reqs: &[Requirement],
    loss: LossSettings,
    sweep: &SweepSettings,
    sweep_csv: Option<&Path>,
    out: &mut dyn Write,
) -> Result<u8> {
    let [req] = reqs else { bail!("schema selection takes exactly one formula") };
    let samples = windows(trace, sweep.window, sweep.horizon, sweep.stride)?;
    let srts = if sweep.srts.is_empty() { Srt::ALL.to_vec() } else { sweep.srts.clone() };
    let gens: Vec<ArGenerator> = srts.iter().map(|&s| ArGenerator::refit(sweep.order, s, sweep.mc)).collect();
    let candidates: Vec<Candidate<'_>> = gens.iter().map(|g| Candidate { srt: g.srt, generator: g }).collect();
    let sel = select_schema(
        &candidates,
        &samples,
        &req.formula,
        loss.criterion,
        loss.weights,
        &sweep.p_grid,
        loss.skip_errors,
    )
    .map_err(|e| match e {
        Error::Dataset(errs) => {
            anyhow::anyhow!("{} sample(s) failed (use --skip-errors to exclude them); first: {}", errs.len(), errs[0])
        }
        other => other.into(),
    })?;
    if let Some(path) = sweep_csv {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
        for entry in &sel.table {
            w.serialize(entry)?;
        }
        w.flush()?;
    }
    let report = SelectionReport {
        criterion: loss.criterion,
        samples: samples.len(),
        best: sel.best,
        loss: sel.loss,
        table: &sel.table,
    };
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(EXIT_OK)
}
