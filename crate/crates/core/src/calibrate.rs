//! Calibration criteria for uncertainty-estimation schemas, evaluation metrics and
//! schema selection.
//!
//! A labeled pair is a predicted flowpipe plus the trace that actually happened.
//! `L_sat` rewards agreement between the flowpipe's strong/weak verdicts and the
//! trace's verdict, plus coverage of the trace. `L_cf` uses the confidence ranges
//! instead of verdicts. All evaluations happen at the first timestamp of the pair.

use serde::{Deserialize, Serialize};

use crate::confidence::ranges;
use crate::error::{Error, Result};
use crate::flowpipe::{check_domains, coverage_level, trace_in_flowpipe, Flowpipe, Trace};
use crate::formula::Formula;
use crate::monitor::{trace_sat, EpsilonPolicy, Monitor};
use crate::parallel::{par_map, par_map_indexed};
use crate::predictor::{Schema, Srt};

/// Weights `β1` (strong), `β2` (weak) and `1 − β1 − β2` (coverage).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationWeights {
    pub beta1: f64,
    pub beta2: f64,
}

impl CalibrationWeights {
    pub fn new(beta1: f64, beta2: f64) -> Result<Self> {
        let open = |b: f64| b > 0.0 && b < 1.0;
        if !open(beta1) || !open(beta2) || beta1 + beta2 >= 1.0 {
            return Err(Error::Parameter(format!(
                "weights need beta1, beta2 in (0,1) with beta1 + beta2 < 1, got {beta1}, {beta2}"
            )));
        }
        Ok(Self { beta1, beta2 })
    }

    /// Defaults for `L_sat`: 0.2 / 0.2.
    pub fn sat() -> Self {
        Self { beta1: 0.2, beta2: 0.2 }
    }

    /// Defaults for `L_cf`: 0.3 / 0.3.
    pub fn cf() -> Self {
        Self { beta1: 0.3, beta2: 0.3 }
    }

    pub fn beta3(&self) -> f64 {
        1.0 - self.beta1 - self.beta2
    }

    fn combine(&self, s: f64, w: f64, b: f64) -> f64 {
        (1.0 - (self.beta1 * s + self.beta2 * w + self.beta3() * b)).clamp(0.0, 1.0)
    }
}

/// A predicted flowpipe and the trace it should have covered.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair {
    pub flowpipe: Flowpipe,
    pub target: Trace,
}

impl LabeledPair {
    pub fn new(flowpipe: Flowpipe, target: Trace) -> Result<Self> {
        check_domains(&target, &flowpipe)?;
        Ok(Self { flowpipe, target })
    }

    fn t0(&self) -> i64 {
        self.flowpipe.start()
    }
}

/// The three 0/1 indicators behind `L_sat`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SatIndicators {
    /// Strong verdict agrees with the trace.
    pub h_s: bool,
    /// Weak verdict agrees with the trace.
    pub h_w: bool,
    /// The trace lies inside the flowpipe.
    pub h_b: bool,
}

/// Indicators at level `eps`, which replaces every atom's own level.
pub fn indicators_sat(pair: &LabeledPair, phi: &Formula, eps: f64) -> Result<SatIndicators> {
    let truth = trace_sat(phi, &pair.target, pair.t0())?;
    let v = Monitor::with_policy(phi, EpsilonPolicy::Override(eps))?.verdict(&pair.flowpipe, pair.t0())?;
    Ok(SatIndicators {
        h_s: v.strong == truth,
        h_w: v.weak == truth,
        h_b: trace_in_flowpipe(&pair.target, &pair.flowpipe, eps)?,
    })
}

pub fn loss_sat_from(h: SatIndicators, w: CalibrationWeights) -> f64 {
    let f = |b: bool| if b { 1.0 } else { 0.0 };
    w.combine(f(h.h_s), f(h.h_w), f(h.h_b))
}

/// `1 − (β1·h_s + β2·h_w + (1 − β1 − β2)·h_b)`.
pub fn loss_sat(pair: &LabeledPair, phi: &Formula, eps: f64, w: CalibrationWeights) -> Result<f64> {
    Ok(loss_sat_from(indicators_sat(pair, phi, eps)?, w))
}

/// The three components behind `L_cf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfComponents {
    pub g_s: f64,
    pub g_w: f64,
    pub g_b: f64,
}

/// Range-based components; atom levels are ignored.
pub fn g_components(pair: &LabeledPair, phi: &Formula) -> Result<CfComponents> {
    let truth = trace_sat(phi, &pair.target, pair.t0())?;
    let (strong, weak) = ranges(phi, &pair.flowpipe, pair.t0())?;
    let eps_s_plus = strong.sup().unwrap_or(0.0);
    let eps_w_minus = weak.inf().unwrap_or(1.0);
    Ok(CfComponents {
        g_s: if truth { eps_s_plus } else { 1.0 - eps_s_plus },
        g_w: if truth { 1.0 - eps_w_minus } else { eps_w_minus },
        g_b: coverage_level(&pair.target, &pair.flowpipe)?,
    })
}

pub fn loss_cf_from(g: CfComponents, w: CalibrationWeights) -> f64 {
    w.combine(g.g_s, g.g_w, g.g_b)
}

/// `1 − (β1·g_s + β2·g_w + (1 − β1 − β2)·g_b)`.
pub fn loss_cf(pair: &LabeledPair, phi: &Formula, w: CalibrationWeights) -> Result<f64> {
    Ok(loss_cf_from(g_components(pair, phi)?, w))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Criterion {
    /// `L_sat` at the given confidence level.
    Sat { eps: f64 },
    /// `L_cf`.
    Cf,
}

impl Criterion {
    /// Default weights for this criterion.
    pub fn default_weights(&self) -> CalibrationWeights {
        match self {
            Criterion::Sat { .. } => CalibrationWeights::sat(),
            Criterion::Cf => CalibrationWeights::cf(),
        }
    }

    pub fn loss(&self, pair: &LabeledPair, phi: &Formula, w: CalibrationWeights) -> Result<f64> {
        match *self {
            Criterion::Sat { eps } => loss_sat(pair, phi, eps, w),
            Criterion::Cf => loss_cf(pair, phi, w),
        }
    }
}

/// Mean loss over the pairs that evaluated; `skipped` lists the failures.
#[derive(Debug, Clone, PartialEq)]
pub struct AverageLoss {
    pub mean: f64,
    pub used: usize,
    pub skipped: Vec<Error>,
}

/// Averages `criterion` over `dataset`. Any failing pair makes the whole call fail
/// unless `skip_errors` is set, in which case failing pairs are excluded and listed.
pub fn average_loss(
    dataset: &[LabeledPair],
    phi: &Formula,
    criterion: Criterion,
    w: CalibrationWeights,
    skip_errors: bool,
) -> Result<AverageLoss> {
    let losses = par_map(dataset, |pair| criterion.loss(pair, phi, w));
    aggregate(losses, skip_errors)
}

fn aggregate(losses: Vec<Result<f64>>, skip_errors: bool) -> Result<AverageLoss> {
    if losses.is_empty() {
        return Err(Error::Parameter("dataset is empty".into()));
    }
    let mut sum = 0.0;
    let mut used = 0;
    let mut skipped = Vec::new();
    for (index, r) in losses.into_iter().enumerate() {
        match r {
            Ok(l) => {
                sum += l;
                used += 1;
            }
            Err(e) => skipped.push(match e {
                e @ Error::Generator { .. } => e,
                e => Error::Pair { index, source: Box::new(e) },
            }),
        }
    }
    if !skipped.is_empty() && !skip_errors {
        return Err(Error::Dataset(skipped));
    }
    if used == 0 {
        return Err(Error::Dataset(skipped));
    }
    Ok(AverageLoss { mean: sum / used as f64, used, skipped })
}

/// Produces a flowpipe for the `horizon` steps following `history` under an SRT
/// with keep probability `p`.
pub trait FlowpipeGenerator: Sync {
    fn generate(&self, history: &Trace, horizon: usize, p: f64) -> Result<Flowpipe>;
}

/// A history and the trace that followed it.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSample {
    pub history: Trace,
    pub target: Trace,
}

/// One SRT to try, with the generator that realizes it.
pub struct Candidate<'g> {
    pub srt: Srt,
    pub generator: &'g dyn FlowpipeGenerator,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossEntry {
    pub srt: Srt,
    pub p: f64,
    pub loss: f64,
    pub used: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    pub table: Vec<LossEntry>,
    pub best: Schema,
    pub loss: f64,
}

/// Evaluates every candidate at every `p` and returns the lowest-loss schema.
/// Ties go to the smaller `p`, then to the earlier candidate.
pub fn select_schema(
    candidates: &[Candidate<'_>],
    samples: &[CalibrationSample],
    phi: &Formula,
    criterion: Criterion,
    w: CalibrationWeights,
    p_grid: &[f64],
    skip_errors: bool,
) -> Result<Selection> {
    if candidates.is_empty() || p_grid.is_empty() {
        return Err(Error::Parameter("need at least one candidate and one grid value".into()));
    }
    if samples.is_empty() {
        return Err(Error::Parameter("dataset is empty".into()));
    }
    let mut grid: Vec<f64> = p_grid.to_vec();
    for &p in &grid {
        Schema::new(Srt::BernoulliDropout, p)?;
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let mut table = Vec::new();
    let mut best: Option<(Schema, f64)> = None;
    for cand in candidates {
        let mut cand_best: Option<(f64, f64)> = None;
        for &p in &grid {
            let schema = Schema::new(cand.srt, p)?;
            let losses = par_map_indexed(samples.len(), |index| {
                let s = &samples[index];
                let fp = cand.generator.generate(&s.history, s.target.len(), p).map_err(|e| Error::Generator {
                    schema: schema.to_string(),
                    index,
                    source: Box::new(e),
                })?;
                let pair = LabeledPair::new(fp, s.target.clone()).map_err(|e| Error::Generator {
                    schema: schema.to_string(),
                    index,
                    source: Box::new(e),
                })?;
                criterion.loss(&pair, phi, w)
            });
            let avg = aggregate(losses, skip_errors)?;
            table.push(LossEntry { srt: cand.srt, p, loss: avg.mean, used: avg.used, skipped: avg.skipped.len() });
            if cand_best.is_none_or(|(_, l)| avg.mean < l) {
                cand_best = Some((p, avg.mean));
            }
        }
        if let Some((p, loss)) = cand_best {
            if best.is_none_or(|(_, l)| loss < l) {
                best = Some((Schema::new(cand.srt, p)?, loss));
            }
        }
    }
    let (best, loss) = best.ok_or_else(|| Error::Invariant("no schema evaluated".into()))?;
    Ok(Selection { table, best, loss })
}

/// Dataset-level evaluation metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean of `(y − θ)²/(2σ²) + ½·log(2σ)` over points with `σ > 0`.
    pub heter_loss: f64,
    /// Mean of `(y − θ)²/(2σ²)` over points with `σ > 0`.
    pub accuracy: f64,
    /// Plain root-mean-square error of the means.
    pub rmse: f64,
    /// F1 of the weak verdict against the trace verdict (satisfied = positive).
    pub f1_sat: f64,
    /// F1 of the strong verdict.
    pub f1_strong: f64,
    /// Points left out of `heter_loss` / `accuracy` because `σ = 0`.
    pub zero_std_points: usize,
    /// Of those, points where the value also differs from the mean.
    pub zero_std_mismatches: usize,
    /// No positive labels or predictions at all; F1 is reported as 1.
    pub no_positives: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Confusion {
    tp: usize,
    fp: usize,
    fn_: usize,
}

impl Confusion {
    fn add(&mut self, predicted: bool, truth: bool) {
        match (predicted, truth) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => {}
        }
    }

    fn f1(&self) -> f64 {
        if self.tp + self.fp + self.fn_ == 0 {
            return 1.0;
        }
        self.tp as f64 / (self.tp as f64 + 0.5 * (self.fp + self.fn_) as f64)
    }
}

/// Heteroscedastic loss, accuracy, RMSE and satisfaction F1 over `dataset`;
/// verdicts use level `eps` for every atom.
pub fn eval_metrics(dataset: &[LabeledPair], phi: &Formula, eps: f64) -> Result<Metrics> {
    if dataset.is_empty() {
        return Err(Error::Parameter("dataset is empty".into()));
    }
    let monitor = Monitor::with_policy(phi, EpsilonPolicy::Override(eps))?;
    let verdicts = par_map(dataset, |pair| -> Result<(bool, bool, bool)> {
        let truth = trace_sat(phi, &pair.target, pair.t0())?;
        let v = monitor.verdict(&pair.flowpipe, pair.t0())?;
        Ok((v.strong, v.weak, truth))
    });

    let mut weak = Confusion::default();
    let mut strong = Confusion::default();
    for (index, v) in verdicts.into_iter().enumerate() {
        let (s, w, truth) = v.map_err(|e| Error::Pair { index, source: Box::new(e) })?;
        weak.add(w, truth);
        strong.add(s, truth);
    }

    let mut heter = 0.0;
    let mut acc = 0.0;
    let mut included = 0usize;
    let mut sq = 0.0;
    let mut points = 0usize;
    let mut zero_std_points = 0;
    let mut zero_std_mismatches = 0;
    for pair in dataset {
        for ((_, ys), (_, ps)) in pair.target.variables().zip(pair.flowpipe.variables()) {
            for (y, p) in ys.iter().zip(ps) {
                let d2 = (y - p.mean).powi(2);
                sq += d2;
                points += 1;
                if p.std > 0.0 {
                    let term = d2 / (2.0 * p.std * p.std);
                    acc += term;
                    heter += term + 0.5 * (2.0 * p.std).ln();
                    included += 1;
                } else {
                    zero_std_points += 1;
                    if d2 > 0.0 {
                        zero_std_mismatches += 1;
                    }
                }
            }
        }
    }
    let per = |x: f64| if included == 0 { f64::NAN } else { x / included as f64 };
    Ok(Metrics {
        heter_loss: per(heter),
        accuracy: per(acc),
        rmse: (sq / points as f64).sqrt(),
        f1_sat: weak.f1(),
        f1_strong: strong.f1(),
        zero_std_points,
        zero_std_mismatches,
        no_positives: weak.tp + weak.fp + weak.fn_ == 0,
    })
}
