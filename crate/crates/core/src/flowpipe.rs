//! Flowpipes, traces and Gaussian confidence intervals.
//!
//! A flowpipe assigns each variable a Gaussian `N(mean, std²)` at every integer
//! timestamp of a contiguous finite domain. The Gaussians are Monte-Carlo estimates
//! from `sample_count` draws, so confidence intervals use the standard error
//! `std / √sample_count` as their scale.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::{two_sided_coverage, two_sided_quantile};

/// Mean and standard deviation of one predicted value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPoint {
    pub mean: f64,
    pub std: f64,
}

impl GaussianPoint {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !mean.is_finite() || !std.is_finite() {
            return Err(Error::Parameter(format!("gaussian point must be finite, got mean={mean}, std={std}")));
        }
        if std < 0.0 {
            return Err(Error::Parameter(format!("negative std {std}")));
        }
        Ok(Self { mean, std })
    }

    /// A point with zero spread.
    pub fn exact(value: f64) -> Self {
        Self { mean: value, std: 0.0 }
    }

    /// Standard error of the mean estimated from `n_samples` draws.
    pub fn effective_std(&self, n_samples: usize) -> f64 {
        if self.std == 0.0 {
            0.0
        } else {
            self.std / (n_samples as f64).sqrt()
        }
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
}

impl ConfidenceInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }
}

fn check_level(eps: f64) -> Result<()> {
    if eps.is_finite() && eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("confidence level must lie in (0,1), got {eps}")))
    }
}

/// Two-sided confidence interval `θ ± δ(ε)·σ/√N` of `point` at level `eps`.
pub fn confidence_interval(point: GaussianPoint, n_samples: usize, eps: f64) -> Result<ConfidenceInterval> {
    check_level(eps)?;
    if n_samples == 0 {
        return Err(Error::Parameter("sample count must be at least 1".into()));
    }
    let point = GaussianPoint::new(point.mean, point.std)?;
    Ok(interval_unchecked(point, n_samples, eps))
}

pub(crate) fn interval_unchecked(point: GaussianPoint, n_samples: usize, eps: f64) -> ConfidenceInterval {
    let scale = point.effective_std(n_samples);
    if scale == 0.0 {
        return ConfidenceInterval { lo: point.mean, hi: point.mean };
    }
    let half = two_sided_quantile(eps) * scale;
    ConfidenceInterval { lo: point.mean - half, hi: point.mean + half }
}

/// One serialized flowpipe sample: `{"t": .., "mean": .., "std": ..}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub t: i64,
    pub mean: f64,
    pub std: f64,
}

/// Wire form of a flowpipe. May hold invalid data; see [`validate_flowpipe`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowpipeDoc {
    pub sample_count: i64,
    pub variables: BTreeMap<String, Vec<PointRecord>>,
}

/// A broken flowpipe invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoVariables,
    SampleCount(i64),
    EmptyVariable { variable: String },
    NonMonotoneTime { variable: String, index: usize, t: i64 },
    NonContiguousTime { variable: String, index: usize, t: i64 },
    NonFinite { variable: String, t: i64 },
    NegativeStd { variable: String, t: i64, std: f64 },
    DomainMismatch { variable: String, reference: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoVariables => write!(f, "flowpipe has no variables"),
            Violation::SampleCount(n) => write!(f, "sample_count must be >= 1, got {n}"),
            Violation::EmptyVariable { variable } => write!(f, "variable `{variable}` has no points"),
            Violation::NonMonotoneTime { variable, index, t } => {
                write!(f, "non-monotone time in `{variable}` at index {index} (t={t})")
            }
            Violation::NonContiguousTime { variable, index, t } => {
                write!(f, "time gap in `{variable}` at index {index} (t={t}); timestamps must step by 1")
            }
            Violation::NonFinite { variable, t } => write!(f, "non-finite value in `{variable}` at t={t}"),
            Violation::NegativeStd { variable, t, std } => {
                write!(f, "negative std {std} in `{variable}` at t={t}")
            }
            Violation::DomainMismatch { variable, reference } => {
                write!(f, "domain mismatch: `{variable}` and `{reference}` cover different timestamps")
            }
        }
    }
}

fn check_timestamps(variable: &str, ts: impl Iterator<Item = i64>, out: &mut Vec<Violation>) {
    let mut prev: Option<i64> = None;
    for (index, t) in ts.enumerate() {
        if let Some(p) = prev {
            if t <= p {
                out.push(Violation::NonMonotoneTime { variable: variable.to_string(), index, t });
            } else if t != p + 1 {
                out.push(Violation::NonContiguousTime { variable: variable.to_string(), index, t });
            }
        }
        prev = Some(t);
    }
}

/// Lists every invariant the document breaks; empty iff it is a valid flowpipe.
pub fn validate_flowpipe(doc: &FlowpipeDoc) -> Vec<Violation> {
    let mut out = Vec::new();
    if doc.sample_count < 1 {
        out.push(Violation::SampleCount(doc.sample_count));
    }
    if doc.variables.is_empty() {
        out.push(Violation::NoVariables);
    }
    let mut reference: Option<(&str, &[PointRecord])> = None;
    for (name, points) in &doc.variables {
        if points.is_empty() {
            out.push(Violation::EmptyVariable { variable: name.clone() });
            continue;
        }
        check_timestamps(name, points.iter().map(|p| p.t), &mut out);
        for p in points {
            if !p.mean.is_finite() || !p.std.is_finite() {
                out.push(Violation::NonFinite { variable: name.clone(), t: p.t });
            } else if p.std < 0.0 {
                out.push(Violation::NegativeStd { variable: name.clone(), t: p.t, std: p.std });
            }
        }
        match reference {
            None => reference = Some((name, points)),
            Some((ref_name, ref_points)) => {
                let same = ref_points.len() == points.len() && ref_points.iter().zip(points).all(|(a, b)| a.t == b.t);
                if !same {
                    out.push(Violation::DomainMismatch { variable: name.clone(), reference: ref_name.to_string() });
                }
            }
        }
    }
    out
}

/// A validated multi-variable flowpipe over the domain `start..=end`.
#[derive(Debug, Clone, PartialEq)]
pub struct Flowpipe {
    start: i64,
    len: usize,
    sample_count: usize,
    variables: BTreeMap<String, Vec<GaussianPoint>>,
}

impl Flowpipe {
    /// Builds a flowpipe whose first timestamp is `start`.
    pub fn new(start: i64, sample_count: usize, variables: BTreeMap<String, Vec<GaussianPoint>>) -> Result<Self> {
        let doc = FlowpipeDoc {
            sample_count: sample_count as i64,
            variables: variables
                .iter()
                .map(|(name, pts)| {
                    let recs = pts
                        .iter()
                        .enumerate()
                        .map(|(i, p)| PointRecord { t: start + i as i64, mean: p.mean, std: p.std })
                        .collect();
                    (name.clone(), recs)
                })
                .collect(),
        };
        let findings = validate_flowpipe(&doc);
        if !findings.is_empty() {
            return Err(Error::InvalidFlowpipe(findings.iter().map(|v| v.to_string()).collect()));
        }
        let len = variables.values().next().map_or(0, Vec::len);
        Ok(Self { start, len, sample_count, variables })
    }

    /// Single-variable convenience constructor starting at t = 0.
    pub fn single(name: &str, sample_count: usize, points: Vec<GaussianPoint>) -> Result<Self> {
        Self::new(0, sample_count, BTreeMap::from([(name.to_string(), points)]))
    }

    /// The zero-variance flowpipe whose every interval collapses onto `trace`.
    pub fn embed(trace: &Trace) -> Self {
        let variables = trace
            .variables
            .iter()
            .map(|(k, v)| (k.clone(), v.iter().copied().map(GaussianPoint::exact).collect()))
            .collect();
        Self { start: trace.start, len: trace.len, sample_count: 1, variables }
    }

    pub fn from_doc(doc: &FlowpipeDoc) -> Result<Self> {
        let findings = validate_flowpipe(doc);
        if !findings.is_empty() {
            return Err(Error::InvalidFlowpipe(findings.iter().map(|v| v.to_string()).collect()));
        }
        let start = doc.variables.values().next().map_or(0, |v| v[0].t);
        let len = doc.variables.values().next().map_or(0, Vec::len);
        let variables = doc
            .variables
            .iter()
            .map(|(k, v)| (k.clone(), v.iter().map(|p| GaussianPoint { mean: p.mean, std: p.std }).collect()))
            .collect();
        Ok(Self { start, len, sample_count: doc.sample_count as usize, variables })
    }

    pub fn to_doc(&self) -> FlowpipeDoc {
        FlowpipeDoc {
            sample_count: self.sample_count as i64,
            variables: self
                .variables
                .iter()
                .map(|(k, v)| {
                    let recs = v
                        .iter()
                        .enumerate()
                        .map(|(i, p)| PointRecord { t: self.start + i as i64, mean: p.mean, std: p.std })
                        .collect();
                    (k.clone(), recs)
                })
                .collect(),
        }
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    /// Last timestamp (inclusive).
    pub fn end(&self) -> i64 {
        self.start + self.len as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn variable(&self, name: &str) -> Option<&[GaussianPoint]> {
        self.variables.get(name).map(Vec::as_slice)
    }

    pub fn variables(&self) -> impl Iterator<Item = (&str, &[GaussianPoint])> {
        self.variables.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn point(&self, name: &str, t: i64) -> Option<GaussianPoint> {
        let idx = usize::try_from(t - self.start).ok()?;
        self.variable(name)?.get(idx).copied()
    }

    /// Same data relabelled to start at `start`.
    pub fn with_start(mut self, start: i64) -> Self {
        self.start = start;
        self
    }

    /// Confidence interval of `name` at `t`.
    pub fn interval(&self, name: &str, t: i64, eps: f64) -> Result<ConfidenceInterval> {
        let p = self.point(name, t).ok_or_else(|| Error::Shape(format!("no point for `{name}` at t={t}")))?;
        confidence_interval(p, self.sample_count, eps)
    }
}

/// Deterministic values per variable over the domain `start..=end`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    start: i64,
    len: usize,
    variables: BTreeMap<String, Vec<f64>>,
}

impl Trace {
    pub fn new(start: i64, variables: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        if variables.is_empty() {
            return Err(Error::Shape("trace has no variables".into()));
        }
        let len = variables.values().next().map_or(0, Vec::len);
        if len == 0 {
            return Err(Error::Shape("trace has no timestamps".into()));
        }
        for (name, values) in &variables {
            if values.len() != len {
                return Err(Error::Shape(format!("variable `{name}` has {} values, expected {len}", values.len())));
            }
            if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::Shape(format!("non-finite value in `{name}` at t={}", start + i as i64)));
            }
        }
        Ok(Self { start, len, variables })
    }

    pub fn single(name: &str, values: Vec<f64>) -> Result<Self> {
        Self::new(0, BTreeMap::from([(name.to_string(), values)]))
    }

    /// The trace of flowpipe means.
    pub fn means_of(fp: &Flowpipe) -> Self {
        let variables = fp.variables.iter().map(|(k, v)| (k.clone(), v.iter().map(|p| p.mean).collect())).collect();
        Self { start: fp.start, len: fp.len, variables }
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn end(&self) -> i64 {
        self.start + self.len as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn variable(&self, name: &str) -> Option<&[f64]> {
        self.variables.get(name).map(Vec::as_slice)
    }

    pub fn variables(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.variables.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn value(&self, name: &str, t: i64) -> Option<f64> {
        let idx = usize::try_from(t - self.start).ok()?;
        self.variable(name)?.get(idx).copied()
    }

    pub fn with_start(mut self, start: i64) -> Self {
        self.start = start;
        self
    }
}

/// Estimates a flowpipe from Monte-Carlo samples: per variable an `N × T` matrix
/// (one row per sample). Uses the unbiased (N − 1) standard deviation. The result
/// starts at t = 0.
pub fn flowpipe_from_samples(samples: &BTreeMap<String, Vec<Vec<f64>>>) -> Result<Flowpipe> {
    let mut n_ref: Option<usize> = None;
    let mut variables = BTreeMap::new();
    for (name, rows) in samples {
        let n = rows.len();
        if n < 2 {
            return Err(Error::Parameter(format!(
                "variable `{name}`: need at least 2 samples for a standard deviation, got {n}"
            )));
        }
        if *n_ref.get_or_insert(n) != n {
            return Err(Error::Shape(format!("variable `{name}` has {n} samples, others differ")));
        }
        let width = rows[0].len();
        if let Some(i) = rows.iter().position(|r| r.len() != width) {
            return Err(Error::Shape(format!(
                "variable `{name}`: sample {i} has {} steps, expected {width}",
                rows[i].len()
            )));
        }
        let points = (0..width)
            .map(|t| {
                // Welford
                let mut mean = 0.0;
                let mut m2 = 0.0;
                for (k, row) in rows.iter().enumerate() {
                    let x = row[t];
                    let delta = x - mean;
                    mean += delta / (k + 1) as f64;
                    m2 += delta * (x - mean);
                }
                GaussianPoint::new(mean, (m2 / (n - 1) as f64).max(0.0).sqrt())
            })
            .collect::<Result<Vec<_>>>()?;
        variables.insert(name.clone(), points);
    }
    Flowpipe::new(0, n_ref.unwrap_or(1), variables)
}

pub(crate) fn check_domains(trace: &Trace, fp: &Flowpipe) -> Result<()> {
    if trace.start != fp.start || trace.len != fp.len {
        return Err(Error::Shape(format!(
            "trace covers {}..={}, flowpipe covers {}..={}",
            trace.start,
            trace.end(),
            fp.start,
            fp.end()
        )));
    }
    let a: Vec<&String> = trace.variables.keys().collect();
    let b: Vec<&String> = fp.variables.keys().collect();
    if a != b {
        return Err(Error::Shape(format!("trace variables {a:?} differ from flowpipe variables {b:?}")));
    }
    Ok(())
}

/// Smallest two-sided level whose interval around `point` reaches `value`.
fn pointwise_level(value: f64, point: GaussianPoint, n_samples: usize) -> f64 {
    let dev = (value - point.mean).abs();
    let scale = point.effective_std(n_samples);
    if dev == 0.0 {
        0.0
    } else if scale == 0.0 {
        1.0
    } else {
        two_sided_coverage(dev / scale)
    }
}

fn paired<'a>(trace: &'a Trace, fp: &'a Flowpipe) -> impl Iterator<Item = (f64, GaussianPoint)> + 'a {
    trace.variables.values().zip(fp.variables.values()).flat_map(|(ys, ps)| ys.iter().copied().zip(ps.iter().copied()))
}

/// True iff every trace value lies in the flowpipe's interval at level `eps`.
/// Boundary-inclusive; a value sitting exactly at the infimum level counts as covered.
pub fn trace_in_flowpipe(trace: &Trace, fp: &Flowpipe, eps: f64) -> Result<bool> {
    check_level(eps)?;
    check_domains(trace, fp)?;
    let n = fp.sample_count;
    Ok(paired(trace, fp).all(|(y, p)| {
        interval_unchecked(p, n, eps).contains(y) || (p.effective_std(n) > 0.0 && pointwise_level(y, p, n) <= eps)
    }))
}

/// Smallest confidence level whose intervals cover the whole trace. `1` when some
/// zero-spread point misses its value.
pub fn coverage_level(trace: &Trace, fp: &Flowpipe) -> Result<f64> {
    check_domains(trace, fp)?;
    let n = fp.sample_count;
    Ok(paired(trace, fp).map(|(y, p)| pointwise_level(y, p, n)).fold(0.0, f64::max))
}
