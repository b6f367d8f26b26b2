//! Stochastic regularization masks, a masked autoregressive toy predictor and
//! Monte-Carlo flowpipe generation.
//!
//! `p` is the probability of *keeping* a weight. Bernoulli masks hold 0/1 entries
//! and are not rescaled; Gaussian masks draw from `N(1, (1 − p)/p)`, which has the
//! same variance as a rescaled Bernoulli(p) keep mask.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::distr::{Bernoulli, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::calibrate::FlowpipeGenerator;
use crate::error::{Error, Result};
use crate::flowpipe::{flowpipe_from_samples, Flowpipe, Trace};
use crate::parallel::par_map_indexed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Srt {
    /// One Bernoulli draw per mask row.
    BernoulliDropout,
    /// One Bernoulli draw per entry.
    BernoulliDropConnect,
    /// One Gaussian draw per mask row.
    GaussianDropout,
    /// One Gaussian draw per entry.
    GaussianDropConnect,
}

impl Srt {
    pub const ALL: [Srt; 4] =
        [Srt::BernoulliDropout, Srt::BernoulliDropConnect, Srt::GaussianDropout, Srt::GaussianDropConnect];

    pub fn name(self) -> &'static str {
        match self {
            Srt::BernoulliDropout => "bernoulli-dropout",
            Srt::BernoulliDropConnect => "bernoulli-dropconnect",
            Srt::GaussianDropout => "gaussian-dropout",
            Srt::GaussianDropConnect => "gaussian-dropconnect",
        }
    }

    fn per_row(self) -> bool {
        matches!(self, Srt::BernoulliDropout | Srt::GaussianDropout)
    }
}

impl fmt::Display for Srt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Srt {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        match key.as_str() {
            "bernoullidropout" | "bdropout" => Ok(Srt::BernoulliDropout),
            "bernoullidropconnect" | "bdropconnect" => Ok(Srt::BernoulliDropConnect),
            "gaussiandropout" | "gdropout" => Ok(Srt::GaussianDropout),
            "gaussiandropconnect" | "gdropconnect" => Ok(Srt::GaussianDropConnect),
            _ => Err(Error::Parameter(format!(
                "unknown SRT `{s}` (expected bernoulli-dropout, bernoulli-dropconnect, gaussian-dropout or gaussian-dropconnect)"
            ))),
        }
    }
}

/// An SRT with its keep probability `p ∈ (0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub srt: Srt,
    pub p: f64,
}

impl Schema {
    pub fn new(srt: Srt, p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Parameter(format!("keep probability must lie in (0,1], got {p}")));
        }
        Ok(Self { srt, p })
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(p={})", self.srt, self.p)
    }
}

/// Row-major `rows × cols` weight mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mask {
    pub fn ones(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![1.0; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Draws a mask for `schema` from `rng`.
pub fn sample_mask<R: Rng + ?Sized>(schema: Schema, rows: usize, cols: usize, rng: &mut R) -> Result<Mask> {
    let schema = Schema::new(schema.srt, schema.p)?;
    if rows == 0 || cols == 0 {
        return Err(Error::Parameter(format!("mask must be at least 1×1, got {rows}×{cols}")));
    }
    let mut mask = Mask::ones(rows, cols);
    if schema.p == 1.0 {
        return Ok(mask);
    }
    let mut draw: Box<dyn FnMut(&mut R) -> f64> = match schema.srt {
        Srt::BernoulliDropout | Srt::BernoulliDropConnect => {
            let b = Bernoulli::new(schema.p).map_err(|e| Error::Parameter(e.to_string()))?;
            Box::new(move |r: &mut R| if b.sample(r) { 1.0 } else { 0.0 })
        }
        Srt::GaussianDropout | Srt::GaussianDropConnect => {
            let n =
                Normal::new(1.0, ((1.0 - schema.p) / schema.p).sqrt()).map_err(|e| Error::Parameter(e.to_string()))?;
            Box::new(move |r: &mut R| n.sample(r))
        }
    };
    if schema.srt.per_row() {
        for row in mask.data.chunks_mut(cols) {
            row.fill(draw(rng));
        }
    } else {
        for w in &mut mask.data {
            *w = draw(rng);
        }
    }
    Ok(mask)
}

/// [`sample_mask`] with a fresh generator seeded from `seed`.
pub fn sample_mask_seeded(schema: Schema, rows: usize, cols: usize, seed: u64) -> Result<Mask> {
    sample_mask(schema, rows, cols, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// `y[t+1] = bias + Σ_j weights[j] · y[t − j]`; `weights[0]` multiplies the most recent value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyArModel {
    pub order: usize,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl ToyArModel {
    pub fn new(weights: Vec<f64>, bias: f64) -> Result<Self> {
        let model = Self { order: weights.len(), weights, bias };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 || self.weights.len() != self.order {
            return Err(Error::Parameter(format!(
                "model order {} needs exactly that many weights, got {}",
                self.order,
                self.weights.len()
            )));
        }
        if !self.bias.is_finite() || self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Parameter("model coefficients must be finite".into()));
        }
        Ok(())
    }

    /// One-step prediction from `recent` (most recent first) with per-weight `mask`.
    fn step(&self, recent: &[f64], mask: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(mask).zip(recent).map(|((w, m), y)| w * m * y).sum::<f64>()
    }

    /// Deterministic rollout of `horizon` steps after `history`.
    pub fn rollout(&self, history: &[f64], horizon: usize) -> Result<Vec<f64>> {
        self.validate()?;
        self.check_history(history)?;
        let ones = vec![1.0; self.order];
        let mut recent = self.recent(history);
        Ok((0..horizon).map(|_| self.advance(&mut recent, &ones)).collect())
    }

    fn check_history(&self, history: &[f64]) -> Result<()> {
        if history.len() < self.order {
            return Err(Error::Parameter(format!(
                "history of length {} is shorter than model order {}",
                history.len(),
                self.order
            )));
        }
        Ok(())
    }

    /// Last `order` values of `history`, most recent first.
    fn recent(&self, history: &[f64]) -> Vec<f64> {
        history.iter().rev().take(self.order).copied().collect()
    }

    /// Predicts the next value and shifts it into `recent`.
    fn advance(&self, recent: &mut [f64], mask: &[f64]) -> f64 {
        let y = self.step(recent, mask);
        recent.rotate_right(1);
        recent[0] = y;
        y
    }
}

/// Least-squares fit of an order-`order` model to one-step-ahead predictions over
/// `history`. The boolean is true when the normal equations were singular and a
/// small ridge term was added.
pub fn fit_ar(history: &[f64], order: usize) -> Result<(ToyArModel, bool)> {
    if order == 0 {
        return Err(Error::Parameter("model order must be at least 1".into()));
    }
    if history.len() <= order + 1 {
        return Err(Error::Parameter(format!(
            "fitting order {order} needs more than {} points, got {}",
            order + 1,
            history.len()
        )));
    }
    if history.iter().any(|y| !y.is_finite()) {
        return Err(Error::Parameter("history contains non-finite values".into()));
    }
    let rows: Vec<(Vec<f64>, f64)> =
        (order..history.len()).map(|t| ((1..=order).map(|j| history[t - j]).collect(), history[t])).collect();
    // shifted means: exact for constant data
    let m = rows.len() as f64;
    let (x0, y0) = (rows[0].0.clone(), rows[0].1);
    let mut x_mean = vec![0.0; order];
    let mut y_mean = 0.0;
    for (x, y) in &rows {
        for ((acc, v), v0) in x_mean.iter_mut().zip(x).zip(&x0) {
            *acc += v - v0;
        }
        y_mean += y - y0;
    }
    for (acc, v0) in x_mean.iter_mut().zip(&x0) {
        *acc = v0 + *acc / m;
    }
    let y_mean = y0 + y_mean / m;
    let mut gram = vec![vec![0.0; order]; order];
    let mut rhs = vec![0.0; order];
    for (x, y) in &rows {
        let xc: Vec<f64> = x.iter().zip(&x_mean).map(|(v, mu)| v - mu).collect();
        for i in 0..order {
            rhs[i] += xc[i] * (y - y_mean);
            for j in 0..order {
                gram[i][j] += xc[i] * xc[j];
            }
        }
    }
    // singularity is judged against the raw (uncentered) scale of the regressors
    let raw_scale = rows.iter().map(|(x, _)| x.iter().map(|v| v * v).fold(0.0, f64::max)).sum::<f64>();
    let tol = 1e-12 * raw_scale.max(f64::MIN_POSITIVE);
    let (weights, ridge) = match solve(gram.clone(), rhs.clone(), tol) {
        Some(w) => (w, false),
        None => {
            for (i, row) in gram.iter_mut().enumerate() {
                row[i] += 1e-8;
            }
            let w = solve(gram, rhs, 0.0).ok_or_else(|| Error::Invariant("ridge system is singular".into()))?;
            (w, true)
        }
    };
    let bias = y_mean - weights.iter().zip(&x_mean).map(|(w, mu)| w * mu).sum::<f64>();
    Ok((ToyArModel::new(weights, bias)?, ridge))
}

/// Gaussian elimination with partial pivoting; `None` when a pivot falls below
/// `tol` or far below the diagonal scale.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>, tol: f64) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = (0..n).map(|i| a[i][i].abs()).fold(0.0, f64::max);
    if scale <= tol {
        return None;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= (1e-12 * scale).max(tol) {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let (top, rest) = a.split_at_mut(col + 1);
        let pivot_row = &top[col];
        for (k, row) in rest.iter_mut().enumerate() {
            let factor = row[col] / pivot_row[col];
            for (x, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= factor * p;
            }
            b[col + 1 + k] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub n_samples: usize,
    pub seed: u64,
    /// Draw a new mask at every step instead of once per rollout.
    pub resample_per_step: bool,
}

impl Default for McOptions {
    fn default() -> Self {
        Self { n_samples: 100, seed: 0, resample_per_step: false }
    }
}

/// `n_samples × horizon` matrix of masked rollouts. Sample `i` uses its own
/// ChaCha stream `i`, so results do not depend on scheduling.
pub fn mc_samples(
    model: &ToyArModel,
    history: &[f64],
    horizon: usize,
    schema: Schema,
    opts: McOptions,
) -> Result<Vec<Vec<f64>>> {
    let schema = Schema::new(schema.srt, schema.p)?;
    model.validate()?;
    if opts.n_samples < 2 {
        return Err(Error::Parameter(format!("need at least 2 Monte-Carlo samples, got {}", opts.n_samples)));
    }
    if horizon == 0 {
        return Err(Error::Parameter("prediction horizon must be at least 1".into()));
    }
    model.check_history(history)?;
    par_map_indexed(opts.n_samples, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(i as u64);
        let mut mask = sample_mask(schema, 1, model.order, &mut rng)?.as_slice().to_vec();
        let mut recent = model.recent(history);
        let mut out = Vec::with_capacity(horizon);
        for s in 0..horizon {
            if s > 0 && opts.resample_per_step {
                mask = sample_mask(schema, 1, model.order, &mut rng)?.as_slice().to_vec();
            }
            out.push(model.advance(&mut recent, &mask));
        }
        Ok(out)
    })
    .into_iter()
    .collect()
}

/// Monte-Carlo flowpipe for a single variable `x` over `0..horizon`.
pub fn mc_predict(
    model: &ToyArModel,
    history: &[f64],
    horizon: usize,
    schema: Schema,
    opts: McOptions,
) -> Result<Flowpipe> {
    let samples = mc_samples(model, history, horizon, schema, opts)?;
    flowpipe_from_samples(&BTreeMap::from([("x".to_string(), samples)]))
}

/// Reference generator: rolls a masked AR model forward from a single-variable
/// history. The flowpipe starts right after the history ends.
#[derive(Debug, Clone)]
pub struct ArGenerator {
    model: Option<ToyArModel>,
    order: usize,
    pub srt: Srt,
    pub opts: McOptions,
}

impl ArGenerator {
    /// Uses `model` for every history.
    pub fn fixed(model: ToyArModel, srt: Srt, opts: McOptions) -> Self {
        Self { order: model.order, model: Some(model), srt, opts }
    }

    /// Fits a fresh order-`order` model to each history.
    pub fn refit(order: usize, srt: Srt, opts: McOptions) -> Self {
        Self { model: None, order, srt, opts }
    }
}

impl FlowpipeGenerator for ArGenerator {
    fn generate(&self, history: &Trace, horizon: usize, p: f64) -> Result<Flowpipe> {
        let mut vars = history.variables();
        let (name, values) = match (vars.next(), vars.next()) {
            (Some(v), None) => v,
            _ => return Err(Error::Shape("the AR generator needs a single-variable history".into())),
        };
        let model = match &self.model {
            Some(m) => m.clone(),
            None => fit_ar(values, self.order)?.0,
        };
        let samples = mc_samples(&model, values, horizon, Schema::new(self.srt, p)?, self.opts)?;
        let fp = flowpipe_from_samples(&BTreeMap::from([(name.to_string(), samples)]))?;
        Ok(fp.with_start(history.end() + 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn keep_all_gives_ones() {
        for srt in Srt::ALL {
            let m = sample_mask_seeded(Schema::new(srt, 1.0).unwrap(), 3, 4, 7).unwrap();
            assert!(m.as_slice().iter().all(|&w| w == 1.0), "{srt}");
        }
    }

    #[test]
    fn invalid_keep_probability() {
        assert!(Schema::new(Srt::GaussianDropout, 0.0).is_err());
        assert!(Schema::new(Srt::GaussianDropout, 1.5).is_err());
        let bad = Schema { srt: Srt::BernoulliDropout, p: -0.1 };
        assert!(sample_mask_seeded(bad, 1, 1, 0).is_err());
    }

    #[test]
    fn gaussian_dropconnect_moments() {
        let m = sample_mask_seeded(Schema::new(Srt::GaussianDropConnect, 0.5).unwrap(), 1000, 1000, 1).unwrap();
        let (mean, var) = moments(m.as_slice());
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn dropout_rows_are_constant() {
        for srt in [Srt::BernoulliDropout, Srt::GaussianDropout] {
            let m = sample_mask_seeded(Schema::new(srt, 0.5).unwrap(), 20, 6, 3).unwrap();
            for i in 0..m.rows() {
                assert!(m.row(i).iter().all(|&w| w == m.get(i, 0)));
            }
        }
    }

    #[test]
    fn srt_names_round_trip() {
        for srt in Srt::ALL {
            assert_eq!(srt.name().parse::<Srt>().unwrap(), srt);
        }
        assert_eq!("B-DropConnect".parse::<Srt>().unwrap(), Srt::BernoulliDropConnect);
        assert!("dropblock".parse::<Srt>().is_err());
    }

    #[test]
    fn identity_masks_are_deterministic() {
        let model = ToyArModel::new(vec![0.5, 0.25], 1.0).unwrap();
        let history = [1.0, 2.0, 3.0];
        let opts = McOptions { n_samples: 5, seed: 11, resample_per_step: false };
        let fp = mc_predict(&model, &history, 4, Schema::new(Srt::GaussianDropConnect, 1.0).unwrap(), opts).unwrap();
        let expect = model.rollout(&history, 4).unwrap();
        // 1 + 0.5*3 + 0.25*2 = 3
        assert_eq!(expect[0], 3.0);
        for (t, p) in fp.variable("x").unwrap().iter().enumerate() {
            assert_eq!(p.std, 0.0);
            assert!((p.mean - expect[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn seeded_runs_match_bitwise() {
        let model = ToyArModel::new(vec![0.9], 0.1).unwrap();
        let schema = Schema::new(Srt::BernoulliDropConnect, 0.7).unwrap();
        let opts = McOptions { n_samples: 2, seed: 42, resample_per_step: true };
        let a = mc_samples(&model, &[1.0], 5, schema, opts).unwrap();
        let b = mc_samples(&model, &[1.0], 5, schema, opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn masked_unit_weight_mean() {
        let model = ToyArModel::new(vec![1.0], 0.0).unwrap();
        let schema = Schema::new(Srt::BernoulliDropConnect, 0.5).unwrap();
        let opts = McOptions { n_samples: 10_000, seed: 5, resample_per_step: false };
        let fp = mc_predict(&model, &[1.0], 1, schema, opts).unwrap();
        assert!((fp.variable("x").unwrap()[0].mean - 0.5).abs() < 0.02);
    }

    #[test]
    fn history_shorter_than_order() {
        let model = ToyArModel::new(vec![0.5, 0.5], 0.0).unwrap();
        let schema = Schema::new(Srt::BernoulliDropout, 0.5).unwrap();
        assert!(matches!(mc_predict(&model, &[1.0], 2, schema, McOptions::default()), Err(Error::Parameter(_))));
    }

    #[test]
    fn fit_constant_series() {
        let (m, ridge) = fit_ar(&[2.5; 10], 1).unwrap();
        assert!(ridge);
        assert_eq!(m.step(&[2.5], &[1.0]), 2.5);
    }

    #[test]
    fn fit_exact_ar1() {
        let mut h = vec![1.0];
        for _ in 0..40 {
            h.push(0.9 * h.last().unwrap());
        }
        let (m, ridge) = fit_ar(&h, 1).unwrap();
        assert!(!ridge);
        assert!((m.weights[0] - 0.9).abs() < 1e-9, "{:?}", m);
        assert!(m.bias.abs() < 1e-9);
    }

    #[test]
    fn fit_needs_enough_points() {
        assert!(fit_ar(&[1.0, 2.0], 1).is_err());
        assert!(fit_ar(&[1.0, 2.0, 3.0], 0).is_err());
    }

    #[test]
    fn model_json_shape() {
        let m = ToyArModel::new(vec![0.5, -0.25], 1.5).unwrap();
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        assert_eq!(v, serde_json::json!({"order": 2, "weights": [0.5, -0.25], "bias": 1.5}));
    }

    #[test]
    fn generator_places_flowpipe_after_history() {
        let history = Trace::single("y", vec![1.0, 1.1, 1.2, 1.3, 1.4]).unwrap();
        let g = ArGenerator::refit(1, Srt::GaussianDropout, McOptions { n_samples: 8, ..Default::default() });
        let fp = g.generate(&history, 3, 0.9).unwrap();
        assert_eq!((fp.start(), fp.end(), fp.sample_count()), (5, 7, 8));
        assert!(fp.variable("y").is_some());
    }
}
