//! Confidence-level queries: for which levels `ε` does a formula hold strongly
//! (or weakly) on a flowpipe?
//!
//! For an atom, `η` is the distance from the mean to the nearest point where the
//! atom flips. The interval at level `ε` has half-width `δ(ε)·σ_eff`, so the atom
//! holds strongly exactly for `ε < erf(η / (σ_eff √2))`, with `σ_eff = σ/√N`.
//! Compound formulas combine per-atom ranges with set algebra.

mod interval_set;

pub use interval_set::{is_complement, is_intersect, is_union, IntervalSet, Piece};

use crate::error::{Error, EvalError, Result};
use crate::flowpipe::{Flowpipe, GaussianPoint};
use crate::formula::{Expr, Formula};
use crate::monitor::{check_window, flatten, Node};
use crate::normal::two_sided_coverage;

/// Scan step, as a fraction of `σ_eff`.
const SCAN_STEPS_PER_SIGMA: f64 = 64.0;
/// Search radius in units of `σ_eff`.
const SCAN_RADIUS: f64 = 12.0;
/// Bisection tolerance in units of `σ_eff`.
const BISECT_TOL: f64 = 1e-9;

/// Distance from `theta` to the nearest `x` with `pred(f(x))`, assuming
/// `!pred(f(theta))`. Returns `(inner, outer)` bracketing the crossing, or `None`
/// when nothing within the search radius qualifies.
fn crossing(
    expr: &Expr,
    theta: f64,
    sigma: f64,
    pred: impl Fn(f64) -> bool,
) -> std::result::Result<Option<(f64, f64)>, EvalError> {
    let step = sigma / SCAN_STEPS_PER_SIGMA;
    let n = (SCAN_RADIUS * SCAN_STEPS_PER_SIGMA) as usize;
    let mut best: Option<(f64, f64)> = None;
    for dir in [1.0, -1.0] {
        for k in 1..=n {
            let d = k as f64 * step;
            if best.is_some_and(|(inner, _)| d > inner + step) {
                break;
            }
            if pred(expr.eval(theta + dir * d)?) {
                let (mut lo, mut hi) = ((k - 1) as f64 * step, d);
                while hi - lo > BISECT_TOL * sigma {
                    let mid = 0.5 * (lo + hi);
                    if pred(expr.eval(theta + dir * mid)?) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                if best.is_none_or(|(inner, _)| lo < inner) {
                    best = Some((lo, hi));
                }
                break;
            }
        }
    }
    Ok(best)
}

fn coverage(eta: f64, sigma: f64) -> f64 {
    two_sided_coverage(eta / sigma)
}

/// Levels at which `expr > 0` holds strongly on `point`: `(0, erf(η/(σ_eff√2)))`.
pub fn atom_strong_range(expr: &Expr, point: GaussianPoint, n_samples: usize) -> Result<IntervalSet> {
    let sigma = point.effective_std(n_samples);
    if expr.eval(point.mean)? <= 0.0 {
        return Ok(IntervalSet::empty());
    }
    if sigma == 0.0 {
        return Ok(IntervalSet::unit());
    }
    // inner end of the bracket: f > 0 on the whole ball of that radius
    match crossing(expr, point.mean, sigma, |v| v <= 0.0)? {
        None => Ok(IntervalSet::unit()),
        Some((eta, _)) => Ok(IntervalSet::open(0.0, coverage(eta, sigma))),
    }
}

/// Levels at which `expr > 0` holds weakly on `point`: `(erf(η/(σ_eff√2)), 1)`.
pub fn atom_weak_range(expr: &Expr, point: GaussianPoint, n_samples: usize) -> Result<IntervalSet> {
    let sigma = point.effective_std(n_samples);
    if expr.eval(point.mean)? > 0.0 {
        return Ok(IntervalSet::unit());
    }
    if sigma == 0.0 {
        return Ok(IntervalSet::empty());
    }
    // outer end of the bracket: a point with f > 0 lies at that distance
    match crossing(expr, point.mean, sigma, |v| v > 0.0)? {
        None => Ok(IntervalSet::empty()),
        Some((_, eta)) => Ok(IntervalSet::open(coverage(eta, sigma), 1.0)),
    }
}

/// Levels `ε` at which `phi` holds strongly at `t`. Atom annotations are ignored.
pub fn strong_range(phi: &Formula, fp: &Flowpipe, t: i64) -> Result<IntervalSet> {
    RangeEngine::new(phi, fp, t)?.range(t, true)
}

/// Levels `ε` at which `phi` holds weakly at `t`. Atom annotations are ignored.
pub fn weak_range(phi: &Formula, fp: &Flowpipe, t: i64) -> Result<IntervalSet> {
    RangeEngine::new(phi, fp, t)?.range(t, false)
}

/// Both ranges at `t`, sharing one memo table.
pub fn ranges(phi: &Formula, fp: &Flowpipe, t: i64) -> Result<(IntervalSet, IntervalSet)> {
    let mut engine = RangeEngine::new(phi, fp, t)?;
    Ok((engine.range(t, true)?, engine.range(t, false)?))
}

struct RangeEngine<'a> {
    nodes: Vec<Node<'a>>,
    root: usize,
    series: Vec<&'a [GaussianPoint]>,
    sample_count: usize,
    start: i64,
    len: usize,
    memo: Vec<Option<IntervalSet>>,
}

impl<'a> RangeEngine<'a> {
    fn new(phi: &'a Formula, fp: &'a Flowpipe, t: i64) -> Result<Self> {
        check_window(t, phi.horizon(), fp.start(), fp.end())?;
        let mut nodes = Vec::new();
        let root = flatten(phi, &mut nodes);
        let series = nodes
            .iter()
            .map(|n| match n {
                Node::Atom(a) => fp.variable(&a.variable).ok_or_else(|| Error::UnknownVariable(a.variable.clone())),
                _ => Ok(&[][..]),
            })
            .collect::<Result<Vec<_>>>()?;
        let memo = vec![None; nodes.len() * fp.len() * 2];
        Ok(Self { nodes, root, series, sample_count: fp.sample_count(), start: fp.start(), len: fp.len(), memo })
    }

    fn range(&mut self, t: i64, strong: bool) -> Result<IntervalSet> {
        self.get(self.root, t, strong)
    }

    fn get(&mut self, node: usize, t: i64, strong: bool) -> Result<IntervalSet> {
        let slot = (node * self.len + (t - self.start) as usize) * 2 + usize::from(strong);
        if let Some(set) = &self.memo[slot] {
            return Ok(set.clone());
        }
        let set = self.eval(node, t, strong)?;
        self.memo[slot] = Some(set.clone());
        Ok(set)
    }

    fn eval(&mut self, node: usize, t: i64, strong: bool) -> Result<IntervalSet> {
        match self.nodes[node] {
            Node::Atom(atom) => {
                let point = self.series[node][(t - self.start) as usize];
                let r = if strong {
                    atom_strong_range(&atom.expr, point, self.sample_count)
                } else {
                    atom_weak_range(&atom.expr, point, self.sample_count)
                };
                r.map_err(|e| match e {
                    Error::Eval(source) => Error::Atom { t, atom: atom.to_string(), source },
                    other => other,
                })
            }
            Node::Not(p) => Ok(self.get(p, t, !strong)?.complement()),
            Node::And(a, b) => Ok(self.get(a, t, strong)?.intersect(&self.get(b, t, strong)?)),
            Node::Or(a, b) => Ok(self.get(a, t, strong)?.union(&self.get(b, t, strong)?)),
            Node::Always(lo, hi, p) => {
                let mut acc = IntervalSet::unit();
                for tp in t + lo..=t + hi {
                    acc = acc.intersect(&self.get(p, tp, strong)?);
                    if acc.is_empty() {
                        break;
                    }
                }
                Ok(acc)
            }
            Node::Eventually(lo, hi, p) => {
                let mut acc = IntervalSet::empty();
                for tp in t + lo..=t + hi {
                    acc = acc.union(&self.get(p, tp, strong)?);
                }
                Ok(acc)
            }
            Node::Until(lo, hi, a, b) => {
                let mut acc = IntervalSet::empty();
                for tp in t + lo..=t + hi {
                    let mut branch = self.get(b, tp, strong)?;
                    for tpp in t + 1..tp {
                        if branch.is_empty() {
                            break;
                        }
                        branch = branch.intersect(&self.get(a, tpp, strong)?);
                    }
                    acc = acc.union(&branch);
                }
                Ok(acc)
            }
        }
    }
}
