//! Strong and weak satisfaction of formulas over flowpipes.
//!
//! An atom holds strongly when `f > 0` on the whole confidence interval (checked
//! through the interval minimum) and weakly when `f > 0` somewhere on it (interval
//! maximum). Negation swaps the two readings. Temporal operators quantify over the
//! closed integer window `[t + a, t + b]`; for `until`, the left operand must hold
//! at every `t''` strictly between `t` and the witness `t'`.

use crate::error::{Error, Result};
use crate::flowpipe::{interval_unchecked, Flowpipe, GaussianPoint, Trace};
use crate::formula::{minimize_fn, Atom, Formula, MinimizeOptions};

/// Which confidence level each atom is evaluated at.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum EpsilonPolicy {
    /// Use each atom's own level; unspecified levels are an error.
    #[default]
    Annotated,
    /// Use the atom's level, or this one where the atom leaves it unspecified.
    Fill(f64),
    /// Ignore annotations and evaluate every atom at this level.
    Override(f64),
}

/// Strong and weak outcome of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Verdict {
    pub strong: bool,
    pub weak: bool,
}

impl Verdict {
    /// Rejects `strong && !weak`, which the semantics rules out.
    pub fn new(strong: bool, weak: bool) -> Result<Self> {
        if strong && !weak {
            return Err(Error::Invariant("strong satisfaction without weak satisfaction".into()));
        }
        Ok(Self { strong, weak })
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Node<'f> {
    Atom(&'f Atom),
    Not(usize),
    And(usize, usize),
    Or(usize, usize),
    Always(i64, i64, usize),
    Eventually(i64, i64, usize),
    Until(i64, i64, usize, usize),
}

/// Flattens a formula into an arena; returns the root index.
pub(crate) fn flatten<'f>(phi: &'f Formula, nodes: &mut Vec<Node<'f>>) -> usize {
    let node = match phi {
        Formula::Atom(a) => Node::Atom(a),
        Formula::Not(p) => Node::Not(flatten(p, nodes)),
        Formula::And(a, b) => {
            let (a, b) = (flatten(a, nodes), flatten(b, nodes));
            Node::And(a, b)
        }
        Formula::Or(a, b) => {
            let (a, b) = (flatten(a, nodes), flatten(b, nodes));
            Node::Or(a, b)
        }
        Formula::Always(i, p) => Node::Always(i.lo as i64, i.hi as i64, flatten(p, nodes)),
        Formula::Eventually(i, p) => Node::Eventually(i.lo as i64, i.hi as i64, flatten(p, nodes)),
        Formula::Until(i, a, b) => {
            let (a, b) = (flatten(a, nodes), flatten(b, nodes));
            Node::Until(i.lo as i64, i.hi as i64, a, b)
        }
    };
    nodes.push(node);
    nodes.len() - 1
}

/// Checks that `[t, t + horizon]` lies inside `start..=end`.
pub(crate) fn check_window(t: i64, horizon: u64, start: i64, end: i64) -> Result<()> {
    if t < start {
        return Err(Error::Parameter(format!("t={t} precedes the first timestamp {start}")));
    }
    let required = t.saturating_add(horizon as i64);
    if required > end {
        return Err(Error::InsufficientHorizon { t, required, available: end });
    }
    Ok(())
}

pub(crate) fn check_level(eps: f64) -> Result<()> {
    if eps.is_finite() && eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("confidence level must lie in (0,1), got {eps}")))
    }
}

/// A formula prepared for repeated monitoring.
#[derive(Debug, Clone)]
pub struct Monitor<'f> {
    nodes: Vec<Node<'f>>,
    levels: Vec<f64>,
    root: usize,
    horizon: u64,
    minimizer: MinimizeOptions,
}

impl<'f> Monitor<'f> {
    /// Prepares `phi` with each atom's annotated level.
    pub fn new(phi: &'f Formula) -> Result<Self> {
        Self::with_policy(phi, EpsilonPolicy::Annotated)
    }

    pub fn with_policy(phi: &'f Formula, policy: EpsilonPolicy) -> Result<Self> {
        let mut nodes = Vec::new();
        let root = flatten(phi, &mut nodes);
        let mut levels = vec![f64::NAN; nodes.len()];
        for (i, node) in nodes.iter().enumerate() {
            if let Node::Atom(a) = node {
                let level = match policy {
                    EpsilonPolicy::Annotated => a.conf.level(),
                    EpsilonPolicy::Fill(eps) => Some(a.conf.level().unwrap_or(eps)),
                    EpsilonPolicy::Override(eps) => Some(eps),
                };
                let level = level.ok_or_else(|| Error::ConfidenceRequired(a.to_string()))?;
                check_level(level)?;
                levels[i] = level;
            }
        }
        Ok(Self { nodes, levels, root, horizon: phi.horizon(), minimizer: MinimizeOptions::default() })
    }

    pub fn minimizer(mut self, opts: MinimizeOptions) -> Self {
        self.minimizer = opts;
        self
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn strong(&self, fp: &Flowpipe, t: i64) -> Result<bool> {
        self.session(fp, t)?.sat(self.root, t, true)
    }

    pub fn weak(&self, fp: &Flowpipe, t: i64) -> Result<bool> {
        self.session(fp, t)?.sat(self.root, t, false)
    }

    /// Strong and weak satisfaction sharing one memo table.
    pub fn verdict(&self, fp: &Flowpipe, t: i64) -> Result<Verdict> {
        let mut s = self.session(fp, t)?;
        let strong = s.sat(self.root, t, true)?;
        let weak = s.sat(self.root, t, false)?;
        Verdict::new(strong, weak)
    }

    fn session<'a>(&'a self, fp: &'a Flowpipe, t: i64) -> Result<Session<'a, 'f>> {
        check_window(t, self.horizon, fp.start(), fp.end())?;
        let series = self
            .nodes
            .iter()
            .map(|n| match n {
                Node::Atom(a) => fp.variable(&a.variable).ok_or_else(|| Error::UnknownVariable(a.variable.clone())),
                _ => Ok(&[][..]),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Session {
            monitor: self,
            series,
            sample_count: fp.sample_count(),
            start: fp.start(),
            len: fp.len(),
            memo: vec![0; self.nodes.len() * fp.len() * 2],
        })
    }
}

struct Session<'a, 'f> {
    monitor: &'a Monitor<'f>,
    series: Vec<&'a [GaussianPoint]>,
    sample_count: usize,
    start: i64,
    len: usize,
    // 0 unknown, 1 false, 2 true
    memo: Vec<u8>,
}

impl Session<'_, '_> {
    fn sat(&mut self, node: usize, t: i64, strong: bool) -> Result<bool> {
        let slot = (node * self.len + (t - self.start) as usize) * 2 + usize::from(strong);
        match self.memo[slot] {
            1 => return Ok(false),
            2 => return Ok(true),
            _ => {}
        }
        let value = self.eval(node, t, strong)?;
        self.memo[slot] = if value { 2 } else { 1 };
        Ok(value)
    }

    fn eval(&mut self, node: usize, t: i64, strong: bool) -> Result<bool> {
        match self.monitor.nodes[node] {
            Node::Atom(atom) => {
                let point = self.series[node][(t - self.start) as usize];
                atom_sat(atom, point, self.sample_count, self.monitor.levels[node], strong, self.monitor.minimizer)
                    .map_err(|e| match e {
                        Error::Eval(source) => Error::Atom { t, atom: atom.to_string(), source },
                        other => other,
                    })
            }
            Node::Not(p) => Ok(!self.sat(p, t, !strong)?),
            Node::And(a, b) => Ok(self.sat(a, t, strong)? && self.sat(b, t, strong)?),
            Node::Or(a, b) => Ok(self.sat(a, t, strong)? || self.sat(b, t, strong)?),
            Node::Always(lo, hi, p) => {
                for tp in t + lo..=t + hi {
                    if !self.sat(p, tp, strong)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            Node::Eventually(lo, hi, p) => {
                for tp in t + lo..=t + hi {
                    if self.sat(p, tp, strong)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            Node::Until(lo, hi, a, b) => {
                for tp in t + lo..=t + hi {
                    if self.sat(b, tp, strong)? {
                        let mut held = true;
                        for tpp in t + 1..tp {
                            if !self.sat(a, tpp, strong)? {
                                held = false;
                                break;
                            }
                        }
                        if held {
                            return Ok(true);
                        }
                    }
                }
                Ok(false)
            }
        }
    }
}

/// Strong (`min f > 0`) or weak (`max f > 0`) reading of an atom on one point.
pub(crate) fn atom_sat(
    atom: &Atom,
    point: GaussianPoint,
    sample_count: usize,
    eps: f64,
    strong: bool,
    opts: MinimizeOptions,
) -> Result<bool> {
    let ci = interval_unchecked(point, sample_count, eps);
    if ci.is_degenerate() {
        return Ok(atom.expr.eval(point.mean)? > 0.0);
    }
    if strong {
        let (_, min) = minimize_fn(|x| atom.expr.eval(x), ci.lo, ci.hi, opts)?;
        Ok(min > 0.0)
    } else {
        let (_, neg_max) = minimize_fn(|x| atom.expr.eval(x).map(|v| -v), ci.lo, ci.hi, opts)?;
        Ok(-neg_max > 0.0)
    }
}

/// Strong satisfaction at `t`, using each atom's annotated level.
pub fn strong_sat(phi: &Formula, fp: &Flowpipe, t: i64) -> Result<bool> {
    Monitor::new(phi)?.strong(fp, t)
}

/// Weak satisfaction at `t`, using each atom's annotated level.
pub fn weak_sat(phi: &Formula, fp: &Flowpipe, t: i64) -> Result<bool> {
    Monitor::new(phi)?.weak(fp, t)
}

/// Both readings at `t`, evaluated with a shared memo table.
pub fn verdict(phi: &Formula, fp: &Flowpipe, t: i64) -> Result<Verdict> {
    Monitor::new(phi)?.verdict(fp, t)
}

/// Classical boolean satisfaction over a deterministic trace. Confidence
/// annotations are ignored.
pub fn trace_sat(phi: &Formula, trace: &Trace, t: i64) -> Result<bool> {
    Monitor::with_policy(phi, EpsilonPolicy::Override(0.5))?.strong(&Flowpipe::embed(trace), t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse;

    fn gp(mean: f64, std: f64) -> GaussianPoint {
        GaussianPoint::new(mean, std).unwrap()
    }

    #[test]
    fn zero_variance_always() {
        let fp = Flowpipe::single("x", 1, vec![gp(1.0, 0.0), gp(2.0, 0.0), gp(3.0, 0.0)]).unwrap();
        let phi = parse("always[0,2] x < 5 @ 0.9").unwrap();
        assert!(strong_sat(&phi, &fp, 0).unwrap());
        assert!(weak_sat(&phi, &fp, 0).unwrap());
    }

    #[test]
    fn narrow_interval_examples() {
        // θ=0, σ=1, N=100: interval ≈ [-0.196, 0.196]
        let fp = Flowpipe::single("x", 100, vec![gp(0.0, 1.0)]).unwrap();
        assert!(strong_sat(&parse("x < 0.5 @ 0.95").unwrap(), &fp, 0).unwrap());
        let tight = parse("x < 0.1 @ 0.95").unwrap();
        assert!(!strong_sat(&tight, &fp, 0).unwrap());
        assert!(weak_sat(&tight, &fp, 0).unwrap());
        assert_eq!(verdict(&tight, &fp, 0).unwrap(), Verdict { strong: false, weak: true });
    }

    #[test]
    fn entirely_above_threshold_fails_both() {
        // interval at t=1 lies wholly above 10, so the window fails both readings
        let fp = Flowpipe::single("x", 1, vec![gp(5.0, 0.5), gp(12.0, 0.5), gp(10.0, 1.0), gp(7.0, 0.2)]).unwrap();
        let phi = parse("always[1,3] x < 10 @ 0.9").unwrap();
        assert_eq!(verdict(&phi, &fp, 0).unwrap(), Verdict { strong: false, weak: false });
        let point = Flowpipe::single("x", 1, vec![gp(12.0, 0.5)]).unwrap();
        assert!(!weak_sat(&parse("x < 10 @ 0.95").unwrap(), &point, 0).unwrap());
    }

    #[test]
    fn trace_examples() {
        let tr = Trace::single("x", vec![1.0, 2.0, 3.0]).unwrap();
        assert!(trace_sat(&parse("eventually[0,2] x > 2.5").unwrap(), &tr, 0).unwrap());
        assert!(!trace_sat(&parse("always[0,2] x > 1.5").unwrap(), &tr, 0).unwrap());
    }

    #[test]
    fn until_uses_open_inner_range() {
        // t'' ranges over (t, t'): the value at t itself is never checked
        let tr = Trace::single("x", vec![-1.0, 1.0, 1.0, 5.0]).unwrap();
        let phi = parse("x > 0 until[0,3] x > 4").unwrap();
        assert!(trace_sat(&phi, &tr, 0).unwrap());
        let broken = Trace::single("x", vec![1.0, -1.0, 1.0, 5.0]).unwrap();
        assert!(!trace_sat(&phi, &broken, 0).unwrap());
        // witness at t' = t needs nothing from the left operand
        let now = Trace::single("x", vec![5.0, -1.0, -1.0, -1.0]).unwrap();
        assert!(trace_sat(&phi, &now, 0).unwrap());
    }

    #[test]
    fn errors() {
        let fp = Flowpipe::single("x", 1, vec![gp(1.0, 1.0), gp(1.0, 1.0)]).unwrap();
        let long = parse("always[0,5] x > 0 @ 0.9").unwrap();
        match strong_sat(&long, &fp, 0) {
            Err(Error::InsufficientHorizon { required: 5, available: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(strong_sat(&parse("x > 0 @ ?").unwrap(), &fp, 0), Err(Error::ConfidenceRequired(_))));
        assert!(matches!(strong_sat(&parse("y > 0 @ 0.5").unwrap(), &fp, 0), Err(Error::UnknownVariable(_))));
        match weak_sat(&parse("log(x) > 0 @ 0.99").unwrap(), &fp, 1) {
            Err(Error::Atom { t: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn policies() {
        let fp = Flowpipe::single("x", 1, vec![gp(0.0, 1.0)]).unwrap();
        let phi = parse("x > -1.5 @ ?").unwrap();
        assert!(Monitor::with_policy(&phi, EpsilonPolicy::Fill(0.5)).unwrap().strong(&fp, 0).unwrap());
        assert!(!Monitor::with_policy(&phi, EpsilonPolicy::Override(0.99)).unwrap().strong(&fp, 0).unwrap());
        assert!(Monitor::with_policy(&phi, EpsilonPolicy::Override(1.0)).is_err());
    }

    #[test]
    fn verdict_rejects_strong_without_weak() {
        assert!(Verdict::new(true, false).is_err());
        assert!(Verdict::new(false, true).is_ok());
    }
}
