//! Random formulas, flowpipes and traces, plus a direct recursive trace
//! evaluator used as an oracle. Shared by the core integration tests and the
//! CLI acceptance suite.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stlu::{parse, Confidence, Flowpipe, Formula, GaussianPoint, TimeInterval, Trace};

pub const VARS: [&str; 2] = ["x", "y"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn num<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    // two decimals keep the printed formula exact
    (rng.random_range(lo..hi) * 100.0).round() / 100.0
}

/// Source text of a random atom over `v`. Every family has features at least
/// 0.5 wide so that both the monitor's minimizer and grid oracles resolve them.
pub fn atom_src<R: Rng>(rng: &mut R, v: &str) -> String {
    let c = num(rng, -4.0, 4.0);
    let r = num(rng, 0.5, 3.0);
    let a = num(rng, 0.2, 3.0);
    match rng.random_range(0..8) {
        0 => format!("{v} > {c}"),
        1 => format!("{v} < {c}"),
        2 => format!("{a} * {v} - {c} > 0"),
        3 => format!("({v} - {c})^2 < {}", r * r),
        4 => format!("({v} - {c})^2 > {}", r * r),
        5 => format!("abs({v} - {c}) > {r}"),
        6 => format!("sin({v}) > {}", num(rng, -0.9, 0.9)),
        _ => format!("cos({v}) < {}", num(rng, -0.9, 0.9)),
    }
}

pub fn atom<R: Rng>(rng: &mut R) -> Formula {
    let v = *VARS.choose(rng).unwrap();
    parse(&format!("{} @ ?", atom_src(rng, v))).expect("generated atom parses")
}

fn interval<R: Rng>(rng: &mut R) -> TimeInterval {
    let lo = rng.random_range(0..=2);
    let hi = lo + rng.random_range(0..=2);
    TimeInterval::new(lo, hi).unwrap()
}

/// Random formula of nesting depth at most `depth` over all operators; atoms
/// carry no level (use `with_confidence` to fix one).
pub fn formula<R: Rng>(rng: &mut R, depth: u32) -> Formula {
    if depth == 0 || rng.random_bool(0.25) {
        return atom(rng);
    }
    let d = depth - 1;
    match rng.random_range(0..6) {
        0 => Formula::not(formula(rng, d)),
        1 => Formula::and(formula(rng, d), formula(rng, d)),
        2 => Formula::or(formula(rng, d), formula(rng, d)),
        3 => Formula::always(interval(rng), formula(rng, d)),
        4 => Formula::eventually(interval(rng), formula(rng, d)),
        _ => Formula::until(interval(rng), formula(rng, d), formula(rng, d)),
    }
}

pub fn at_level(phi: &Formula, eps: f64) -> Formula {
    phi.with_confidence(Confidence::Level(eps))
}

/// Level in (0,1), biased towards both ends now and then.
pub fn level<R: Rng>(rng: &mut R) -> f64 {
    match rng.random_range(0..10) {
        0 => rng.random_range(1e-6..0.01),
        1 => rng.random_range(0.99..0.999_999),
        _ => rng.random_range(0.01..0.99),
    }
}

pub fn sample_count<R: Rng>(rng: &mut R) -> usize {
    *[1usize, 2, 4, 25, 100].choose(rng).unwrap()
}

pub fn point<R: Rng>(rng: &mut R) -> GaussianPoint {
    let mean = rng.random_range(-5.0..5.0);
    let std = if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.01..3.0) };
    GaussianPoint::new(mean, std).unwrap()
}

pub fn flowpipe<R: Rng>(rng: &mut R, start: i64, len: usize) -> Flowpipe {
    let n = sample_count(rng);
    let vars = VARS.iter().map(|v| (v.to_string(), (0..len).map(|_| point(rng)).collect())).collect();
    Flowpipe::new(start, n, vars).unwrap()
}

pub fn trace<R: Rng>(rng: &mut R, start: i64, len: usize) -> Trace {
    let vars: BTreeMap<String, Vec<f64>> =
        VARS.iter().map(|v| (v.to_string(), (0..len).map(|_| rng.random_range(-5.0..5.0)).collect())).collect();
    Trace::new(start, vars).unwrap()
}

/// Formula, flowpipe long enough for it and an admissible evaluation time.
pub fn case<R: Rng>(rng: &mut R) -> (Formula, Flowpipe, i64) {
    let phi = formula(rng, 3);
    let slack = rng.random_range(0..3);
    let start = rng.random_range(-3..3);
    let fp = flowpipe(rng, start, phi.horizon() as usize + 1 + slack);
    let t = start + rng.random_range(0..=slack as i64);
    (phi, fp, t)
}

/// Boolean semantics on a plain trace, written directly from the definitions.
pub fn oracle(phi: &Formula, tr: &Trace, t: i64) -> bool {
    match phi {
        Formula::Atom(a) => {
            let x = tr.value(&a.variable, t).expect("trace covers the formula");
            a.expr.eval(x).expect("atom evaluates") > 0.0
        }
        Formula::Not(p) => !oracle(p, tr, t),
        Formula::And(a, b) => oracle(a, tr, t) && oracle(b, tr, t),
        Formula::Or(a, b) => oracle(a, tr, t) || oracle(b, tr, t),
        Formula::Always(i, p) => (t + i.lo as i64..=t + i.hi as i64).all(|s| oracle(p, tr, s)),
        Formula::Eventually(i, p) => (t + i.lo as i64..=t + i.hi as i64).any(|s| oracle(p, tr, s)),
        Formula::Until(i, a, b) => {
            (t + i.lo as i64..=t + i.hi as i64).any(|s| oracle(b, tr, s) && (t + 1..s).all(|u| oracle(a, tr, u)))
        }
    }
}
