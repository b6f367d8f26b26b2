//! Batch monitoring throughput on synthetic flowpipes.

use std::time::Instant;

use anyhow::{bail, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use stlu::parallel::{current_threads, is_parallel, par_map_indexed, seq_map_indexed};
use stlu::{Flowpipe, Formula, GaussianPoint, Monitor};

pub const DEFAULT_FORMULA: &str = "always[0,7] x < 10 @ 0.95";

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub count: usize,
    pub horizon: usize,
    pub formula: String,
    pub parallel: bool,
    pub threads: usize,
    pub generate_seconds: f64,
    pub monitor_seconds: f64,
    pub flowpipes_per_second: f64,
    pub strong_satisfied: usize,
    pub weak_satisfied: usize,
}

/// Flowpipe `i` of a bench run: variable `x`, means in `[0, 12)`, stds in
/// `[0.1, 2)`, 100 samples.
pub fn synthetic_flowpipe(seed: u64, i: usize, horizon: usize) -> Flowpipe {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    let points = (0..horizon)
        .map(|_| GaussianPoint { mean: rng.random_range(0.0..12.0), std: rng.random_range(0.1..2.0) })
        .collect();
    Flowpipe::single("x", 100, points).expect("synthetic points are valid")
}

/// Generates `count` flowpipes and monitors `phi` on each at t = 0.
pub fn run(count: usize, horizon: usize, phi: &Formula, seed: u64, sequential: bool) -> Result<BenchReport> {
    if horizon == 0 {
        bail!("horizon must be at least 1");
    }
    if phi.horizon() >= horizon as u64 {
        bail!("formula looks {} steps ahead but flowpipes have only {horizon} points", phi.horizon());
    }
    let monitor = Monitor::new(phi)?;
    let parallel = is_parallel() && !sequential;

    let start = Instant::now();
    let fps = if parallel {
        par_map_indexed(count, |i| synthetic_flowpipe(seed, i, horizon))
    } else {
        seq_map_indexed(count, |i| synthetic_flowpipe(seed, i, horizon))
    };
    let generate_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let verdicts = if parallel {
        par_map_indexed(count, |i| monitor.verdict(&fps[i], 0))
    } else {
        seq_map_indexed(count, |i| monitor.verdict(&fps[i], 0))
    };
    let monitor_seconds = start.elapsed().as_secs_f64();

    let mut strong_satisfied = 0;
    let mut weak_satisfied = 0;
    for v in verdicts {
        let v = v?;
        strong_satisfied += usize::from(v.strong);
        weak_satisfied += usize::from(v.weak);
    }
    Ok(BenchReport {
        count,
        horizon,
        formula: phi.to_string(),
        parallel,
        threads: if parallel { current_threads() } else { 1 },
        generate_seconds,
        monitor_seconds,
        flowpipes_per_second: count as f64 / monitor_seconds.max(1e-12),
        strong_satisfied,
        weak_satisfied,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_flowpipe() {
        let phi = stlu::parse(DEFAULT_FORMULA).unwrap();
        let r = run(1, 8, &phi, 0, false).unwrap();
        assert_eq!(r.count, 1);
        assert!(r.strong_satisfied <= r.weak_satisfied);
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let phi = stlu::parse(DEFAULT_FORMULA).unwrap();
        let a = run(200, 8, &phi, 3, false).unwrap();
        let b = run(200, 8, &phi, 3, true).unwrap();
        assert_eq!((a.strong_satisfied, a.weak_satisfied), (b.strong_satisfied, b.weak_satisfied));
    }

    #[test]
    fn formula_must_fit() {
        let phi = stlu::parse("always[0,8] x < 10 @ 0.9").unwrap();
        assert!(run(1, 8, &phi, 0, false).is_err());
    }
}
