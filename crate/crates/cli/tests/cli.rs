#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use clap::Parser;
use proptest::prelude::*;
use rand::Rng;
use serde_json::Value;
use stlu::normal::two_sided_quantile;
use stlu::{parse, strong_range, trace_sat, verdict, Flowpipe, GaussianPoint, IntervalSet, Trace};
use stlu_cli::io::{write_flowpipe, write_trace};
use stlu_cli::{run, Cli};
use tempfile::TempDir;

fn stlu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stlu")).args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn pt(mean: f64, std: f64) -> GaussianPoint {
    GaussianPoint::new(mean, std).unwrap()
}

fn write_fp(dir: &Path, name: &str, fp: &Flowpipe) -> std::path::PathBuf {
    let path = dir.join(name);
    write_flowpipe(&path, fp).unwrap();
    path
}

#[test]
fn monitor_exit_codes() {
    let dir = TempDir::new().unwrap();
    let exact = write_fp(dir.path(), "exact.json", &Flowpipe::single("x", 10, vec![pt(5.0, 0.0); 3]).unwrap());
    let out = stlu(&["monitor", "--flowpipe", p(&exact), "--formula", "always[0,2] x < 10 @ 0.95"]);
    assert_eq!(out.status.code(), Some(0));
    let r = &json(&out)["results"][0];
    assert_eq!((r["strong"].as_bool(), r["weak"].as_bool()), (Some(true), Some(true)));

    // interval straddles nothing that satisfies: neither strong nor weak
    let wide = write_fp(dir.path(), "wide.json", &Flowpipe::single("x", 1, vec![pt(0.0, 1.0)]).unwrap());
    let out = stlu(&["monitor", "--flowpipe", p(&wide), "--formula", "x > 5 @ 0.9"]);
    assert_eq!(out.status.code(), Some(1));
    let r = &json(&out)["results"][0];
    assert_eq!((r["strong"].as_bool(), r["weak"].as_bool()), (Some(false), Some(false)));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"sample_count\": 3, \"variables\": ").unwrap();
    let out = stlu(&["monitor", "--flowpipe", p(&bad), "--formula", "x > 0 @ 0.9"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(!out.stderr.is_empty());

    let out = stlu(&["monitor", "--flowpipe", p(&exact), "--formula", "always[0,5] x < 10 @ 0.95"]);
    assert_eq!(out.status.code(), Some(2));
}

/// Flowpipe whose `x > 8` strong ranges on t = 1..3 are (0, 0.20), (0, 0.49),
/// (0, 0.68) and whose `x < 10` ranges peak at (0, 0.55).
fn conjunction_flowpipe() -> Flowpipe {
    let mut points = vec![pt(0.0, 1.0)];
    for (above, below) in [(0.20, 0.55), (0.49, 0.30), (0.68, 0.10)] {
        let (a, b) = (two_sided_quantile(above), two_sided_quantile(below));
        let sigma = 2.0 / (a + b);
        points.push(pt(8.0 + a * sigma, sigma));
    }
    Flowpipe::single("x", 1, points).unwrap()
}

fn single_piece(v: &Value) -> (f64, f64, String) {
    let piece = &v.as_array().unwrap()[0];
    (piece[0].as_f64().unwrap(), piece[1].as_f64().unwrap(), piece[2].as_str().unwrap().to_string())
}

#[test]
fn confidence_reports_ranges() {
    let dir = TempDir::new().unwrap();
    let fp = conjunction_flowpipe();
    let path = write_fp(dir.path(), "fp.json", &fp);
    let formula = "always[1,3] (x > 8 @ ?) & eventually[1,3] (x < 10 @ ?)";
    let out = stlu(&["confidence", "--flowpipe", p(&path), "--formula", formula]);
    assert_eq!(out.status.code(), Some(0));
    let r = &json(&out)["results"][0];
    let (lo, hi, kind) = single_piece(&r["strong_range"]);
    assert_eq!((lo, kind.as_str()), (0.0, "oo"));
    assert!((hi - 0.20).abs() < 1e-6, "{hi}");
    assert!((r["eps_s_plus"].as_f64().unwrap() - 0.20).abs() < 1e-6);

    let parsed: IntervalSet = serde_json::from_value(r["strong_range"].clone()).unwrap();
    assert_eq!(parsed, strong_range(&parse(formula).unwrap(), &fp, 0).unwrap());

    let mean_violating = "always[0,3] (x > 9 @ ?)";
    let out = stlu(&["confidence", "--flowpipe", p(&path), "--formula", mean_violating]);
    assert_eq!(json(&out)["results"][0]["strong_range"], serde_json::json!([]));
}

fn calibration_dirs(pairs: &[(&str, Trace, Flowpipe)]) -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::create_dir(dir.path().join("fp")).unwrap();
    fs::create_dir(dir.path().join("tr")).unwrap();
    for (name, tr, fp) in pairs {
        write_flowpipe(&dir.path().join("fp").join(format!("{name}.json")), fp).unwrap();
        write_trace(&dir.path().join("tr").join(format!("{name}.csv")), tr).unwrap();
    }
    dir
}

fn calibrate(dir: &Path, extra: &[&str]) -> Output {
    let fp = dir.join("fp");
    let tr = dir.join("tr");
    let mut args = vec!["calibrate", "--flowpipes", p(&fp), "--traces", p(&tr), "--formula", "always[0,2] x < 4 @ 0.9"];
    args.extend_from_slice(extra);
    stlu(&args)
}

#[test]
fn calibrate_reports_losses() {
    let traces: Vec<Trace> = [[1.0, 2.0, 3.0], [5.0, 1.0, 0.0], [3.5, 3.9, 4.1]]
        .iter()
        .map(|v| Trace::single("x", v.to_vec()).unwrap())
        .collect();
    let pairs: Vec<(&str, Trace, Flowpipe)> =
        ["a", "b", "c"].into_iter().zip(traces).map(|(n, t)| (n, t.clone(), Flowpipe::embed(&t))).collect();
    let dir = calibration_dirs(&pairs);

    let out = calibrate(dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&out);
    assert_eq!(r["loss"].as_f64(), Some(0.0));
    assert_eq!(r["used"].as_u64(), Some(3));

    let r = json(&calibrate(dir.path(), &["--criterion", "cf"]));
    assert_eq!((r["beta1"].as_f64(), r["beta2"].as_f64()), (Some(0.3), Some(0.3)));
    let r = json(&calibrate(dir.path(), &["--criterion", "sat"]));
    assert_eq!((r["beta1"].as_f64(), r["beta2"].as_f64()), (Some(0.2), Some(0.2)));
}

#[test]
fn calibrate_skip_errors_and_orphans() {
    let ok = Trace::single("x", vec![1.0, 2.0, 3.0]).unwrap();
    let short = Trace::single("x", vec![1.0]).unwrap();
    let dir = calibration_dirs(&[
        ("ok", ok.clone(), Flowpipe::embed(&ok)),
        ("short", short.clone(), Flowpipe::embed(&short)),
    ]);

    let out = calibrate(dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("short"));

    let out = calibrate(dir.path(), &["--skip-errors"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["used"].as_u64(), Some(1));
    assert_eq!(r["skipped"].as_array().unwrap().len(), 1);
    assert_eq!(r["skipped"][0]["pair"].as_str(), Some("short"));

    fs::write(dir.path().join("tr").join("lonely.csv"), "t,x\n0,1\n").unwrap();
    let out = calibrate(dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lonely.csv"));
}

fn ar_trace(len: usize, seed: u64) -> Trace {
    let mut r = support::rng(seed);
    let mut x = vec![2.0];
    for _ in 1..len {
        let last = *x.last().unwrap();
        x.push(0.6 * last + 0.8 + r.random_range(-0.3..0.3));
    }
    Trace::single("x", x).unwrap()
}

fn stream_files(dir: &Path, len: usize) -> (String, String) {
    let tr = dir.join("trace.csv");
    write_trace(&tr, &ar_trace(len, 3)).unwrap();
    let spec = dir.join("spec.txt");
    fs::write(&spec, "# two requirements\nhi: strong: always[0,2] x < 4 @ 0.9\nlo: weak: x > 1 @ 0.9\n").unwrap();
    (p(&tr).to_string(), p(&spec).to_string())
}

#[test]
fn stream_steps_and_determinism() {
    let dir = TempDir::new().unwrap();
    let (tr, spec) = stream_files(dir.path(), 103);
    let args = |stride: &str| {
        vec![
            "stream",
            "--trace",
            &tr,
            "--spec",
            &spec,
            "--window",
            "10",
            "--horizon",
            "3",
            "--stride",
            stride,
            "--n-samples",
            "30",
        ]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>()
    };
    let run_args = |a: Vec<String>| Command::new(env!("CARGO_BIN_EXE_stlu")).args(a).output().unwrap();

    let out = run_args(args("10"));
    assert!(matches!(out.status.code(), Some(0) | Some(1)));
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let steps: Vec<u64> = lines.iter().filter_map(|l| l["step"].as_u64()).collect();
    assert_eq!(steps.len(), (103 - 10) / 10);
    assert!(steps.windows(2).all(|w| w[1] == w[0] + 10));
    assert_eq!(lines.last().unwrap()["summary"]["steps"].as_u64(), Some(steps.len() as u64));
    let violations = lines.last().unwrap()["summary"]["total_violations"].as_u64().unwrap();
    assert_eq!(out.status.code(), Some(if violations == 0 { 0 } else { 1 }));

    assert_eq!(run_args(args("10")).stdout, out.stdout);
    let mut single = args("10");
    single.extend(["--jobs".to_string(), "1".to_string()]);
    assert_eq!(run_args(single).stdout, out.stdout);

    let mut other_seed = args("10");
    other_seed.extend(["--seed".to_string(), "7".to_string()]);
    assert_ne!(run_args(other_seed).stdout, out.stdout);
}

#[test]
fn stream_rejects_inconsistent_config_before_output() {
    let dir = TempDir::new().unwrap();
    let (tr, spec) = stream_files(dir.path(), 40);
    let out = stlu(&["stream", "--trace", &tr, "--spec", &spec, "--window", "10", "--horizon", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    let out = stlu(&["stream", "--trace", &tr, "--spec", &spec, "--window", "50", "--horizon", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn constant_trace_streams_without_violations() {
    let dir = TempDir::new().unwrap();
    let tr = dir.path().join("c.csv");
    write_trace(&tr, &Trace::single("x", vec![3.0; 60]).unwrap()).unwrap();
    let spec = dir.path().join("s.txt");
    fs::write(&spec, "a: both: always[0,4] x > 2.5 @ 0.99\n").unwrap();
    let out =
        stlu(&["stream", "--trace", p(&tr), "--spec", p(&spec), "--window", "12", "--horizon", "5", "--stride", "12"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().last().unwrap().contains("\"total_violations\":0"));
    assert_eq!(text.lines().count(), (60 - 12) / 12 + 1);
}

#[test]
fn select_schema_and_sweep_csv() {
    let dir = TempDir::new().unwrap();
    let tr = dir.path().join("tr.csv");
    write_trace(&tr, &ar_trace(60, 5)).unwrap();
    let csv = dir.path().join("sweep.csv");
    let out = stlu(&[
        "select-schema",
        "--trace",
        p(&tr),
        "--formula",
        "always[0,2] x < 3 @ 0.9",
        "--window",
        "10",
        "--horizon",
        "3",
        "--stride",
        "5",
        "--p",
        "0.5,0.9",
        "--n-samples",
        "20",
        "--sweep-csv",
        p(&csv),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&out);
    assert_eq!(r["table"].as_array().unwrap().len(), 8);
    let best = r["loss"].as_f64().unwrap();
    assert!(r["table"].as_array().unwrap().iter().all(|e| e["loss"].as_f64().unwrap() >= best));
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 9);
}

#[test]
fn validate_and_bench() {
    assert_eq!(stlu(&["validate", "--formula", "always[0,2] x > 1 @ 0.9"]).status.code(), Some(0));
    let out = stlu(&["validate", "--formula", "always[2,1] x > 1"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["valid"].as_bool(), Some(false));

    let dir = TempDir::new().unwrap();
    let fp = dir.path().join("neg.json");
    fs::write(&fp, r#"{"sample_count": 0, "variables": {"x": [{"t": 0, "mean": 1.0, "std": -1.0}]}}"#).unwrap();
    let out = stlu(&["validate", "--flowpipe", p(&fp)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(json(&out)["problems"].as_array().unwrap().len() >= 2);

    let out = stlu(&["bench", "--count", "1"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["count"].as_u64(), Some(1));
}

#[test]
fn bench_time_scales_roughly_linearly() {
    let phi = parse(stlu_cli::bench::DEFAULT_FORMULA).unwrap();
    let best = |count| {
        (0..3)
            .map(|_| stlu_cli::bench::run(count, 8, &phi, 1, true).unwrap().monitor_seconds)
            .fold(f64::INFINITY, f64::min)
    };
    let (one, two) = (best(20_000), best(40_000));
    assert!(two <= 2.5 * one, "{one} s vs {two} s");
}

fn run_in_process(args: &[String]) -> u8 {
    let mut sink = Vec::new();
    match Cli::try_parse_from(args).map_err(anyhow::Error::from).and_then(|cli| run(cli, &mut sink)) {
        Ok(code) => code,
        Err(_) => stlu_cli::commands::EXIT_ERROR,
    }
}

const MODES: [&str; 4] = ["strong", "weak", "both", "range"];

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    /// Exit code is 2 exactly when the spec fails to parse; otherwise 1 exactly
    /// when some non-range requirement misses its mode.
    #[test]
    fn exit_code_is_total_function(seed in any::<u64>(), corrupt in any::<bool>()) {
        let mut r = support::rng(seed);
        let (_, fp, _) = support::case(&mut r);
        let fp = fp.with_start(0);
        let k = r.random_range(1..4);
        let mut lines = Vec::new();
        let mut expect_violation = false;
        for i in 0..k {
            let mut phi = support::at_level(&support::formula(&mut r, 2), support::level(&mut r));
            while phi.horizon() as usize >= fp.len() {
                phi = support::at_level(&support::atom(&mut r), 0.9);
            }
            let mode = MODES[r.random_range(0..4)];
            let v = verdict(&phi, &fp, 0).unwrap();
            expect_violation |= match mode {
                "strong" => !v.strong,
                "weak" => !v.weak,
                "both" => !(v.strong && v.weak),
                _ => false,
            };
            lines.push(format!("r{i}: {mode}: {phi}"));
        }
        if corrupt {
            let i = r.random_range(0..lines.len());
            lines[i].push_str(" & (");
        }
        let dir = TempDir::new().unwrap();
        let spec = dir.path().join("spec.txt");
        fs::write(&spec, lines.join("\n")).unwrap();
        let fp_path = write_fp(dir.path(), "fp.json", &fp);
        let args: Vec<String> = ["stlu", "monitor", "--flowpipe", p(&fp_path), "--spec", p(&spec)]
            .iter().map(|s| s.to_string()).collect();
        let expected = if corrupt { 2 } else if expect_violation { 1 } else { 0 };
        prop_assert_eq!(run_in_process(&args), expected);
    }

    /// Monitoring an embedded trace agrees with plain trace semantics.
    #[test]
    fn monitor_on_embedded_trace_matches_trace_semantics(seed in any::<u64>()) {
        let mut r = support::rng(seed);
        let phi = support::at_level(&support::formula(&mut r, 3), support::level(&mut r));
        let tr = support::trace(&mut r, 0, phi.horizon() as usize + 1);
        let dir = TempDir::new().unwrap();
        let fp_path = write_fp(dir.path(), "fp.json", &Flowpipe::embed(&tr));
        let spec = dir.path().join("spec.txt");
        fs::write(&spec, format!("s: strong: {phi}\nw: weak: {phi}\n")).unwrap();
        let truth = trace_sat(&phi, &tr, 0).unwrap();
        let args: Vec<String> = ["stlu", "monitor", "--flowpipe", p(&fp_path), "--spec", p(&spec)]
            .iter().map(|s| s.to_string()).collect();
        prop_assert_eq!(run_in_process(&args), if truth { 0 } else { 1 });
    }
}

#[test]
fn multi_variable_trace_requires_variable_choice() {
    let dir = TempDir::new().unwrap();
    let tr = dir.path().join("xy.csv");
    let vars = BTreeMap::from([("x".to_string(), vec![1.0; 30]), ("y".to_string(), vec![2.0; 30])]);
    write_trace(&tr, &Trace::new(0, vars).unwrap()).unwrap();
    let base = [
        "select-schema",
        "--trace",
        p(&tr),
        "--formula",
        "y > 1 @ 0.9",
        "--window",
        "5",
        "--horizon",
        "1",
        "--n-samples",
        "5",
        "--p",
        "0.9",
    ];
    assert_eq!(stlu(&base).status.code(), Some(2));
    let mut with_var = base.to_vec();
    with_var.extend(["--variable", "y"]);
    let out = stlu(&with_var);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}
