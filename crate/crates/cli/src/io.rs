//! File formats: flowpipe JSON, trace CSV, requirement spec files and model JSON.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use stlu::{parse, validate_flowpipe, Flowpipe, FlowpipeDoc, Formula, ToyArModel, Trace};

/// Reads and validates a flowpipe document.
pub fn read_flowpipe(path: &Path) -> Result<Flowpipe> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_flowpipe(&text).with_context(|| format!("in {}", path.display()))
}

pub fn parse_flowpipe(text: &str) -> Result<Flowpipe> {
    let doc = parse_flowpipe_doc(text)?;
    Ok(Flowpipe::from_doc(&doc)?)
}

/// Parses the JSON without checking flowpipe invariants.
pub fn parse_flowpipe_doc(text: &str) -> Result<FlowpipeDoc> {
    serde_json::from_str(text).context("malformed flowpipe JSON")
}

pub fn write_flowpipe(path: &Path, fp: &Flowpipe) -> Result<()> {
    let text = serde_json::to_string_pretty(&fp.to_doc())?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Reads a trace CSV with header `t,<var1>,<var2>,...`.
pub fn read_trace(path: &Path) -> Result<Trace> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_trace(&text).with_context(|| format!("in {}", path.display()))
}

pub fn parse_trace(text: &str) -> Result<Trace> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("t") || headers.len() < 2 {
        bail!("trace header must be `t,<variables...>`, got `{}`", headers.iter().collect::<Vec<_>>().join(","));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    if names.iter().collect::<HashSet<_>>().len() != names.len() {
        bail!("duplicate variable names in trace header");
    }
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    let mut start = None;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let t: i64 = rec.get(0).unwrap_or("").parse().with_context(|| format!("row {}: bad timestamp", row + 1))?;
        let expected = *start.get_or_insert(t) + row as i64;
        if t != expected {
            bail!("row {}: timestamps must be contiguous, expected t={expected}, got t={t}", row + 1);
        }
        for (i, col) in columns.iter_mut().enumerate() {
            let cell = rec.get(i + 1).ok_or_else(|| anyhow!("row {}: missing value for `{}`", row + 1, names[i]))?;
            col.push(cell.parse().with_context(|| format!("row {}: bad value `{cell}` for `{}`", row + 1, names[i]))?);
        }
    }
    let start = start.ok_or_else(|| anyhow!("trace has no rows"))?;
    Ok(Trace::new(start, names.into_iter().zip(columns).collect())?)
}

pub fn write_trace(path: &Path, trace: &Trace) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    let names: Vec<&str> = trace.variables().map(|(n, _)| n).collect();
    w.write_record(std::iter::once("t").chain(names.iter().copied()))?;
    for i in 0..trace.len() {
        let t = trace.start() + i as i64;
        let mut rec = vec![t.to_string()];
        rec.extend(trace.variables().map(|(_, v)| v[i].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<ToyArModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let model: ToyArModel = serde_json::from_str(&text).context("malformed model JSON")?;
    model.validate()?;
    Ok(model)
}

/// What a requirement asks the monitor for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Strong,
    Weak,
    Both,
    Range,
}

impl Mode {
    /// Whether a verdict meets this mode. Range queries carry no verdict.
    pub fn satisfied(self, strong: bool, weak: bool) -> bool {
        match self {
            Mode::Strong => strong,
            Mode::Weak => weak,
            Mode::Both => strong && weak,
            Mode::Range => true,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Strong => "strong",
            Mode::Weak => "weak",
            Mode::Both => "both",
            Mode::Range => "range",
        })
    }
}

impl FromStr for Mode {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "strong" => Ok(Mode::Strong),
            "weak" => Ok(Mode::Weak),
            "both" => Ok(Mode::Both),
            "range" => Ok(Mode::Range),
            other => bail!("unknown mode `{other}` (expected strong, weak, both or range)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Requirement {
    pub id: String,
    pub mode: Mode,
    pub formula: Formula,
}

/// Parses a spec file: one `id: mode: formula` per line, `#` starts a comment.
pub fn parse_spec(text: &str) -> Result<Vec<Requirement>> {
    let mut out: Vec<Requirement> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lineno = n + 1;
        let mut parts = line.splitn(3, ':');
        let (Some(id), Some(mode), Some(formula)) = (parts.next(), parts.next(), parts.next()) else {
            bail!("line {lineno}: expected `id: mode: formula`");
        };
        let id = id.trim();
        if id.is_empty() {
            bail!("line {lineno}: empty requirement id");
        }
        if out.iter().any(|r| r.id == id) {
            bail!("line {lineno}: duplicate requirement id `{id}`");
        }
        let mode = mode.parse().with_context(|| format!("line {lineno}"))?;
        let formula = parse(formula.trim()).with_context(|| format!("line {lineno}: requirement `{id}`"))?;
        out.push(Requirement { id: id.to_string(), mode, formula });
    }
    if out.is_empty() {
        bail!("spec contains no requirements");
    }
    Ok(out)
}

pub fn read_spec(path: &Path) -> Result<Vec<Requirement>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_spec(&text).with_context(|| format!("in {}", path.display()))
}

/// Files in `dir` with extension `ext`, keyed by file stem.
pub fn files_by_stem(dir: &Path, ext: &str) -> Result<BTreeMap<String, std::path::PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path);
            }
        }
    }
    Ok(out)
}

/// Checks a flowpipe file and returns each problem as a line of text.
pub fn flowpipe_problems(text: &str) -> Result<Vec<String>> {
    let doc = parse_flowpipe_doc(text)?;
    Ok(validate_flowpipe(&doc).iter().map(ToString::to_string).collect())
}
