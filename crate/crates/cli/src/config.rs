//! Plain-text run configuration.
//!
//! The format is line oriented. Top-level lines are `key = value`. A line
//! `[objective]` opens a block holding one node's quadratic and may repeat,
//! one block per node in node order. A single `[matrix]` block lists the
//! consensus matrix as `row = ...` lines. `#` starts a comment.
//!
//! ```text
//! topology = star          # ring | star | path | edges
//! n = 4
//! algorithm = adc          # dgd | naive | adc | dgd_t
//! gamma = 1
//! alpha0 = 0.02
//!
//! [objective]
//! a = -4
//! b = 0
//! ```
//!
//! Without `[objective]` blocks every trial draws random quadratics with
//! `a ~ U[random_a]` and `b ~ U[random_b]`.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::path::Path;

use adcdgd_core::{
    Algorithm, Compressor, EngineError, MatrixSpec, ObjectiveSpec, Quadratic, RunConfig, StepSchedule, Topology,
};
use thiserror::Error;

pub const DEFAULT_DIM: usize = 1;
pub const DEFAULT_ETA: f64 = 0.0;
pub const DEFAULT_ITERS: u64 = 1000;
pub const DEFAULT_TRIALS: u64 = 1;
pub const DEFAULT_GAMMA: f64 = 1.0;
pub const DEFAULT_ALPHA0: f64 = 0.02;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_RANDOM_A: (f64, f64) = (0.0, 10.0);
pub const DEFAULT_RANDOM_B: (f64, f64) = (0.0, 1.0);

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("missing required key `{key}`")]
    Missing { key: String },
    #[error("line {line}: bad value for `{key}`: {message}")]
    BadValue { line: usize, key: String, message: String },
    #[error("line {line}: `{key}` violates a run invariant: {source}")]
    Invariant { line: usize, key: String, source: EngineError },
}

impl ConfigError {
    pub fn line(&self) -> Option<usize> {
        match self {
            ConfigError::Syntax { line, .. }
            | ConfigError::UnknownKey { line, .. }
            | ConfigError::Duplicate { line, .. }
            | ConfigError::BadValue { line, .. }
            | ConfigError::Invariant { line, .. } => Some(*line),
            _ => None,
        }
    }
}

const TOP_KEYS: &[&str] = &[
    "topology",
    "n",
    "edges",
    "algorithm",
    "t",
    "compressor",
    "spacing",
    "levels",
    "gamma",
    "allow_gamma_override",
    "alpha0",
    "eta",
    "dim",
    "iters",
    "trials",
    "seed",
    "random_a",
    "random_b",
];

#[derive(Debug, Clone, Copy, PartialEq)]
enum Section {
    Top,
    Objective,
    Matrix,
}

struct Entry {
    line: usize,
    value: String,
}

#[derive(Default)]
struct Raw {
    top: HashMap<String, Entry>,
    objectives: Vec<(usize, HashMap<String, Entry>)>,
    matrix: Option<(usize, Vec<Entry>)>,
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_str(&text)
}

pub fn parse_str(text: &str) -> Result<RunConfig, ConfigError> {
    let raw = tokenize(text)?;
    let cfg = build(&raw)?;
    if let Err(e) = cfg.validate() {
        let key = match &e {
            EngineError::Invalid { field, .. } => field.to_string(),
            EngineError::Graph(_) => "topology".into(),
            EngineError::Matrix(_) => "matrix".into(),
        };
        let line = match key.as_str() {
            "matrix" => raw.matrix.as_ref().map_or(0, |m| m.0),
            "objective" => raw.objectives.first().map_or(0, |o| o.0),
            k => raw.top.get(k).map_or(0, |e| e.line),
        };
        return Err(ConfigError::Invariant { line, key, source: e });
    }
    Ok(cfg)
}

fn tokenize(text: &str) -> Result<Raw, ConfigError> {
    let mut raw = Raw::default();
    let mut section = Section::Top;
    for (idx, full) in text.lines().enumerate() {
        let line = idx + 1;
        let body = full.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
            section = match name.trim() {
                "objective" => {
                    raw.objectives.push((line, HashMap::new()));
                    Section::Objective
                }
                "matrix" => {
                    if raw.matrix.is_some() {
                        return Err(ConfigError::Duplicate { line, key: "[matrix]".into() });
                    }
                    raw.matrix = Some((line, Vec::new()));
                    Section::Matrix
                }
                other => return Err(ConfigError::Syntax { line, message: format!("unknown block [{other}]") }),
            };
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line, message: format!("expected `key = value`, got `{body}`") })?;
        let (key, value) = (key.trim().to_string(), value.trim().to_string());
        let entry = Entry { line, value };
        match section {
            Section::Top => {
                if !TOP_KEYS.contains(&key.as_str()) {
                    return Err(ConfigError::UnknownKey { line, key });
                }
                if raw.top.insert(key.clone(), entry).is_some() {
                    return Err(ConfigError::Duplicate { line, key });
                }
            }
            Section::Objective => {
                if key != "a" && key != "b" {
                    return Err(ConfigError::UnknownKey { line, key });
                }
                let block = &mut raw.objectives.last_mut().expect("inside a block").1;
                if block.insert(key.clone(), entry).is_some() {
                    return Err(ConfigError::Duplicate { line, key });
                }
            }
            Section::Matrix => {
                if key != "row" {
                    return Err(ConfigError::UnknownKey { line, key });
                }
                raw.matrix.as_mut().expect("inside a block").1.push(entry);
            }
        }
    }
    Ok(raw)
}

fn bad(e: &Entry, key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::BadValue { line: e.line, key: key.into(), message: message.into() }
}

fn float(e: &Entry, key: &str) -> Result<f64, ConfigError> {
    let v: f64 = e.value.parse().map_err(|_| bad(e, key, format!("`{}` is not a number", e.value)))?;
    if !v.is_finite() {
        return Err(bad(e, key, "must be finite"));
    }
    Ok(v)
}

fn floats(e: &Entry, key: &str) -> Result<Vec<f64>, ConfigError> {
    e.value.split(',').map(|s| Entry { line: e.line, value: s.trim().to_string() }).map(|x| float(&x, key)).collect()
}

fn pair(e: &Entry, key: &str) -> Result<(f64, f64), ConfigError> {
    match floats(e, key)?.as_slice() {
        [lo, hi] => Ok((*lo, *hi)),
        _ => Err(bad(e, key, "expected `low, high`")),
    }
}

fn integer<T: std::str::FromStr>(e: &Entry, key: &str) -> Result<T, ConfigError> {
    e.value.parse().map_err(|_| bad(e, key, format!("`{}` is not a nonnegative integer", e.value)))
}

fn build(raw: &Raw) -> Result<RunConfig, ConfigError> {
    let get = |k: &str| raw.top.get(k);
    let require = |k: &str| get(k).ok_or_else(|| ConfigError::Missing { key: k.into() });
    let n_entry = require("n")?;
    let n: usize = integer(n_entry, "n")?;

    let topo_entry = require("topology")?;
    let topology = match topo_entry.value.as_str() {
        "ring" => Topology::Ring(n),
        "star" => Topology::Star(n),
        "path" => Topology::Path(n),
        "edges" => {
            let e = require("edges")?;
            let edges = e
                .value
                .split(',')
                .map(|pair| {
                    let (a, b) = pair.trim().split_once('-').ok_or_else(|| bad(e, "edges", "expected `i-j` pairs"))?;
                    let parse = |s: &str| s.trim().parse::<usize>().map_err(|_| bad(e, "edges", "bad node index"));
                    Ok((parse(a)?, parse(b)?))
                })
                .collect::<Result<Vec<_>, ConfigError>>()?;
            Topology::Edges { n, edges }
        }
        other => return Err(bad(topo_entry, "topology", format!("unknown topology `{other}`"))),
    };
    if topo_entry.value != "edges" {
        if let Some(e) = get("edges") {
            return Err(bad(e, "edges", "only used with topology = edges"));
        }
    }

    let alg_entry = require("algorithm")?;
    let algorithm = match alg_entry.value.as_str() {
        "dgd" => Algorithm::Dgd,
        "naive" => Algorithm::NaiveCompressed,
        "adc" => Algorithm::Adc,
        "dgd_t" => Algorithm::DgdT(integer(require("t")?, "t")?),
        other => return Err(bad(alg_entry, "algorithm", format!("unknown algorithm `{other}`"))),
    };
    if !matches!(algorithm, Algorithm::DgdT(_)) {
        if let Some(e) = get("t") {
            return Err(bad(e, "t", "only used with algorithm = dgd_t"));
        }
    }

    let compressor = match get("compressor").map(|e| (e, e.value.as_str())) {
        None | Some((_, "round")) => Compressor::StochasticRound,
        Some((_, "identity")) => Compressor::Identity,
        Some((_, "grid")) => {
            let e = require("spacing")?;
            Compressor::grid(float(e, "spacing")?).map_err(|err| bad(e, "spacing", err.to_string()))?
        }
        Some((_, "sparsify")) => {
            let e = require("levels")?;
            Compressor::sparsifier(floats(e, "levels")?).map_err(|err| bad(e, "levels", err.to_string()))?
        }
        Some((e, other)) => return Err(bad(e, "compressor", format!("unknown compressor `{other}`"))),
    };
    for (key, needs) in [("spacing", "grid"), ("levels", "sparsify")] {
        if let Some(e) = get(key) {
            if get("compressor").map(|c| c.value.as_str()) != Some(needs) {
                return Err(bad(e, key, format!("only used with compressor = {needs}")));
            }
        }
    }

    let dim = get("dim").map(|e| integer(e, "dim")).transpose()?.unwrap_or(DEFAULT_DIM);
    let objectives = if raw.objectives.is_empty() {
        ObjectiveSpec::Random {
            a: get("random_a").map(|e| pair(e, "random_a")).transpose()?.unwrap_or(DEFAULT_RANDOM_A),
            b: get("random_b").map(|e| pair(e, "random_b")).transpose()?.unwrap_or(DEFAULT_RANDOM_B),
        }
    } else {
        for key in ["random_a", "random_b"] {
            if let Some(e) = get(key) {
                return Err(bad(e, key, "not allowed together with [objective] blocks"));
            }
        }
        let qs = raw
            .objectives
            .iter()
            .map(|(line, block)| {
                let field = |k: &str| {
                    block
                        .get(k)
                        .ok_or_else(|| ConfigError::Syntax { line: *line, message: format!("[objective] needs `{k}`") })
                };
                Ok(Quadratic::new(float(field("a")?, "a")?, floats(field("b")?, "b")?))
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        ObjectiveSpec::Fixed(qs)
    };

    let matrix = match &raw.matrix {
        None => MatrixSpec::Metropolis,
        Some((_, rows)) => MatrixSpec::Explicit(rows.iter().map(|r| floats(r, "row")).collect::<Result<_, _>>()?),
    };

    let opt_float = |k: &str, d: f64| get(k).map(|e| float(e, k)).transpose().map(|v| v.unwrap_or(d));
    let allow_gamma_override = match get("allow_gamma_override") {
        None => false,
        Some(e) => e.value.parse().map_err(|_| bad(e, "allow_gamma_override", "expected true or false"))?,
    };
    Ok(RunConfig {
        topology,
        matrix,
        objectives,
        algorithm,
        compressor,
        gamma: opt_float("gamma", DEFAULT_GAMMA)?,
        allow_gamma_override,
        schedule: StepSchedule::diminishing(opt_float("alpha0", DEFAULT_ALPHA0)?, opt_float("eta", DEFAULT_ETA)?),
        dim,
        iters: get("iters").map(|e| integer(e, "iters")).transpose()?.unwrap_or(DEFAULT_ITERS),
        trials: get("trials").map(|e| integer(e, "trials")).transpose()?.unwrap_or(DEFAULT_TRIALS),
        master_seed: get("seed").map(|e| integer(e, "seed")).transpose()?.unwrap_or(DEFAULT_SEED),
    })
}

fn list(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(", ")
}

/// Canonical text of a configuration with every default spelled out.
/// Parsing the result gives back the same configuration.
pub struct Canonical<'a>(pub &'a RunConfig);

impl fmt::Display for Canonical<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.0;
        let mut s = String::new();
        let (topo, n) = match &c.topology {
            Topology::Ring(n) => ("ring", n),
            Topology::Star(n) => ("star", n),
            Topology::Path(n) => ("path", n),
            Topology::Edges { n, .. } => ("edges", n),
        };
        writeln!(s, "topology = {topo}")?;
        writeln!(s, "n = {n}")?;
        if let Topology::Edges { edges, .. } = &c.topology {
            let e: Vec<String> = edges.iter().map(|(a, b)| format!("{a}-{b}")).collect();
            writeln!(s, "edges = {}", e.join(", "))?;
        }
        match c.algorithm {
            Algorithm::DgdT(t) => {
                writeln!(s, "algorithm = dgd_t")?;
                writeln!(s, "t = {t}")?;
            }
            a => writeln!(s, "algorithm = {}", a.name())?,
        }
        match &c.compressor {
            Compressor::Identity => writeln!(s, "compressor = identity")?,
            Compressor::StochasticRound => writeln!(s, "compressor = round")?,
            Compressor::Grid { spacing } => {
                writeln!(s, "compressor = grid")?;
                writeln!(s, "spacing = {spacing}")?;
            }
            Compressor::Sparsifier(t) => {
                writeln!(s, "compressor = sparsify")?;
                writeln!(s, "levels = {}", list(t.levels()))?;
            }
            // Test-only operators have no config spelling.
            #[allow(unreachable_patterns)]
            _ => return Err(fmt::Error),
        }
        writeln!(s, "gamma = {}", c.gamma)?;
        writeln!(s, "allow_gamma_override = {}", c.allow_gamma_override)?;
        writeln!(s, "alpha0 = {}", c.schedule.alpha0)?;
        writeln!(s, "eta = {}", c.schedule.eta)?;
        writeln!(s, "dim = {}", c.dim)?;
        writeln!(s, "iters = {}", c.iters)?;
        writeln!(s, "trials = {}", c.trials)?;
        writeln!(s, "seed = {}", c.master_seed)?;
        match &c.objectives {
            ObjectiveSpec::Random { a, b } => {
                writeln!(s, "random_a = {}, {}", a.0, a.1)?;
                writeln!(s, "random_b = {}, {}", b.0, b.1)?;
            }
            ObjectiveSpec::Fixed(qs) => {
                for q in qs {
                    writeln!(s, "\n[objective]\na = {}\nb = {}", q.a, list(&q.b))?;
                }
            }
        }
        if let MatrixSpec::Explicit(rows) = &c.matrix {
            writeln!(s, "\n[matrix]")?;
            for r in rows {
                writeln!(s, "row = {}", list(r))?;
            }
        }
        f.write_str(&s)
    }
}
