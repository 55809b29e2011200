//! CSV emission.
//!
//! Per-trial files have one row per `(trial, k)` with columns
//! [`TRIAL_HEADER`]. Aggregate files have one row per `k` holding the
//! across-trial means, with columns [`AGGREGATE_HEADER`]. Floats are written
//! in shortest round-trip form so reruns are byte-identical.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use adcdgd_core::{RunConfig, Trace};

pub const TRIAL_HEADER: [&str; 13] = [
    "trial",
    "k",
    "algorithm",
    "gamma",
    "eta",
    "alpha0",
    "grad_norm_sq",
    "consensus_err",
    "objective",
    "lyapunov",
    "bytes_cum",
    "max_transmitted",
    "termination",
];

pub const AGGREGATE_HEADER: [&str; 13] = [
    "k",
    "algorithm",
    "gamma",
    "eta",
    "alpha0",
    "trials",
    "grad_norm_sq",
    "consensus_err",
    "objective",
    "lyapunov",
    "bytes_cum",
    "max_transmitted",
    "truncated",
];

fn into_io(e: csv::Error) -> io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => io::Error::other(format!("{other:?}")),
    }
}

pub fn write_trials<W: Write>(trace: &Trace, config: &RunConfig, out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRIAL_HEADER).map_err(into_io)?;
    let algorithm = config.algorithm.name();
    let (gamma, eta, alpha0) =
        (config.gamma.to_string(), config.schedule.eta.to_string(), config.schedule.alpha0.to_string());
    for t in &trace.trials {
        let termination = t.termination.label();
        for m in &t.metrics {
            w.write_record([
                t.trial.to_string().as_str(),
                &m.k.to_string(),
                &algorithm,
                &gamma,
                &eta,
                &alpha0,
                &m.grad_norm_sq.to_string(),
                &m.consensus_err.to_string(),
                &m.objective.to_string(),
                &m.lyapunov.to_string(),
                &m.bytes_cum.to_string(),
                &m.max_transmitted.to_string(),
                &termination,
            ])
            .map_err(into_io)?;
        }
    }
    w.flush()
}

pub fn write_aggregate<W: Write>(trace: &Trace, config: &RunConfig, out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AGGREGATE_HEADER).map_err(into_io)?;
    let algorithm = config.algorithm.name();
    let (gamma, eta, alpha0) =
        (config.gamma.to_string(), config.schedule.eta.to_string(), config.schedule.alpha0.to_string());
    let trials = trace.trials.len().to_string();
    let truncated = trace.truncated.to_string();
    for m in &trace.aggregate {
        w.write_record([
            m.k.to_string().as_str(),
            &algorithm,
            &gamma,
            &eta,
            &alpha0,
            &trials,
            &m.grad_norm_sq.to_string(),
            &m.consensus_err.to_string(),
            &m.objective.to_string(),
            &m.lyapunov.to_string(),
            &m.bytes_cum.to_string(),
            &m.max_transmitted.to_string(),
            &truncated,
        ])
        .map_err(into_io)?;
    }
    w.flush()
}

/// Writes the per-trial file, or the aggregate file when `aggregate` is set.
pub fn emit_csv(trace: &Trace, config: &RunConfig, path: &Path, aggregate: bool) -> io::Result<()> {
    let file = io::BufWriter::new(File::create(path)?);
    if aggregate {
        write_aggregate(trace, config, file)
    } else {
        write_trials(trace, config, file)
    }
}
