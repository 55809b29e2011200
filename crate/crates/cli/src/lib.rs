//! Command-line front end: configuration files, presets, CSV output and
//! property checks.

pub mod checks;
pub mod config;
pub mod csv_out;
pub mod presets;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use adcdgd_core::{engine, Trace};

pub use config::{parse_config, parse_str, Canonical, ConfigError};
pub use presets::{preset, Preset, PresetRun};

/// Files written for one preset run.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetOutput {
    pub label: String,
    pub trials_csv: PathBuf,
    pub aggregate_csv: PathBuf,
    pub config_file: PathBuf,
    pub completed: bool,
}

/// Runs every configuration of `preset` and writes, per run, the canonical
/// config, the per-trial CSV and the aggregate CSV into `dir`.
pub fn write_preset(preset: &Preset, dir: &Path) -> io::Result<Vec<PresetOutput>> {
    fs::create_dir_all(dir)?;
    preset
        .runs
        .iter()
        .map(|run| {
            let trace: Trace = engine::run_trials(&run.config).map_err(|e| io::Error::other(e.to_string()))?;
            let stem = format!("{}_{}", preset.name, run.label);
            let out = PresetOutput {
                label: run.label.clone(),
                trials_csv: dir.join(format!("{stem}.csv")),
                aggregate_csv: dir.join(format!("{stem}_aggregate.csv")),
                config_file: dir.join(format!("{stem}.cfg")),
                completed: trace.trials.iter().all(|t| t.termination.is_completed()),
            };
            fs::write(&out.config_file, Canonical(&run.config).to_string())?;
            csv_out::emit_csv(&trace, &run.config, &out.trials_csv, false)?;
            csv_out::emit_csv(&trace, &run.config, &out.aggregate_csv, true)?;
            Ok(out)
        })
        .collect()
}
