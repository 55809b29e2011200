//! Named experiment bundles.

use adcdgd_core::{Algorithm, Compressor, MatrixSpec, ObjectiveSpec, Quadratic, RunConfig, StepSchedule, Topology};
use thiserror::Error;

pub const PRESET_NAMES: [&str; 4] = ["counterexample2node", "compression4node", "gammasweep", "circlescaling"];

/// Seed shared by every run of a preset, so algorithms compared within a
/// preset see the same problem draws.
pub const PRESET_SEED: u64 = 20_190_624;

/// Constant step for the four-node problem. Larger steps make the
/// Lyapunov Hessian indefinite because `f₁` is concave.
pub const FOUR_NODE_ALPHA: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("unknown preset `{0}`; available: counterexample2node, compression4node, gammasweep, circlescaling")]
pub struct UnknownPreset(pub String);

#[derive(Debug, Clone, PartialEq)]
pub struct PresetRun {
    /// File-name friendly label, unique within the preset.
    pub label: String,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    /// What the runs are expected to show.
    pub note: &'static str,
    pub runs: Vec<PresetRun>,
}

impl Preset {
    pub fn run(&self, label: &str) -> Option<&RunConfig> {
        self.runs.iter().find(|r| r.label == label).map(|r| &r.config)
    }

    /// Overrides the trial count of every run.
    pub fn with_trials(mut self, trials: u64) -> Self {
        self.runs.iter_mut().for_each(|r| r.config.trials = trials);
        self
    }
}

/// `f₁ = −4x²`, `f₂ = 2(x−0.2)²`, `f₃ = 2(x+0.3)²`, `f₄ = 5(x−0.1)²` on a
/// star with node 0 as the hub. The sum has its minimizer at 0.06.
pub fn four_node_objectives() -> Vec<Quadratic> {
    vec![
        Quadratic::scalar(-4.0, 0.0),
        Quadratic::scalar(2.0, 0.2),
        Quadratic::scalar(2.0, -0.3),
        Quadratic::scalar(5.0, 0.1),
    ]
}

/// `f₁ = 4(x−2)²`, `f₂ = 2(x+3)²` on two connected nodes.
pub fn two_node_objectives() -> Vec<Quadratic> {
    vec![Quadratic::scalar(4.0, 2.0), Quadratic::scalar(2.0, -3.0)]
}

fn schedule_label(s: &StepSchedule) -> &'static str {
    if s.is_constant() {
        "constant"
    } else {
        "diminishing"
    }
}

fn base(topology: Topology, objectives: ObjectiveSpec, algorithm: Algorithm, schedule: StepSchedule) -> RunConfig {
    RunConfig {
        topology,
        matrix: MatrixSpec::Metropolis,
        objectives,
        algorithm,
        compressor: Compressor::StochasticRound,
        gamma: 1.0,
        allow_gamma_override: false,
        schedule,
        dim: 1,
        iters: 2000,
        trials: 1,
        master_seed: PRESET_SEED,
    }
}

pub fn counterexample2node() -> Preset {
    let mut runs = Vec::new();
    for schedule in [StepSchedule::constant(0.001), StepSchedule::diminishing(0.001, 0.5)] {
        for algorithm in [Algorithm::NaiveCompressed, Algorithm::Adc] {
            let mut c = base(Topology::Path(2), ObjectiveSpec::Fixed(two_node_objectives()), algorithm, schedule);
            c.iters = 1000;
            c.trials = 20;
            runs.push(PresetRun { label: format!("{}_{}", algorithm.name(), schedule_label(&schedule)), config: c });
        }
    }
    Preset {
        name: "counterexample2node",
        note: "naive rounding of the iterates stalls far from the minimizer 1/3; the amplified differential scheme does not",
        runs,
    }
}

pub fn compression4node() -> Preset {
    let mut runs = Vec::new();
    for schedule in [StepSchedule::constant(FOUR_NODE_ALPHA), StepSchedule::diminishing(FOUR_NODE_ALPHA, 0.5)] {
        for algorithm in [Algorithm::Dgd, Algorithm::DgdT(3), Algorithm::DgdT(5), Algorithm::Adc] {
            let c = base(Topology::Star(4), ObjectiveSpec::Fixed(four_node_objectives()), algorithm, schedule);
            runs.push(PresetRun { label: format!("{}_{}", algorithm.name(), schedule_label(&schedule)), config: c });
        }
    }
    Preset {
        name: "compression4node",
        note:
            "compressed runs track exact mixing per iteration at a quarter of the bytes; extra mixing steps cost bytes",
        runs,
    }
}

pub fn gammasweep() -> Preset {
    let runs = [0.6, 0.8, 1.0, 1.2]
        .into_iter()
        .map(|gamma| {
            let mut c = base(
                Topology::Star(4),
                ObjectiveSpec::Fixed(four_node_objectives()),
                Algorithm::Adc,
                StepSchedule::constant(FOUR_NODE_ALPHA),
            );
            c.gamma = gamma;
            c.trials = 100;
            PresetRun { label: format!("adc_gamma{gamma}"), config: c }
        })
        .collect();
    Preset {
        name: "gammasweep",
        note: "larger gamma converges faster up to about 1, beyond which transmitted values grow with little gain",
        runs,
    }
}

pub fn circlescaling() -> Preset {
    let runs = [3usize, 5, 10, 20]
        .into_iter()
        .map(|n| {
            let mut c = base(
                Topology::Ring(n),
                ObjectiveSpec::Random { a: (0.0, 10.0), b: (0.0, 1.0) },
                Algorithm::Adc,
                StepSchedule::diminishing(FOUR_NODE_ALPHA, 0.5),
            );
            c.trials = 100;
            PresetRun { label: format!("adc_ring{n}"), config: c }
        })
        .collect();
    Preset { name: "circlescaling", note: "larger rings converge more slowly but all converge", runs }
}

pub fn preset(name: &str) -> Result<Preset, UnknownPreset> {
    match name {
        "counterexample2node" => Ok(counterexample2node()),
        "compression4node" => Ok(compression4node()),
        "gammasweep" => Ok(gammasweep()),
        "circlescaling" => Ok(circlescaling()),
        other => Err(UnknownPreset(other.to_string())),
    }
}
