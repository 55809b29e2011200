//! Experiment configuration, seeded randomness and the trial loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::algorithms::{
    adc_round, dgd_round, dgd_t_round, initial_states, naive_compressed_round, NodeState, RoundError, RoundOutput,
    StepSchedule,
};
use crate::compression::Compressor;
use crate::graph::{ConsensusMatrix, Graph, GraphError, MatrixViolation};
use crate::metrics::{self, RoundMetrics};
use crate::objectives::{lipschitz_bound, Objective, Quadratic};

/// Stream index for compression draws.
pub const COMPRESSION_STREAM: u64 = 0;
/// Stream index for random problem instances.
pub const PROBLEM_STREAM: u64 = 1;

/// Counter-based generator for one `(trial, node, round)` cell.
///
/// The key is the little-endian concatenation of the four counters, so a
/// draw never depends on the order in which cells are visited.
pub fn derive_stream(master_seed: u64, trial: u64, node: u64, round: u64) -> ChaCha8Rng {
    derive_purpose_stream(master_seed, trial, node, round, COMPRESSION_STREAM)
}

pub fn derive_purpose_stream(master_seed: u64, trial: u64, node: u64, round: u64, purpose: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (chunk, v) in key.chunks_exact_mut(8).zip([master_seed, trial, node, round]) {
        chunk.copy_from_slice(&v.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(purpose);
    rng
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Matrix(#[from] MatrixViolation),
    #[error("invalid {field}: {message}")]
    Invalid { field: &'static str, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Topology {
    Ring(usize),
    Star(usize),
    Path(usize),
    Edges { n: usize, edges: Vec<(usize, usize)> },
}

impl Topology {
    pub fn build(&self) -> Result<Graph, GraphError> {
        match self {
            Topology::Ring(n) => Graph::ring(*n),
            Topology::Star(n) => Graph::star(*n),
            Topology::Path(n) => Graph::path(*n),
            Topology::Edges { n, edges } => Graph::new(*n, edges),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Topology::Ring(n) | Topology::Star(n) | Topology::Path(n) | Topology::Edges { n, .. } => *n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatrixSpec {
    Metropolis,
    Explicit(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveSpec {
    /// One quadratic per node, in node order.
    Fixed(Vec<Quadratic>),
    /// Per-trial draws `a ~ U[a.0, a.1]`, `b ~ U[b.0, b.1]^P`.
    Random { a: (f64, f64), b: (f64, f64) },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    Dgd,
    NaiveCompressed,
    Adc,
    /// `t` consensus steps per gradient step.
    DgdT(usize),
}

impl Algorithm {
    pub fn name(&self) -> String {
        match self {
            Algorithm::Dgd => "dgd".into(),
            Algorithm::NaiveCompressed => "naive".into(),
            Algorithm::Adc => "adc".into(),
            Algorithm::DgdT(t) => format!("dgd_t{t}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub topology: Topology,
    pub matrix: MatrixSpec,
    pub objectives: ObjectiveSpec,
    pub algorithm: Algorithm,
    pub compressor: Compressor,
    pub gamma: f64,
    /// Permits `0 < γ <= 1/2`, outside the convergence guarantee.
    pub allow_gamma_override: bool,
    pub schedule: StepSchedule,
    pub dim: usize,
    pub iters: u64,
    pub trials: u64,
    pub master_seed: u64,
}

impl RunConfig {
    /// Checks the configuration and builds the consensus matrix.
    pub fn validate(&self) -> Result<Experiment, EngineError> {
        let invalid = |field: &'static str, message: String| Err(EngineError::Invalid { field, message });
        if self.dim == 0 {
            return invalid("dim", "dimension must be at least 1".into());
        }
        if self.iters == 0 {
            return invalid("iters", "need at least one iteration".into());
        }
        if self.trials == 0 {
            return invalid("trials", "need at least one trial".into());
        }
        let s = self.schedule;
        if !(s.alpha0.is_finite() && s.alpha0 > 0.0) {
            return invalid("alpha0", format!("step size must be positive, got {}", s.alpha0));
        }
        if !(s.eta.is_finite() && s.eta >= 0.0) {
            return invalid("eta", format!("decay exponent must be nonnegative, got {}", s.eta));
        }
        if let Algorithm::DgdT(0) = self.algorithm {
            return invalid("t", "consensus steps must be at least 1".into());
        }
        let graph = self.topology.build()?;
        let w = match &self.matrix {
            MatrixSpec::Metropolis => ConsensusMatrix::metropolis(&graph)?,
            MatrixSpec::Explicit(rows) => ConsensusMatrix::explicit(rows, &graph)?,
        };
        let lipschitz = match &self.objectives {
            ObjectiveSpec::Fixed(objs) => {
                if objs.len() != graph.n() {
                    return invalid("objective", format!("{} objectives for {} nodes", objs.len(), graph.n()));
                }
                if let Some(q) = objs.iter().find(|q| q.dim() != self.dim) {
                    return invalid("objective", format!("dimension {} differs from dim = {}", q.dim(), self.dim));
                }
                lipschitz_bound(objs)
            }
            ObjectiveSpec::Random { a, b } => {
                if !(a.0 <= a.1 && b.0 <= b.1) {
                    return invalid("random_a", format!("empty sampling range a = {a:?}, b = {b:?}"));
                }
                2.0 * a.0.abs().max(a.1.abs())
            }
        };
        if self.algorithm == Algorithm::Adc {
            if !(self.gamma > 0.0) {
                return invalid("gamma", format!("must be positive, got {}", self.gamma));
            }
            if self.gamma <= 0.5 && !self.allow_gamma_override {
                return invalid(
                    "gamma",
                    format!("{} is outside (1/2, inf); set allow_gamma_override to run it anyway", self.gamma),
                );
            }
            if s.eta == 0.0 && !metrics::step_size_admissibility(s.alpha0, &w, lipschitz) {
                return invalid(
                    "alpha0",
                    format!(
                        "constant step {} is not below (1 + lambda_min) / L = {}",
                        s.alpha0,
                        (1.0 + w.lambda_min()) / lipschitz
                    ),
                );
            }
        }
        Ok(Experiment { config: self.clone(), w })
    }
}

/// A validated configuration with its consensus matrix.
#[derive(Debug, Clone)]
pub struct Experiment {
    config: RunConfig,
    w: ConsensusMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Completed,
    Diverged { k: u64, node: usize },
    Overflow { k: u64, node: usize, magnitude: f64 },
    Failed { k: u64, reason: String },
}

impl Termination {
    pub fn is_completed(&self) -> bool {
        matches!(self, Termination::Completed)
    }

    pub fn label(&self) -> String {
        match self {
            Termination::Completed => "completed".into(),
            Termination::Diverged { k, node } => format!("diverged@{k}:node{node}"),
            Termination::Overflow { k, node, magnitude } => format!("overflow@{k}:node{node}:{magnitude:e}"),
            Termination::Failed { k, reason } => format!("failed@{k}:{reason}"),
        }
    }
}

impl From<RoundError> for Termination {
    fn from(e: RoundError) -> Self {
        match e {
            RoundError::Diverged { round, node } => Termination::Diverged { k: round, node },
            RoundError::Overflow { round, node, magnitude, .. } => Termination::Overflow { k: round, node, magnitude },
            RoundError::Compression { round, .. } => Termination::Failed { k: round, reason: e.to_string() },
            other => Termination::Failed { k: 0, reason: other.to_string() },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialTrace {
    pub trial: u64,
    /// Row `k − 1` holds the metrics after round `k`.
    pub metrics: Vec<RoundMetrics>,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub trials: Vec<TrialTrace>,
    /// Per-round mean across trials, cut to the shortest trial.
    pub aggregate: Vec<RoundMetrics>,
    /// Set when some trial stopped early and the aggregate was cut short.
    pub truncated: bool,
}

impl Experiment {
    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn matrix(&self) -> &ConsensusMatrix {
        &self.w
    }

    /// Objectives for `trial`; random families are drawn from the problem
    /// stream so every algorithm sees the same instance for a given trial.
    pub fn objectives(&self, trial: u64) -> Vec<Quadratic> {
        let c = &self.config;
        match &c.objectives {
            ObjectiveSpec::Fixed(objs) => objs.clone(),
            ObjectiveSpec::Random { a, b } => (0..self.w.n())
                .map(|i| {
                    let mut rng = derive_purpose_stream(c.master_seed, trial, i as u64, 0, PROBLEM_STREAM);
                    let ai = uniform(&mut rng, *a);
                    let bi = (0..c.dim).map(|_| uniform(&mut rng, *b)).collect();
                    Quadratic::new(ai, bi)
                })
                .collect(),
        }
    }

    pub fn simulation(&self, trial: u64) -> Simulation<'_> {
        let objs = self.objectives(trial);
        let alpha1 = self.config.schedule.at(1).expect("k = 1 is valid");
        let states = initial_states(&self.w, &objs, alpha1);
        Simulation { exp: self, trial, objs, states, k: 1, bytes_cum: 0, max_transmitted: 0.0 }
    }

    pub fn run_trial(&self, trial: u64) -> TrialTrace {
        let mut sim = self.simulation(trial);
        let mut rows = Vec::with_capacity(self.config.iters as usize);
        let mut termination = Termination::Completed;
        for _ in 0..self.config.iters {
            match sim.step() {
                Ok(m) => rows.push(m),
                Err(t) => {
                    termination = t;
                    break;
                }
            }
        }
        TrialTrace { trial, metrics: rows, termination }
    }

    /// All trials in parallel, then the per-round mean.
    pub fn run_all(&self) -> Trace {
        let trials: Vec<TrialTrace> = (0..self.config.trials).into_par_iter().map(|t| self.run_trial(t)).collect();
        let len = trials.iter().map(|t| t.metrics.len()).min().unwrap_or(0);
        let truncated = trials.iter().any(|t| t.metrics.len() != self.config.iters as usize);
        let n = trials.len() as f64;
        let aggregate = (0..len)
            .map(|r| {
                let rows = trials.iter().map(|t| &t.metrics[r]);
                let mean = |f: fn(&RoundMetrics) -> f64| rows.clone().map(f).sum::<f64>() / n;
                RoundMetrics {
                    k: trials[0].metrics[r].k,
                    grad_norm_sq: mean(|m| m.grad_norm_sq),
                    consensus_err: mean(|m| m.consensus_err),
                    objective: mean(|m| m.objective),
                    lyapunov: mean(|m| m.lyapunov),
                    bytes_cum: (rows.clone().map(|m| m.bytes_cum as f64).sum::<f64>() / n).round() as u64,
                    max_transmitted: mean(|m| m.max_transmitted),
                }
            })
            .collect();
        Trace { trials, aggregate, truncated }
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// A single trial advanced one round at a time.
pub struct Simulation<'a> {
    exp: &'a Experiment,
    trial: u64,
    objs: Vec<Quadratic>,
    states: Vec<NodeState>,
    /// Index of the next round to run.
    k: u64,
    bytes_cum: u64,
    max_transmitted: f64,
}

impl Simulation<'_> {
    pub fn states(&self) -> &[NodeState] {
        &self.states
    }

    pub fn iterates(&self) -> Vec<Vec<f64>> {
        self.states.iter().map(|s| s.x.clone()).collect()
    }

    pub fn objectives(&self) -> &[Quadratic] {
        &self.objs
    }

    pub fn matrix(&self) -> &ConsensusMatrix {
        &self.exp.w
    }

    pub fn next_round(&self) -> u64 {
        self.k
    }

    /// Runs round `k` and returns the metrics of the resulting iterate.
    pub fn step(&mut self) -> Result<RoundMetrics, Termination> {
        let c = &self.exp.config;
        let w = &self.exp.w;
        let k = self.k;
        let alpha = c.schedule.at(k).map_err(Termination::from)?;
        let (seed, trial) = (c.master_seed, self.trial);
        let streams = |i: usize| derive_stream(seed, trial, i as u64, k);
        let out: RoundOutput = match c.algorithm {
            Algorithm::Dgd => dgd_round(&self.states, w, &self.objs, k, alpha),
            Algorithm::DgdT(t) => dgd_t_round(&self.states, w, &self.objs, k, alpha, t),
            Algorithm::NaiveCompressed => {
                naive_compressed_round(&self.states, w, &self.objs, k, alpha, &c.compressor, streams)
            }
            Algorithm::Adc => adc_round(&self.states, w, &self.objs, k, alpha, c.gamma, &c.compressor, streams),
        }
        .map_err(Termination::from)?;
        self.states = out.states;
        self.bytes_cum += out.bytes;
        self.max_transmitted = self.max_transmitted.max(out.max_transmitted);
        self.k += 1;
        let xs = self.iterates();
        Ok(RoundMetrics {
            k,
            grad_norm_sq: metrics::grad_norm_sq(&self.objs, &xs),
            consensus_err: metrics::consensus_error(&xs),
            objective: metrics::objective(&self.objs, &xs),
            lyapunov: metrics::lyapunov(&xs, w, &self.objs, alpha),
            bytes_cum: self.bytes_cum,
            max_transmitted: self.max_transmitted,
        })
    }
}

/// Validates `config` and runs one trial.
pub fn run(config: &RunConfig, trial: u64) -> Result<TrialTrace, EngineError> {
    Ok(config.validate()?.run_trial(trial))
}

/// Validates `config` and runs all of its trials.
pub fn run_trials(config: &RunConfig) -> Result<Trace, EngineError> {
    Ok(config.validate()?.run_all())
}
