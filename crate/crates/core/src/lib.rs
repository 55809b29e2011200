//! Decentralized gradient descent over a network, with exact, naively
//! compressed and amplified-differential compressed communication.
//!
//! Nodes hold local objectives `f_i` and cooperate to find a stationary point
//! of `Σ f_i` by mixing iterates with a consensus matrix `W` and taking
//! local gradient steps. The compressed variant transmits a randomly
//! quantized, amplified difference each round.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod compression;
pub mod engine;
pub mod graph;
pub mod metrics;
pub mod objectives;

pub use algorithms::{
    adc_round, dgd_round, dgd_t_round, initial_states, naive_compressed_round, step_size, NodeState, RoundError,
    RoundOutput, StepSchedule,
};
pub use compression::{Codeword, CompressionError, Compressor, LevelTable, Payload, Scale};
pub use engine::{
    derive_stream, run, run_trials, Algorithm, EngineError, Experiment, MatrixSpec, ObjectiveSpec, RunConfig,
    Simulation, Termination, Topology, Trace, TrialTrace,
};
pub use graph::{ConsensusMatrix, Graph, GraphError, MatrixViolation};
pub use metrics::RoundMetrics;
pub use objectives::{Objective, ObjectiveError, Quadratic};
