//! Shared fixtures for the benchmarks.

use adcdgd_core::{
    Algorithm, Compressor, ConsensusMatrix, Graph, MatrixSpec, ObjectiveSpec, Quadratic, RunConfig, StepSchedule,
    Topology,
};

/// Ring of `n` scalar quadratics with spread-out minimizers.
pub fn ring_problem(n: usize) -> (ConsensusMatrix, Vec<Quadratic>) {
    let w = ConsensusMatrix::metropolis(&Graph::ring(n).expect("ring")).expect("metropolis");
    let objs = (0..n).map(|i| Quadratic::scalar(1.0 + (i % 3) as f64, i as f64 / n as f64 - 0.5)).collect();
    (w, objs)
}

pub fn ring_config(n: usize, algorithm: Algorithm, iters: u64) -> RunConfig {
    RunConfig {
        topology: Topology::Ring(n),
        matrix: MatrixSpec::Metropolis,
        objectives: ObjectiveSpec::Random { a: (0.0, 10.0), b: (0.0, 1.0) },
        algorithm,
        compressor: Compressor::StochasticRound,
        gamma: 1.0,
        allow_gamma_override: false,
        schedule: StepSchedule::diminishing(0.02, 0.5),
        dim: 1,
        iters,
        trials: 1,
        master_seed: 7,
    }
}
