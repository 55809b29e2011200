//! One-round update kernels.
//!
//! Every kernel is synchronous. All messages for round `k` are produced from
//! the round-`k` states before any state is updated. Mixing sums run over the
//! positive entries of each row of `W`, including the diagonal, in ascending
//! column order. The identity compressor therefore reproduces the
//! uncompressed kernels bit for bit.

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::compression::{CompressionError, Compressor, Payload, FULL_BYTES_PER_COORD};
use crate::graph::ConsensusMatrix;
use crate::objectives::Objective;

/// Iterates whose sup-norm exceeds this are treated as diverged.
pub const DIVERGENCE_BOUND: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RoundError {
    #[error("round index must be >= 1")]
    ZeroRound,
    #[error("iterate diverged at round {round} on node {node}")]
    Diverged { round: u64, node: usize },
    #[error(
        "codeword overflow at round {round} on node {node}: transmitted magnitude {magnitude}; \
         reduce the amplifying exponent"
    )]
    Overflow { round: u64, node: usize, magnitude: f64, source: CompressionError },
    #[error("compression failed at round {round} on node {node}: {source}")]
    Compression { round: u64, node: usize, source: CompressionError },
    #[error("receiver memory for node {sender} held by node {holder} disagrees with the sender")]
    Inconsistent { sender: usize, holder: usize },
    #[error("need at least one consensus step, got t = {0}")]
    BadConsensusSteps(usize),
}

/// Step sizes `α_k = alpha0 / k^eta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    pub alpha0: f64,
    pub eta: f64,
}

impl StepSchedule {
    pub fn constant(alpha: f64) -> Self {
        Self { alpha0: alpha, eta: 0.0 }
    }

    pub fn diminishing(alpha0: f64, eta: f64) -> Self {
        Self { alpha0, eta }
    }

    pub fn is_constant(&self) -> bool {
        self.eta == 0.0
    }

    pub fn at(&self, k: u64) -> Result<f64, RoundError> {
        step_size(self, k)
    }
}

pub fn step_size(s: &StepSchedule, k: u64) -> Result<f64, RoundError> {
    if k == 0 {
        return Err(RoundError::ZeroRound);
    }
    if s.eta == 0.0 {
        return Ok(s.alpha0);
    }
    Ok(s.alpha0 / (k as f64).powf(s.eta))
}

/// Local state of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    /// Current iterate `x_{i,k}`.
    pub x: Vec<f64>,
    /// The imprecise value `x̃_{i,k}` that every receiver holds for this node.
    pub x_tilde_self: Vec<f64>,
    /// This node's copies `x̃_{j,k}` of each neighbor.
    pub x_tilde_neighbors: BTreeMap<usize, Vec<f64>>,
    /// Differential `y_{i,k}`.
    pub y: Vec<f64>,
}

/// Result of one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutput {
    pub states: Vec<NodeState>,
    /// One broadcast payload per sender; empty for uncompressed algorithms.
    pub messages: Vec<Payload>,
    /// Total payload bytes, counting each receiving neighbor once.
    pub bytes: u64,
    /// Largest magnitude placed on the wire this round.
    pub max_transmitted: f64,
}

/// Shared initialization: `x̃_{i,0} = 0`, `x_{i,1} = y_{i,1} = −α₁∇f_i(0)`.
pub fn initial_states<O: Objective>(w: &ConsensusMatrix, objs: &[O], alpha1: f64) -> Vec<NodeState> {
    let g = w.graph();
    objs.iter()
        .enumerate()
        .map(|(i, o)| {
            let p = o.dim();
            let zero = vec![0.0; p];
            let x: Vec<f64> = o.gradient(&zero).iter().map(|gi| -alpha1 * gi).collect();
            NodeState {
                y: x.clone(),
                x,
                x_tilde_self: zero.clone(),
                x_tilde_neighbors: g.neighbors(i).iter().map(|&j| (j, zero.clone())).collect(),
            }
        })
        .collect()
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `Σ_j W[i][j] v_j` with `v_j` supplied by `value(j)`.
fn mix_row<'a>(w: &ConsensusMatrix, i: usize, p: usize, value: impl Fn(usize) -> &'a [f64]) -> Vec<f64> {
    let mut acc = vec![0.0; p];
    for &(j, wij) in w.row_support(i) {
        for (a, v) in acc.iter_mut().zip(value(j)) {
            *a += wij * v;
        }
    }
    acc
}

/// `x_i ← mixed_i − α ∇f_i(x_i)`, with divergence detection.
fn gradient_step<O: Objective>(
    mixed: Vec<Vec<f64>>,
    states: &[NodeState],
    objs: &[O],
    alpha: f64,
    round: u64,
) -> Result<Vec<Vec<f64>>, RoundError> {
    mixed
        .into_iter()
        .enumerate()
        .map(|(i, mut m)| {
            let g = objs[i].gradient(&states[i].x);
            for (mi, gi) in m.iter_mut().zip(&g) {
                *mi -= alpha * gi;
            }
            if m.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND) {
                return Err(RoundError::Diverged { round, node: i });
            }
            Ok(m)
        })
        .collect()
}

fn with_iterates(states: &[NodeState], xs: Vec<Vec<f64>>) -> Vec<NodeState> {
    states.iter().zip(xs).map(|(s, x)| NodeState { x, ..s.clone() }).collect()
}

fn full_bytes(w: &ConsensusMatrix, p: usize) -> u64 {
    (w.graph().directed_edge_count() * FULL_BYTES_PER_COORD * p) as u64
}

/// Plain DGD: `x_{i,k+1} = Σ_j W_ij x_{j,k} − α_k ∇f_i(x_{i,k})`.
pub fn dgd_round<O: Objective>(
    states: &[NodeState],
    w: &ConsensusMatrix,
    objs: &[O],
    k: u64,
    alpha: f64,
) -> Result<RoundOutput, RoundError> {
    dgd_t_round(states, w, objs, k, alpha, 1)
}

/// DGD^t: `t` mixing steps, each a full-precision exchange, then one
/// gradient step at the pre-mixing iterate.
pub fn dgd_t_round<O: Objective>(
    states: &[NodeState],
    w: &ConsensusMatrix,
    objs: &[O],
    k: u64,
    alpha: f64,
    t: usize,
) -> Result<RoundOutput, RoundError> {
    if k == 0 {
        return Err(RoundError::ZeroRound);
    }
    if t == 0 {
        return Err(RoundError::BadConsensusSteps(t));
    }
    let p = states[0].x.len();
    let mut z: Vec<Vec<f64>> = states.iter().map(|s| s.x.clone()).collect();
    let mut max_transmitted: f64 = 0.0;
    for _ in 0..t {
        max_transmitted = z.iter().fold(max_transmitted, |m, v| m.max(sup_norm(v)));
        z = (0..states.len()).map(|i| mix_row(w, i, p, |j| &z[j])).collect();
    }
    let xs = gradient_step(z, states, objs, alpha, k)?;
    Ok(RoundOutput {
        states: with_iterates(states, xs),
        messages: Vec::new(),
        bytes: t as u64 * full_bytes(w, p),
        max_transmitted,
    })
}

/// DGD with each sender's iterate compressed once and the compressed value
/// used directly in every receiver's consensus sum, its own included.
pub fn naive_compressed_round<O, R, F>(
    states: &[NodeState],
    w: &ConsensusMatrix,
    objs: &[O],
    k: u64,
    alpha: f64,
    compressor: &Compressor,
    mut streams: F,
) -> Result<RoundOutput, RoundError>
where
    O: Objective,
    R: Rng,
    F: FnMut(usize) -> R,
{
    if k == 0 {
        return Err(RoundError::ZeroRound);
    }
    let p = states[0].x.len();
    let mut messages = Vec::with_capacity(states.len());
    let mut decoded = Vec::with_capacity(states.len());
    let mut max_transmitted: f64 = 0.0;
    for (i, s) in states.iter().enumerate() {
        let magnitude = sup_norm(&s.x);
        max_transmitted = max_transmitted.max(magnitude);
        let payload = compressor.compress(&s.x, &mut streams(i)).map_err(|e| compression_error(e, k, i, magnitude))?;
        decoded.push(compressor.decode(&payload).map_err(|source| RoundError::Compression {
            round: k,
            node: i,
            source,
        })?);
        messages.push(payload);
    }
    let mixed = (0..states.len()).map(|i| mix_row(w, i, p, |j| &decoded[j])).collect();
    let xs = gradient_step(mixed, states, objs, alpha, k)?;
    let bytes = broadcast_bytes(w, &messages);
    Ok(RoundOutput { states: with_iterates(states, xs), messages, bytes, max_transmitted })
}

fn compression_error(source: CompressionError, round: u64, node: usize, magnitude: f64) -> RoundError {
    match source {
        CompressionError::Overflow { .. } | CompressionError::OutOfRange { .. } => {
            RoundError::Overflow { round, node, magnitude, source }
        }
        source => RoundError::Compression { round, node, source },
    }
}

fn broadcast_bytes(w: &ConsensusMatrix, messages: &[Payload]) -> u64 {
    messages.iter().enumerate().map(|(i, m)| (m.byte_cost() * w.graph().degree(i)) as u64).sum()
}

/// Amplified-differential compressed DGD.
///
/// Node `i` broadcasts `d_i = C(k^γ y_i)`. Every holder of `x̃_i`, node `i`
/// included, applies `x̃_i ← x̃_i + d_i / k^γ`. Then
/// `x_{i,k+1} = Σ_j W_ij x̃_{j,k} − α_k ∇f_i(x_{i,k})` and
/// `y_{i,k+1} = x_{i,k+1} − x̃_{i,k}`.
///
/// A lossless compressor sends `x_i` itself and every holder sets
/// `x̃_i ← x_i`, which is the same update with zero compression error.
#[allow(clippy::too_many_arguments)]
pub fn adc_round<O, R, F>(
    states: &[NodeState],
    w: &ConsensusMatrix,
    objs: &[O],
    k: u64,
    alpha: f64,
    gamma: f64,
    compressor: &Compressor,
    mut streams: F,
) -> Result<RoundOutput, RoundError>
where
    O: Objective,
    R: Rng,
    F: FnMut(usize) -> R,
{
    if k == 0 {
        return Err(RoundError::ZeroRound);
    }
    let n = states.len();
    let p = states[0].x.len();
    let amp = (k as f64).powf(gamma);

    // Phase 1: every sender encodes from round-k state only.
    let mut messages = Vec::with_capacity(n);
    let mut increments: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);
    let mut max_transmitted: f64 = 0.0;
    for (i, s) in states.iter().enumerate() {
        if compressor.is_lossless() {
            max_transmitted = max_transmitted.max(sup_norm(&s.x));
            messages.push(Payload::Full(s.x.clone()));
            increments.push(None);
            continue;
        }
        let amplified: Vec<f64> = s.y.iter().map(|v| amp * v).collect();
        let magnitude = sup_norm(&amplified);
        max_transmitted = max_transmitted.max(magnitude);
        let payload =
            compressor.compress(&amplified, &mut streams(i)).map_err(|e| compression_error(e, k, i, magnitude))?;
        let d = compressor.decode(&payload).map_err(|source| RoundError::Compression { round: k, node: i, source })?;
        increments.push(Some(d.iter().map(|v| v / amp).collect()));
        messages.push(payload);
    }

    // Phase 2: every holder integrates what it received.
    let reconstruct = |sender: usize, held: &[f64]| -> Vec<f64> {
        match &increments[sender] {
            None => states[sender].x.clone(),
            Some(inc) => held.iter().zip(inc).map(|(h, d)| h + d).collect(),
        }
    };
    let mut next: Vec<NodeState> = states
        .iter()
        .enumerate()
        .map(|(i, s)| NodeState {
            x: s.x.clone(),
            x_tilde_self: reconstruct(i, &s.x_tilde_self),
            x_tilde_neighbors: s.x_tilde_neighbors.iter().map(|(&j, held)| (j, reconstruct(j, held))).collect(),
            y: s.y.clone(),
        })
        .collect();
    check_memories(&next)?;

    // Phase 3: consensus over held copies, then the local gradient step.
    let mixed = (0..n)
        .map(|i| {
            let s = &next[i];
            mix_row(w, i, p, |j| if j == i { &s.x_tilde_self } else { &s.x_tilde_neighbors[&j] })
        })
        .collect();
    let xs = gradient_step(mixed, states, objs, alpha, k)?;
    for (s, x) in next.iter_mut().zip(xs) {
        s.y = x.iter().zip(&s.x_tilde_self).map(|(a, b)| a - b).collect();
        s.x = x;
    }
    let bytes = broadcast_bytes(w, &messages);
    Ok(RoundOutput { states: next, messages, bytes, max_transmitted })
}

/// Every copy of `x̃_j` held by a neighbor equals node `j`'s self-model.
pub fn check_memories(states: &[NodeState]) -> Result<(), RoundError> {
    for (holder, s) in states.iter().enumerate() {
        for (&sender, held) in &s.x_tilde_neighbors {
            let own = &states[sender].x_tilde_self;
            if held.iter().zip(own).any(|(a, b)| a.to_bits() != b.to_bits()) {
                return Err(RoundError::Inconsistent { sender, holder });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::objectives::Quadratic;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pair() -> (ConsensusMatrix, Vec<Quadratic>) {
        let w = ConsensusMatrix::metropolis(&Graph::path(2).unwrap()).unwrap();
        (w, vec![Quadratic::scalar(4.0, 2.0), Quadratic::scalar(2.0, -3.0)])
    }

    fn star4() -> (ConsensusMatrix, Vec<Quadratic>) {
        let w = ConsensusMatrix::metropolis(&Graph::star(4).unwrap()).unwrap();
        let objs = vec![
            Quadratic::scalar(-4.0, 0.0),
            Quadratic::scalar(2.0, 0.2),
            Quadratic::scalar(2.0, -0.3),
            Quadratic::scalar(5.0, 0.1),
        ];
        (w, objs)
    }

    fn with_x(w: &ConsensusMatrix, objs: &[Quadratic], xs: &[f64]) -> Vec<NodeState> {
        let mut s = initial_states(w, objs, 0.0);
        for (si, &x) in s.iter_mut().zip(xs) {
            si.x = vec![x];
        }
        s
    }

    fn stream(seed: u64) -> impl FnMut(usize) -> ChaCha8Rng {
        move |i| ChaCha8Rng::seed_from_u64(seed * 1000 + i as u64)
    }

    #[test]
    fn schedule() {
        let c = StepSchedule::constant(0.001);
        assert_eq!(c.at(1).unwrap(), 0.001);
        assert_eq!(c.at(12345).unwrap(), 0.001);
        let d = StepSchedule::diminishing(0.3, 0.5);
        assert_eq!(d.at(4).unwrap(), 0.15);
        assert_eq!(step_size(&d, 0), Err(RoundError::ZeroRound));
        assert!(c.is_constant() && !d.is_constant());
    }

    #[test]
    fn dgd_two_node_step() {
        let (w, objs) = pair();
        let out = dgd_round(&with_x(&w, &objs, &[0.0, 0.0]), &w, &objs, 1, 0.001).unwrap();
        assert_abs_diff_eq!(out.states[0].x[0], 0.016, epsilon = 1e-15);
        assert_abs_diff_eq!(out.states[1].x[0], -0.012, epsilon = 1e-15);
        assert_eq!(out.bytes, 16);
        assert!(out.messages.is_empty());
    }

    #[test]
    fn dgd_fixed_point_and_mean_preservation() {
        let w = ConsensusMatrix::metropolis(&Graph::ring(5).unwrap()).unwrap();
        let objs: Vec<_> = (0..5).map(|i| Quadratic::scalar(1.0 + i as f64, 0.7)).collect();
        let s = with_x(&w, &objs, &[0.7; 5]);
        let out = dgd_round(&s, &w, &objs, 3, 0.05).unwrap();
        for st in &out.states {
            assert_abs_diff_eq!(st.x[0], 0.7, epsilon = 1e-15);
        }

        let flat: Vec<_> = (0..5).map(|_| Quadratic::scalar(0.0, 0.0)).collect();
        let xs = [0.3, -1.0, 2.5, 0.0, 4.0];
        let out = dgd_round(&with_x(&w, &flat, &xs), &w, &flat, 1, 0.1).unwrap();
        let mean: f64 = out.states.iter().map(|s| s.x[0]).sum::<f64>() / 5.0;
        assert_abs_diff_eq!(mean, xs.iter().sum::<f64>() / 5.0, epsilon = 1e-14);
    }

    #[test]
    fn dgd_divergence_detected() {
        let (w, objs) = pair();
        let s = with_x(&w, &objs, &[1e13, 0.0]);
        assert_eq!(dgd_round(&s, &w, &objs, 7, 0.001), Err(RoundError::Diverged { round: 7, node: 0 }));
    }

    #[test]
    fn dgd_t_one_is_dgd_and_contracts_by_beta_t() {
        let (w, objs) = star4();
        let s = with_x(&w, &objs, &[0.1, -0.4, 0.9, 0.3]);
        let a = dgd_round(&s, &w, &objs, 2, 0.02).unwrap();
        let b = dgd_t_round(&s, &w, &objs, 2, 0.02, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(dgd_t_round(&s, &w, &objs, 2, 0.02, 0), Err(RoundError::BadConsensusSteps(0)));

        let flat: Vec<_> = (0..4).map(|_| Quadratic::scalar(0.0, 0.0)).collect();
        let dev = |st: &[NodeState]| {
            let m = st.iter().map(|s| s.x[0]).sum::<f64>() / 4.0;
            st.iter().map(|s| (s.x[0] - m).powi(2)).sum::<f64>().sqrt()
        };
        for t in [1usize, 3, 5] {
            let out = dgd_t_round(&s, &w, &flat, 1, 0.0, t).unwrap();
            assert!(dev(&out.states) <= w.beta().powi(t as i32) * dev(&s) + 1e-15);
            assert_eq!(out.bytes, t as u64 * 6 * 8);
        }
    }

    #[test]
    fn naive_identity_equals_dgd() {
        let (w, objs) = star4();
        let s = with_x(&w, &objs, &[0.1, -0.4, 0.9, 0.3]);
        let a = dgd_round(&s, &w, &objs, 1, 0.02).unwrap();
        let b = naive_compressed_round(&s, &w, &objs, 1, 0.02, &Compressor::Identity, stream(0)).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.bytes, b.bytes);
    }

    #[test]
    fn naive_expectation_matches_dgd() {
        // Each node's rounding has two outcomes; enumerate all 2^2 joint
        // outcomes with their probabilities.
        let (w, objs) = pair();
        let xs = [0.3, -1.75];
        let s = with_x(&w, &objs, &xs);
        let alpha = 0.001;
        let exact = dgd_round(&s, &w, &objs, 1, alpha).unwrap();
        let outcomes = |z: f64| [(z.floor(), 1.0 - (z - z.floor())), (z.floor() + 1.0, z - z.floor())];
        let mut expected = [0.0; 2];
        for (c0, p0) in outcomes(xs[0]) {
            for (c1, p1) in outcomes(xs[1]) {
                for i in 0..2 {
                    let mixed = w.get(i, 0) * c0 + w.get(i, 1) * c1;
                    expected[i] += p0 * p1 * (mixed - alpha * objs[i].gradient(&[xs[i]])[0]);
                }
            }
        }
        for i in 0..2 {
            assert_abs_diff_eq!(expected[i], exact.states[i].x[0], epsilon = 1e-14);
        }
        let out = naive_compressed_round(&s, &w, &objs, 1, alpha, &Compressor::StochasticRound, stream(1)).unwrap();
        assert_eq!(out.bytes, 2 * 2);
        assert_eq!(out.messages.len(), 2);
    }

    #[test]
    fn adc_initialization() {
        let (w, objs) = pair();
        let s = initial_states(&w, &objs, 0.001);
        assert_abs_diff_eq!(s[0].x[0], 0.016, epsilon = 1e-15);
        assert_eq!(s[0].x, s[0].y);
        assert_eq!(s[0].x_tilde_self, vec![0.0]);
        assert_eq!(s[0].x_tilde_neighbors.keys().copied().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn adc_identity_tracks_dgd_bitwise() {
        let (w, objs) = star4();
        let sched = StepSchedule::diminishing(0.02, 0.5);
        let mut a = initial_states(&w, &objs, sched.at(1).unwrap());
        let mut b = a.clone();
        for k in 1..=300 {
            let alpha = sched.at(k).unwrap();
            let oa = dgd_round(&a, &w, &objs, k, alpha).unwrap();
            let ob = adc_round(&b, &w, &objs, k, alpha, 0.8, &Compressor::Identity, stream(k)).unwrap();
            assert_eq!(oa.bytes, ob.bytes);
            assert_eq!(oa.max_transmitted.to_bits(), ob.max_transmitted.to_bits());
            a = oa.states;
            b = ob.states;
            for (sa, sb) in a.iter().zip(&b) {
                assert_eq!(sa.x[0].to_bits(), sb.x[0].to_bits());
            }
        }
    }

    #[test]
    fn adc_memories_stay_consistent_and_bytes_are_quarter() {
        let (w, objs) = star4();
        let mut s = initial_states(&w, &objs, 0.02);
        for k in 1..=200 {
            let out = adc_round(&s, &w, &objs, k, 0.02, 1.0, &Compressor::StochasticRound, stream(k)).unwrap();
            check_memories(&out.states).unwrap();
            assert_eq!(out.bytes, 6 * 2);
            for st in &out.states {
                assert_eq!(st.y[0], st.x[0] - st.x_tilde_self[0]);
            }
            s = out.states;
        }
    }

    #[test]
    fn adc_mean_iterate_recursion() {
        let (w, objs) = star4();
        let gamma = 0.8;
        for (compressor, exact_noise) in [(Compressor::StochasticRound, false), (Compressor::Identity, true)] {
            let mut s = initial_states(&w, &objs, 0.02);
            for k in 1..=150u64 {
                let alpha = 0.02 / (k as f64).sqrt();
                let amp = (k as f64).powf(gamma);
                let out = adc_round(&s, &w, &objs, k, alpha, gamma, &compressor, stream(k)).unwrap();
                let n = s.len() as f64;
                let mean = |st: &[NodeState]| st.iter().map(|v| v.x[0]).sum::<f64>() / n;
                let grad: f64 = s.iter().zip(&objs).map(|(st, o)| o.gradient(&st.x)[0]).sum();
                let noise: f64 = if exact_noise {
                    0.0
                } else {
                    out.messages
                        .iter()
                        .zip(&s)
                        .map(|(m, st)| (compressor.decode(m).unwrap()[0] - amp * st.y[0]) / amp)
                        .sum()
                };
                // With identity the transmitted value is x itself and the
                // noise term vanishes identically.
                let predicted = mean(&s) - alpha / n * grad + noise / n;
                assert_abs_diff_eq!(mean(&out.states), predicted, epsilon = 1e-12);
                s = out.states;
            }
        }
    }

    #[test]
    fn adc_expectation_matches_exact_round() {
        // With amplified differentials u_i and lattice outcomes, E[x̃_i] is
        // x̃_i + y_i; averaging the four joint outcomes must give the
        // exact-communication update.
        let (w, objs) = pair();
        let mut s = initial_states(&w, &objs, 0.001);
        s[0].x_tilde_self = vec![0.01];
        s[1].x_tilde_neighbors.insert(0, vec![0.01]);
        s[0].y = vec![s[0].x[0] - 0.01];
        let k = 3u64;
        let gamma = 1.0;
        let amp = (k as f64).powf(gamma);
        let alpha = 0.001;
        let outcomes = |z: f64| [(z.floor(), 1.0 - (z - z.floor())), (z.floor() + 1.0, z - z.floor())];
        let mut expected = [0.0; 2];
        let u: Vec<f64> = s.iter().map(|st| amp * st.y[0]).collect();
        for (d0, p0) in outcomes(u[0]) {
            for (d1, p1) in outcomes(u[1]) {
                let xt = [s[0].x_tilde_self[0] + d0 / amp, s[1].x_tilde_self[0] + d1 / amp];
                for i in 0..2 {
                    let mixed = w.get(i, 0) * xt[0] + w.get(i, 1) * xt[1];
                    expected[i] += p0 * p1 * (mixed - alpha * objs[i].gradient(&s[i].x)[0]);
                }
            }
        }
        let exact: Vec<f64> = (0..2)
            .map(|i| {
                let mixed = w.get(i, 0) * s[0].x[0] + w.get(i, 1) * s[1].x[0];
                mixed - alpha * objs[i].gradient(&s[i].x)[0]
            })
            .collect();
        for i in 0..2 {
            assert_abs_diff_eq!(expected[i], exact[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn adc_overflow_names_node_and_magnitude() {
        let (w, objs) = pair();
        let mut s = initial_states(&w, &objs, 0.001);
        s[1].y = vec![50.0];
        let err = adc_round(&s, &w, &objs, 1000, 0.001, 1.0, &Compressor::StochasticRound, stream(0)).unwrap_err();
        match err {
            RoundError::Overflow { round, node, magnitude, .. } => {
                assert_eq!((round, node), (1000, 1));
                assert_eq!(magnitude, 50_000.0);
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn streams_are_per_node() {
        // Requesting node streams in reverse order gives the same messages.
        let (w, objs) = star4();
        let s = initial_states(&w, &objs, 0.02);
        let a = adc_round(&s, &w, &objs, 1, 0.02, 1.0, &Compressor::StochasticRound, stream(9)).unwrap();
        let mut order = Vec::new();
        let b = adc_round(&s, &w, &objs, 1, 0.02, 1.0, &Compressor::StochasticRound, |i| {
            order.push(i);
            ChaCha8Rng::seed_from_u64(9 * 1000 + i as u64)
        })
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(order, vec![0, 1, 2, 3]);
    }
}
