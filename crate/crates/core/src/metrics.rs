//! Observables computed from stacked iterates, plus the analytic sequences
//! used to check the convergence bounds.

use rand::Rng;
use thiserror::Error;

use crate::graph::ConsensusMatrix;
use crate::objectives::{sum_gradient, Objective};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("contraction factor must lie in [0, 1), got {0}")]
    BadBeta(f64),
    #[error("exponent must be positive, got {0}")]
    BadGamma(f64),
    #[error("need at least two positive points for a slope")]
    TooFewPoints,
    #[error("sample radius must be positive, got {0}")]
    BadRadius(f64),
}

/// Metrics recorded after round `k`, so they describe `x_{k+1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundMetrics {
    pub k: u64,
    pub grad_norm_sq: f64,
    pub consensus_err: f64,
    pub objective: f64,
    pub lyapunov: f64,
    pub bytes_cum: u64,
    /// Running maximum of the on-wire magnitude up to and including round `k`.
    pub max_transmitted: f64,
}

pub fn mean_iterate(xs: &[Vec<f64>]) -> Vec<f64> {
    let p = xs[0].len();
    let mut m = vec![0.0; p];
    for x in xs {
        for (a, v) in m.iter_mut().zip(x) {
            *a += v;
        }
    }
    let n = xs.len() as f64;
    m.iter_mut().for_each(|a| *a /= n);
    m
}

/// `‖x − 1 ⊗ x̄‖` over the stacked vector.
pub fn consensus_error(xs: &[Vec<f64>]) -> f64 {
    let m = mean_iterate(xs);
    xs.iter().flat_map(|x| x.iter().zip(&m).map(|(a, b)| (a - b) * (a - b))).sum::<f64>().sqrt()
}

/// `‖(1/N) Σ ∇f_i(x̄)‖²`.
pub fn grad_norm_sq<O: Objective>(objs: &[O], xs: &[Vec<f64>]) -> f64 {
    let g = sum_gradient(objs, &mean_iterate(xs)).expect("objective dimensions match iterates");
    g.iter().map(|v| v * v).sum()
}

/// `Σ f_i(x_i)` at each node's own iterate.
pub fn objective<O: Objective>(objs: &[O], xs: &[Vec<f64>]) -> f64 {
    objs.iter().zip(xs).map(|(o, x)| o.value(x)).sum()
}

/// `½ xᵀ(I − Z)x + α Σ f_i(x_i)` with `Z = W ⊗ I_P`.
pub fn lyapunov<O: Objective>(xs: &[Vec<f64>], w: &ConsensusMatrix, objs: &[O], alpha: f64) -> f64 {
    let mixed = w.mix(xs);
    let quad: f64 = xs.iter().zip(&mixed).flat_map(|(x, m)| x.iter().zip(m).map(|(a, b)| a * (a - b))).sum();
    0.5 * quad + alpha * objective(objs, xs)
}

/// `(I − Z)x + α ∇f(x)`, one block per node.
pub fn lyapunov_gradient<O: Objective>(xs: &[Vec<f64>], w: &ConsensusMatrix, objs: &[O], alpha: f64) -> Vec<Vec<f64>> {
    let mixed = w.mix(xs);
    xs.iter()
        .zip(&mixed)
        .zip(objs)
        .map(|((x, m), o)| {
            let g = o.gradient(x);
            x.iter().zip(m).zip(&g).map(|((a, b), gi)| a - b + alpha * gi).collect()
        })
        .collect()
}

/// `1 − λ_N + α L`.
pub fn lyapunov_lipschitz_bound(w: &ConsensusMatrix, lipschitz: f64, alpha: f64) -> f64 {
    1.0 - w.lambda_min() + alpha * lipschitz
}

/// Observed gradient-Lipschitz ratio of the Lyapunov function together with
/// its analytic bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzReport {
    pub max_ratio: f64,
    pub bound: f64,
}

impl LipschitzReport {
    pub fn holds(&self) -> bool {
        self.max_ratio <= self.bound * (1.0 + 1e-9)
    }
}

/// Samples `samples` point pairs uniformly in `[−radius, radius]^{NP}` and
/// reports `max ‖∇L(x) − ∇L(y)‖ / ‖x − y‖`.
pub fn lyapunov_lipschitz_check<O: Objective, R: Rng + ?Sized>(
    w: &ConsensusMatrix,
    objs: &[O],
    alpha: f64,
    samples: usize,
    radius: f64,
    rng: &mut R,
) -> Result<LipschitzReport, MetricsError> {
    if !(radius > 0.0) {
        return Err(MetricsError::BadRadius(radius));
    }
    let p = objs[0].dim();
    let lip = objs.iter().map(Objective::lipschitz).fold(0.0, f64::max);
    let draw = |rng: &mut R| -> Vec<Vec<f64>> {
        (0..objs.len()).map(|_| (0..p).map(|_| rng.gen_range(-radius..=radius)).collect()).collect()
    };
    let mut max_ratio: f64 = 0.0;
    for _ in 0..samples {
        let x = draw(rng);
        let y = draw(rng);
        let gx = lyapunov_gradient(&x, w, objs, alpha);
        let gy = lyapunov_gradient(&y, w, objs, alpha);
        let num = stacked_dist(&gx, &gy);
        let den = stacked_dist(&x, &y);
        if den > 0.0 {
            max_ratio = max_ratio.max(num / den);
        }
    }
    Ok(LipschitzReport { max_ratio, bound: lyapunov_lipschitz_bound(w, lip, alpha) })
}

fn stacked_dist(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).flat_map(|(u, v)| u.iter().zip(v).map(|(x, y)| (x - y) * (x - y))).sum::<f64>().sqrt()
}

/// `h_1 = 1`, `h_{k+1} = β h_k + 1/(k+1)^γ`, returned as `[h_1, ..., h_K]`.
pub fn h_sequence(beta: f64, gamma: f64, len: usize) -> Result<Vec<f64>, MetricsError> {
    if !(0.0..1.0).contains(&beta) {
        return Err(MetricsError::BadBeta(beta));
    }
    if !(gamma > 0.0) {
        return Err(MetricsError::BadGamma(gamma));
    }
    let mut h = Vec::with_capacity(len);
    let mut cur = 1.0;
    for k in 1..=len {
        h.push(cur);
        cur = beta * cur + 1.0 / ((k + 1) as f64).powf(gamma);
    }
    Ok(h)
}

/// Constant-step condition `α < (1 + λ_N) / L`.
pub fn step_size_admissibility(alpha: f64, w: &ConsensusMatrix, lipschitz: f64) -> bool {
    alpha * lipschitz < 1.0 + w.lambda_min()
}

/// Least-squares slope of `log v` against `log k` over positive points.
pub fn loglog_slope(ks: &[f64], vs: &[f64]) -> Result<f64, MetricsError> {
    let pts: Vec<(f64, f64)> = ks
        .iter()
        .zip(vs)
        .filter(|(k, v)| **k > 0.0 && **v > 0.0 && v.is_finite())
        .map(|(k, v)| (k.ln(), v.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(MetricsError::TooFewPoints);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(MetricsError::TooFewPoints);
    }
    Ok(sxy / sxx)
}
