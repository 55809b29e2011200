//! Self-contained verification suites behind `adcdgd check`.

use std::fmt;
use std::str::FromStr;

use adcdgd_core::compression::{empirical_unbiasedness, ErrorStats};
use adcdgd_core::metrics::{h_sequence, loglog_slope, lyapunov_lipschitz_check};
use adcdgd_core::{engine, Compressor, ConsensusMatrix, Graph};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::presets;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CheckError {
    #[error("unknown property `{0}`; available: unbiasedness, lemma4, lyapunov_lipschitz, growth")]
    UnknownProperty(String),
    #[error("invalid input: {0}")]
    BadInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Property {
    Unbiasedness,
    Lemma4,
    LyapunovLipschitz,
    Growth,
}

impl FromStr for Property {
    type Err = CheckError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unbiasedness" => Ok(Property::Unbiasedness),
            "lemma4" => Ok(Property::Lemma4),
            "lyapunov_lipschitz" => Ok(Property::LyapunovLipschitz),
            "growth" => Ok(Property::Growth),
            other => Err(CheckError::UnknownProperty(other.into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub lines: Vec<CheckLine>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.passed)
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lines {
            writeln!(f, "{} {}: {}", if l.passed { "PASS" } else { "FAIL" }, l.name, l.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOptions {
    /// Restricts the `lemma4` check to one contraction factor.
    pub beta: Option<f64>,
    /// Restricts the `lemma4` and `growth` checks to one exponent.
    pub gamma: Option<f64>,
    pub horizon: usize,
    pub draws: usize,
    pub seed: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self { beta: None, gamma: None, horizon: 100_000, draws: 100_000, seed: 1 }
    }
}

pub fn run_check(property: Property, opts: &CheckOptions) -> Result<CheckReport, CheckError> {
    match property {
        Property::Unbiasedness => Ok(unbiasedness(opts)),
        Property::Lemma4 => lemma4(opts),
        Property::LyapunovLipschitz => Ok(lyapunov_lipschitz(opts)),
        Property::Growth => growth(opts),
    }
}

/// The three operators exercised by the unbiasedness suite.
pub fn test_compressors() -> Vec<(&'static str, Compressor)> {
    vec![
        ("round", Compressor::StochasticRound),
        ("grid(0.5)", Compressor::grid(0.5).expect("positive spacing")),
        ("sparsify", Compressor::sparsifier(vec![0.25, 0.5, 1.0, 2.0, 4.0, 8.0]).expect("increasing levels")),
    ]
}

/// Twenty three-coordinate vectors covering integers, lattice points,
/// negative values and every sparsifier bucket.
pub fn test_vectors() -> Vec<Vec<f64>> {
    (0..20)
        .map(|j| {
            let j = j as f64;
            vec![
                -3.7 + 0.41 * j,
                0.13 * j - 1.2,
                2.5 * j.sin() + if (j as usize).is_multiple_of(5) { 5.0 } else { 0.0 },
            ]
        })
        .collect()
}

/// Runs `c` against every test vector with `draws` samples each.
pub fn unbiasedness_stats(c: &Compressor, draws: usize, seed: u64) -> Vec<ErrorStats> {
    test_vectors()
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000).wrapping_add(i as u64));
            empirical_unbiasedness(c, z, draws, &mut rng).expect("test vectors are in range")
        })
        .collect()
}

fn unbiasedness(opts: &CheckOptions) -> CheckReport {
    let lines = test_compressors()
        .into_iter()
        .map(|(name, c)| {
            let sigma2 = c.variance_bound();
            let stats = unbiasedness_stats(&c, opts.draws, opts.seed);
            let failed = stats.iter().filter(|s| !s.passes(sigma2)).count();
            let worst = stats
                .iter()
                .flat_map(|s| {
                    s.mean_error.iter().zip(&s.mean_se).map(|(m, se)| if *se > 0.0 { m.abs() / se } else { 0.0 })
                })
                .fold(0.0, f64::max);
            CheckLine {
                name: format!("unbiasedness/{name}"),
                passed: failed == 0,
                detail: format!(
                    "{} vectors x {} draws, {failed} failing, worst |mean|/se = {worst:.2}, sigma^2 = {sigma2}",
                    stats.len(),
                    opts.draws
                ),
            }
        })
        .collect();
    CheckReport { lines }
}

/// `k^γ h_k` over `k = 1..=horizon`.
pub fn scaled_h(beta: f64, gamma: f64, horizon: usize) -> Result<Vec<f64>, CheckError> {
    let h = h_sequence(beta, gamma, horizon).map_err(|e| CheckError::BadInput(e.to_string()))?;
    Ok(h.iter().enumerate().map(|(i, v)| ((i + 1) as f64).powf(gamma) * v).collect())
}

fn lemma4(opts: &CheckOptions) -> Result<CheckReport, CheckError> {
    if opts.horizon < 100 {
        return Err(CheckError::BadInput(format!("horizon must be at least 100, got {}", opts.horizon)));
    }
    let betas = opts.beta.map_or(vec![0.5, 0.75, 0.9], |b| vec![b]);
    let gammas = opts.gamma.map_or(vec![0.6, 1.0], |g| vec![g]);
    let mut lines = Vec::new();
    for &beta in &betas {
        for &gamma in &gammas {
            let s = scaled_h(beta, gamma, opts.horizon)?;
            let sup = s.iter().cloned().fold(0.0, f64::max);
            let tail = &s[opts.horizon - opts.horizon / 10..];
            let (lo, hi) = tail.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
            // Bounded and settled: the last decade varies by under 1%.
            let spread = (hi - lo) / hi;
            let passed = sup.is_finite() && spread <= 0.01;
            lines.push(CheckLine {
                name: format!("lemma4/beta={beta},gamma={gamma}"),
                passed,
                detail: format!(
                    "sup k^gamma h_k = {sup:.6}, last-decade spread {:.4}%, tail {:.6}, 1/(1-beta) = {:.6}",
                    100.0 * spread,
                    s[s.len() - 1],
                    1.0 / (1.0 - beta)
                ),
            });
        }
    }
    Ok(CheckReport { lines })
}

/// Allowed excess over `max(γ − 1/2, 0)` in the fitted growth slope.
pub const GROWTH_SLOPE_TOL: f64 = 0.1;
/// Allowed excess over the analytic Lipschitz bound.
pub const LIPSCHITZ_TOL: f64 = 1e-8;

fn lyapunov_lipschitz(opts: &CheckOptions) -> CheckReport {
    let w = ConsensusMatrix::metropolis(&Graph::star(4).expect("star graph")).expect("metropolis weights");
    let objs = presets::four_node_objectives();
    let lines = [presets::FOUR_NODE_ALPHA, 0.05]
        .into_iter()
        .map(|alpha| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let r = lyapunov_lipschitz_check(&w, &objs, alpha, 1000, 10.0, &mut rng).expect("positive radius");
            CheckLine {
                name: format!("lyapunov_lipschitz/alpha={alpha}"),
                passed: r.max_ratio <= r.bound + LIPSCHITZ_TOL,
                detail: format!(
                    "max sampled ratio {:.6} vs bound 1 - lambda_N + alpha L = {:.6}",
                    r.max_ratio, r.bound
                ),
            }
        })
        .collect();
    CheckReport { lines }
}

fn growth(opts: &CheckOptions) -> Result<CheckReport, CheckError> {
    let mut lines = Vec::new();
    for run in presets::gammasweep().with_trials(10).runs {
        let gamma = run.config.gamma;
        if opts.gamma.is_some_and(|g| g != gamma) {
            continue;
        }
        let trace = engine::run_trials(&run.config).map_err(|e| CheckError::BadInput(e.to_string()))?;
        let rows: Vec<_> = trace.aggregate.iter().filter(|m| m.k >= 100).collect();
        let ks: Vec<f64> = rows.iter().map(|m| m.k as f64).collect();
        let vs: Vec<f64> = rows.iter().map(|m| m.max_transmitted).collect();
        let slope = loglog_slope(&ks, &vs).map_err(|e| CheckError::BadInput(e.to_string()))?;
        let limit = (gamma - 0.5).max(0.0) + GROWTH_SLOPE_TOL;
        lines.push(CheckLine {
            name: format!("growth/gamma={gamma}"),
            passed: slope <= limit,
            detail: format!(
                "log-log slope of running max transmitted over k in [100, 2000] = {slope:.4}, limit {limit:.2}"
            ),
        });
    }
    if lines.is_empty() {
        return Err(CheckError::BadInput("no gammasweep run matches the requested gamma".into()));
    }
    Ok(CheckReport { lines })
}
