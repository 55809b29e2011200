//! Unbiased stochastic compression operators and their wire encoding.
//!
//! Every operator maps a real vector to lattice or level indices that fit in
//! 16-bit signed integers, so a compressed message costs 2 bytes per
//! coordinate against 8 bytes for an uncompressed `f64` payload. Each
//! coordinate consumes exactly one uniform draw from the supplied stream,
//! whether or not it lands on a lattice point.

use rand::Rng;
use thiserror::Error;

/// Wire cost of one quantized coordinate (little-endian `i16`).
pub const QUANTIZED_BYTES_PER_COORD: usize = 2;
/// Wire cost of one uncompressed coordinate (`f64`).
pub const FULL_BYTES_PER_COORD: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompressionError {
    #[error("coordinate {coordinate} = {value} does not fit the 16-bit codeword range")]
    Overflow { coordinate: usize, value: f64 },
    #[error("coordinate {coordinate} = {value} exceeds sparsifier bound {bound}")]
    OutOfRange { coordinate: usize, value: f64, bound: f64 },
    #[error("grid spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
    #[error("invalid level table: {0}")]
    BadLevels(String),
    #[error("codeword scale {found:?} cannot be decoded by {expected:?}")]
    UnknownScale { found: Scale, expected: Scale },
    #[error("level index {0} outside the table")]
    BadIndex(i16),
    #[error("payload of length {got} does not match expected length {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("at least {min} trials required, got {got}")]
    TooFewTrials { min: usize, got: usize },
}

/// Increasing partition `0 = a_0 < a_1 < … < a_m = M` of `[0, M]`, stored
/// without the implicit `a_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelTable {
    levels: Vec<f64>,
    id: u32,
}

impl LevelTable {
    pub fn new(levels: Vec<f64>) -> Result<Self, CompressionError> {
        if levels.is_empty() {
            return Err(CompressionError::BadLevels("need at least one level".into()));
        }
        if levels.len() > i16::MAX as usize {
            return Err(CompressionError::BadLevels(format!("{} levels exceed the i16 index range", levels.len())));
        }
        let mut prev = 0.0;
        for &a in &levels {
            if !(a.is_finite() && a > prev) {
                return Err(CompressionError::BadLevels(format!("levels must increase from 0, saw {a} after {prev}")));
            }
            prev = a;
        }
        let id = fingerprint(&levels);
        Ok(Self { levels, id })
    }

    /// `m` equally spaced levels on `(0, bound]`.
    pub fn uniform(m: usize, bound: f64) -> Result<Self, CompressionError> {
        Self::new((1..=m).map(|i| bound * i as f64 / m as f64).collect())
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn bound(&self) -> f64 {
        *self.levels.last().expect("nonempty")
    }

    pub fn id(&self) -> u32 {
        self.id
    }
}

// FNV-1a over the level bit patterns.
fn fingerprint(levels: &[f64]) -> u32 {
    let mut h: u32 = 0x811c_9dc5;
    for l in levels {
        for b in l.to_bits().to_le_bytes() {
            h ^= b as u32;
            h = h.wrapping_mul(0x0100_0193);
        }
    }
    h
}

/// How codeword indices map back to reals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scale {
    /// Integer lattice.
    Unit,
    /// Index times spacing.
    Grid(f64),
    /// Signed index into the level table with this fingerprint; 0 is zero.
    Levels(u32),
}

/// Quantized message: one 16-bit index per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Codeword {
    pub values: Vec<i16>,
    pub scale: Scale,
}

impl Codeword {
    pub fn byte_cost(&self) -> usize {
        QUANTIZED_BYTES_PER_COORD * self.values.len()
    }

    /// Little-endian wire layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_bytes(bytes: &[u8], scale: Scale) -> Result<Self, CompressionError> {
        if !bytes.len().is_multiple_of(2) {
            return Err(CompressionError::LengthMismatch { expected: bytes.len() + 1, got: bytes.len() });
        }
        let values = bytes.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect();
        Ok(Self { values, scale })
    }
}

/// A message as it travels on a link.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// Uncompressed `f64` coordinates.
    Full(Vec<f64>),
    Quantized(Codeword),
}

impl Payload {
    pub fn byte_cost(&self) -> usize {
        match self {
            Payload::Full(v) => FULL_BYTES_PER_COORD * v.len(),
            Payload::Quantized(c) => c.byte_cost(),
        }
    }

    pub fn is_lossless(&self) -> bool {
        matches!(self, Payload::Full(_))
    }
}

/// Unbiased stochastic compression operator.
#[derive(Debug, Clone, PartialEq)]
pub enum Compressor {
    Identity,
    /// Randomized rounding to the integer lattice.
    StochasticRound,
    /// Randomized rounding to the lattice `iΔ`.
    Grid {
        spacing: f64,
    },
    /// Magnitude sparsifier over a level table.
    Sparsifier(LevelTable),
    /// Randomly-rounding operator with the round-up probability inverted
    /// (rounds up with probability `1 − frac`). Biased; kept to show it.
    #[cfg(feature = "literal-rounding")]
    LiteralRound,
}

/// Round `t` to `⌊t⌋` or `⌊t⌋ + 1` given uniform `u`, up iff `u < frac`.
fn stochastic_index(t: f64, u: f64, coordinate: usize, value: f64) -> Result<i16, CompressionError> {
    if !t.is_finite() {
        return Err(CompressionError::Overflow { coordinate, value });
    }
    let lo = t.floor();
    let frac = t - lo;
    let hi_needed = frac > 0.0;
    if lo < i16::MIN as f64 || lo > i16::MAX as f64 || (hi_needed && lo + 1.0 > i16::MAX as f64) {
        return Err(CompressionError::Overflow { coordinate, value });
    }
    let idx = if u < frac { lo + 1.0 } else { lo };
    Ok(idx as i16)
}

/// Randomized rounding: `⌊z⌋ + 1` with probability `z − ⌊z⌋`, else `⌊z⌋`.
pub fn compress_round<R: Rng + ?Sized>(z: &[f64], rng: &mut R) -> Result<Codeword, CompressionError> {
    let values =
        z.iter().enumerate().map(|(k, &zk)| stochastic_index(zk, rng.gen::<f64>(), k, zk)).collect::<Result<_, _>>()?;
    Ok(Codeword { values, scale: Scale::Unit })
}

/// Low-precision quantizer on the grid `a_i = iΔ`: for `a_i ≤ z < a_{i+1}`,
/// outputs `a_i` with probability `(a_{i+1} − z)/Δ`, else `a_{i+1}`.
pub fn compress_grid<R: Rng + ?Sized>(z: &[f64], spacing: f64, rng: &mut R) -> Result<Codeword, CompressionError> {
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(CompressionError::BadSpacing(spacing));
    }
    let values = z
        .iter()
        .enumerate()
        .map(|(k, &zk)| stochastic_index(zk / spacing, rng.gen::<f64>(), k, zk))
        .collect::<Result<_, _>>()?;
    Ok(Codeword { values, scale: Scale::Grid(spacing) })
}

/// Quantization sparsifier: for `a_i ≤ |z| < a_{i+1}`, outputs
/// `sign(z)·a_{i+1}` with probability `|z|/a_{i+1}`, else 0. `|z| = M` maps
/// to `M` with probability 1.
pub fn compress_sparsify<R: Rng + ?Sized>(
    z: &[f64],
    table: &LevelTable,
    rng: &mut R,
) -> Result<Codeword, CompressionError> {
    let levels = table.levels();
    let bound = table.bound();
    let mut values = Vec::with_capacity(z.len());
    for (k, &zk) in z.iter().enumerate() {
        let u: f64 = rng.gen();
        let mag = zk.abs();
        if !(mag <= bound) {
            return Err(CompressionError::OutOfRange { coordinate: k, value: zk, bound });
        }
        if mag == 0.0 {
            values.push(0);
            continue;
        }
        // First level strictly above |z|; the top bucket is closed.
        let j = levels.partition_point(|&a| a <= mag).min(levels.len() - 1);
        let top = levels[j];
        let idx = if u < mag / top { (j + 1) as i16 } else { 0 };
        values.push(if zk < 0.0 { -idx } else { idx });
    }
    Ok(Codeword { values, scale: Scale::Levels(table.id()) })
}

#[cfg(feature = "literal-rounding")]
fn compress_literal_round<R: Rng + ?Sized>(z: &[f64], rng: &mut R) -> Result<Codeword, CompressionError> {
    let values = z
        .iter()
        .enumerate()
        .map(|(k, &zk)| {
            let lo = zk.floor();
            if !zk.is_finite() || lo < i16::MIN as f64 || lo + 1.0 > i16::MAX as f64 {
                return Err(CompressionError::Overflow { coordinate: k, value: zk });
            }
            let frac = zk - lo;
            let up = rng.gen::<f64>() < 1.0 - frac;
            Ok((if up { lo + 1.0 } else { lo }) as i16)
        })
        .collect::<Result<_, _>>()?;
    Ok(Codeword { values, scale: Scale::Unit })
}

impl Compressor {
    pub fn grid(spacing: f64) -> Result<Self, CompressionError> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(CompressionError::BadSpacing(spacing));
        }
        Ok(Self::Grid { spacing })
    }

    pub fn sparsifier(levels: Vec<f64>) -> Result<Self, CompressionError> {
        Ok(Self::Sparsifier(LevelTable::new(levels)?))
    }

    pub fn is_lossless(&self) -> bool {
        matches!(self, Compressor::Identity)
    }

    /// Scale tag this compressor emits and accepts.
    pub fn scale(&self) -> Option<Scale> {
        match self {
            Compressor::Identity => None,
            Compressor::StochasticRound => Some(Scale::Unit),
            Compressor::Grid { spacing } => Some(Scale::Grid(*spacing)),
            Compressor::Sparsifier(t) => Some(Scale::Levels(t.id())),
            #[cfg(feature = "literal-rounding")]
            Compressor::LiteralRound => Some(Scale::Unit),
        }
    }

    pub fn compress<R: Rng + ?Sized>(&self, z: &[f64], rng: &mut R) -> Result<Payload, CompressionError> {
        Ok(match self {
            Compressor::Identity => Payload::Full(z.to_vec()),
            Compressor::StochasticRound => Payload::Quantized(compress_round(z, rng)?),
            Compressor::Grid { spacing } => Payload::Quantized(compress_grid(z, *spacing, rng)?),
            Compressor::Sparsifier(t) => Payload::Quantized(compress_sparsify(z, t, rng)?),
            #[cfg(feature = "literal-rounding")]
            Compressor::LiteralRound => Payload::Quantized(compress_literal_round(z, rng)?),
        })
    }

    /// Exact real vector the sender sampled.
    pub fn decode(&self, payload: &Payload) -> Result<Vec<f64>, CompressionError> {
        match payload {
            Payload::Full(v) => Ok(v.clone()),
            Payload::Quantized(c) => decode(c, self),
        }
    }

    /// Per-coordinate bound `σ²` on `E[(C(z) − z)²]`.
    pub fn variance_bound(&self) -> f64 {
        match self {
            Compressor::Identity => 0.0,
            Compressor::StochasticRound => 0.25,
            Compressor::Grid { spacing } => spacing * spacing / 4.0,
            Compressor::Sparsifier(t) => {
                // In bucket [lo, hi) the error variance is v(hi − v), maximized
                // at v = hi/2 when that lies in the bucket, else at v = lo.
                let mut lo = 0.0;
                let mut worst: f64 = 0.0;
                for &hi in t.levels() {
                    let v = (hi / 2.0).max(lo);
                    worst = worst.max(v * (hi - v));
                    lo = hi;
                }
                worst
            }
            #[cfg(feature = "literal-rounding")]
            Compressor::LiteralRound => 0.25,
        }
    }
}

/// Decodes a codeword with the compressor that produced it.
pub fn decode(c: &Codeword, compressor: &Compressor) -> Result<Vec<f64>, CompressionError> {
    let expected = compressor.scale();
    if expected != Some(c.scale) {
        return Err(CompressionError::UnknownScale { found: c.scale, expected: expected.unwrap_or(Scale::Unit) });
    }
    match (c.scale, compressor) {
        (Scale::Unit, _) => Ok(c.values.iter().map(|&v| v as f64).collect()),
        (Scale::Grid(d), _) => Ok(c.values.iter().map(|&v| v as f64 * d).collect()),
        (Scale::Levels(_), Compressor::Sparsifier(t)) => c
            .values
            .iter()
            .map(|&v| {
                if v == 0 {
                    return Ok(0.0);
                }
                let level = *t.levels().get(v.unsigned_abs() as usize - 1).ok_or(CompressionError::BadIndex(v))?;
                Ok(if v < 0 { -level } else { level })
            })
            .collect(),
        (Scale::Levels(_), _) => unreachable!("scale checked above"),
    }
}

/// Monte Carlo estimate of the compression error `ε = C(z) − z`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorStats {
    pub trials: usize,
    /// Sample mean of `ε` per coordinate.
    pub mean_error: Vec<f64>,
    /// Standard error of `mean_error`.
    pub mean_se: Vec<f64>,
    /// Sample mean of `ε²` per coordinate (estimates the bounded variance).
    pub variance: Vec<f64>,
    /// Standard error of `variance`.
    pub variance_se: Vec<f64>,
}

impl ErrorStats {
    /// Mean within 4 standard errors of zero and variance at most
    /// `sigma2 + 3` standard errors, on every coordinate.
    pub fn passes(&self, sigma2: f64) -> bool {
        (0..self.mean_error.len()).all(|k| {
            self.mean_error[k].abs() <= 4.0 * self.mean_se[k] + 1e-12
                && self.variance[k] <= sigma2 + 3.0 * self.variance_se[k] + 1e-12
        })
    }
}

pub const MIN_UNBIASEDNESS_TRIALS: usize = 10_000;

/// Draws `trials` compressions of `z` and summarizes the error.
pub fn empirical_unbiasedness<R: Rng + ?Sized>(
    c: &Compressor,
    z: &[f64],
    trials: usize,
    rng: &mut R,
) -> Result<ErrorStats, CompressionError> {
    if trials < MIN_UNBIASEDNESS_TRIALS {
        return Err(CompressionError::TooFewTrials { min: MIN_UNBIASEDNESS_TRIALS, got: trials });
    }
    let p = z.len();
    let mut s1 = vec![0.0; p];
    let mut s2 = vec![0.0; p];
    let mut s4 = vec![0.0; p];
    for _ in 0..trials {
        let out = c.decode(&c.compress(z, rng)?)?;
        for k in 0..p {
            let e = out[k] - z[k];
            s1[k] += e;
            s2[k] += e * e;
            s4[k] += e * e * e * e;
        }
    }
    let n = trials as f64;
    let mean_error: Vec<f64> = s1.iter().map(|s| s / n).collect();
    let variance: Vec<f64> = s2.iter().map(|s| s / n).collect();
    let mean_se = (0..p).map(|k| ((variance[k] - mean_error[k].powi(2)).max(0.0) * n / (n - 1.0) / n).sqrt()).collect();
    let variance_se = (0..p).map(|k| ((s4[k] / n - variance[k].powi(2)).max(0.0) * n / (n - 1.0) / n).sqrt()).collect();
    Ok(ErrorStats { trials, mean_error, mean_se, variance, variance_se })
}
