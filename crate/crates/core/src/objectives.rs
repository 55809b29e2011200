//! Per-node local objectives.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObjectiveError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty objective list")]
    Empty,
    #[error("sum of curvatures is {0}; no finite minimizer")]
    NoFiniteMinimizer(f64),
    #[error("growth assumption violated: sampled objective sum {0} <= 0 at the test radius")]
    GrowthViolation(f64),
    #[error("radius must be positive, got {0}")]
    BadRadius(f64),
}

/// A differentiable local objective `f_i : R^P -> R`.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Writes `∇f(x)` into `out`.
    fn gradient_into(&self, x: &[f64], out: &mut [f64]);

    /// Upper bound on the Lipschitz constant of the gradient.
    fn lipschitz(&self) -> f64;

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.gradient_into(x, &mut g);
        g
    }
}

/// `f(x) = a ‖x − b‖²`. `a` may be negative.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub a: f64,
    pub b: Vec<f64>,
}

impl Quadratic {
    pub fn new(a: f64, b: Vec<f64>) -> Self {
        Self { a, b }
    }

    pub fn scalar(a: f64, b: f64) -> Self {
        Self { a, b: vec![b] }
    }
}

/// Free-function constructor matching the other operations in this module.
pub fn quadratic(a: f64, b: Vec<f64>) -> Quadratic {
    Quadratic::new(a, b)
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.a * x.iter().zip(&self.b).map(|(xi, bi)| (xi - bi) * (xi - bi)).sum::<f64>()
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        for ((o, xi), bi) in out.iter_mut().zip(x).zip(&self.b) {
            *o = 2.0 * self.a * (xi - bi);
        }
    }

    fn lipschitz(&self) -> f64 {
        2.0 * self.a.abs()
    }
}

fn check_dims<O: Objective>(objs: &[O], dim: usize) -> Result<(), ObjectiveError> {
    if objs.is_empty() {
        return Err(ObjectiveError::Empty);
    }
    for o in objs {
        if o.dim() != dim {
            return Err(ObjectiveError::DimensionMismatch { expected: dim, got: o.dim() });
        }
    }
    Ok(())
}

/// Mean gradient `(1/N) Σ ∇f_i(x̄)` at a common point.
pub fn sum_gradient<O: Objective>(objs: &[O], x_bar: &[f64]) -> Result<Vec<f64>, ObjectiveError> {
    check_dims(objs, x_bar.len())?;
    let mut acc = vec![0.0; x_bar.len()];
    let mut g = vec![0.0; x_bar.len()];
    for o in objs {
        o.gradient_into(x_bar, &mut g);
        for (a, gi) in acc.iter_mut().zip(&g) {
            *a += gi;
        }
    }
    let n = objs.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Unique stationary point `Σ a_i b_i / Σ a_i` of a quadratic family.
pub fn global_minimizer_quadratic(objs: &[Quadratic]) -> Result<Vec<f64>, ObjectiveError> {
    let dim = objs.first().ok_or(ObjectiveError::Empty)?.dim();
    check_dims(objs, dim)?;
    let total: f64 = objs.iter().map(|q| q.a).sum();
    if total <= 0.0 {
        return Err(ObjectiveError::NoFiniteMinimizer(total));
    }
    Ok((0..dim).map(|p| objs.iter().map(|q| q.a * q.b[p]).sum::<f64>() / total).collect())
}

/// `L = max_i L_i`.
pub fn lipschitz_bound<O: Objective>(objs: &[O]) -> f64 {
    objs.iter().map(Objective::lipschitz).fold(0.0, f64::max)
}

/// Samples stacked points with `‖x‖ = radius` and returns the largest
/// observed `Σ‖x_i‖ / Σ f_i(x_i)`. A sampled nonpositive denominator means
/// the growth condition fails at this radius.
pub fn growth_ratio_check<O: Objective, R: Rng + ?Sized>(
    objs: &[O],
    radius: f64,
    samples: usize,
    rng: &mut R,
) -> Result<f64, ObjectiveError> {
    if !(radius > 0.0) {
        return Err(ObjectiveError::BadRadius(radius));
    }
    let dim = objs.first().ok_or(ObjectiveError::Empty)?.dim();
    check_dims(objs, dim)?;
    let total = objs.len() * dim;
    let mut worst = f64::NEG_INFINITY;
    let mut dir = vec![0.0; total];
    for _ in 0..samples.max(1) {
        // Uniform direction on the sphere via normalized cube samples,
        // rejecting the degenerate all-zero draw.
        let norm = loop {
            dir.iter_mut().for_each(|d| *d = rng.gen_range(-1.0..1.0));
            let n = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
            if n > 1e-12 {
                break n;
            }
        };
        dir.iter_mut().for_each(|d| *d *= radius / norm);
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, o) in objs.iter().enumerate() {
            let xi = &dir[i * dim..(i + 1) * dim];
            num += xi.iter().map(|v| v * v).sum::<f64>().sqrt();
            den += o.value(xi);
        }
        if den <= 0.0 {
            return Err(ObjectiveError::GrowthViolation(den));
        }
        worst = worst.max(num / den);
    }
    Ok(worst)
}
