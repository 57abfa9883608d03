//! Numeric primitives shared by the analytical models.

use crate::error::SolverError;

/// Probability coordinates never reach 1, keeping busy-period denominators finite.
pub const PROB_CEILING: f64 = 1.0 - 1e-12;

/// Gaussian tail probability `P[Z > x]`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Outcome probabilities of a truncated geometric trial: `p^v (1-p)` for
/// `v < m` followed by the exhaustion mass `p^m`.
pub fn truncated_geometric(p: f64, m: u32) -> Vec<f64> {
    let mut out = Vec::with_capacity(m as usize + 1);
    let mut pv = 1.0;
    for _ in 0..m {
        out.push(pv * (1.0 - p));
        pv *= p;
    }
    out.push(pv);
    out
}

/// `sum_{k<m} r^k`.
pub fn geometric_sum(r: f64, m: u32) -> f64 {
    let mut acc = 0.0;
    let mut rk = 1.0;
    for _ in 0..m {
        acc += rk;
        rk *= r;
    }
    acc
}

/// Damped fixed-point iteration `x <- (1-a) x + a map(x)`.
pub struct FixedPointProblem<F> {
    pub map: F,
    pub tolerance: f64,
    pub max_iters: usize,
    pub damping: f64,
    /// Coordinates holding probabilities; clamped to `[0, PROB_CEILING]`.
    pub probability_coords: Vec<usize>,
}

impl<F: Fn(&[f64]) -> Vec<f64>> FixedPointProblem<F> {
    pub fn new(map: F) -> Self {
        FixedPointProblem {
            map,
            tolerance: 1e-9,
            max_iters: 10_000,
            damping: 0.5,
            probability_coords: Vec::new(),
        }
    }

    pub fn with_probabilities(mut self, coords: &[usize]) -> Self {
        self.probability_coords = coords.to_vec();
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointSolution {
    pub x: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

fn residual(x: &[f64], y: &[f64]) -> f64 {
    let diff = x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let norm = x.iter().map(|a| a.abs()).fold(0.0, f64::max);
    diff / norm.max(1.0)
}

pub fn solve_fixed_point<F: Fn(&[f64]) -> Vec<f64>>(
    problem: &FixedPointProblem<F>,
    init: &[f64],
) -> Result<FixedPointSolution, SolverError> {
    if !(problem.tolerance > 0.0) {
        return Err(SolverError::InvalidProblem("tolerance must be positive"));
    }
    if !(problem.damping > 0.0 && problem.damping <= 1.0) {
        return Err(SolverError::InvalidProblem("damping must lie in (0, 1]"));
    }
    let clamp = |x: &mut [f64]| {
        for &c in &problem.probability_coords {
            x[c] = x[c].clamp(0.0, PROB_CEILING);
        }
    };
    let mut x = init.to_vec();
    clamp(&mut x);
    let mut best = f64::INFINITY;
    for iter in 1..=problem.max_iters {
        let mut y = (problem.map)(&x);
        if let Some(c) = y.iter().position(|v| !v.is_finite()) {
            return Err(SolverError::Divergence { coordinate: c });
        }
        clamp(&mut y);
        let r = residual(&x, &y);
        best = best.min(r);
        if r <= problem.tolerance {
            return Ok(FixedPointSolution {
                x,
                residual: r,
                iterations: iter,
            });
        }
        let a = problem.damping;
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = (1.0 - a) * *xi + a * yi;
        }
        clamp(&mut x);
    }
    Err(SolverError::NonConvergence {
        best_residual: best,
        iterations: problem.max_iters,
    })
}

/// Solve with the configured damping, retrying once at `0.1` on non-convergence.
pub fn solve_with_fallback<F: Fn(&[f64]) -> Vec<f64>>(
    mut problem: FixedPointProblem<F>,
    init: &[f64],
) -> Result<FixedPointSolution, SolverError> {
    match solve_fixed_point(&problem, init) {
        Err(SolverError::NonConvergence { .. }) if problem.damping > 0.1 => {
            problem.damping = 0.1;
            solve_fixed_point(&problem, init)
        }
        other => other,
    }
}
