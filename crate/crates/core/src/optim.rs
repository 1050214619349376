//! Nelder–Mead simplex minimization.
//!
//! Canonical coefficients: reflection 1, expansion 2, outside and inside
//! contraction 1/2, shrink 1/2. Non-finite objective values inside the search
//! are treated as +∞, so the simplex simply backs away from them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimError {
    #[error("objective is not finite at the starting point ({0})")]
    NonFiniteStart(f64),
    #[error("starting point is empty")]
    EmptyStart,
    #[error("invalid optimizer configuration: {0}")]
    Config(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub max_iterations: usize,
    /// Largest coordinate distance from the best vertex.
    pub xtol: f64,
    /// Spread of objective values, relative to `max(1, |f_best|)`.
    pub ftol: f64,
    /// Edge length of the initial simplex along each coordinate.
    pub initial_step: f64,
    /// Rebuild the simplex around the converged point once and continue.
    pub restart: bool,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            max_iterations: 2000,
            xtol: 1e-8,
            ftol: 1e-10,
            initial_step: 0.1,
            restart: false,
        }
    }
}

impl OptimConfig {
    fn check(&self) -> Result<(), OptimError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.xtol) || !positive(self.ftol) {
            return Err(OptimError::Config("tolerances must be positive"));
        }
        if !positive(self.initial_step) {
            return Err(OptimError::Config("initial_step must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimOutcome {
    pub argmin: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

struct Simplex {
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl Simplex {
    fn around<F: FnMut(&[f64]) -> f64>(x0: &[f64], f0: f64, step: f64, f: &mut F) -> Self {
        let mut points = vec![x0.to_vec()];
        let mut values = vec![f0];
        for i in 0..x0.len() {
            let mut v = x0.to_vec();
            v[i] += step;
            values.push(finite_or_inf(f(&v)));
            points.push(v);
        }
        Simplex { points, values }
    }

    // Stable sort keeps earlier vertices first on ties, so runs are reproducible.
    fn order(&mut self) {
        let mut idx: Vec<usize> = (0..self.points.len()).collect();
        idx.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]));
        self.points = idx.iter().map(|&i| self.points[i].clone()).collect();
        self.values = idx.iter().map(|&i| self.values[i]).collect();
    }

    fn diameter(&self) -> f64 {
        let best = &self.points[0];
        self.points[1..]
            .iter()
            .flat_map(|p| p.iter().zip(best).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max)
    }

    fn spread(&self) -> f64 {
        let best = self.values[0];
        self.values[1..]
            .iter()
            .map(|v| (v - best).abs())
            .fold(0.0, f64::max)
    }
}

fn finite_or_inf(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Minimizes `objective` starting from `x0`.
pub fn nelder_mead<F>(
    mut objective: F,
    x0: &[f64],
    config: &OptimConfig,
) -> Result<OptimOutcome, OptimError>
where
    F: FnMut(&[f64]) -> f64,
{
    config.check()?;
    if x0.is_empty() {
        return Err(OptimError::EmptyStart);
    }
    let f0 = objective(x0);
    if !f0.is_finite() {
        return Err(OptimError::NonFiniteStart(f0));
    }

    let mut evaluations = 1;
    let mut counted = |x: &[f64]| {
        evaluations += 1;
        objective(x)
    };

    let mut outcome = run(&mut counted, x0, f0, config, config.max_iterations);
    if config.restart && outcome.iterations < config.max_iterations {
        let budget = config.max_iterations - outcome.iterations;
        let second = run(&mut counted, &outcome.argmin, outcome.value, config, budget);
        outcome = OptimOutcome {
            iterations: outcome.iterations + second.iterations,
            ..second
        };
    }
    outcome.evaluations = evaluations;
    Ok(outcome)
}

fn run<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    x0: &[f64],
    f0: f64,
    config: &OptimConfig,
    budget: usize,
) -> OptimOutcome {
    let n = x0.len();
    let mut simplex = Simplex::around(x0, f0, config.initial_step, f);
    simplex.order();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < budget {
        let scale = simplex.values[0].abs().max(1.0);
        if simplex.diameter() <= config.xtol && simplex.spread() <= config.ftol * scale {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|i| simplex.points[..n].iter().map(|p| p[i]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex.points[n].clone();
        let along = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst)
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };

        let reflected = along(REFLECT);
        let f_reflected = finite_or_inf(f(&reflected));
        let (best, second_worst, worst_value) =
            (simplex.values[0], simplex.values[n - 1], simplex.values[n]);

        if f_reflected < best {
            let expanded = along(EXPAND);
            let f_expanded = finite_or_inf(f(&expanded));
            if f_expanded < f_reflected {
                replace_worst(&mut simplex, expanded, f_expanded);
            } else {
                replace_worst(&mut simplex, reflected, f_reflected);
            }
        } else if f_reflected < second_worst {
            replace_worst(&mut simplex, reflected, f_reflected);
        } else {
            let (candidate, f_candidate, accept_at) = if f_reflected < worst_value {
                let outside = along(CONTRACT * REFLECT);
                let fo = finite_or_inf(f(&outside));
                (outside, fo, f_reflected)
            } else {
                let inside = along(-CONTRACT);
                let fi = finite_or_inf(f(&inside));
                (inside, fi, worst_value)
            };
            if f_candidate <= accept_at && f_candidate.is_finite() {
                replace_worst(&mut simplex, candidate, f_candidate);
            } else {
                let anchor = simplex.points[0].clone();
                for k in 1..=n {
                    let moved: Vec<f64> = simplex.points[k]
                        .iter()
                        .zip(&anchor)
                        .map(|(x, a)| a + SHRINK * (x - a))
                        .collect();
                    simplex.values[k] = finite_or_inf(f(&moved));
                    simplex.points[k] = moved;
                }
            }
        }
        simplex.order();
    }

    OptimOutcome {
        argmin: simplex.points[0].clone(),
        value: simplex.values[0],
        iterations,
        evaluations: 0,
        converged,
    }
}

fn replace_worst(simplex: &mut Simplex, point: Vec<f64>, value: f64) {
    let last = simplex.points.len() - 1;
    simplex.points[last] = point;
    simplex.values[last] = value;
}
