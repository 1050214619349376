//! Thinning simulation of univariate Hawkes processes.
//!
//! Candidates are proposed from a homogeneous Poisson process whose rate is
//! `μ + Σ_j φ̄(t - t_j)`, where φ̄(s) = sup_{u >= s} φ(u) is the non-increasing
//! envelope of the kernel. The bound stays valid until the next candidate
//! because φ̄ only decreases, so the rising part of the Rayleigh kernel is
//! handled exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{HawkesModel, KernelError, KernelFamily, KernelParams};
use crate::likelihood::{EventSequence, LikelihoodError};

/// Hard cap on the number of simulated events.
pub const MAX_EVENTS: usize = 10_000_000;

// Relative bound on the history terms left out of each intensity sum.
const TAIL_TOLERANCE: f64 = 1e-16;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error(
        "model has branching ratio {0} >= 1 and would explode; set allow_unstable to simulate it anyway"
    )]
    Unstable(f64),
    #[error("simulation exceeded {MAX_EVENTS} events before reaching t = {horizon} (stopped at t = {reached})")]
    Runaway { horizon: f64, reached: f64 },
    #[error("horizon must be finite and positive, got {0}")]
    Horizon(f64),
    #[error(transparent)]
    Model(#[from] KernelError),
    #[error(transparent)]
    Sequence(#[from] LikelihoodError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub model: HawkesModel,
    pub horizon: f64,
    pub seed: u64,
    /// ChaCha stream index; distinct streams under one seed are independent.
    #[serde(default)]
    pub stream: u64,
    #[serde(default)]
    pub allow_unstable: bool,
}

impl SimulationConfig {
    pub fn new(model: HawkesModel, horizon: f64, seed: u64) -> Self {
        SimulationConfig {
            model,
            horizon,
            seed,
            stream: 0,
            allow_unstable: false,
        }
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }
}

/// The ground-truth generators used by the benchmark: μ = 0.5 with
/// EXP(0.06, 0.2), PWL(0.06, 1.0, 11), QEXP(0.06, 0.5) or RAY(0.06, 0.2).
pub fn preset(family: KernelFamily) -> HawkesModel {
    let kernel = match family {
        KernelFamily::Exp => KernelParams::Exp {
            alpha: 0.06,
            beta: 0.2,
        },
        KernelFamily::Pwl => KernelParams::Pwl {
            k: 0.06,
            c: 1.0,
            p: 11.0,
        },
        KernelFamily::Qexp => KernelParams::Qexp { a: 0.06, q: 0.5 },
        KernelFamily::Ray => KernelParams::Ray {
            gamma: 0.06,
            eta: 0.2,
        },
    };
    HawkesModel { mu: 0.5, kernel }
}

pub fn simulate(config: &SimulationConfig) -> Result<EventSequence, SimulationError> {
    let SimulationConfig {
        model,
        horizon,
        seed,
        stream,
        allow_unstable,
    } = *config;
    model.validate()?;
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(SimulationError::Horizon(horizon));
    }
    let ratio = model.kernel.norm();
    if ratio >= 1.0 && !allow_unstable {
        return Err(SimulationError::Unstable(ratio));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let kernel = &model.kernel;
    let mut times: Vec<f64> = Vec::new();
    let mut t = 0.0;
    loop {
        let bound = dominating_rate(kernel, &times, t, model.mu);
        if bound <= 0.0 {
            break;
        }
        let wait: f64 = rng.sample(Exp1);
        t += wait / bound;
        if t > horizon {
            break;
        }
        let lambda = intensity(kernel, &times, t, model.mu);
        let u: f64 = rng.random();
        if u * bound <= lambda {
            // a candidate can round onto the previous event when the rate is huge
            if times.last().is_some_and(|&last| t <= last) {
                continue;
            }
            times.push(t);
            if times.len() > MAX_EVENTS {
                return Err(SimulationError::Runaway {
                    horizon,
                    reached: t,
                });
            }
        }
    }
    Ok(EventSequence::new(times, horizon)?)
}

/// μ + Σ_j φ̄(t - t_j) plus a bound on the history left out of the sum.
fn dominating_rate(kernel: &KernelParams, history: &[f64], t: f64, mu: f64) -> f64 {
    let mut acc = mu;
    for (j, &tj) in history.iter().enumerate().rev() {
        let env = kernel.envelope(t - tj);
        let tail = (j + 1) as f64 * env;
        if tail == 0.0 || tail <= TAIL_TOLERANCE * acc {
            return acc + tail;
        }
        acc += env;
    }
    acc
}

fn intensity(kernel: &KernelParams, history: &[f64], t: f64, mu: f64) -> f64 {
    crate::likelihood::excitation(kernel, history, t, mu, TAIL_TOLERANCE).0
}
