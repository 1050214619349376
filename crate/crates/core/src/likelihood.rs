//! Event sequences, conditional intensity and log-likelihood.
//!
//! ```text
//! λ(t) = μ + Σ_{t_j < t} φ(t - t_j)
//! llh  = Σ_i log λ(t_i) - [ μT + Σ_i ∫₀^{T - t_i} φ ]
//! ```
//!
//! The exponential kernel uses the O(N) recursion
//! `A_i = e^{-β(t_i - t_{i-1})} (1 + A_{i-1})`; the other families sum the
//! history directly, walking back from the most recent event and stopping once
//! a rigorous bound on the remaining terms drops below a relative tolerance
//! (see [`LikelihoodOptions`]). Long-memory power laws (PWL, and QEXP with
//! q > 1) switch to an exponential-sum expansion accurate to about 1e-15
//! relative when the walk would be longer than the expansion.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{HawkesModel, KernelError, KernelParams};
use crate::powersum::expansion_for;

#[derive(Debug, Error)]
pub enum LikelihoodError {
    #[error("invalid event sequence: {0}")]
    InvalidSequence(String),
    #[error("time {t} lies outside the observation window [0, {horizon}]")]
    OutsideWindow { t: f64, horizon: f64 },
    #[error(
        "intensity at event {index} (t = {time}) is {intensity}; log-likelihood is not finite"
    )]
    NonFinite {
        index: usize,
        time: f64,
        intensity: f64,
    },
    #[error("log-likelihood is not finite ({0})")]
    NonFiniteTotal(f64),
    #[error("oracle needs at least 1000 quadrature steps, got {0}")]
    TooFewSteps(usize),
    #[error(transparent)]
    Model(#[from] KernelError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Strictly ascending event times observed on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SequenceRepr")]
pub struct EventSequence {
    horizon: f64,
    times: Vec<f64>,
}

#[derive(Deserialize)]
struct SequenceRepr {
    horizon: f64,
    times: Vec<f64>,
}

impl TryFrom<SequenceRepr> for EventSequence {
    type Error = LikelihoodError;

    fn try_from(r: SequenceRepr) -> Result<Self, Self::Error> {
        EventSequence::new(r.times, r.horizon)
    }
}

impl EventSequence {
    pub fn new(times: Vec<f64>, horizon: f64) -> Result<Self, LikelihoodError> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(LikelihoodError::InvalidSequence(format!(
                "horizon must be finite and positive, got {horizon}"
            )));
        }
        for (i, &t) in times.iter().enumerate() {
            if !(t.is_finite() && (0.0..=horizon).contains(&t)) {
                return Err(LikelihoodError::InvalidSequence(format!(
                    "event {i} at {t} is outside [0, {horizon}]"
                )));
            }
            if i > 0 && t <= times[i - 1] {
                return Err(LikelihoodError::InvalidSequence(format!(
                    "event {i} at {t} does not follow {} (times must be strictly ascending)",
                    times[i - 1]
                )));
            }
        }
        Ok(EventSequence { horizon, times })
    }

    pub fn empty(horizon: f64) -> Result<Self, LikelihoodError> {
        Self::new(Vec::new(), horizon)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Empirical rate N/T.
    pub fn empirical_rate(&self) -> f64 {
        self.times.len() as f64 / self.horizon
    }

    /// Text format: a `T=<horizon>` header followed by one timestamp per line.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(12 * (self.times.len() + 1));
        let _ = writeln!(out, "T={}", self.horizon);
        for t in &self.times {
            let _ = writeln!(out, "{t}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, LikelihoodError> {
        let mut horizon = None;
        let mut times = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() {
                continue;
            }
            if horizon.is_none() {
                let value = trimmed
                    .strip_prefix("T=")
                    .ok_or_else(|| LikelihoodError::Parse {
                        line,
                        message: format!("expected header `T=<horizon>`, found `{trimmed}`"),
                    })?;
                let t: f64 = value.trim().parse().map_err(|_| LikelihoodError::Parse {
                    line,
                    message: format!("invalid horizon `{value}`"),
                })?;
                horizon = Some(t);
                continue;
            }
            let t: f64 = trimmed.parse().map_err(|_| LikelihoodError::Parse {
                line,
                message: format!("invalid timestamp `{trimmed}`"),
            })?;
            if let Some(&prev) = times.last() {
                if t <= prev {
                    return Err(LikelihoodError::Parse {
                        line,
                        message: format!("timestamp {t} does not follow {prev}"),
                    });
                }
            }
            times.push(t);
        }
        let horizon = horizon.ok_or(LikelihoodError::Parse {
            line: 1,
            message: "missing `T=<horizon>` header".into(),
        })?;
        Self::new(times, horizon)
    }

    pub fn read(path: &Path) -> Result<Self, LikelihoodError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), LikelihoodError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Controls for the history sums of the non-exponential kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodOptions {
    /// The backward history walk stops at event `j` once
    /// `(j + 1) · sup_{u >= t - t_j} φ(u)` falls to `tail_tolerance` times the
    /// intensity accumulated so far. Zero keeps every term except those that
    /// are exactly zero in floating point, and disables the power-law
    /// expansion.
    pub tail_tolerance: f64,
}

impl LikelihoodOptions {
    pub const EXACT: LikelihoodOptions = LikelihoodOptions {
        tail_tolerance: 0.0,
    };
}

impl Default for LikelihoodOptions {
    fn default() -> Self {
        // Dropped mass is at most one unit in the last place of each λ(t_i).
        LikelihoodOptions {
            tail_tolerance: 1e-16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLikelihood {
    pub value: f64,
    pub n_events: usize,
}

/// `base + Σ_{j} φ(t - history_j)` summed from the most recent event backwards.
///
/// Returns the sum and an upper bound on the skipped tail.
#[inline]
pub(crate) fn excitation(
    kernel: &KernelParams,
    history: &[f64],
    t: f64,
    base: f64,
    tail_tolerance: f64,
) -> (f64, f64) {
    let mut acc = base;
    for (j, &tj) in history.iter().enumerate().rev() {
        let (value, env) = kernel.phi_and_envelope(t - tj);
        let bound = (j + 1) as f64 * env;
        if bound == 0.0 || bound <= tail_tolerance * acc {
            return (acc, bound);
        }
        acc += value;
    }
    (acc, 0.0)
}

/// λ(t), excluding any event exactly at `t`.
pub fn intensity_at(
    model: &HawkesModel,
    seq: &EventSequence,
    t: f64,
) -> Result<f64, LikelihoodError> {
    model.validate()?;
    if !(t.is_finite() && (0.0..=seq.horizon).contains(&t)) {
        return Err(LikelihoodError::OutsideWindow {
            t,
            horizon: seq.horizon,
        });
    }
    let past = seq.times.partition_point(|&tj| tj < t);
    Ok(excitation(&model.kernel, &seq.times[..past], t, model.mu, 0.0).0)
}

/// μt + Σ_{t_j < t} ∫₀^{t - t_j} φ, the integrated intensity on `[0, t]`.
pub fn compensator(
    model: &HawkesModel,
    seq: &EventSequence,
    t: f64,
) -> Result<f64, LikelihoodError> {
    model.validate()?;
    if !(t.is_finite() && (0.0..=seq.horizon).contains(&t)) {
        return Err(LikelihoodError::OutsideWindow {
            t,
            horizon: seq.horizon,
        });
    }
    let past = seq.times.partition_point(|&tj| tj < t);
    Ok(model.mu * t
        + seq.times[..past]
            .iter()
            .map(|&tj| model.kernel.integral(t - tj))
            .sum::<f64>())
}

pub fn loglikelihood(
    model: &HawkesModel,
    seq: &EventSequence,
) -> Result<LogLikelihood, LikelihoodError> {
    loglikelihood_with(model, seq, &LikelihoodOptions::default())
}

pub fn loglikelihood_with(
    model: &HawkesModel,
    seq: &EventSequence,
    options: &LikelihoodOptions,
) -> Result<LogLikelihood, LikelihoodError> {
    model.validate()?;
    let times = &seq.times;
    let kernel = &model.kernel;
    let mu = model.mu;

    let mut log_sum = 0.0;
    match *kernel {
        KernelParams::Exp { alpha, beta } => {
            let mut a = 0.0;
            for (i, &ti) in times.iter().enumerate() {
                if i > 0 {
                    a = (-beta * (ti - times[i - 1])).exp() * (1.0 + a);
                }
                log_sum += log_intensity(mu + alpha * a, i, ti)?;
            }
        }
        _ => match expansion_for(kernel, times, mu, options.tail_tolerance) {
            Some(expansion) => expansion.scan(times, |i, excited| {
                log_sum += log_intensity(mu + excited, i, times[i])?;
                Ok::<(), LikelihoodError>(())
            })?,
            None => {
                for (i, &ti) in times.iter().enumerate() {
                    let (lambda, _) =
                        excitation(kernel, &times[..i], ti, mu, options.tail_tolerance);
                    log_sum += log_intensity(lambda, i, ti)?;
                }
            }
        },
    }

    let horizon = seq.horizon;
    let kernel_mass: f64 = times.iter().map(|&ti| kernel.integral(horizon - ti)).sum();
    let value = log_sum - (mu * horizon + kernel_mass);
    if !value.is_finite() {
        return Err(LikelihoodError::NonFiniteTotal(value));
    }
    Ok(LogLikelihood {
        value,
        n_events: times.len(),
    })
}

#[inline]
fn log_intensity(lambda: f64, index: usize, time: f64) -> Result<f64, LikelihoodError> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(lambda.ln())
    } else {
        Err(LikelihoodError::NonFinite {
            index,
            time,
            intensity: lambda,
        })
    }
}

/// Slow reference log-likelihood.
///
/// Every intensity is summed over the full history, and the compensator is
/// obtained by composite Simpson quadrature of each event's kernel on a mesh
/// graded geometrically towards both ends of its integration range (the event
/// time and either the horizon or the end of the kernel's support). `steps` is
/// the number of Simpson panels used per event.
pub fn loglikelihood_oracle(
    model: &HawkesModel,
    seq: &EventSequence,
    steps: usize,
) -> Result<LogLikelihood, LikelihoodError> {
    if steps < 1000 {
        return Err(LikelihoodError::TooFewSteps(steps));
    }
    model.validate()?;
    let kernel = &model.kernel;
    let times = &seq.times;

    let mut log_sum = 0.0;
    for (i, &ti) in times.iter().enumerate() {
        let lambda = model.mu
            + times[..i]
                .iter()
                .map(|&tj| kernel.phi(ti - tj))
                .sum::<f64>();
        log_sum += log_intensity(lambda, i, ti)?;
    }

    let mut integral = model.mu * seq.horizon;
    for &tj in times {
        let mut upper = seq.horizon - tj;
        if let Some(end) = kernel.support_end() {
            upper = upper.min(end);
        }
        integral += graded_simpson(|u| kernel.phi(u), upper, steps);
    }

    let value = log_sum - integral;
    if !value.is_finite() {
        return Err(LikelihoodError::NonFiniteTotal(value));
    }
    Ok(LogLikelihood {
        value,
        n_events: times.len(),
    })
}

// Number of geometric blocks per half of the interval.
const GRADED_BLOCKS: usize = 25;

/// ∫₀^L f by Simpson on blocks [L/2·2^{-k-1}, L/2·2^{-k}] mirrored about L/2.
fn graded_simpson<F: Fn(f64) -> f64>(f: F, length: f64, steps: usize) -> f64 {
    if length <= 0.0 {
        return 0.0;
    }
    let half = 0.5 * length;
    // panels per block, rounded up to even
    let per_block = (steps / (2 * GRADED_BLOCKS)).max(2).next_multiple_of(2);
    let mut edges = Vec::with_capacity(GRADED_BLOCKS + 1);
    edges.push(0.0);
    for k in (0..GRADED_BLOCKS).rev() {
        edges.push(half * 0.5f64.powi(k as i32));
    }
    let mut total = 0.0;
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        total += simpson(&f, lo, hi, per_block);
        total += simpson(&f, length - hi, length - lo, per_block);
    }
    total
}

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut s = f(a) + f(b);
    for i in 1..panels {
        let x = a + h * i as f64;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}
