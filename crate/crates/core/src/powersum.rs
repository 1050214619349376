//! Power-law history sums through an exponential-sum expansion.
//!
//! For x > 0 and p > 0,
//!
//! ```text
//! x^{-p} = 1/Γ(p) ∫ exp(p·u - x·e^u) du      (u over the real line)
//! ```
//!
//! The integrand is entire and decays in both directions, so the trapezoidal
//! rule converges geometrically in the node spacing. Each node turns the
//! kernel into a weighted exponential, and a sum of exponentials over the
//! history obeys the same O(1)-per-event recursion as the exponential kernel.
//! Node spacing and range are chosen for a relative error near 1e-16 on every
//! lag in `[0, max_lag]`.

use std::f64::consts::PI;

use crate::kernel::{KernelParams, QEXP_UNIT_BAND};

/// `amplitude · (t + offset)^{-exponent}`, with the amplitude kept in log form
/// so that steep Q-exponential kernels do not overflow.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PowerLaw {
    pub log_amplitude: f64,
    pub offset: f64,
    pub exponent: f64,
}

impl PowerLaw {
    pub fn of(kernel: &KernelParams) -> Option<PowerLaw> {
        match *kernel {
            KernelParams::Pwl { k, c, p } => Some(PowerLaw {
                log_amplitude: k.ln(),
                offset: c,
                exponent: p,
            }),
            // a [1 + (q-1)t]^{-1/(q-1)} = a (q-1)^{-P} (t + 1/(q-1))^{-P}, P = 1/(q-1)
            KernelParams::Qexp { a, q } if q > 1.0 + QEXP_UNIT_BAND => {
                let exponent = (q - 1.0).recip();
                Some(PowerLaw {
                    log_amplitude: a.ln() - exponent * (q - 1.0).ln(),
                    offset: exponent,
                    exponent,
                })
            }
            _ => None,
        }
    }

    /// Lag beyond which a single term is below `floor`.
    fn reach(&self, floor: f64) -> f64 {
        let log_x = (self.log_amplitude - floor.ln()) / self.exponent;
        (log_x.exp() - self.offset).max(0.0)
    }
}

/// Exponents this large make the log-weights cancel badly; the direct walk is
/// short for them anyway.
const MAX_EXPONENT: f64 = 200.0;
// -ln(1e-17)
const TRUNCATION: f64 = 39.1;

/// Largest trapezoid spacing whose discretization error stays near
/// e^{-TRUNCATION} relative.
///
/// Shifting the contour to Im u = y multiplies the integrand's magnitude by at
/// most (cos y)^{-p}, so the error is about (cos y)^{-p} e^{-2πy/h}, minimized at
/// tan y = 2π/(hp).
fn node_spacing(p: f64) -> f64 {
    let log_error = |h: f64| {
        let y = (2.0 * PI / (h * p)).atan();
        -p * y.cos().ln() - 2.0 * PI * y / h
    };
    let (mut lo, mut hi) = (1e-4, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if log_error(mid) <= -TRUNCATION - 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[derive(Debug, Clone)]
pub(crate) struct ExpSum {
    rates: Vec<f64>,
    weights: Vec<f64>,
}

impl ExpSum {
    pub fn new(law: &PowerLaw, max_lag: f64) -> Option<ExpSum> {
        let p = law.exponent;
        let c = law.offset;
        if !(p > 0.0 && p <= MAX_EXPONENT && c > 0.0 && max_lag.is_finite()) {
            return None;
        }
        let h = node_spacing(p);
        let ln_gamma = libm::lgamma(p);
        // The upper incomplete gamma Q(p, 2p + 45) is below 1e-17 for all p.
        let u_hi = ((2.0 * p + 45.0) / c).ln();
        // The left tail ∫_{-∞}^{u} e^{pu} is negligible against the smallest term.
        let u_lo = -(c + max_lag).ln() + (libm::lgamma(p + 1.0) - TRUNCATION) / p;
        let (k_lo, k_hi) = ((u_lo / h).floor() as i64, (u_hi / h).ceil() as i64);

        let base = h.ln() + law.log_amplitude - ln_gamma;
        let (mut rates, mut weights) = (Vec::new(), Vec::new());
        for k in k_lo..=k_hi {
            let u = k as f64 * h;
            let rate = u.exp();
            let weight = (base + p * u - c * rate).exp();
            if weight > 0.0 {
                rates.push(rate);
                weights.push(weight);
            }
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return None;
        }
        Some(ExpSum { rates, weights })
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    /// Calls `visit(i, Σ_{j<i} φ(t_i - t_j))` for every event in order.
    pub fn scan<E>(
        &self,
        times: &[f64],
        mut visit: impl FnMut(usize, f64) -> Result<(), E>,
    ) -> Result<(), E> {
        let mut state = vec![0.0; self.len()];
        for (i, &ti) in times.iter().enumerate() {
            let mut total = 0.0;
            if i > 0 {
                let dt = ti - times[i - 1];
                for ((s, &r), &w) in state.iter_mut().zip(&self.rates).zip(&self.weights) {
                    *s = (-r * dt).exp() * (*s + w);
                    total += *s;
                }
            }
            visit(i, total)?;
        }
        Ok(())
    }
}

/// The expansion for `kernel` on `times`, if it is cheaper than walking the
/// history directly down to a relative tail of `tail_tolerance`.
pub(crate) fn expansion_for(
    kernel: &KernelParams,
    times: &[f64],
    mu: f64,
    tail_tolerance: f64,
) -> Option<ExpSum> {
    let law = PowerLaw::of(kernel)?;
    let n = times.len();
    if n < 64 || tail_tolerance <= 0.0 || mu <= 0.0 {
        return None;
    }
    let span = times[n - 1] - times[0];
    let per_unit = n as f64 / span.max(f64::MIN_POSITIVE);
    // Terms past `reach` are negligible against μ, so the expansion only has
    // to be accurate up to there; beyond it, it still underestimates by at
    // most a relative 1e-17 of the term at `reach`.
    let reach = law.reach(tail_tolerance * mu / n as f64).min(span);
    let walk = reach * per_unit;
    let sum = ExpSum::new(&law, reach)?;
    (walk > 0.5 * sum.len() as f64).then_some(sum)
}
