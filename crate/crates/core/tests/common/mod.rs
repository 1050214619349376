#![allow(dead_code)]

use hawkes_oracle::adaptive_simpson;
use hawkes_rf::{EventSequence, HawkesModel, KernelFamily, KernelParams};
use rand::Rng;

/// ∫₀^∞ φ by adaptive Simpson on `evaluate`, after a change of variables that
/// turns power-law tails into exponential ones.
///
/// In the new variable a power-law tail decays like e^{-decay·u}; the part
/// past the last panel (needed when `decay` is tiny) is added as g(U)/decay.
pub fn quadrature_ratio(kernel: &KernelParams) -> f64 {
    let phi = |t: f64| kernel.evaluate(t).unwrap();
    let tol = 1e-12 * kernel.branching_ratio().unwrap().max(1.0);
    let with_tail = |g: &dyn Fn(f64) -> f64, decay: f64| {
        let upper = (45.0 / decay).min(300.0);
        adaptive_simpson(g, 0.0, upper, tol, 256) + g(upper) / decay
    };
    match *kernel {
        KernelParams::Exp { beta, .. } => adaptive_simpson(phi, 0.0, 45.0 / beta, tol, 64),
        KernelParams::Ray { eta, .. } => adaptive_simpson(phi, 0.0, (45.0 / eta).sqrt(), tol, 64),
        KernelParams::Pwl { c, p, .. } => {
            // t = c (e^u - 1)
            with_tail(&|u: f64| phi(c * u.exp_m1()) * c * u.exp(), p - 1.0)
        }
        KernelParams::Qexp { q, .. } if q > 1.0 + 1e-6 => {
            // t = (e^u - 1)/(q - 1)
            let s = q - 1.0;
            with_tail(&|u: f64| phi(u.exp_m1() / s) * u.exp() / s, (2.0 - q) / s)
        }
        KernelParams::Qexp { q, .. } if q < 1.0 - 1e-6 => {
            let end = 1.0 / (1.0 - q);
            if end >= 4.0 {
                adaptive_simpson(phi, 0.0, end, tol, 256)
            } else {
                // φ vanishes like (L - t)^{L} at the support end L; t = L (1 - v^4)
                // smooths that root
                let g = |v: f64| phi(end * (1.0 - v.powi(4))) * 4.0 * end * v.powi(3);
                adaptive_simpson(g, 0.0, 1.0, tol, 64)
            }
        }
        KernelParams::Qexp { .. } => adaptive_simpson(phi, 0.0, 60.0, tol, 256),
    }
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// A random kernel of `family` with branching ratio exactly `ratio` (up to
/// rounding), obtained by scaling the amplitude.
pub fn kernel_with_ratio<R: Rng>(rng: &mut R, family: KernelFamily, ratio: f64) -> KernelParams {
    match family {
        KernelFamily::Exp => {
            let beta = log_uniform(rng, 0.05, 20.0);
            KernelParams::exp(ratio * beta, beta).unwrap()
        }
        KernelFamily::Pwl => {
            let c = log_uniform(rng, 0.05, 20.0);
            let p = 1.0 + log_uniform(rng, 0.2, 10.0);
            KernelParams::pwl(ratio * (p - 1.0) * c.powf(p - 1.0), c, p).unwrap()
        }
        KernelFamily::Qexp => {
            let q = rng.random_range(-1.0..1.9);
            KernelParams::qexp(ratio * (2.0 - q), q).unwrap()
        }
        KernelFamily::Ray => {
            let eta = log_uniform(rng, 0.01, 20.0);
            KernelParams::ray(ratio * 2.0 * eta, eta).unwrap()
        }
    }
}

/// A stationary model whose events arrive at roughly `rate` per unit time.
pub fn stationary_model<R: Rng>(rng: &mut R, family: KernelFamily, rate: f64) -> HawkesModel {
    let ratio = rng.random_range(0.05..0.8);
    let kernel = kernel_with_ratio(rng, family, ratio);
    HawkesModel::new(rate * (1.0 - ratio), kernel).unwrap()
}

/// Compensator increments Λ(t_{i+1}) - Λ(t_i) under `model`, from the
/// closed-form kernel cumulative.
///
/// The walk back through history stops once the kernel mass beyond the
/// current lag, times the number of older events, is negligible.
pub fn rescaled_gaps(model: &HawkesModel, seq: &EventSequence) -> Vec<f64> {
    let times = seq.times();
    let kernel = &model.kernel;
    let total = kernel.branching_ratio().unwrap();
    let cum = |s: f64| kernel.cumulative(s).unwrap();
    (1..times.len())
        .map(|i| {
            let (lo, hi) = (times[i - 1], times[i]);
            let mut inc = model.mu * (hi - lo);
            for j in (0..i).rev() {
                inc += cum(hi - times[j]) - cum(lo - times[j]);
                if (j as f64) * (total - cum(lo - times[j])) < 1e-15 * inc {
                    break;
                }
            }
            inc
        })
        .collect()
}

pub fn relative_error(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}
