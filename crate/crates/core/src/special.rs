//! Principal branch of the Lambert-W function.

use std::f64::consts::E;

use thiserror::Error;

/// The branch point -1/e.
pub const BRANCH_POINT: f64 = -1.0 / E;

/// Arguments this far below the branch point are still clamped onto it.
const BRANCH_SLACK: f64 = 1e-12;
const MAX_ITERATIONS: usize = 50;
const STEP_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("lambert_w0 argument {0} is below the branch point -1/e")]
pub struct LambertDomainError(pub f64);

/// W₀(x): the solution `w >= -1` of `w e^w = x`, for `x >= -1/e`.
pub fn lambert_w0(x: f64) -> Result<f64, LambertDomainError> {
    if x.is_nan() || x < BRANCH_POINT - BRANCH_SLACK {
        return Err(LambertDomainError(x));
    }
    if x <= BRANCH_POINT {
        return Ok(-1.0);
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == f64::INFINITY {
        return Ok(f64::INFINITY);
    }

    // Distance to the branch point in the natural variable p = √(2(ex + 1)).
    let p = (2.0 * E.mul_add(x, 1.0)).max(0.0).sqrt();
    if p < 1e-3 {
        return Ok(branch_series(p));
    }

    let mut w = if x < -0.25 {
        branch_series(p)
    } else if x < 3.0 {
        let l = x.ln_1p();
        l * (1.0 - l.ln_1p() / (2.0 + l))
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };

    for _ in 0..MAX_ITERATIONS {
        // Halley on f(w) = w - x e^{-w}, i.e. (w e^w - x) scaled by e^{-w}.
        let g = w - x * (-w).exp();
        if g == 0.0 {
            break;
        }
        let wp1 = w + 1.0;
        let step = g / (wp1 - (w + 2.0) * g / (2.0 * wp1));
        w -= step;
        if step.abs() <= STEP_TOLERANCE * w.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(w)
}

/// W₀(y)/y, continuous through y = 0 where it equals 1.
pub fn lambert_w0_ratio(y: f64) -> Result<f64, LambertDomainError> {
    if y.abs() < 1e-4 {
        // 1 - y + 3y²/2 - 8y³/3 + 125y⁴/24
        return Ok(1.0 + y * (-1.0 + y * (1.5 + y * (-8.0 / 3.0 + y * 125.0 / 24.0))));
    }
    Ok(lambert_w0(y)? / y)
}

// Expansion of W₀ about the branch point.
fn branch_series(p: f64) -> f64 {
    const C: [f64; 6] = [
        -1.0,
        1.0,
        -1.0 / 3.0,
        11.0 / 72.0,
        -43.0 / 540.0,
        769.0 / 17280.0,
    ];
    C.iter().rev().fold(0.0, |acc, &c| acc * p + c)
}
