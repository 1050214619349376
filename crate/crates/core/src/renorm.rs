//! Renormalization factors.
//!
//! Given a kernel with branching ratio ‖φ‖ and a safety margin ε > 0, each
//! strategy rescales one parameter (or two jointly) so that the new kernel has
//! ‖φ‖ = 1/(1+ε) exactly, and resets the background rate to
//! μ' = Λ̂ (1 - 1/(1+ε)) so that the implied steady rate μ'/(1 - ‖φ‖) equals
//! the empirical rate Λ̂ = N/T.
//!
//! With s = ‖φ‖(1+ε):
//!
//! | family | single-parameter                                   | joint                            |
//! |--------|----------------------------------------------------|----------------------------------|
//! | EXP    | α/s, or β·s                                        | (α/√s, β√s)                      |
//! | PWL    | K/s, or c·s^{1/(p-1)}, or p = 1 + W(Δ ln c)/ln c     | (K/√s, c·√s^{1/(p-1)}), (K/√s, p) |
//! | QEXP   | a/s, or q = 2 - (2-q)s                             | (a/√s, 2 - (2-q)√s)              |
//! | RAY    | γ/s, or η·s                                        | (γ/√s, η√s)                      |
//!
//! For the exponent of the power law, Δ = s (p-1) c^{p-1} for the single
//! strategy and Δ = √s (p-1) c^{p-1} for the joint (K, p) one.
//!
//! A strategy that moves p or q is infeasible when the result lands within
//! [`MIN_SHAPE_GAP`] of its boundary: p' - 1 (or 2 - q') would then be stored
//! with a relative rounding error large enough to miss the target ratio.

use std::fmt;

use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{HawkesModel, KernelError, KernelFamily, KernelParams};
use crate::likelihood::EventSequence;
use crate::special::lambert_w0_ratio;

/// Smallest accepted p' - 1 or 2 - q' for strategies that move the exponent.
pub const MIN_SHAPE_GAP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RenormError {
    #[error("safety margin epsilon must be finite and > 0, got {0}")]
    Epsilon(f64),
    #[error("strategy {strategy} does not apply to a {family} kernel")]
    FamilyMismatch {
        strategy: RenormStrategy,
        family: KernelFamily,
    },
    #[error("strategy {strategy} is infeasible: {reason}")]
    Infeasible {
        strategy: RenormStrategy,
        reason: String,
    },
    #[error("horizon must be finite and positive, got {0}")]
    Horizon(f64),
    #[error("empirical rate must be finite and non-negative, got {0}")]
    Rate(f64),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Which parameter(s) a renormalization rescales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RenormStrategy {
    OverAlpha,
    OverBeta,
    JointAlphaBeta,
    OverK,
    OverC,
    OverP,
    JointKC,
    JointKP,
    OverA,
    OverQ,
    JointAQ,
    OverGamma,
    OverEta,
    JointGammaEta,
}

impl RenormStrategy {
    /// Strategies for `family`, in reporting order.
    pub fn for_family(family: KernelFamily) -> &'static [RenormStrategy] {
        use RenormStrategy::*;
        match family {
            KernelFamily::Exp => &[OverAlpha, OverBeta, JointAlphaBeta],
            KernelFamily::Pwl => &[OverK, OverC, OverP, JointKC, JointKP],
            KernelFamily::Qexp => &[OverA, OverQ, JointAQ],
            KernelFamily::Ray => &[OverGamma, OverEta, JointGammaEta],
        }
    }

    pub fn family(self) -> KernelFamily {
        use RenormStrategy::*;
        match self {
            OverAlpha | OverBeta | JointAlphaBeta => KernelFamily::Exp,
            OverK | OverC | OverP | JointKC | JointKP => KernelFamily::Pwl,
            OverA | OverQ | JointAQ => KernelFamily::Qexp,
            OverGamma | OverEta | JointGammaEta => KernelFamily::Ray,
        }
    }

    pub fn as_str(self) -> &'static str {
        use RenormStrategy::*;
        match self {
            OverAlpha => "OverAlpha",
            OverBeta => "OverBeta",
            JointAlphaBeta => "JointAlphaBeta",
            OverK => "OverK",
            OverC => "OverC",
            OverP => "OverP",
            JointKC => "JointKC",
            JointKP => "JointKP",
            OverA => "OverA",
            OverQ => "OverQ",
            JointAQ => "JointAQ",
            OverGamma => "OverGamma",
            OverEta => "OverEta",
            JointGammaEta => "JointGammaEta",
        }
    }

    pub fn parse(s: &str) -> Option<RenormStrategy> {
        KernelFamily::ALL
            .iter()
            .flat_map(|&f| Self::for_family(f).iter().copied())
            .find(|st| st.as_str() == s)
    }
}

impl fmt::Display for RenormStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A renormalized model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenormResult {
    pub model: HawkesModel,
    pub strategy: RenormStrategy,
    pub epsilon: f64,
    pub achieved_ratio: f64,
    /// A Q-exponential moved from unbounded (`q > 1`) to finite support
    /// (`q' < 1`) or back.
    pub support_changed: bool,
}

/// Λ̂ = N/T.
pub fn lambda_hat(seq: &EventSequence) -> f64 {
    seq.empirical_rate()
}

/// Λ̂ as N/T from raw counts.
pub fn lambda_hat_from_counts(n_events: usize, horizon: f64) -> Result<f64, RenormError> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(RenormError::Horizon(horizon));
    }
    Ok(n_events as f64 / horizon)
}

/// μ' = Λ̂ (1 - 1/(1+ε)).
pub fn renormalized_mu(lambda_hat: f64, epsilon: f64) -> f64 {
    lambda_hat * (1.0 - 1.0 / (1.0 + epsilon))
}

pub fn renormalize(
    kernel: &KernelParams,
    strategy: RenormStrategy,
    epsilon: f64,
    lambda_hat: f64,
) -> Result<RenormResult, RenormError> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(RenormError::Epsilon(epsilon));
    }
    if !(lambda_hat.is_finite() && lambda_hat >= 0.0) {
        return Err(RenormError::Rate(lambda_hat));
    }
    kernel.validate()?;
    if strategy.family() != kernel.family() {
        return Err(RenormError::FamilyMismatch {
            strategy,
            family: kernel.family(),
        });
    }

    let scale = kernel.norm() * (1.0 + epsilon);
    let root = scale.sqrt();
    use RenormStrategy::*;
    let renormed = match (*kernel, strategy) {
        (KernelParams::Exp { alpha, beta }, OverAlpha) => KernelParams::Exp {
            alpha: alpha / scale,
            beta,
        },
        (KernelParams::Exp { alpha, beta }, OverBeta) => KernelParams::Exp {
            alpha,
            beta: beta * scale,
        },
        (KernelParams::Exp { alpha, beta }, JointAlphaBeta) => KernelParams::Exp {
            alpha: alpha / root,
            beta: beta * root,
        },
        (KernelParams::Pwl { k, c, p }, OverK) => KernelParams::Pwl { k: k / scale, c, p },
        (KernelParams::Pwl { k, c, p }, OverC) => KernelParams::Pwl {
            k,
            c: c * scale.powf(1.0 / (p - 1.0)),
            p,
        },
        (KernelParams::Pwl { k, c, p }, OverP) => KernelParams::Pwl {
            k,
            c,
            p: power_law_exponent(strategy, scale, c, p)?,
        },
        (KernelParams::Pwl { k, c, p }, JointKC) => KernelParams::Pwl {
            k: k / root,
            c: c * root.powf(1.0 / (p - 1.0)),
            p,
        },
        (KernelParams::Pwl { k, c, p }, JointKP) => KernelParams::Pwl {
            k: k / root,
            c,
            p: power_law_exponent(strategy, root, c, p)?,
        },
        (KernelParams::Qexp { a, q }, OverA) => KernelParams::Qexp { a: a / scale, q },
        (KernelParams::Qexp { a, q }, OverQ) => KernelParams::Qexp {
            a,
            q: 2.0 - (2.0 - q) * scale,
        },
        (KernelParams::Qexp { a, q }, JointAQ) => KernelParams::Qexp {
            a: a / root,
            q: 2.0 - (2.0 - q) * root,
        },
        (KernelParams::Ray { gamma, eta }, OverGamma) => KernelParams::Ray {
            gamma: gamma / scale,
            eta,
        },
        (KernelParams::Ray { gamma, eta }, OverEta) => KernelParams::Ray {
            gamma,
            eta: eta * scale,
        },
        (KernelParams::Ray { gamma, eta }, JointGammaEta) => KernelParams::Ray {
            gamma: gamma / root,
            eta: eta * root,
        },
        _ => unreachable!("family checked above"),
    };

    if let KernelParams::Qexp { q, .. } = renormed {
        assert!(q < 2.0, "renormalized q' = {q} must stay below 2");
    }
    renormed.validate().map_err(|e| RenormError::Infeasible {
        strategy,
        reason: e.to_string(),
    })?;

    let gap = match (strategy, renormed) {
        (OverP | JointKP, KernelParams::Pwl { p, .. }) => p - 1.0,
        (OverQ | JointAQ, KernelParams::Qexp { q, .. }) => 2.0 - q,
        _ => f64::INFINITY,
    };
    if gap < MIN_SHAPE_GAP {
        return Err(RenormError::Infeasible {
            strategy,
            reason: format!("shape parameter lands {gap:e} from its boundary"),
        });
    }

    let support_changed = match (kernel, &renormed) {
        (KernelParams::Qexp { q, .. }, KernelParams::Qexp { q: q_new, .. }) => {
            (*q > 1.0) != (*q_new > 1.0)
        }
        _ => false,
    };

    Ok(RenormResult {
        model: HawkesModel {
            mu: renormalized_mu(lambda_hat, epsilon),
            kernel: renormed,
        },
        strategy,
        epsilon,
        achieved_ratio: renormed.norm(),
        support_changed,
    })
}

/// Solves (p'-1) c^{p'-1} = Δ with Δ = factor·(p-1)·c^{p-1} for p' on the
/// principal Lambert-W branch: p' = 1 + W(Δ ln c)/ln c = 1 + Δ·[W(y)/y].
fn power_law_exponent(
    strategy: RenormStrategy,
    factor: f64,
    c: f64,
    p: f64,
) -> Result<f64, RenormError> {
    let delta = factor * (p - 1.0) * c.powf(p - 1.0);
    let log_c = c.ln();
    let y = delta * log_c;
    let ratio = lambert_w0_ratio(y).map_err(|_| RenormError::Infeasible {
        strategy,
        reason: format!("Lambert-W argument Δ·ln c = {y} is below -1/e"),
    })?;
    let p_new = 1.0 + delta * ratio;
    if !(p_new.is_finite() && p_new > 1.0) {
        return Err(RenormError::Infeasible {
            strategy,
            reason: format!("renormalized exponent p' = {p_new} is not > 1"),
        });
    }
    Ok(p_new)
}

/// Every feasible renormalization of `model`'s kernel, with μ' from the
/// empirical rate of `seq`. Infeasible strategies are skipped.
pub fn enumerate_candidates(
    model: &HawkesModel,
    seq: &EventSequence,
    epsilon: f64,
) -> Vec<RenormResult> {
    let rate = lambda_hat(seq);
    RenormStrategy::for_family(model.family())
        .iter()
        .filter_map(
            |&strategy| match renormalize(&model.kernel, strategy, epsilon, rate) {
                Ok(r) => Some(r),
                Err(e) => {
                    debug!("skipping renormalization candidate: {e}");
                    None
                }
            },
        )
        .collect()
}
