//! Maximum-likelihood fitting, with and without renormalization factors.
//!
//! The optimizer searches an unconstrained space:
//!
//! | natural parameter      | coordinate     |
//! |------------------------|----------------|
//! | μ, α, β, K, c, a, γ, η | ln x           |
//! | p (> 1)                | ln(p - 1)      |
//! | q (< 2)                | ln(2 - q)      |
//!
//! RF-MLE takes the MLE optimum, forms every renormalized candidate for a
//! given ε, and keeps whichever of {MLE, candidates} has the highest
//! log-likelihood. Ties go to the MLE model, then to the earlier strategy.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{HawkesModel, KernelError, KernelFamily, KernelParams};
use crate::likelihood::{loglikelihood, EventSequence, LikelihoodError};
use crate::optim::{nelder_mead, OptimConfig, OptimError};
use crate::renorm::{enumerate_candidates, RenormStrategy};

#[derive(Debug, Error)]
pub enum FitError {
    #[error("cannot build an initial model from an empty sequence")]
    EmptySequence,
    #[error("initial model is a {found} kernel but a {expected} fit was requested")]
    FamilyMismatch {
        expected: KernelFamily,
        found: KernelFamily,
    },
    #[error("initial model {model:?} is unusable: {reason}")]
    InitialPoint { model: HawkesModel, reason: String },
    #[error("safety margin epsilon must be finite and > 0, got {0}")]
    Epsilon(f64),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
    #[error(transparent)]
    Optim(#[from] OptimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "MLE")]
    Mle,
    #[serde(rename = "RF-MLE")]
    RfMle,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mle => "MLE",
            Method::RfMle => "RF-MLE",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: HawkesModel,
    pub llh: f64,
    pub method: Method,
    pub applied_strategy: Option<RenormStrategy>,
    pub epsilon: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub branching_ratio: f64,
}

/// Maps a model onto optimizer coordinates.
pub fn to_unconstrained(model: &HawkesModel) -> Vec<f64> {
    let mut z = vec![model.mu.ln()];
    match model.kernel {
        KernelParams::Exp { alpha, beta } => z.extend([alpha.ln(), beta.ln()]),
        KernelParams::Pwl { k, c, p } => z.extend([k.ln(), c.ln(), (p - 1.0).ln()]),
        KernelParams::Qexp { a, q } => z.extend([a.ln(), (2.0 - q).ln()]),
        KernelParams::Ray { gamma, eta } => z.extend([gamma.ln(), eta.ln()]),
    }
    z
}

/// Inverse of [`to_unconstrained`]; fails when a coordinate over- or
/// underflows out of the parameter domain.
pub fn from_unconstrained(family: KernelFamily, z: &[f64]) -> Result<HawkesModel, KernelError> {
    let kernel = match family {
        KernelFamily::Exp => KernelParams::exp(z[1].exp(), z[2].exp())?,
        KernelFamily::Pwl => KernelParams::pwl(z[1].exp(), z[2].exp(), 1.0 + z[3].exp())?,
        KernelFamily::Qexp => KernelParams::qexp(z[1].exp(), 2.0 - z[2].exp())?,
        KernelFamily::Ray => KernelParams::ray(z[1].exp(), z[2].exp())?,
    };
    HawkesModel::new(z[0].exp(), kernel)
}

/// Starting point with branching ratio 0.5 and implied steady rate Λ̂.
///
/// The time scale is the mean inter-event gap T/N.
pub fn default_init(seq: &EventSequence, family: KernelFamily) -> Result<HawkesModel, FitError> {
    if seq.is_empty() {
        return Err(FitError::EmptySequence);
    }
    let rate = seq.empirical_rate();
    let gap = rate.recip();
    let kernel = match family {
        KernelFamily::Exp => {
            let beta = gap.recip();
            KernelParams::exp(0.5 * beta, beta)?
        }
        // K c^{1-p}/(p-1) = K/c at p = 2
        KernelFamily::Pwl => KernelParams::pwl(0.5 * gap, gap, 2.0)?,
        KernelFamily::Qexp => KernelParams::qexp(0.25, 1.5)?,
        KernelFamily::Ray => {
            let eta = 0.5 / (gap * gap);
            KernelParams::ray(eta, eta)?
        }
    };
    Ok(HawkesModel::new(0.5 * rate, kernel)?)
}

pub fn mle_fit(
    seq: &EventSequence,
    family: KernelFamily,
    init: &HawkesModel,
    config: &OptimConfig,
) -> Result<FitResult, FitError> {
    init.validate()?;
    if init.family() != family {
        return Err(FitError::FamilyMismatch {
            expected: family,
            found: init.family(),
        });
    }
    let x0 = to_unconstrained(init);
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(FitError::InitialPoint {
            model: *init,
            reason: "parameters must be strictly inside their domains (mu > 0)".into(),
        });
    }

    let objective = |z: &[f64]| match from_unconstrained(family, z) {
        Ok(model) => match loglikelihood(&model, seq) {
            Ok(llh) => -llh.value,
            Err(_) => f64::INFINITY,
        },
        Err(_) => f64::INFINITY,
    };
    let outcome = match nelder_mead(objective, &x0, config) {
        Ok(o) => o,
        Err(OptimError::NonFiniteStart(_)) => {
            let reason = match loglikelihood(init, seq) {
                Err(e) => e.to_string(),
                Ok(l) => format!("log-likelihood {} at the start", l.value),
            };
            return Err(FitError::InitialPoint {
                model: *init,
                reason,
            });
        }
        Err(e) => return Err(e.into()),
    };

    let model = from_unconstrained(family, &outcome.argmin)?;
    let llh = loglikelihood(&model, seq)?.value;
    Ok(FitResult {
        model,
        llh,
        method: Method::Mle,
        applied_strategy: None,
        epsilon: None,
        converged: outcome.converged,
        iterations: outcome.iterations,
        branching_ratio: model.kernel.norm(),
    })
}

/// Selects the best of `mle` and its renormalized candidates at `epsilon`.
pub fn renormalized_fit(
    seq: &EventSequence,
    mle: &FitResult,
    epsilon: f64,
) -> Result<FitResult, FitError> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(FitError::Epsilon(epsilon));
    }
    let mut best_model = mle.model;
    let mut best_llh = mle.llh;
    let mut best_strategy = None;
    for candidate in enumerate_candidates(&mle.model, seq, epsilon) {
        let Ok(llh) = loglikelihood(&candidate.model, seq) else {
            continue;
        };
        if llh.value > best_llh {
            best_llh = llh.value;
            best_model = candidate.model;
            best_strategy = Some(candidate.strategy);
        }
    }
    Ok(FitResult {
        model: best_model,
        llh: best_llh,
        method: Method::RfMle,
        applied_strategy: best_strategy,
        epsilon: Some(epsilon),
        converged: mle.converged,
        iterations: mle.iterations,
        branching_ratio: best_model.kernel.norm(),
    })
}

pub fn rf_mle_fit(
    seq: &EventSequence,
    family: KernelFamily,
    epsilon: f64,
    init: &HawkesModel,
    config: &OptimConfig,
) -> Result<FitResult, FitError> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(FitError::Epsilon(epsilon));
    }
    let mle = mle_fit(seq, family, init, config)?;
    renormalized_fit(seq, &mle, epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{preset, simulate, SimulationConfig};

    #[test]
    fn transform_round_trip() {
        for family in KernelFamily::ALL {
            let model = preset(family);
            let back = from_unconstrained(family, &to_unconstrained(&model)).unwrap();
            for (a, b) in model.kernel.values().iter().zip(back.kernel.values()) {
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
            assert!((model.mu - back.mu).abs() < 1e-12);
        }
    }

    #[test]
    fn default_init_has_half_ratio() {
        let seq = EventSequence::new((1..=100).map(f64::from).collect(), 100.0).unwrap();
        for family in KernelFamily::ALL {
            let init = default_init(&seq, family).unwrap();
            assert_eq!(init.mu, 0.5);
            assert!((init.kernel.norm() - 0.5).abs() < 1e-12);
        }
        assert!(matches!(
            default_init(&EventSequence::empty(1.0).unwrap(), KernelFamily::Exp),
            Err(FitError::EmptySequence)
        ));
    }

    #[test]
    fn empty_sequence_drives_mu_to_the_boundary() {
        let seq = EventSequence::empty(100.0).unwrap();
        let init = preset(KernelFamily::Exp);
        let fit = mle_fit(&seq, KernelFamily::Exp, &init, &OptimConfig::default()).unwrap();
        assert!(!fit.converged);
        assert!(fit.llh <= 0.0 && fit.llh > -1e-6, "{}", fit.llh);
    }

    #[test]
    fn rejects_mismatched_or_degenerate_init() {
        let seq = EventSequence::new(vec![1.0, 2.0], 10.0).unwrap();
        let init = preset(KernelFamily::Exp);
        assert!(matches!(
            mle_fit(&seq, KernelFamily::Ray, &init, &OptimConfig::default()),
            Err(FitError::FamilyMismatch { .. })
        ));
        let zero_mu = HawkesModel { mu: 0.0, ..init };
        assert!(matches!(
            mle_fit(&seq, KernelFamily::Exp, &zero_mu, &OptimConfig::default()),
            Err(FitError::InitialPoint { .. })
        ));
    }

    #[test]
    fn rf_never_loses_to_mle() {
        let seq = simulate(&SimulationConfig::new(preset(KernelFamily::Pwl), 500.0, 2)).unwrap();
        for family in KernelFamily::ALL {
            let init = default_init(&seq, family).unwrap();
            let mle = mle_fit(&seq, family, &init, &OptimConfig::default()).unwrap();
            assert_eq!(mle.llh, loglikelihood(&mle.model, &seq).unwrap().value);
            for eps in [0.1, 0.01, 0.001] {
                let rf = renormalized_fit(&seq, &mle, eps).unwrap();
                assert!(rf.llh >= mle.llh);
                assert_eq!(rf.llh, loglikelihood(&rf.model, &seq).unwrap().value);
                if rf.applied_strategy.is_none() {
                    assert_eq!(rf.model, mle.model);
                }
            }
        }
    }

    #[test]
    fn recovers_exponential_truth() {
        let truth = preset(KernelFamily::Exp);
        let seq = simulate(&SimulationConfig::new(truth, 30_000.0, 4)).unwrap();
        let fit = mle_fit(&seq, KernelFamily::Exp, &truth, &OptimConfig::default()).unwrap();
        let KernelParams::Exp { alpha, beta } = fit.model.kernel else {
            panic!()
        };
        let rel = |got: f64, want: f64| ((got - want) / want).abs();
        assert!(rel(fit.model.mu, 0.5) < 0.15, "{fit:?}");
        assert!(rel(alpha, 0.06) < 0.15, "{fit:?}");
        assert!(rel(beta, 0.2) < 0.15, "{fit:?}");
        assert!(fit.converged);
    }
}
