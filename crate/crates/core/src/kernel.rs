//! Parametric self-exciting kernels.
//!
//! Four families are supported:
//!
//! ```text
//! EXP(α, β)     φ(t) = α e^{-βt}
//! PWL(K, c, p)  φ(t) = K / (t + c)^p
//! QEXP(a, q)    φ(t) = a [1 + (q-1) t]^{1/(1-q)}   (a e^{-t} at q = 1)
//! RAY(γ, η)     φ(t) = γ t e^{-η t²}
//! ```
//!
//! For `q < 1` the Q-exponential has finite support `[0, 1/(1-q)]` and is
//! identically zero beyond it. All integrals are closed form.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Half-width of the band around `q = 1` mapped onto the exponential branch.
pub const QEXP_UNIT_BAND: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("{family} parameter `{name}` = {value} is outside its domain ({requirement})")]
    ParameterDomain {
        family: KernelFamily,
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },
    #[error("background rate mu = {0} must be finite and non-negative")]
    BackgroundRate(f64),
    #[error("time argument {0} must be finite and non-negative")]
    NegativeTime(f64),
}

/// The four kernel families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KernelFamily {
    #[serde(rename = "EXP")]
    Exp,
    #[serde(rename = "PWL")]
    Pwl,
    #[serde(rename = "QEXP")]
    Qexp,
    #[serde(rename = "RAY")]
    Ray,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 4] = [
        KernelFamily::Exp,
        KernelFamily::Pwl,
        KernelFamily::Qexp,
        KernelFamily::Ray,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            KernelFamily::Exp => "EXP",
            KernelFamily::Pwl => "PWL",
            KernelFamily::Qexp => "QEXP",
            KernelFamily::Ray => "RAY",
        }
    }

    /// Parameter names in their canonical order.
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            KernelFamily::Exp => &["alpha", "beta"],
            KernelFamily::Pwl => &["K", "c", "p"],
            KernelFamily::Qexp => &["a", "q"],
            KernelFamily::Ray => &["gamma", "eta"],
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown kernel family `{0}` (expected EXP, PWL, QEXP or RAY)")]
pub struct UnknownFamily(pub String);

impl FromStr for KernelFamily {
    type Err = UnknownFamily;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "EXP" => Ok(KernelFamily::Exp),
            "PWL" => Ok(KernelFamily::Pwl),
            "QEXP" => Ok(KernelFamily::Qexp),
            "RAY" => Ok(KernelFamily::Ray),
            _ => Err(UnknownFamily(s.to_string())),
        }
    }
}

/// Parameters of one kernel family.
///
/// The variants carry plain fields; use the `exp`/`pwl`/`qexp`/`ray`
/// constructors (or [`KernelParams::validate`]) to enforce the domain
/// invariants. Deserialization validates as well.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", try_from = "KernelRepr")]
pub enum KernelParams {
    #[serde(rename = "EXP")]
    Exp { alpha: f64, beta: f64 },
    #[serde(rename = "PWL")]
    Pwl {
        #[serde(rename = "K")]
        k: f64,
        c: f64,
        p: f64,
    },
    #[serde(rename = "QEXP")]
    Qexp { a: f64, q: f64 },
    #[serde(rename = "RAY")]
    Ray { gamma: f64, eta: f64 },
}

// Unvalidated mirror used as the deserialization source.
#[derive(Deserialize)]
#[serde(tag = "family", content = "params")]
enum KernelRepr {
    #[serde(rename = "EXP")]
    Exp { alpha: f64, beta: f64 },
    #[serde(rename = "PWL")]
    Pwl {
        #[serde(rename = "K")]
        k: f64,
        c: f64,
        p: f64,
    },
    #[serde(rename = "QEXP")]
    Qexp { a: f64, q: f64 },
    #[serde(rename = "RAY")]
    Ray { gamma: f64, eta: f64 },
}

impl TryFrom<KernelRepr> for KernelParams {
    type Error = KernelError;

    fn try_from(repr: KernelRepr) -> Result<Self, Self::Error> {
        match repr {
            KernelRepr::Exp { alpha, beta } => KernelParams::exp(alpha, beta),
            KernelRepr::Pwl { k, c, p } => KernelParams::pwl(k, c, p),
            KernelRepr::Qexp { a, q } => KernelParams::qexp(a, q),
            KernelRepr::Ray { gamma, eta } => KernelParams::ray(gamma, eta),
        }
    }
}

fn positive(family: KernelFamily, name: &'static str, value: f64) -> Result<(), KernelError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(KernelError::ParameterDomain {
            family,
            name,
            value,
            requirement: "finite and > 0",
        })
    }
}

impl KernelParams {
    pub fn exp(alpha: f64, beta: f64) -> Result<Self, KernelError> {
        let k = KernelParams::Exp { alpha, beta };
        k.validate()?;
        Ok(k)
    }

    pub fn pwl(k: f64, c: f64, p: f64) -> Result<Self, KernelError> {
        let kernel = KernelParams::Pwl { k, c, p };
        kernel.validate()?;
        Ok(kernel)
    }

    pub fn qexp(a: f64, q: f64) -> Result<Self, KernelError> {
        let k = KernelParams::Qexp { a, q };
        k.validate()?;
        Ok(k)
    }

    pub fn ray(gamma: f64, eta: f64) -> Result<Self, KernelError> {
        let k = KernelParams::Ray { gamma, eta };
        k.validate()?;
        Ok(k)
    }

    pub fn family(&self) -> KernelFamily {
        match self {
            KernelParams::Exp { .. } => KernelFamily::Exp,
            KernelParams::Pwl { .. } => KernelFamily::Pwl,
            KernelParams::Qexp { .. } => KernelFamily::Qexp,
            KernelParams::Ray { .. } => KernelFamily::Ray,
        }
    }

    /// Parameter values in the order of [`KernelFamily::param_names`].
    pub fn values(&self) -> Vec<f64> {
        match *self {
            KernelParams::Exp { alpha, beta } => vec![alpha, beta],
            KernelParams::Pwl { k, c, p } => vec![k, c, p],
            KernelParams::Qexp { a, q } => vec![a, q],
            KernelParams::Ray { gamma, eta } => vec![gamma, eta],
        }
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        let family = self.family();
        match *self {
            KernelParams::Exp { alpha, beta } => {
                positive(family, "alpha", alpha)?;
                positive(family, "beta", beta)
            }
            KernelParams::Pwl { k, c, p } => {
                positive(family, "K", k)?;
                positive(family, "c", c)?;
                if p.is_finite() && p > 1.0 {
                    Ok(())
                } else {
                    Err(KernelError::ParameterDomain {
                        family,
                        name: "p",
                        value: p,
                        requirement: "finite and > 1",
                    })
                }
            }
            KernelParams::Qexp { a, q } => {
                positive(family, "a", a)?;
                if q.is_finite() && q < 2.0 {
                    Ok(())
                } else {
                    Err(KernelError::ParameterDomain {
                        family,
                        name: "q",
                        value: q,
                        requirement: "finite and < 2",
                    })
                }
            }
            KernelParams::Ray { gamma, eta } => {
                positive(family, "gamma", gamma)?;
                positive(family, "eta", eta)
            }
        }
    }

    /// Kernel value φ(t).
    pub fn evaluate(&self, t: f64) -> Result<f64, KernelError> {
        check_time(t)?;
        self.validate()?;
        Ok(self.phi(t))
    }

    /// ∫₀ˢ φ(u) du.
    pub fn cumulative(&self, s: f64) -> Result<f64, KernelError> {
        check_time(s)?;
        self.validate()?;
        Ok(self.integral(s))
    }

    /// ‖φ‖ = ∫₀^∞ φ(u) du, the expected number of direct offspring per event.
    pub fn branching_ratio(&self) -> Result<f64, KernelError> {
        self.validate()?;
        Ok(self.norm())
    }

    /// End of the support, `1/(1-q)` for a Q-exponential with `q < 1`.
    pub fn support_end(&self) -> Option<f64> {
        match *self {
            KernelParams::Qexp { q, .. } if q < 1.0 - QEXP_UNIT_BAND => Some(1.0 / (1.0 - q)),
            _ => None,
        }
    }

    // Unchecked hot-path versions. Callers guarantee validity and t >= 0.

    #[inline]
    pub(crate) fn phi(&self, t: f64) -> f64 {
        match *self {
            KernelParams::Exp { alpha, beta } => alpha * (-beta * t).exp(),
            KernelParams::Pwl { k, c, p } => k * (t + c).powf(-p),
            KernelParams::Qexp { a, q } => {
                if (q - 1.0).abs() < QEXP_UNIT_BAND {
                    a * (-t).exp()
                } else {
                    let shift = (q - 1.0) * t;
                    if 1.0 + shift <= 0.0 {
                        0.0
                    } else {
                        a * (shift.ln_1p() / (1.0 - q)).exp()
                    }
                }
            }
            KernelParams::Ray { gamma, eta } => gamma * t * (-eta * t * t).exp(),
        }
    }

    #[inline]
    pub(crate) fn integral(&self, s: f64) -> f64 {
        match *self {
            KernelParams::Exp { alpha, beta } => alpha / beta * -(-beta * s).exp_m1(),
            KernelParams::Pwl { k, c, p } => {
                k * c.powf(1.0 - p) / (p - 1.0) * -((1.0 - p) * (s / c).ln_1p()).exp_m1()
            }
            KernelParams::Qexp { a, q } => {
                if (q - 1.0).abs() < QEXP_UNIT_BAND {
                    a * -(-s).exp_m1()
                } else {
                    let shift = (q - 1.0) * s;
                    let scale = a / (2.0 - q);
                    if 1.0 + shift <= 0.0 {
                        scale
                    } else {
                        scale * -((2.0 - q) / (1.0 - q) * shift.ln_1p()).exp_m1()
                    }
                }
            }
            KernelParams::Ray { gamma, eta } => gamma / (2.0 * eta) * -(-eta * s * s).exp_m1(),
        }
    }

    #[inline]
    pub(crate) fn norm(&self) -> f64 {
        match *self {
            KernelParams::Exp { alpha, beta } => alpha / beta,
            KernelParams::Pwl { k, c, p } => k * c.powf(1.0 - p) / (p - 1.0),
            KernelParams::Qexp { a, q } => a / (2.0 - q),
            KernelParams::Ray { gamma, eta } => gamma / (2.0 * eta),
        }
    }

    /// Non-increasing envelope sup_{u >= t} φ(u). Equal to φ for every family
    /// except the Rayleigh kernel, which rises to its peak at 1/√(2η) first.
    #[inline]
    pub(crate) fn envelope(&self, t: f64) -> f64 {
        match *self {
            KernelParams::Ray { eta, .. } => {
                let peak_at = (2.0 * eta).sqrt().recip();
                self.phi(t.max(peak_at))
            }
            _ => self.phi(t),
        }
    }

    /// `(φ(t), envelope(t))` with a single kernel evaluation where possible.
    #[inline]
    pub(crate) fn phi_and_envelope(&self, t: f64) -> (f64, f64) {
        let value = self.phi(t);
        match *self {
            KernelParams::Ray { eta, .. } => {
                let peak_at = (2.0 * eta).sqrt().recip();
                if t >= peak_at {
                    (value, value)
                } else {
                    (value, self.phi(peak_at))
                }
            }
            _ => (value, value),
        }
    }
}

fn check_time(t: f64) -> Result<(), KernelError> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(KernelError::NegativeTime(t))
    }
}

/// Background rate together with a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HawkesModel {
    pub mu: f64,
    pub kernel: KernelParams,
}

impl HawkesModel {
    pub fn new(mu: f64, kernel: KernelParams) -> Result<Self, KernelError> {
        let model = HawkesModel { mu, kernel };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(KernelError::BackgroundRate(self.mu));
        }
        self.kernel.validate()
    }

    pub fn family(&self) -> KernelFamily {
        self.kernel.family()
    }

    pub fn stability(&self) -> Result<StabilityReport, KernelError> {
        self.validate()?;
        Ok(StabilityReport::new(self.mu, self.kernel.norm()))
    }
}

/// Branching ratio and, when subcritical, the steady arrival rate
/// Λ = μ / (1 - ‖φ‖).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub branching_ratio: f64,
    pub stationary: bool,
    pub steady_rate: Option<f64>,
}

impl StabilityReport {
    fn new(mu: f64, branching_ratio: f64) -> Self {
        let stationary = branching_ratio < 1.0;
        StabilityReport {
            branching_ratio,
            stationary,
            steady_rate: stationary.then(|| mu / (1.0 - branching_ratio)),
        }
    }
}
