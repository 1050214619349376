//! Univariate Hawkes processes with parametric kernels: simulation,
//! maximum-likelihood fitting and renormalization-factor stabilization of
//! unstable fits.

pub mod bench;
pub mod fit;
pub mod kernel;
pub mod likelihood;
pub mod optim;
mod powersum;
pub mod renorm;
pub mod simulate;
pub mod special;

pub use fit::{default_init, mle_fit, renormalized_fit, rf_mle_fit, FitError, FitResult, Method};
pub use kernel::{HawkesModel, KernelError, KernelFamily, KernelParams, StabilityReport};
pub use likelihood::{
    intensity_at, loglikelihood, loglikelihood_oracle, EventSequence, LikelihoodError,
    LogLikelihood,
};
pub use optim::{nelder_mead, OptimConfig, OptimOutcome};
pub use renorm::{
    enumerate_candidates, lambda_hat, renormalize, renormalized_mu, RenormError, RenormResult,
    RenormStrategy,
};
pub use simulate::{simulate, SimulationConfig};
pub use special::lambert_w0;
