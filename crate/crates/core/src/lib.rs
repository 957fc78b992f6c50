//! Parameterless stochastic natural gradient optimization for binary
//! search spaces.
//!
//! [`igo::OptimizerState`] is an ask/tell optimizer over independent
//! Bernoulli distributions that adapts either its sample size (PBIL-λ) or
//! its step size (PBIL-ε) from a signal-to-noise estimate of the natural
//! gradient, and also runs the fixed-parameter cGA, UMDA and PBIL.
//! [`harness`] measures first hitting times on pseudo-Boolean benchmarks and
//! [`neuro`] trains a small network jointly with a binary architecture mask.

pub mod error;
pub mod family;
pub mod harness;
pub mod igo;
pub mod neuro;
pub mod objective;
pub mod preference;
pub mod rng;

pub use error::{Error, Result};
pub use family::{BitString, Bernoulli, ExponentialFamily, ThetaParams};
pub use igo::{Baseline, FisherPoint, Mode, OptimizerState, TellOutcome};
pub use objective::{ObjectiveKind, ObjectiveSpec};
pub use preference::{UtilityBatch, WeightScheme};
pub use rng::Stream;
