//! Pseudo-Boolean benchmark functions.
//!
//! Every objective is minimised and takes its optimum value 0 at the
//! all-ones string.

use std::fmt;
use std::path::Path;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::BitString;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    /// `n - Σ x_k`.
    OneMax,
    /// `n - Σ_k Π_{j≤k} x_j`.
    LeadingOnes,
    /// `Σ w_k (1 - x_k)` with positive weights.
    Linear { weights: Vec<f64> },
    /// OneMax plus Gaussian noise of standard deviation `sigma`.
    NoisyOneMax { sigma: f64 },
}

impl ObjectiveKind {
    pub fn label(&self) -> &'static str {
        match self {
            ObjectiveKind::OneMax => "onemax",
            ObjectiveKind::LeadingOnes => "leadingones",
            ObjectiveKind::Linear { .. } => "linear",
            ObjectiveKind::NoisyOneMax { .. } => "noisy-onemax",
        }
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    kind: ObjectiveKind,
    n: usize,
    eval_count: u64,
}

impl ObjectiveSpec {
    pub fn new(kind: ObjectiveKind, n: usize) -> Result<Self> {
        match &kind {
            ObjectiveKind::Linear { weights } => {
                if weights.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, actual: weights.len() });
                }
                if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
                    return Err(Error::InvalidParameter(format!("linear weights must be positive, got {w}")));
                }
            }
            ObjectiveKind::NoisyOneMax { sigma } if !(sigma.is_finite() && *sigma >= 0.0) => {
                return Err(Error::InvalidParameter(format!("noise level must be non-negative, got {sigma}")));
            }
            _ => {}
        }
        if n == 0 {
            return Err(Error::Dimension(n));
        }
        Ok(ObjectiveSpec { kind, n, eval_count: 0 })
    }

    pub fn onemax(n: usize) -> Self {
        ObjectiveSpec { kind: ObjectiveKind::OneMax, n, eval_count: 0 }
    }

    pub fn leading_ones(n: usize) -> Self {
        ObjectiveSpec { kind: ObjectiveKind::LeadingOnes, n, eval_count: 0 }
    }

    pub fn kind(&self) -> &ObjectiveKind {
        &self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn eval_count(&self) -> u64 {
        self.eval_count
    }

    /// Evaluates `x`. Only the noisy objective draws from `rng` (one
    /// standard normal per call).
    pub fn evaluate<R: RngCore + ?Sized>(&mut self, x: &BitString, rng: &mut R) -> Result<f64> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, actual: x.len() });
        }
        self.eval_count += 1;
        let bits = x.bits();
        let n = self.n as f64;
        Ok(match &self.kind {
            ObjectiveKind::OneMax => n - x.count_ones() as f64,
            ObjectiveKind::LeadingOnes => n - bits.iter().take_while(|&&b| b).count() as f64,
            ObjectiveKind::Linear { weights } => {
                weights.iter().zip(bits).filter(|(_, &b)| !b).map(|(w, _)| w).sum()
            }
            ObjectiveKind::NoisyOneMax { sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                n - x.count_ones() as f64 + sigma * z
            }
        })
    }

    /// Structural optimum test; noise is ignored.
    pub fn is_optimum(&self, x: &BitString) -> bool {
        x.len() == self.n && x.bits().iter().all(|&b| b)
    }
}

/// Reads one weight per line. Blank lines and lines starting with `#` are
/// skipped.
pub fn load_linear_weights(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    parse_linear_weights(&text)
}

pub fn parse_linear_weights(text: &str) -> Result<Vec<f64>> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            l.parse::<f64>()
                .map_err(|e| Error::InvalidParameter(format!("line {}: {e}", i + 1)))
        })
        .collect()
}
