//! The Bernoulli family in expectation parameters.
//!
//! `θ_k` is the probability that bit `k` is one, the sufficient statistic is
//! the bit string itself, and the natural gradient of the log-likelihood is
//! `x - θ`. The Fisher metric is diagonal with entries `1 / (θ_k (1 - θ_k))`.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Operations an exponential family in expectation parameters provides to
/// the natural gradient optimizer.
pub trait ExponentialFamily {
    type Point;

    fn dim(&self) -> usize;

    /// Draws one point. Consumes a fixed, documented number of draws.
    fn sample_one<R: RngCore + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Self::Point;

    fn sufficient_stat(&self, x: &Self::Point) -> Vec<f64>;

    /// `T(x) - θ`.
    fn nat_grad_loglik(&self, theta: &[f64], x: &Self::Point) -> Vec<f64> {
        self.sufficient_stat(x).iter().zip(theta).map(|(t, th)| t - th).collect()
    }

    /// Elementwise square root of the (diagonal) Fisher metric.
    fn fisher_sqrt_diag(&self, theta: &[f64]) -> Result<Vec<f64>>;

    /// Maps an unconstrained parameter back into the admissible domain.
    fn project(&self, raw: &mut [f64]);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bernoulli {
    n: usize,
}

impl Bernoulli {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Dimension(n));
        }
        Ok(Bernoulli { n })
    }

    /// Projection interval `[1/n, 1 - 1/n]`.
    pub fn bounds(&self) -> (f64, f64) {
        let lo = 1.0 / self.n as f64;
        (lo, 1.0 - lo)
    }
}

impl ExponentialFamily for Bernoulli {
    type Point = BitString;

    fn dim(&self) -> usize {
        self.n
    }

    /// One 32-bit draw per bit, bits in index order. Bit `k` is one when
    /// the draw falls below `floor(θ_k · 2^32)`.
    fn sample_one<R: RngCore + ?Sized>(&self, theta: &[f64], rng: &mut R) -> BitString {
        debug_assert_eq!(theta.len(), self.n);
        BitString(theta.iter().map(|&p| u64::from(rng.next_u32()) < threshold(p)).collect())
    }

    fn sufficient_stat(&self, x: &BitString) -> Vec<f64> {
        x.0.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    fn fisher_sqrt_diag(&self, theta: &[f64]) -> Result<Vec<f64>> {
        fisher_sqrt_diag_slice(theta)
    }

    fn project(&self, raw: &mut [f64]) {
        let (lo, hi) = self.bounds();
        for v in raw.iter_mut() {
            *v = v.clamp(lo, hi);
        }
    }
}

#[inline]
fn threshold(p: f64) -> u64 {
    (p * 4_294_967_296.0) as u64
}

/// Bernoulli expectation parameters, one probability per bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaParams {
    probs: Vec<f64>,
}

impl ThetaParams {
    pub fn init_uniform(n: usize) -> Result<Self> {
        Bernoulli::new(n)?;
        Ok(ThetaParams { probs: vec![0.5; n] })
    }

    /// Componentwise clamp of `raw` into `[1/n, 1 - 1/n]`.
    pub fn project(raw: &[f64], n: usize) -> Result<Self> {
        let family = Bernoulli::new(n)?;
        if raw.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: raw.len() });
        }
        let mut probs = raw.to_vec();
        family.project(&mut probs);
        Ok(ThetaParams { probs })
    }

    /// Builds parameters without projecting. Components must lie in `[0, 1]`.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        Bernoulli::new(probs.len())?;
        if let Some(i) = probs.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidParameter(format!("probability {} at index {i} outside [0, 1]", probs[i])));
        }
        Ok(ThetaParams { probs })
    }

    pub fn n(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub(crate) fn probs_mut(&mut self) -> &mut [f64] {
        &mut self.probs
    }

    pub fn family(&self) -> Bernoulli {
        Bernoulli { n: self.n() }
    }

    /// Draws `lambda` samples from one generator, samples in index order and
    /// bits in index order within each sample (`lambda * n` draws total).
    pub fn sample<R: RngCore + ?Sized>(&self, lambda: usize, rng: &mut R) -> Vec<BitString> {
        let thresholds: Vec<u64> = self.probs.iter().map(|&p| threshold(p)).collect();
        (0..lambda).map(|_| sample_thresholds(&thresholds, rng)).collect()
    }

    /// Draws `lambda` samples where sample `i` uses the substream
    /// `stream.child(i)`.
    pub fn sample_streams(&self, lambda: usize, stream: &Stream) -> Vec<BitString> {
        let thresholds: Vec<u64> = self.probs.iter().map(|&p| threshold(p)).collect();
        (0..lambda)
            .map(|i| sample_thresholds(&thresholds, &mut stream.child(i as u64).rng()))
            .collect()
    }

    pub fn nat_grad_loglik(&self, x: &BitString) -> Result<Vec<f64>> {
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), actual: x.len() });
        }
        Ok(self.family().nat_grad_loglik(&self.probs, x))
    }

    pub fn fisher_sqrt_diag(&self) -> Result<Vec<f64>> {
        fisher_sqrt_diag_slice(&self.probs)
    }

    /// Mean per-bit entropy in nats.
    pub fn mean_entropy(&self) -> f64 {
        let h: f64 = self
            .probs
            .iter()
            .map(|&p| {
                let q = 1.0 - p;
                let a = if p > 0.0 { -p * p.ln() } else { 0.0 };
                let b = if q > 0.0 { -q * q.ln() } else { 0.0 };
                a + b
            })
            .sum();
        h / self.n() as f64
    }

    /// (min, mean, max) of the components.
    pub fn summary(&self) -> (f64, f64, f64) {
        let min = self.probs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = self.probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = self.probs.iter().sum::<f64>() / self.n() as f64;
        (min, mean, max)
    }
}

fn sample_thresholds<R: RngCore + ?Sized>(thresholds: &[u64], rng: &mut R) -> BitString {
    BitString(thresholds.iter().map(|&t| u64::from(rng.next_u32()) < t).collect())
}

fn fisher_sqrt_diag_slice(theta: &[f64]) -> Result<Vec<f64>> {
    theta
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            if p > 0.0 && p < 1.0 {
                Ok(1.0 / (p * (1.0 - p)).sqrt())
            } else {
                Err(Error::InvalidParameter(format!("Fisher metric is singular at θ[{i}] = {p}")))
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitString(pub Vec<bool>);

impl BitString {
    pub fn from_bits(bits: &[u8]) -> Self {
        BitString(bits.iter().map(|&b| b != 0).collect())
    }

    pub fn ones(n: usize) -> Self {
        BitString(vec![true; n])
    }

    pub fn zeros(n: usize) -> Self {
        BitString(vec![false; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn init_uniform_values() {
        assert_eq!(ThetaParams::init_uniform(3).unwrap().probs(), &[0.5, 0.5, 0.5]);
        assert_eq!(ThetaParams::init_uniform(2).unwrap().probs(), &[0.5, 0.5]);
        assert!(matches!(ThetaParams::init_uniform(1), Err(Error::Dimension(1))));
    }

    #[test]
    fn project_clamps() {
        let mut raw = vec![0.5; 10];
        raw[0] = 0.01;
        raw[1] = 0.95;
        let t = ThetaParams::project(&raw, 10).unwrap();
        assert_relative_eq!(t.probs()[0], 0.1);
        assert_relative_eq!(t.probs()[1], 0.9);
        assert_eq!(t.probs()[2], 0.5);
        assert!(ThetaParams::project(&raw, 9).is_err());
    }

    #[test]
    fn nat_grad_examples() {
        let t = ThetaParams::from_probs(vec![0.5, 0.5]).unwrap();
        assert_eq!(t.nat_grad_loglik(&BitString::from_bits(&[1, 0])).unwrap(), vec![0.5, -0.5]);
        let t = ThetaParams::from_probs(vec![0.9, 0.1]).unwrap();
        let g = t.nat_grad_loglik(&BitString::from_bits(&[1, 1])).unwrap();
        assert_relative_eq!(g[0], 0.1, epsilon = 1e-15);
        assert_relative_eq!(g[1], 0.9, epsilon = 1e-15);
        assert!(t.nat_grad_loglik(&BitString::ones(3)).is_err());
    }

    #[test]
    fn fisher_sqrt_examples() {
        let t = ThetaParams::from_probs(vec![0.5, 0.1]).unwrap();
        let f = t.fisher_sqrt_diag().unwrap();
        assert_eq!(f[0], 2.0);
        assert_relative_eq!(f[1], 10.0 / 3.0, max_relative = 1e-15);
        let t = ThetaParams::from_probs(vec![0.0, 0.5]).unwrap();
        assert!(t.fisher_sqrt_diag().is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let t = ThetaParams::init_uniform(17).unwrap();
        let s = Stream::new(3);
        assert_eq!(t.sample(5, &mut s.rng()), t.sample(5, &mut s.rng()));
        assert_eq!(t.sample_streams(5, &s), t.sample_streams(5, &s));
    }

    fn assert_marginal(p: f64, n: usize) {
        let raw = vec![p; n];
        let theta = ThetaParams::project(&raw, n).unwrap();
        let m = 100_000;
        let mut rng = Stream::new(11).rng();
        let xs = theta.sample(m, &mut rng);
        let p = theta.probs()[0];
        let sd = (p * (1.0 - p) / m as f64).sqrt();
        for k in 0..n {
            let freq = xs.iter().filter(|x| x.0[k]).count() as f64 / m as f64;
            assert!((freq - p).abs() < 4.0 * sd, "bit {k}: {freq} vs {p}");
        }
    }

    #[test]
    fn sampling_marginals_at_bounds() {
        assert_marginal(0.9, 10);
        assert_marginal(0.1, 10);
        assert_marginal(0.37, 5);
    }

    #[test]
    fn natural_gradient_of_loglik_has_zero_mean() {
        // Exact enumeration of E_θ[x - θ].
        for n in [2usize, 5, 12] {
            let probs: Vec<f64> = (0..n).map(|k| 0.1 + 0.8 * k as f64 / (n - 1) as f64).collect();
            let theta = ThetaParams::from_probs(probs.clone()).unwrap();
            let mut acc = vec![0.0; n];
            for code in 0u32..(1 << n) {
                let x = BitString((0..n).map(|k| code >> k & 1 == 1).collect());
                let px: f64 = (0..n).map(|k| if x.0[k] { probs[k] } else { 1.0 - probs[k] }).product();
                for (a, g) in acc.iter_mut().zip(theta.nat_grad_loglik(&x).unwrap()) {
                    *a += px * g;
                }
            }
            for a in acc {
                assert!(a.abs() < 1e-12, "n={n}: {a}");
            }
        }
    }

    proptest! {
        #[test]
        fn projection_is_idempotent(raw in proptest::collection::vec(-2.0f64..3.0, 2..40)) {
            let n = raw.len();
            let once = ThetaParams::project(&raw, n).unwrap();
            let twice = ThetaParams::project(once.probs(), n).unwrap();
            prop_assert_eq!(&once, &twice);
            let lo = 1.0 / n as f64;
            for &p in once.probs() {
                prop_assert!(p >= lo && p <= 1.0 - lo);
            }
        }

        #[test]
        fn fisher_sqrt_squares_to_fisher(probs in proptest::collection::vec(1e-6f64..(1.0 - 1e-6), 2..20)) {
            let theta = ThetaParams::from_probs(probs.clone()).unwrap();
            let f = theta.fisher_sqrt_diag().unwrap();
            for (fk, p) in f.iter().zip(&probs) {
                let fisher = 1.0 / (p * (1.0 - p));
                prop_assert!(fk.is_finite() && *fk > 0.0);
                prop_assert!((fk * fk - fisher).abs() <= 1e-12 * fisher);
            }
        }

        #[test]
        fn nat_grad_range(bits in proptest::collection::vec(any::<bool>(), 2..30), p in 0.01f64..0.99) {
            let n = bits.len();
            let theta = ThetaParams::from_probs(vec![p; n]).unwrap();
            for g in theta.nat_grad_loglik(&BitString(bits)).unwrap() {
                prop_assert!(g == -p || g == 1.0 - p);
            }
        }
    }
}
