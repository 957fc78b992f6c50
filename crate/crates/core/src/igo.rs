//! Parameterless stochastic natural gradient ascent as an ask/tell state
//! machine.
//!
//! Every [`OptimizerState::tell`] performs, in order:
//!
//! 1. utilities `w_i` of the batch, their mean `μ_W` and variance `σ_W²`;
//!    a batch with `σ_W² = 0` only advances the counters;
//! 2. `∇ = (1/λ) Σ (w_i - μ_W)(x_i - θ)` and `θ ← Π(θ + (ε/μ_W) ∇)`;
//! 3. `s ← (1-β) s + sqrt(β(2-β) λ / (n σ_W²)) · F^{1/2} ∇`, where `F^{1/2}`
//!    is taken at the updated `θ` by default;
//! 4. `γ ← (1-β)² γ + β(2-β)`;
//! 5. `λ_r ← clamp(λ_r · exp(β (γ - |s|²/α)), λ_min, λ_max)`;
//! 6. either `λ = round(λ_r)` ([`Mode::AdaptLambda`]) or `λ = λ_min` with
//!    `ε = β = ε₀ λ_min / λ_r` ([`Mode::AdaptEpsilon`]).
//!
//! [`Mode::Fixed`] stops after step 2 and recovers cGA, UMDA and PBIL.
//!
//! Utilities are rescaled to unit mean before step 2. The update is
//! invariant to that scale, and doing it first makes trajectories
//! bit-identical under exact rescaling of the utilities.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};
use crate::family::{BitString, ThetaParams};
use crate::preference::{UtilityBatch, WeightScheme};
use crate::rng::{tag, Stream};

/// Default SNR target.
pub const DEFAULT_ALPHA: f64 = 1.5;
/// Minimum sample size; two samples are needed for a variance.
pub const LAMBDA_MIN: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Fixed step size, adapted sample size (PBIL-λ).
    AdaptLambda,
    /// Minimal sample size, adapted step size (PBIL-ε).
    AdaptEpsilon,
    /// No adaptation.
    Fixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    Cga,
    Umda,
    Pbil,
}

impl Baseline {
    /// cGA: `1/n`; UMDA: `1`; PBIL: `n^{-1/2}`.
    pub fn default_epsilon(self, n: usize) -> f64 {
        match self {
            Baseline::Cga => 1.0 / n as f64,
            Baseline::Umda => 1.0,
            Baseline::Pbil => 1.0 / (n as f64).sqrt(),
        }
    }
}

/// Where the Fisher square root in the accumulator update is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FisherPoint {
    /// After the `θ` update of the same iteration.
    #[default]
    Updated,
    /// Before the `θ` update.
    Previous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TellOutcome {
    Updated,
    /// `σ_W² = 0`; only the counters moved.
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    theta: ThetaParams,
    s: Vec<f64>,
    gamma: f64,
    lambda_r: f64,
    lambda: usize,
    epsilon: f64,
    beta: f64,
    /// Step size before adaptation; `ε = β = base_epsilon · λ_min / λ_r` in
    /// AdaptEpsilon mode.
    base_epsilon: f64,
    mode: Mode,
    alpha: f64,
    lambda_min: usize,
    /// `None` is unbounded.
    lambda_max: Option<usize>,
    weights: WeightScheme,
    /// Subtract `μ_W` from the utilities.
    centered: bool,
    fisher_point: FisherPoint,
    minimize: bool,
    baseline: Option<Baseline>,
    iteration: u64,
    f_calls: u64,
    skipped: u64,
}

impl OptimizerState {
    /// Defaults: `θ = 0.5`, `ε = β = n^{-1/2}`, `λ = λ_r = 2`, `λ_max = n`.
    pub fn new_parameterless(n: usize, mode: Mode, alpha: f64) -> Result<Self> {
        if mode == Mode::Fixed {
            return Err(Error::InvalidConfig("use new_baseline for fixed-parameter optimizers".into()));
        }
        if !(alpha.is_finite() && alpha >= 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must be at least 1, got {alpha}")));
        }
        let theta = ThetaParams::init_uniform(n)?;
        let eps = 1.0 / (n as f64).sqrt();
        Ok(OptimizerState {
            theta,
            s: vec![0.0; n],
            gamma: 0.0,
            lambda_r: LAMBDA_MIN as f64,
            lambda: LAMBDA_MIN,
            epsilon: eps,
            beta: eps,
            base_epsilon: eps,
            mode,
            alpha,
            lambda_min: LAMBDA_MIN,
            lambda_max: Some(n.max(LAMBDA_MIN)),
            weights: WeightScheme::Ranking,
            centered: true,
            fisher_point: FisherPoint::Updated,
            minimize: true,
            baseline: None,
            iteration: 0,
            f_calls: 0,
            skipped: 0,
        })
    }

    /// cGA forces `λ = 2` and uses the centered ranking update of the
    /// adaptive modes. UMDA (`ε = 1`) and PBIL use truncation selection
    /// without baseline subtraction, i.e. `θ ← θ + ε (mean of best μ - θ)`.
    pub fn new_baseline(kind: Baseline, n: usize, lambda: usize, epsilon: f64) -> Result<Self> {
        let theta = ThetaParams::init_uniform(n)?;
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::InvalidParameter(format!("step size must lie in (0, 1], got {epsilon}")));
        }
        if lambda < LAMBDA_MIN {
            return Err(Error::InvalidParameter(format!("sample size must be at least 2, got {lambda}")));
        }
        let (weights, centered) = match kind {
            Baseline::Cga if lambda != 2 => {
                return Err(Error::InvalidConfig(format!("cGA samples exactly 2 points, got λ = {lambda}")));
            }
            Baseline::Umda if epsilon != 1.0 => {
                return Err(Error::InvalidConfig(format!("UMDA uses ε = 1, got {epsilon}")));
            }
            Baseline::Cga => (WeightScheme::Ranking, true),
            Baseline::Umda | Baseline::Pbil => (WeightScheme::Truncation, false),
        };
        Ok(OptimizerState {
            theta,
            s: vec![0.0; n],
            gamma: 0.0,
            lambda_r: lambda as f64,
            lambda,
            epsilon,
            beta: epsilon,
            base_epsilon: epsilon,
            mode: Mode::Fixed,
            alpha: DEFAULT_ALPHA,
            lambda_min: lambda,
            lambda_max: Some(lambda),
            weights,
            centered,
            fisher_point: FisherPoint::Updated,
            minimize: true,
            baseline: Some(kind),
            iteration: 0,
            f_calls: 0,
            skipped: 0,
        })
    }

    /// Overrides the initial step size (and `β`, which tracks it).
    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::InvalidParameter(format!("step size must lie in (0, 1], got {epsilon}")));
        }
        if self.mode == Mode::Fixed && self.baseline == Some(Baseline::Umda) && epsilon != 1.0 {
            return Err(Error::InvalidConfig("UMDA uses ε = 1".into()));
        }
        self.epsilon = epsilon;
        self.beta = epsilon;
        self.base_epsilon = epsilon;
        Ok(self)
    }

    /// `None` removes the upper bound on `λ_r`.
    pub fn with_lambda_max(mut self, lambda_max: Option<usize>) -> Result<Self> {
        if self.mode == Mode::Fixed {
            return Err(Error::InvalidConfig("fixed-parameter optimizers do not adapt λ".into()));
        }
        if let Some(m) = lambda_max {
            if m < self.lambda_min {
                return Err(Error::InvalidParameter(format!("λ_max = {m} below λ_min = {}", self.lambda_min)));
            }
        }
        self.lambda_max = lambda_max;
        Ok(self)
    }

    pub fn with_fisher_point(mut self, point: FisherPoint) -> Self {
        self.fisher_point = point;
        self
    }

    pub fn with_weights(mut self, weights: WeightScheme) -> Self {
        self.weights = weights;
        self
    }

    /// Rank larger objective values higher.
    pub fn maximizing(mut self) -> Self {
        self.minimize = false;
        self
    }

    pub fn n(&self) -> usize {
        self.theta.n()
    }
    pub fn theta(&self) -> &ThetaParams {
        &self.theta
    }
    pub fn s(&self) -> &[f64] {
        &self.s
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn lambda_r(&self) -> f64 {
        self.lambda_r
    }
    pub fn lambda(&self) -> usize {
        self.lambda
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn mode(&self) -> Mode {
        self.mode
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn lambda_min(&self) -> usize {
        self.lambda_min
    }
    pub fn lambda_max(&self) -> Option<usize> {
        self.lambda_max
    }
    pub fn weights(&self) -> WeightScheme {
        self.weights
    }
    pub fn baseline(&self) -> Option<Baseline> {
        self.baseline
    }
    pub fn iteration(&self) -> u64 {
        self.iteration
    }
    pub fn f_calls(&self) -> u64 {
        self.f_calls
    }
    /// Number of iterations skipped because `σ_W² = 0`.
    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    /// `|s|² / γ`, or `None` before the first update.
    pub fn snr_ratio(&self) -> Option<f64> {
        (self.gamma > 0.0).then(|| self.s.iter().map(|v| v * v).sum::<f64>() / self.gamma)
    }

    /// Draws the next batch. Sample `i` of iteration `t` comes from
    /// `stream.path(&[SAMPLES, t]).child(i)`.
    pub fn ask(&self, stream: &Stream) -> Vec<BitString> {
        self.theta.sample_streams(self.lambda, &stream.path(&[tag::SAMPLES, self.iteration]))
    }

    /// Draws the next batch sequentially from `rng`.
    pub fn ask_with<R: RngCore + ?Sized>(&self, rng: &mut R) -> Vec<BitString> {
        self.theta.sample(self.lambda, rng)
    }

    /// Ranks `f_values` with the configured weight scheme and updates.
    pub fn tell(&mut self, samples: &[BitString], f_values: &[f64]) -> Result<TellOutcome> {
        self.check_batch(samples, f_values.len())?;
        check_finite(f_values)?;
        let utilities = self.weights.utilities(f_values, self.minimize)?;
        self.update(samples, &utilities)
    }

    /// Updates from caller-supplied utilities, which must be non-negative
    /// and not all zero.
    pub fn tell_utilities(&mut self, samples: &[BitString], utilities: &UtilityBatch) -> Result<TellOutcome> {
        self.check_batch(samples, utilities.len())?;
        if utilities.utilities().iter().any(|&w| w < 0.0) || utilities.utilities().iter().all(|&w| w == 0.0) {
            return Err(Error::DegenerateUtilities);
        }
        self.update(samples, utilities)
    }

    fn check_batch(&self, samples: &[BitString], values: usize) -> Result<()> {
        if samples.len() != self.lambda {
            return Err(Error::CountMismatch { expected: self.lambda, actual: samples.len() });
        }
        if values != samples.len() {
            return Err(Error::CountMismatch { expected: samples.len(), actual: values });
        }
        let n = self.n();
        if let Some(x) = samples.iter().find(|x| x.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, actual: x.len() });
        }
        Ok(())
    }

    fn update(&mut self, samples: &[BitString], utilities: &UtilityBatch) -> Result<TellOutcome> {
        let lambda = samples.len();
        self.iteration += 1;
        self.f_calls += lambda as u64;

        if utilities.var_w() == 0.0 {
            self.skipped += 1;
            return Ok(TellOutcome::Skipped);
        }
        let utilities = utilities.normalized().ok_or(Error::DegenerateUtilities)?;
        if utilities.var_w() == 0.0 {
            self.skipped += 1;
            return Ok(TellOutcome::Skipped);
        }

        let grad = if self.centered {
            natural_gradient_estimate(&self.theta, samples, &utilities)?
        } else {
            weighted_gradient(&self.theta, samples, utilities.utilities())
        };

        let previous = (self.fisher_point == FisherPoint::Previous).then(|| self.theta.clone());
        let step = self.epsilon / utilities.mean_w();
        let family = self.theta.family();
        let probs = self.theta.probs_mut();
        for (p, g) in probs.iter_mut().zip(&grad) {
            *p += step * g;
        }
        crate::family::ExponentialFamily::project(&family, probs);

        if self.mode == Mode::Fixed {
            return Ok(TellOutcome::Updated);
        }

        let n = self.n() as f64;
        let beta = self.beta;
        let fisher = previous.as_ref().unwrap_or(&self.theta).fisher_sqrt_diag()?;
        let coef = (beta * (2.0 - beta) * lambda as f64 / (n * utilities.var_w())).sqrt();
        for ((s, f), g) in self.s.iter_mut().zip(&fisher).zip(&grad) {
            *s = (1.0 - beta) * *s + coef * f * g;
        }
        // (1-β)² γ + β(2-β), rearranged so that rounding cannot take γ above 1.
        self.gamma = 1.0 - (1.0 - beta) * (1.0 - beta) * (1.0 - self.gamma);

        let norm2: f64 = self.s.iter().map(|v| v * v).sum();
        let mut lambda_r = self.lambda_r * (beta * (self.gamma - norm2 / self.alpha)).exp();
        if let Some(max) = self.lambda_max {
            lambda_r = lambda_r.min(max as f64);
        }
        self.lambda_r = lambda_r.max(self.lambda_min as f64);

        match self.mode {
            Mode::AdaptLambda => self.lambda = self.lambda_r.round() as usize,
            Mode::AdaptEpsilon => {
                self.lambda = self.lambda_min;
                self.epsilon = self.base_epsilon / (self.lambda_r / self.lambda_min as f64);
                self.beta = self.epsilon;
            }
            Mode::Fixed => unreachable!(),
        }
        Ok(TellOutcome::Updated)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }
}

/// `(1/λ) Σ (w_i - μ_W)(x_i - θ)`.
pub fn natural_gradient_estimate(
    theta: &ThetaParams,
    samples: &[BitString],
    utilities: &UtilityBatch,
) -> Result<Vec<f64>> {
    if samples.len() != utilities.len() {
        return Err(Error::CountMismatch { expected: samples.len(), actual: utilities.len() });
    }
    if let Some(x) = samples.iter().find(|x| x.len() != theta.n()) {
        return Err(Error::DimensionMismatch { expected: theta.n(), actual: x.len() });
    }
    Ok(weighted_gradient(theta, samples, &utilities.centered()))
}

/// `(1/λ) Σ c_i (x_i - θ)`.
fn weighted_gradient(theta: &ThetaParams, samples: &[BitString], coefs: &[f64]) -> Vec<f64> {
    let probs = theta.probs();
    let mut grad = vec![0.0; probs.len()];
    for (x, &c) in samples.iter().zip(coefs) {
        if c == 0.0 {
            continue;
        }
        for ((g, &bit), &p) in grad.iter_mut().zip(x.bits()).zip(probs) {
            let t = if bit { 1.0 } else { 0.0 };
            *g += c * (t - p);
        }
    }
    let inv = 1.0 / samples.len() as f64;
    for g in &mut grad {
        *g *= inv;
    }
    grad
}

/// Fixed point of `γ ← (1-β)² γ + β(2-β)`, which is 1 for every `β ∈ (0, 1]`.
pub fn snr_normalizer_fixed_point(beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidParameter(format!("β must lie in (0, 1], got {beta}")));
    }
    Ok(beta * (2.0 - beta) / (1.0 - (1.0 - beta) * (1.0 - beta)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bits(b: &[u8]) -> BitString {
        BitString::from_bits(b)
    }

    #[test]
    fn parameterless_defaults() {
        let st = OptimizerState::new_parameterless(100, Mode::AdaptLambda, DEFAULT_ALPHA).unwrap();
        assert_relative_eq!(st.epsilon(), 0.1);
        assert_relative_eq!(st.beta(), 0.1);
        assert_eq!(st.lambda(), 2);
        assert_eq!(st.lambda_r(), 2.0);
        assert_eq!(st.lambda_max(), Some(100));
        assert_eq!(st.gamma(), 0.0);
        assert!(st.s().iter().all(|&v| v == 0.0));
        assert!(st.theta().probs().iter().all(|&p| p == 0.5));

        let st = OptimizerState::new_parameterless(4, Mode::AdaptEpsilon, DEFAULT_ALPHA).unwrap();
        assert_eq!(st.epsilon(), 0.5);
        assert_eq!(st.lambda_max(), Some(4));

        assert!(OptimizerState::new_parameterless(4, Mode::AdaptLambda, 0.5).is_err());
        assert!(OptimizerState::new_parameterless(4, Mode::AdaptLambda, f64::NAN).is_err());
        assert!(OptimizerState::new_parameterless(1, Mode::AdaptLambda, 1.5).is_err());
        assert!(OptimizerState::new_parameterless(4, Mode::Fixed, 1.5).is_err());
    }

    #[test]
    fn baseline_constructors() {
        let cga = OptimizerState::new_baseline(Baseline::Cga, 100, 2, Baseline::Cga.default_epsilon(100)).unwrap();
        assert_eq!(cga.lambda(), 2);
        assert_relative_eq!(cga.epsilon(), 0.01);
        let cga = OptimizerState::new_baseline(Baseline::Cga, 100, 2, 0.1).unwrap();
        assert_relative_eq!(cga.epsilon(), 0.1);
        let umda = OptimizerState::new_baseline(Baseline::Umda, 50, 20, 1.0).unwrap();
        assert_eq!(umda.epsilon(), 1.0);
        assert_eq!(umda.lambda(), 20);

        assert!(OptimizerState::new_baseline(Baseline::Cga, 100, 4, 0.01).is_err());
        assert!(OptimizerState::new_baseline(Baseline::Umda, 100, 20, 0.5).is_err());
        assert!(OptimizerState::new_baseline(Baseline::Pbil, 100, 1, 0.5).is_err());
        assert!(OptimizerState::new_baseline(Baseline::Pbil, 100, 10, 0.0).is_err());
    }

    #[test]
    fn gradient_hand_example() {
        let theta = ThetaParams::init_uniform(2).unwrap();
        let samples = vec![bits(&[1, 1]), bits(&[0, 0])];
        let u = UtilityBatch::from_utilities(vec![4.0, 0.0]).unwrap();
        assert_eq!(u.centered(), vec![2.0, -2.0]);
        let g = natural_gradient_estimate(&theta, &samples, &u).unwrap();
        assert_eq!(g, vec![1.0, 1.0]);

        let u = UtilityBatch::from_utilities(vec![3.0, 3.0]).unwrap();
        assert_eq!(natural_gradient_estimate(&theta, &samples, &u).unwrap(), vec![0.0, 0.0]);
        assert!(natural_gradient_estimate(&theta, &samples[..1], &u).is_err());
    }

    #[test]
    fn zero_variance_batch_is_skipped() {
        let mut st = OptimizerState::new_parameterless(4, Mode::AdaptLambda, 1.5).unwrap();
        let before = st.clone();
        let xs = vec![bits(&[1, 0, 1, 0]), bits(&[0, 1, 0, 1])];
        assert_eq!(st.tell(&xs, &[3.0, 3.0]).unwrap(), TellOutcome::Skipped);
        assert_eq!(st.theta(), before.theta());
        assert_eq!(st.s(), before.s());
        assert_eq!(st.gamma(), before.gamma());
        assert_eq!(st.lambda_r(), before.lambda_r());
        assert_eq!(st.iteration(), 1);
        assert_eq!(st.f_calls(), 2);
        assert_eq!(st.skipped(), 1);
    }

    #[test]
    fn first_update_sets_gamma() {
        let mut st = OptimizerState::new_parameterless(100, Mode::AdaptLambda, 1.5).unwrap();
        let xs = st.ask(&Stream::new(1));
        let f: Vec<f64> = xs.iter().map(|x| (100 - x.count_ones()) as f64).collect();
        let f = if f[0] == f[1] { vec![0.0, 1.0] } else { f };
        st.tell(&xs, &f).unwrap();
        assert_relative_eq!(st.gamma(), 0.19, max_relative = 1e-14);
    }

    #[test]
    fn gamma_never_exceeds_one_with_varying_beta() {
        let mut st = OptimizerState::new_parameterless(50, Mode::AdaptEpsilon, 1.5).unwrap();
        let stream = Stream::new(3);
        for _ in 0..3000 {
            let xs = st.ask(&stream);
            let f: Vec<f64> = xs.iter().map(|x| (50 - x.count_ones()) as f64).collect();
            st.tell(&xs, &f).unwrap();
            assert!((0.0..=1.0).contains(&st.gamma()), "{}", st.gamma());
        }
    }

    #[test]
    fn lambda_r_unchanged_at_target() {
        // |s|² = αγ after the update: choose α accordingly.
        let mut st = OptimizerState::new_parameterless(4, Mode::AdaptLambda, 1.5).unwrap();
        let xs = vec![bits(&[1, 1, 0, 0]), bits(&[0, 0, 1, 1])];
        let mut probe = st.clone();
        probe.tell(&xs, &[0.0, 1.0]).unwrap();
        let norm2: f64 = probe.s().iter().map(|v| v * v).sum();
        st.alpha = norm2 / probe.gamma();
        st.tell(&xs, &[0.0, 1.0]).unwrap();
        assert_relative_eq!(st.lambda_r(), 2.0, max_relative = 1e-12);
    }

    #[test]
    fn hand_update_matches_formula() {
        // n = 4, λ = 2, ε = β = 0.5, x1 better.
        let mut st = OptimizerState::new_parameterless(4, Mode::AdaptLambda, 1.5).unwrap();
        let xs = vec![bits(&[1, 1, 0, 0]), bits(&[0, 1, 1, 0])];
        st.tell(&xs, &[0.0, 1.0]).unwrap();
        // utilities (4, 0) -> normalized (2, 0), mean 1, var 1, centered (1, -1)
        // grad = ((1)(x1-θ) - (x2-θ)) / 2 = (x1 - x2)/2 = (0.5, 0, -0.5, 0)
        // θ = 0.5 + 0.5 * grad = (0.75, 0.5, 0.25, 0.5)
        let expected = [0.75, 0.5, 0.25, 0.5];
        for (p, e) in st.theta().probs().iter().zip(expected) {
            assert_relative_eq!(*p, e, max_relative = 1e-15);
        }
        // s = sqrt(0.75 * 2 / 4) * F^{1/2}(θ') * grad
        let coef = (0.75f64 * 2.0 / 4.0).sqrt();
        let f0 = 1.0 / (0.75f64 * 0.25).sqrt();
        assert_relative_eq!(st.s()[0], coef * f0 * 0.5, max_relative = 1e-14);
        assert_relative_eq!(st.s()[2], -coef * f0 * 0.5, max_relative = 1e-14);
        assert_eq!(st.s()[1], 0.0);
        assert_relative_eq!(st.gamma(), 0.75);
        let norm2 = 2.0 * (coef * f0 * 0.5).powi(2);
        let lr = (2.0 * (0.5 * (0.75 - norm2 / 1.5)).exp()).clamp(2.0, 4.0);
        assert_relative_eq!(st.lambda_r(), lr, max_relative = 1e-14);
    }

    #[test]
    fn adapt_epsilon_ties_beta_to_epsilon() {
        let mut st = OptimizerState::new_parameterless(16, Mode::AdaptEpsilon, 1.5).unwrap();
        let stream = Stream::new(5);
        for _ in 0..200 {
            let xs = st.ask(&stream);
            let f: Vec<f64> = xs.iter().map(|x| (16 - x.count_ones()) as f64).collect();
            st.tell(&xs, &f).unwrap();
            assert_eq!(st.lambda(), 2);
            assert_eq!(st.epsilon(), st.beta());
            let e0 = 0.25;
            assert_relative_eq!(st.epsilon(), e0 * 2.0 / st.lambda_r(), max_relative = 1e-14);
            assert!(st.epsilon() <= e0 + 1e-15 && st.epsilon() >= e0 * 2.0 / 16.0 - 1e-15);
        }
    }

    #[test]
    fn adapted_lambda_rounds() {
        let mut st = OptimizerState::new_parameterless(100, Mode::AdaptLambda, 1.5).unwrap();
        st.lambda_r = 7.4;
        // Zero-signal update with |s|² = αγ keeps λ_r; easier to check the rounding rule directly.
        assert_eq!(st.lambda_r.round() as usize, 7);
        let stream = Stream::new(9);
        for _ in 0..50 {
            let xs = st.ask(&stream);
            assert_eq!(xs.len(), st.lambda());
            let f: Vec<f64> = xs.iter().map(|x| (100 - x.count_ones()) as f64).collect();
            st.tell(&xs, &f).unwrap();
            assert_eq!(st.lambda(), st.lambda_r().round() as usize);
        }
    }

    #[test]
    fn ask_is_deterministic() {
        let st = OptimizerState::new_parameterless(30, Mode::AdaptLambda, 1.5).unwrap();
        let s = Stream::new(42);
        assert_eq!(st.ask(&s), st.ask(&s));
        assert_eq!(st.ask(&s).len(), 2);
        assert!(st.ask(&s).iter().all(|x| x.len() == 30));
    }

    #[test]
    fn tell_validates_batch() {
        let mut st = OptimizerState::new_parameterless(4, Mode::AdaptLambda, 1.5).unwrap();
        let xs = vec![bits(&[1, 1, 0, 0]), bits(&[0, 1, 1, 0])];
        assert!(st.tell(&xs, &[0.0]).is_err());
        assert!(st.tell(&xs[..1], &[0.0]).is_err());
        assert!(st.tell(&[bits(&[1, 1]), bits(&[0, 0])], &[0.0, 1.0]).is_err());
        assert!(st.tell(&xs, &[0.0, f64::NAN]).is_err());
        let neg = UtilityBatch::from_utilities(vec![-1.0, 2.0]).unwrap();
        assert!(matches!(st.tell_utilities(&xs, &neg), Err(Error::DegenerateUtilities)));
        let zero = UtilityBatch::from_utilities(vec![0.0, 0.0]).unwrap();
        assert!(matches!(st.tell_utilities(&xs, &zero), Err(Error::DegenerateUtilities)));
        assert_eq!(st.iteration(), 0);
    }

    #[test]
    fn fixed_point_examples() {
        assert_relative_eq!(snr_normalizer_fixed_point(0.1).unwrap(), 1.0, max_relative = 1e-14);
        assert_eq!(snr_normalizer_fixed_point(1.0).unwrap(), 1.0);
        assert!(snr_normalizer_fixed_point(0.0).is_err());
        assert!(snr_normalizer_fixed_point(1.5).is_err());
    }

    #[test]
    fn json_snapshot_round_trip() {
        let mut st = OptimizerState::new_parameterless(12, Mode::AdaptLambda, 1.5)
            .unwrap()
            .with_lambda_max(None)
            .unwrap();
        let stream = Stream::new(3);
        for _ in 0..10 {
            let xs = st.ask(&stream);
            let f: Vec<f64> = xs.iter().map(|x| (12 - x.count_ones()) as f64).collect();
            st.tell(&xs, &f).unwrap();
        }
        let json = st.to_json().unwrap();
        assert!(json.contains("\"lambda_r\""));
        assert!(json.contains("\"lambda_max\":null"));
        assert_eq!(OptimizerState::from_json(&json).unwrap(), st);
    }

    #[test]
    fn fisher_point_previous_differs() {
        let xs = vec![bits(&[1, 1, 0, 0]), bits(&[0, 1, 1, 0])];
        let mut a = OptimizerState::new_parameterless(4, Mode::AdaptLambda, 1.5).unwrap();
        let mut b = a.clone().with_fisher_point(FisherPoint::Previous);
        a.tell(&xs, &[0.0, 1.0]).unwrap();
        b.tell(&xs, &[0.0, 1.0]).unwrap();
        assert_eq!(a.theta(), b.theta());
        // F^{1/2} at θ = 0.5 is 2.
        let coef = (0.75f64 * 2.0 / 4.0).sqrt();
        assert_relative_eq!(b.s()[0], coef * 2.0 * 0.5, max_relative = 1e-14);
        assert_ne!(a.s(), b.s());
    }
}
