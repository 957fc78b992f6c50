//! First-hitting-time experiments.
//!
//! A trial runs ask, evaluate, tell until a sampled point is the optimum or
//! the next batch would exceed the budget. Hitting times count objective
//! evaluations up to and including the optimal sample.

mod emit;
pub mod stats;
mod suite;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use emit::{emit, read_jsonl, write_alpha_csv, write_report_csv, CsvRow, OutputFormat};
pub use suite::{
    run_alpha_sweep, run_suite, trial_seed, Aggregate, AlphaRow, AlphaSweepConfig, AlphaSweepOutput, SuiteConfig,
    SuiteOutput, SuiteReport, DEFAULT_N_GRID,
};

use crate::error::{Error, Result};
use crate::igo::{Baseline, Mode, OptimizerState, DEFAULT_ALPHA};
use crate::objective::{ObjectiveKind, ObjectiveSpec};
use crate::rng::{tag, Stream};

/// Default evaluation budget per trial.
pub const DEFAULT_BUDGET: u64 = 10_000_000;

/// Trajectories are stored every iteration up to this dimension and every
/// `THIN_STRIDE` iterations above it.
pub const FULL_TRAJECTORY_MAX_N: usize = 200;
pub const THIN_STRIDE: u64 = 10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsilonChoice {
    /// The algorithm's own default.
    #[default]
    Default,
    InvN,
    InvSqrtN,
    Value(f64),
}

impl EpsilonChoice {
    pub fn resolve(self, n: usize, default: f64) -> f64 {
        match self {
            EpsilonChoice::Default => default,
            EpsilonChoice::InvN => 1.0 / n as f64,
            EpsilonChoice::InvSqrtN => 1.0 / (n as f64).sqrt(),
            EpsilonChoice::Value(v) => v,
        }
    }
}

impl fmt::Display for EpsilonChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpsilonChoice::Default => f.write_str("default"),
            EpsilonChoice::InvN => f.write_str("inv-n"),
            EpsilonChoice::InvSqrtN => f.write_str("inv-sqrt-n"),
            EpsilonChoice::Value(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for EpsilonChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(EpsilonChoice::Default),
            "inv-n" => Ok(EpsilonChoice::InvN),
            "inv-sqrt-n" => Ok(EpsilonChoice::InvSqrtN),
            other => match other.parse::<f64>() {
                Ok(v) if v > 0.0 && v <= 1.0 => Ok(EpsilonChoice::Value(v)),
                _ => Err(Error::InvalidConfig(format!(
                    "epsilon must be default, inv-n, inv-sqrt-n or a number in (0, 1], got {other:?}"
                ))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "kebab-case")]
pub enum AlgorithmConfig {
    PbilLambda { alpha: f64, epsilon: EpsilonChoice },
    PbilEps { alpha: f64, epsilon: EpsilonChoice },
    Cga { epsilon: EpsilonChoice },
    Umda { lambda: usize },
    Pbil { lambda: usize, epsilon: EpsilonChoice },
}

impl AlgorithmConfig {
    pub fn pbil_lambda() -> Self {
        AlgorithmConfig::PbilLambda { alpha: DEFAULT_ALPHA, epsilon: EpsilonChoice::Default }
    }

    pub fn pbil_eps() -> Self {
        AlgorithmConfig::PbilEps { alpha: DEFAULT_ALPHA, epsilon: EpsilonChoice::Default }
    }

    pub fn cga(epsilon: EpsilonChoice) -> Self {
        AlgorithmConfig::Cga { epsilon }
    }

    /// Short name plus any non-default parameters, e.g. `cga(eps=inv-sqrt-n)`.
    pub fn label(&self) -> String {
        fn params(alpha: Option<f64>, eps: EpsilonChoice, lambda: Option<usize>) -> String {
            let mut parts = Vec::new();
            if let Some(l) = lambda {
                parts.push(format!("lambda={l}"));
            }
            if let Some(a) = alpha.filter(|a| *a != DEFAULT_ALPHA) {
                parts.push(format!("alpha={a}"));
            }
            if eps != EpsilonChoice::Default {
                parts.push(format!("eps={eps}"));
            }
            if parts.is_empty() {
                String::new()
            } else {
                format!("({})", parts.join(","))
            }
        }
        match self {
            AlgorithmConfig::PbilLambda { alpha, epsilon } => format!("pbil-lambda{}", params(Some(*alpha), *epsilon, None)),
            AlgorithmConfig::PbilEps { alpha, epsilon } => format!("pbil-eps{}", params(Some(*alpha), *epsilon, None)),
            AlgorithmConfig::Cga { epsilon } => format!("cga{}", params(None, *epsilon, None)),
            AlgorithmConfig::Umda { lambda } => format!("umda{}", params(None, EpsilonChoice::Default, Some(*lambda))),
            AlgorithmConfig::Pbil { lambda, epsilon } => format!("pbil{}", params(None, *epsilon, Some(*lambda))),
        }
    }

    pub fn build(&self, n: usize) -> Result<OptimizerState> {
        let sqrt_inv = 1.0 / (n as f64).sqrt();
        match *self {
            AlgorithmConfig::PbilLambda { alpha, epsilon } => {
                OptimizerState::new_parameterless(n, Mode::AdaptLambda, alpha)?.with_epsilon(epsilon.resolve(n, sqrt_inv))
            }
            AlgorithmConfig::PbilEps { alpha, epsilon } => {
                OptimizerState::new_parameterless(n, Mode::AdaptEpsilon, alpha)?.with_epsilon(epsilon.resolve(n, sqrt_inv))
            }
            AlgorithmConfig::Cga { epsilon } => {
                OptimizerState::new_baseline(Baseline::Cga, n, 2, epsilon.resolve(n, Baseline::Cga.default_epsilon(n)))
            }
            AlgorithmConfig::Umda { lambda } => OptimizerState::new_baseline(Baseline::Umda, n, lambda, 1.0),
            AlgorithmConfig::Pbil { lambda, epsilon } => {
                OptimizerState::new_baseline(Baseline::Pbil, n, lambda, epsilon.resolve(n, Baseline::Pbil.default_epsilon(n)))
            }
        }
    }

    /// Same algorithm with a different SNR target. Baselines are unchanged.
    pub fn with_alpha(&self, alpha: f64) -> Self {
        match *self {
            AlgorithmConfig::PbilLambda { epsilon, .. } => AlgorithmConfig::PbilLambda { alpha, epsilon },
            AlgorithmConfig::PbilEps { epsilon, .. } => AlgorithmConfig::PbilEps { alpha, epsilon },
            ref other => other.clone(),
        }
    }
}

/// Instantiates an objective for dimension `n`. Linear weights longer than
/// `n` are truncated to their first `n` entries.
pub fn build_objective(kind: &ObjectiveKind, n: usize) -> Result<ObjectiveSpec> {
    match kind {
        ObjectiveKind::Linear { weights } if weights.len() > n => {
            ObjectiveSpec::new(ObjectiveKind::Linear { weights: weights[..n].to_vec() }, n)
        }
        other => ObjectiveSpec::new(other.clone(), n),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub iteration: u64,
    pub lambda: usize,
    pub epsilon: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaSummary {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub n: usize,
    pub algorithm: String,
    pub objective: String,
    /// Evaluations until the optimum was first sampled.
    pub hitting_time: Option<u64>,
    pub exhausted: bool,
    pub budget: u64,
    pub evaluations: u64,
    pub iterations: u64,
    /// Median of the per-iteration sample size over all iterations.
    pub median_lambda: f64,
    /// Median of the sample size over evaluations, so that each iteration
    /// counts with weight λ.
    pub time_median_lambda: f64,
    /// Mean of the per-iteration step size over all iterations.
    pub mean_epsilon: f64,
    /// Fraction of iterations run at the minimum sample size.
    pub min_lambda_fraction: f64,
    pub lambda_trajectory: Vec<TrajectoryPoint>,
    pub final_theta_summary: ThetaSummary,
    pub error: Option<String>,
}

impl TrialRecord {
    /// Hitting time with exhausted trials censored at the budget.
    pub fn censored_time(&self) -> u64 {
        self.hitting_time.unwrap_or(self.budget)
    }

    pub fn solved(&self) -> bool {
        self.hitting_time.is_some()
    }

    fn failed(seed: u64, n: usize, algorithm: String, objective: String, budget: u64, err: &Error) -> Self {
        TrialRecord {
            seed,
            n,
            algorithm,
            objective,
            hitting_time: None,
            exhausted: true,
            budget,
            evaluations: 0,
            iterations: 0,
            median_lambda: 0.0,
            time_median_lambda: 0.0,
            mean_epsilon: 0.0,
            min_lambda_fraction: 0.0,
            lambda_trajectory: Vec::new(),
            final_theta_summary: ThetaSummary { min: f64::NAN, mean: f64::NAN, max: f64::NAN },
            error: Some(err.to_string()),
        }
    }
}

/// One seeded run. Deterministic in `seed`.
pub fn run_trial(
    algorithm: &AlgorithmConfig,
    objective: &ObjectiveKind,
    n: usize,
    budget: u64,
    seed: u64,
) -> Result<TrialRecord> {
    let mut opt = algorithm.build(n)?;
    let mut f = build_objective(objective, n)?;
    if budget < opt.lambda_min() as u64 {
        return Err(Error::InvalidConfig(format!("budget {budget} below the minimum sample size")));
    }
    let noisy = matches!(objective, ObjectiveKind::NoisyOneMax { .. });
    let stream = Stream::new(seed);
    let stride = if n <= FULL_TRAJECTORY_MAX_N { 1 } else { THIN_STRIDE };
    let lambda_min = opt.lambda_min();

    let mut trajectory = Vec::new();
    let mut lambda_hist: BTreeMap<usize, u64> = BTreeMap::new();
    let mut eps_sum = 0.0;
    let mut evaluations = 0u64;
    let mut hit = None;
    // Deterministic objectives never draw; this generator is never advanced.
    let mut idle = stream.child(tag::NOISE).rng();
    let mut values = Vec::new();

    loop {
        let lambda = opt.lambda();
        if evaluations + lambda as u64 > budget {
            break;
        }
        let iteration = opt.iteration();
        if iteration % stride == 0 {
            trajectory.push(TrajectoryPoint { iteration, lambda, epsilon: opt.epsilon() });
        }
        *lambda_hist.entry(lambda).or_default() += 1;
        eps_sum += opt.epsilon();

        let samples = opt.ask(&stream);
        let noise = stream.path(&[tag::NOISE, iteration]);
        values.clear();
        for (i, x) in samples.iter().enumerate() {
            let v = if noisy {
                f.evaluate(x, &mut noise.child(i as u64).rng())?
            } else {
                f.evaluate(x, &mut idle)?
            };
            values.push(v);
            if hit.is_none() && f.is_optimum(x) {
                hit = Some(evaluations + i as u64 + 1);
            }
        }
        evaluations += lambda as u64;
        if hit.is_some() {
            break;
        }
        opt.tell(&samples, &values)?;
    }
    debug_assert_eq!(evaluations, f.eval_count());

    let iterations: u64 = lambda_hist.values().sum();
    let eval_hist: BTreeMap<usize, u64> = lambda_hist.iter().map(|(&l, &c)| (l, c * l as u64)).collect();
    let (min, mean, max) = opt.theta().summary();
    Ok(TrialRecord {
        seed,
        n,
        algorithm: algorithm.label(),
        objective: objective.label().to_string(),
        hitting_time: hit,
        exhausted: hit.is_none(),
        budget,
        evaluations,
        iterations,
        median_lambda: histogram_median(&lambda_hist),
        time_median_lambda: histogram_median(&eval_hist),
        mean_epsilon: if iterations > 0 { eps_sum / iterations as f64 } else { opt.epsilon() },
        min_lambda_fraction: if iterations > 0 {
            lambda_hist.get(&lambda_min).copied().unwrap_or(0) as f64 / iterations as f64
        } else {
            0.0
        },
        lambda_trajectory: trajectory,
        final_theta_summary: ThetaSummary { min, mean, max },
        error: None,
    })
}

fn histogram_median(hist: &BTreeMap<usize, u64>) -> f64 {
    let total: u64 = hist.values().sum();
    if total == 0 {
        return 0.0;
    }
    let at = |pos: u64| {
        let mut seen = 0;
        for (&v, &c) in hist {
            seen += c;
            if pos < seen {
                return v as f64;
            }
        }
        unreachable!()
    };
    (at((total - 1) / 2) + at(total / 2)) / 2.0
}
