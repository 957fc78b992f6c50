use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{median, quartiles};
use super::{run_trial, AlgorithmConfig, TrialRecord, DEFAULT_BUDGET};
use crate::error::{Error, Result};
use crate::objective::ObjectiveKind;
use crate::rng::{label_tag, Stream};

pub const DEFAULT_N_GRID: [usize; 6] = [10, 30, 100, 300, 1000, 3000];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub algorithms: Vec<AlgorithmConfig>,
    pub objectives: Vec<ObjectiveKind>,
    pub ns: Vec<usize>,
    pub trials: usize,
    pub base_seed: u64,
    pub budget: u64,
    /// Worker threads; results do not depend on it.
    pub workers: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            algorithms: vec![AlgorithmConfig::pbil_lambda()],
            objectives: vec![ObjectiveKind::OneMax],
            ns: DEFAULT_N_GRID.to_vec(),
            trials: 10,
            base_seed: 0,
            budget: DEFAULT_BUDGET,
            workers: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub algorithm: String,
    pub objective: String,
    pub n: usize,
    pub trials: usize,
    pub successes: usize,
    /// Quartiles of the hitting time with exhausted trials at the budget.
    pub lower_quartile: f64,
    pub median: f64,
    pub upper_quartile: f64,
    pub median_lambda: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub aggregates: Vec<Aggregate>,
}

impl SuiteReport {
    pub fn find(&self, algorithm: &str, objective: &str, n: usize) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.algorithm == algorithm && a.objective == objective && a.n == n)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteOutput {
    pub report: SuiteReport,
    pub records: Vec<TrialRecord>,
}

/// Seed of one trial, a pure function of its coordinates.
pub fn trial_seed(base_seed: u64, algorithm: &str, objective: &str, n: usize, trial: usize) -> u64 {
    Stream::new(base_seed)
        .path(&[label_tag(algorithm), label_tag(objective), n as u64, trial as u64])
        .key()
}

struct Job<'a> {
    algorithm: &'a AlgorithmConfig,
    objective: &'a ObjectiveKind,
    n: usize,
    seed: u64,
}

fn run_jobs(jobs: &[Job<'_>], budget: u64, workers: usize) -> Result<Vec<TrialRecord>> {
    let run = |job: &Job<'_>| {
        run_trial(job.algorithm, job.objective, job.n, budget, job.seed).unwrap_or_else(|e| {
            TrialRecord::failed(job.seed, job.n, job.algorithm.label(), job.objective.label().into(), budget, &e)
        })
    };
    if workers <= 1 {
        return Ok(jobs.iter().map(run).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(pool.install(|| jobs.par_iter().map(run).collect()))
}

fn aggregate(records: &[TrialRecord]) -> Aggregate {
    let first = &records[0];
    let times: Vec<f64> = records.iter().map(|r| r.censored_time() as f64).collect();
    let (lower_quartile, median_time, upper_quartile) = quartiles(&times);
    let lambdas: Vec<f64> = records.iter().map(|r| r.median_lambda).collect();
    Aggregate {
        algorithm: first.algorithm.clone(),
        objective: first.objective.clone(),
        n: first.n,
        trials: records.len(),
        successes: records.iter().filter(|r| r.solved()).count(),
        lower_quartile,
        median: median_time,
        upper_quartile,
        median_lambda: median(&lambdas),
    }
}

/// Runs every algorithm × objective × n × trial combination.
pub fn run_suite(config: &SuiteConfig) -> Result<SuiteOutput> {
    if config.trials == 0 {
        return Err(Error::InvalidConfig("at least one trial is required".into()));
    }
    let mut jobs = Vec::new();
    for algorithm in &config.algorithms {
        let label = algorithm.label();
        for objective in &config.objectives {
            for &n in &config.ns {
                for t in 0..config.trials {
                    let seed = trial_seed(config.base_seed, &label, objective.label(), n, t);
                    jobs.push(Job { algorithm, objective, n, seed });
                }
            }
        }
    }
    let records = run_jobs(&jobs, config.budget, config.workers)?;
    let aggregates = records.chunks(config.trials).map(aggregate).collect();
    Ok(SuiteOutput { report: SuiteReport { aggregates }, records })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaSweepConfig {
    pub alphas: Vec<f64>,
    /// Algorithm whose `alpha` is swept (PBIL-λ by default).
    pub algorithm: AlgorithmConfig,
    pub objectives: Vec<ObjectiveKind>,
    pub ns: Vec<usize>,
    pub trials: usize,
    pub base_seed: u64,
    pub budget: u64,
    pub workers: usize,
}

impl Default for AlphaSweepConfig {
    fn default() -> Self {
        AlphaSweepConfig {
            alphas: vec![1.1, 1.5, 2.0],
            algorithm: AlgorithmConfig::pbil_lambda(),
            objectives: vec![ObjectiveKind::OneMax],
            ns: DEFAULT_N_GRID.to_vec(),
            trials: 10,
            base_seed: 0,
            budget: DEFAULT_BUDGET,
            workers: 1,
        }
    }
}

/// Hitting times of one `alpha` relative to the median hitting time of the
/// best `alpha` at the same objective and dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaRow {
    pub objective: String,
    pub n: usize,
    pub alpha: f64,
    pub median_hitting_time: f64,
    pub successes: usize,
    pub lower_quartile_ratio: f64,
    pub median_ratio: f64,
    pub upper_quartile_ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlphaSweepOutput {
    pub rows: Vec<AlphaRow>,
    pub records: Vec<TrialRecord>,
}

impl AlphaSweepOutput {
    /// Worst median over best median for one objective and dimension.
    pub fn worst_to_best(&self, objective: &str, n: usize) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.objective == objective && r.n == n)
            .map(|r| r.median_ratio)
            .reduce(f64::max)
    }
}

pub fn run_alpha_sweep(config: &AlphaSweepConfig) -> Result<AlphaSweepOutput> {
    if config.trials == 0 {
        return Err(Error::InvalidConfig("at least one trial is required".into()));
    }
    if let Some(a) = config.alphas.iter().find(|a| !(a.is_finite() && **a >= 1.0)) {
        return Err(Error::InvalidConfig(format!("alpha must be at least 1, got {a}")));
    }
    let algorithms: Vec<AlgorithmConfig> = config.alphas.iter().map(|&a| config.algorithm.with_alpha(a)).collect();
    let mut jobs = Vec::new();
    for objective in &config.objectives {
        for &n in &config.ns {
            for algorithm in &algorithms {
                let label = algorithm.label();
                for t in 0..config.trials {
                    let seed = trial_seed(config.base_seed, &label, objective.label(), n, t);
                    jobs.push(Job { algorithm, objective, n, seed });
                }
            }
        }
    }
    let records = run_jobs(&jobs, config.budget, config.workers)?;

    let mut rows = Vec::new();
    let per_cell = config.trials * config.alphas.len();
    for cell in records.chunks(per_cell) {
        let groups: Vec<&[TrialRecord]> = cell.chunks(config.trials).collect();
        let medians: Vec<f64> = groups
            .iter()
            .map(|g| median(&g.iter().map(|r| r.censored_time() as f64).collect::<Vec<_>>()))
            .collect();
        // Quantiles commute with division by a positive constant.
        let best = medians.iter().copied().fold(f64::INFINITY, f64::min);
        for ((group, &alpha), &med) in groups.iter().zip(&config.alphas).zip(&medians) {
            let times: Vec<f64> = group.iter().map(|r| r.censored_time() as f64).collect();
            let (q1, q2, q3) = quartiles(&times);
            rows.push(AlphaRow {
                objective: group[0].objective.clone(),
                n: group[0].n,
                alpha,
                median_hitting_time: med,
                successes: group.iter().filter(|r| r.solved()).count(),
                lower_quartile_ratio: q1 / best,
                median_ratio: q2 / best,
                upper_quartile_ratio: q3 / best,
            });
        }
    }
    Ok(AlphaSweepOutput { rows, records })
}
