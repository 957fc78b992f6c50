//! `pigo`: first-hitting-time experiments and the gated network demo.
//!
//! Exit status is 0 on completion, 2 when the configuration is rejected
//! before any work starts and 1 when a run or the output fails.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pigo_core::harness::{
    build_objective, emit, run_alpha_sweep, run_suite, write_alpha_csv, AlgorithmConfig, AlphaSweepConfig,
    EpsilonChoice, OutputFormat, SuiteConfig, SuiteReport, DEFAULT_BUDGET,
};
use pigo_core::igo::DEFAULT_ALPHA;
use pigo_core::neuro::{
    load_csv_dataset, train_simultaneous, GatingKind, HistoryPoint, NeuroOptimizer, SplitData, TrainConfig,
    TrainSummary,
};
use pigo_core::objective::load_linear_weights;
use pigo_core::ObjectiveKind;

#[derive(Debug, Parser)]
#[command(name = "pigo", version, about = "Parameterless natural gradient optimization over bit strings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// First hitting times over a grid of dimensions.
    Bench(BenchArgs),
    /// Hitting times of PBIL-λ or PBIL-ε for several SNR targets.
    AlphaSweep(AlphaSweepArgs),
    /// Train a small gated network jointly with its gate distribution.
    Neuro(NeuroArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum AlgoArg {
    PbilLambda,
    PbilEps,
    Cga,
    Umda,
    Pbil,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ObjectiveArg {
    Onemax,
    Leadingones,
    Linear,
    NoisyOnemax,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Jsonl => OutputFormat::Jsonl,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Layerskip,
    Activation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum NeuroOptimizerArg {
    PbilEps,
    PbilLambda,
    Cga,
    AllOnes,
    AllZeros,
}

/// Flags shared by `bench` and `alpha-sweep`.
#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Objectives, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "onemax")]
    objective: Vec<ObjectiveArg>,
    /// Dimensions, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// `default`, `inv-n`, `inv-sqrt-n` or a number in (0, 1].
    #[arg(long, default_value = "default")]
    epsilon: String,
    /// Evaluation budget per trial.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads. Results do not depend on it.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// File with one positive weight per line for `linear`; the first `n`
    /// weights are used.
    #[arg(long)]
    weights_file: Option<PathBuf>,
    /// Noise standard deviation for `noisy-onemax`.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Algorithms, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "pbil-lambda")]
    algo: Vec<AlgoArg>,
    /// SNR target of PBIL-λ and PBIL-ε.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Sample size of UMDA and PBIL.
    #[arg(long)]
    lambda: Option<usize>,
    #[command(flatten)]
    common: ExperimentArgs,
}

#[derive(Debug, Args)]
struct AlphaSweepArgs {
    #[arg(long, value_enum, default_value = "pbil-lambda")]
    algo: AlgoArg,
    /// SNR targets, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1.1,1.5,2.0")]
    alphas: Vec<f64>,
    /// Optional file for the per-α ratio table (CSV).
    #[arg(long)]
    ratios_out: Option<PathBuf>,
    #[command(flatten)]
    common: ExperimentArgs,
}

#[derive(Debug, Args)]
struct NeuroArgs {
    #[arg(long, value_enum, default_value = "layerskip")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "pbil-eps")]
    optimizer: NeuroOptimizerArg,
    /// Number of weight updates.
    #[arg(long, default_value_t = 6000)]
    updates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSONL file: one row per update, then a summary row.
    #[arg(long)]
    out: PathBuf,
    /// Training set as CSV (numeric features, then an integer label).
    /// Without it a three-class spiral problem is generated.
    #[arg(long)]
    train_csv: Option<PathBuf>,
    /// Test set as CSV. Without it every fourth training row is held out.
    #[arg(long, requires = "train_csv")]
    test_csv: Option<PathBuf>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Give PBIL-λ mini-batches of twice the size.
    #[arg(long)]
    double_batch: bool,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Angular noise of the generated spirals, in radians.
    #[arg(long, default_value_t = 0.2)]
    noise: f64,
}

/// Rejected before any work started, or failed while running.
enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

trait Stage<T> {
    fn config(self) -> Result<T, Failure>;
    fn run(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Stage<T> for Result<T, E> {
    fn config(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }

    fn run(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Run(e.into()))
    }
}

fn config_error(msg: impl Into<String>) -> Failure {
    Failure::Config(anyhow::anyhow!(msg.into()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bench(args) => bench(args),
        Command::AlphaSweep(args) => alpha_sweep(args),
        Command::Neuro(args) => neuro(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn objectives(args: &ExperimentArgs) -> Result<Vec<ObjectiveKind>, Failure> {
    let mut out = Vec::new();
    for o in &args.objective {
        out.push(match o {
            ObjectiveArg::Onemax => ObjectiveKind::OneMax,
            ObjectiveArg::Leadingones => ObjectiveKind::LeadingOnes,
            ObjectiveArg::NoisyOnemax => ObjectiveKind::NoisyOneMax { sigma: args.sigma },
            ObjectiveArg::Linear => {
                let path = args.weights_file.as_ref().ok_or_else(|| config_error("linear requires --weights-file"))?;
                let weights = load_linear_weights(path)
                    .with_context(|| format!("reading weights from {}", path.display()))
                    .config()?;
                ObjectiveKind::Linear { weights }
            }
        });
    }
    Ok(out)
}

fn algorithm(algo: AlgoArg, alpha: f64, epsilon: EpsilonChoice, lambda: Option<usize>) -> Result<AlgorithmConfig, Failure> {
    let need_lambda = || lambda.ok_or_else(|| config_error("umda and pbil require --lambda"));
    Ok(match algo {
        AlgoArg::PbilLambda => AlgorithmConfig::PbilLambda { alpha, epsilon },
        AlgoArg::PbilEps => AlgorithmConfig::PbilEps { alpha, epsilon },
        AlgoArg::Cga => AlgorithmConfig::Cga { epsilon },
        AlgoArg::Umda => AlgorithmConfig::Umda { lambda: need_lambda()? },
        AlgoArg::Pbil => AlgorithmConfig::Pbil { lambda: need_lambda()?, epsilon },
    })
}

/// Builds every optimizer and objective once so that a bad combination is
/// reported as a configuration error instead of as failed trials.
fn check_grid(algorithms: &[AlgorithmConfig], objectives: &[ObjectiveKind], args: &ExperimentArgs) -> Result<(), Failure> {
    if args.n.is_empty() {
        return Err(config_error("--n needs at least one dimension"));
    }
    if args.trials == 0 {
        return Err(config_error("--trials must be positive"));
    }
    if args.workers == 0 {
        return Err(config_error("--workers must be positive"));
    }
    for &n in &args.n {
        for a in algorithms {
            a.build(n).with_context(|| format!("{} at n = {n}", a.label())).config()?;
        }
        for o in objectives {
            build_objective(o, n).with_context(|| format!("{o} at n = {n}")).config()?;
        }
    }
    Ok(())
}

fn bench(args: BenchArgs) -> Result<(), Failure> {
    let common = &args.common;
    let epsilon: EpsilonChoice = common.epsilon.parse().config()?;
    let objectives = objectives(common)?;
    let algorithms = args
        .algo
        .iter()
        .map(|&a| algorithm(a, args.alpha, epsilon, args.lambda))
        .collect::<Result<Vec<_>, _>>()?;
    check_grid(&algorithms, &objectives, common)?;
    let config = SuiteConfig {
        algorithms,
        objectives,
        ns: common.n.clone(),
        trials: common.trials,
        base_seed: common.seed,
        budget: common.budget,
        workers: common.workers,
    };
    let output = run_suite(&config).run()?;
    fail_on_trial_errors(output.records.iter().filter_map(|r| r.error.as_deref()))?;
    emit(&output.records, common.format.into(), &common.out)
        .with_context(|| format!("writing {}", common.out.display()))
        .run()?;
    print_report(&output.report);
    Ok(())
}

fn alpha_sweep(args: AlphaSweepArgs) -> Result<(), Failure> {
    let common = &args.common;
    if !matches!(args.algo, AlgoArg::PbilLambda | AlgoArg::PbilEps) {
        return Err(config_error("alpha-sweep supports pbil-lambda and pbil-eps"));
    }
    if args.alphas.is_empty() {
        return Err(config_error("--alphas needs at least one value"));
    }
    let epsilon: EpsilonChoice = common.epsilon.parse().config()?;
    let objectives = objectives(common)?;
    let base = algorithm(args.algo, DEFAULT_ALPHA, epsilon, None)?;
    let algorithms: Vec<_> = args.alphas.iter().map(|&a| base.with_alpha(a)).collect();
    check_grid(&algorithms, &objectives, common)?;
    let config = AlphaSweepConfig {
        alphas: args.alphas.clone(),
        algorithm: base,
        objectives,
        ns: common.n.clone(),
        trials: common.trials,
        base_seed: common.seed,
        budget: common.budget,
        workers: common.workers,
    };
    let output = run_alpha_sweep(&config).run()?;
    fail_on_trial_errors(output.records.iter().filter_map(|r| r.error.as_deref()))?;
    emit(&output.records, common.format.into(), &common.out)
        .with_context(|| format!("writing {}", common.out.display()))
        .run()?;
    if let Some(path) = &args.ratios_out {
        write_alpha_csv(&output.rows, path).with_context(|| format!("writing {}", path.display())).run()?;
    }
    println!("objective\tn\talpha\tsolved\tmedian\tq1/best\tmedian/best\tq3/best");
    for r in &output.rows {
        println!(
            "{}\t{}\t{}\t{}\t{}\t{:.3}\t{:.3}\t{:.3}",
            r.objective,
            r.n,
            r.alpha,
            r.successes,
            r.median_hitting_time,
            r.lower_quartile_ratio,
            r.median_ratio,
            r.upper_quartile_ratio
        );
    }
    Ok(())
}

fn fail_on_trial_errors<'a>(mut errors: impl Iterator<Item = &'a str>) -> Result<(), Failure> {
    match errors.next() {
        Some(e) => Err(Failure::Run(anyhow::anyhow!("trial failed: {e}"))),
        None => Ok(()),
    }
}

fn print_report(report: &SuiteReport) {
    println!("algorithm\tobjective\tn\tsolved\tq1\tmedian\tq3\tmedian_lambda");
    for a in &report.aggregates {
        println!(
            "{}\t{}\t{}\t{}/{}\t{}\t{}\t{}\t{}",
            a.algorithm,
            a.objective,
            a.n,
            a.successes,
            a.trials,
            a.lower_quartile,
            a.median,
            a.upper_quartile,
            a.median_lambda
        );
    }
}

#[derive(Serialize)]
#[serde(tag = "row", rename_all = "kebab-case")]
enum NeuroRow<'a> {
    History(&'a HistoryPoint),
    Summary(&'a TrainSummary),
}

fn neuro_data(args: &NeuroArgs) -> Result<SplitData, Failure> {
    let load = |p: &Path| load_csv_dataset(p).with_context(|| format!("reading {}", p.display())).config();
    match (&args.train_csv, &args.test_csv) {
        (Some(train), Some(test)) => SplitData::standardized(load(train)?, load(test)?).config(),
        (Some(train), None) => SplitData::holdout(load(train)?).config(),
        _ => SplitData::spirals(3000, 1000, 3, args.noise, args.seed).config(),
    }
}

fn neuro(args: NeuroArgs) -> Result<(), Failure> {
    let gating = match args.mode {
        ModeArg::Layerskip => GatingKind::LayerSkip,
        ModeArg::Activation => GatingKind::ActivationSelect,
    };
    let defaults = TrainConfig::for_gating(gating);
    let config = TrainConfig {
        optimizer: match args.optimizer {
            NeuroOptimizerArg::PbilEps => NeuroOptimizer::PbilEps,
            NeuroOptimizerArg::PbilLambda => NeuroOptimizer::PbilLambda,
            NeuroOptimizerArg::Cga => NeuroOptimizer::Cga,
            NeuroOptimizerArg::AllOnes => NeuroOptimizer::AllOnes,
            NeuroOptimizerArg::AllZeros => NeuroOptimizer::AllZeros,
        },
        updates: args.updates,
        seed: args.seed,
        batch_size: args.batch_size.unwrap_or(defaults.batch_size),
        lr0: args.lr.unwrap_or(defaults.lr0),
        double_batch: args.double_batch,
        checkpoint_every: args.checkpoint_every.unwrap_or(defaults.checkpoint_every),
        alpha: args.alpha.unwrap_or(defaults.alpha),
        ..defaults
    };
    config.validate().config()?;
    if !(config.alpha >= 1.0 && config.alpha.is_finite()) {
        return Err(config_error("--alpha must be at least 1"));
    }
    let data = neuro_data(&args)?;
    let output = train_simultaneous(&config, &data).run()?;

    let write = || -> anyhow::Result<()> {
        let mut w = BufWriter::new(File::create(&args.out)?);
        for h in &output.history {
            serde_json::to_writer(&mut w, &NeuroRow::History(h))?;
            w.write_all(b"\n")?;
        }
        serde_json::to_writer(&mut w, &NeuroRow::Summary(&output.summary))?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    };
    write().with_context(|| format!("writing {}", args.out.display())).run()?;

    let s = &output.summary;
    let mask: String = s.final_mask.bits().iter().map(|&b| if b { '1' } else { '0' }).collect();
    println!(
        "{} {:?}: loss {:.4} -> {:.4}, train accuracy {:.4}, test accuracy {:.4}, mask {}",
        s.optimizer, s.gating, s.initial_loss, s.final_moving_loss, s.train.accuracy, s.test.accuracy, mask
    );
    Ok(())
}
