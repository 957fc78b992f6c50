//! Joint training of network weights and a Bernoulli distribution over
//! gating masks.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::data::{Dataset, SplitData};
use super::net::{logits, loss_and_grad, GatingKind, GatingMode, NetWeights};
use crate::error::{Error, Result};
use crate::family::{BitString, ThetaParams};
use crate::igo::{Baseline, Mode, OptimizerState, DEFAULT_ALPHA};
use crate::rng::{tag, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeuroOptimizer {
    /// Two masks per weight update, adapted step size.
    PbilEps,
    /// One mask and one weight update per sample, adapted sample size.
    PbilLambda,
    /// Two masks per weight update with `ε = 1/n`.
    Cga,
    /// Every hidden gate open.
    AllOnes,
    /// Every hidden gate closed.
    AllZeros,
}

impl NeuroOptimizer {
    pub fn label(self) -> &'static str {
        match self {
            NeuroOptimizer::PbilEps => "pbil-eps",
            NeuroOptimizer::PbilLambda => "pbil-lambda",
            NeuroOptimizer::Cga => "cga",
            NeuroOptimizer::AllOnes => "all-ones",
            NeuroOptimizer::AllZeros => "all-zeros",
        }
    }
}

impl std::str::FromStr for NeuroOptimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pbil-eps" => Ok(NeuroOptimizer::PbilEps),
            "pbil-lambda" => Ok(NeuroOptimizer::PbilLambda),
            "cga" => Ok(NeuroOptimizer::Cga),
            "all-ones" => Ok(NeuroOptimizer::AllOnes),
            "all-zeros" => Ok(NeuroOptimizer::AllZeros),
            other => Err(Error::InvalidConfig(format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub gating: GatingKind,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub optimizer: NeuroOptimizer,
    pub batch_size: usize,
    /// Doubles the mini-batch of PBIL-λ so that it sees as many examples
    /// per update as the two-mask optimizers.
    pub double_batch: bool,
    /// Number of weight updates `T_max`.
    pub updates: usize,
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Global gradient norm bound, used in [`GatingKind::LayerSkip`] only.
    pub clip_norm: f64,
    /// Accuracies are recorded every this many updates and at the end.
    pub checkpoint_every: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// 8 hidden relu layers of 16 units, 7 gates.
    pub fn layer_skip() -> Self {
        TrainConfig {
            gating: GatingKind::LayerSkip,
            hidden_layers: 8,
            hidden_width: 16,
            optimizer: NeuroOptimizer::PbilEps,
            batch_size: 64,
            double_batch: false,
            updates: 6000,
            lr0: 0.05,
            momentum: 0.9,
            weight_decay: 1e-4,
            clip_norm: 2.0,
            checkpoint_every: 500,
            alpha: DEFAULT_ALPHA,
            seed: 0,
        }
    }

    /// 2 hidden layers of 32 units, one gate per unit.
    pub fn activation_select() -> Self {
        TrainConfig { gating: GatingKind::ActivationSelect, hidden_layers: 2, hidden_width: 32, ..Self::layer_skip() }
    }

    pub fn for_gating(kind: GatingKind) -> Self {
        match kind {
            GatingKind::LayerSkip => Self::layer_skip(),
            GatingKind::ActivationSelect => Self::activation_select(),
        }
    }

    pub fn widths(&self, data: &Dataset) -> Vec<usize> {
        let mut widths = vec![data.dim()];
        widths.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        widths.push(data.classes());
        widths
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if self.updates == 0 {
            return bad("at least one update is required");
        }
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.clip_norm > 0.0) {
            return bad("weight decay must be non-negative and the clip norm positive");
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint interval must be positive");
        }
        Ok(())
    }

    /// `lr0`, divided by 10 from update `⌈T/2⌉` on and again from `⌈3T/4⌉`.
    pub fn learning_rate(&self, t: usize) -> f64 {
        let half = self.updates.div_ceil(2);
        let three_quarters = (3 * self.updates).div_ceil(4);
        let drops = usize::from(t >= half) + usize::from(t >= three_quarters);
        self.lr0 / 10f64.powi(drops as i32)
    }
}

/// One Nesterov momentum step in the form
/// `v ← μv − η g`, `w ← w + μ² v − (1 + μ) η g`,
/// after clipping (LayerSkip only) and adding the weight decay term `δ w`
/// to the gradient. `grad` is left clipped and decayed.
pub fn weight_update(
    w: &mut NetWeights,
    grad: &mut NetWeights,
    velocity: &mut NetWeights,
    t: usize,
    config: &TrainConfig,
) -> Result<()> {
    w.same_shape(grad)?;
    w.same_shape(velocity)?;
    crate::error::check_finite(grad.params())?;
    if config.gating == GatingKind::LayerSkip {
        let norm = grad.norm();
        if norm > config.clip_norm {
            grad.scale(config.clip_norm / norm);
        }
    }
    grad.axpy(config.weight_decay, w)?;
    let lr = config.learning_rate(t);
    let mu = config.momentum;
    let g = grad.params();
    let v = velocity.params_mut();
    for (vi, gi) in v.iter_mut().zip(g) {
        *vi = mu * *vi - lr * gi;
    }
    let v = velocity.params();
    for ((wi, vi), gi) in w.params_mut().iter_mut().zip(v).zip(g) {
        *wi += mu * mu * vi - (1.0 + mu) * lr * gi;
    }
    crate::error::check_finite(w.params())
}

/// Gate mask `m_k = 1` iff `θ_k ≥ 0.5`.
pub fn threshold_mask(theta: &ThetaParams) -> BitString {
    BitString(theta.probs().iter().map(|&p| p >= 0.5).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

/// Loss and accuracy of the thresholded mask over all of `data`.
pub fn predict_fixed(theta: &ThetaParams, w: &NetWeights, data: &Dataset, mode: GatingMode) -> Result<Evaluation> {
    evaluate_mask(&threshold_mask(theta), w, data, mode)
}

pub fn evaluate_mask(mask: &BitString, w: &NetWeights, data: &Dataset, mode: GatingMode) -> Result<Evaluation> {
    const CHUNK: usize = 256;
    let classes = *w.widths().last().unwrap();
    let mut loss = 0.0;
    let mut correct = 0;
    let all: Vec<usize> = (0..data.len()).collect();
    for batch in all.chunks(CHUNK) {
        let scores = logits(w, mask, data, batch, mode)?;
        for (e, &i) in batch.iter().enumerate() {
            let row = &scores[e * classes..(e + 1) * classes];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_z = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += log_z - row[data.label(i)];
            let predicted = (0..classes).fold(0, |best, k| if row[k] > row[best] { k } else { best });
            correct += usize::from(predicted == data.label(i));
        }
    }
    Ok(Evaluation { loss: loss / data.len() as f64, accuracy: correct as f64 / data.len() as f64 })
}

/// State of training after one weight update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    /// Weight updates done so far, `T`.
    pub update: usize,
    /// Mini-batch loss of the mask used for this update (the mean over both
    /// masks for the two-mask optimizers).
    pub loss: f64,
    pub lambda_r: Option<f64>,
    pub epsilon: Option<f64>,
    /// Mean per-bit Bernoulli entropy of `θ` in nats.
    pub entropy: f64,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub optimizer: String,
    pub gating: GatingKind,
    pub seed: u64,
    pub updates: usize,
    /// Masks evaluated on a mini-batch.
    pub evaluations: u64,
    pub initial_loss: f64,
    /// Mean mini-batch loss over the last [`MOVING_AVERAGE_WINDOW`] updates.
    pub final_moving_loss: f64,
    pub final_mask: BitString,
    pub final_entropy: f64,
    pub initial_entropy: f64,
    pub train: Evaluation,
    pub test: Evaluation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutput {
    pub weights: NetWeights,
    pub theta: ThetaParams,
    pub history: Vec<HistoryPoint>,
    pub summary: TrainSummary,
}

/// Window of the moving-average training loss.
pub const MOVING_AVERAGE_WINDOW: usize = 100;

/// Mean of the per-update losses over the trailing window ending at each
/// update.
pub fn moving_average(losses: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(losses.len());
    let mut sum = 0.0;
    for (i, &v) in losses.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= losses[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// Epoch-wise shuffled mini-batches, deterministic in the stream.
struct Batches {
    stream: Stream,
    order: Vec<usize>,
    pos: usize,
    epoch: u64,
}

impl Batches {
    fn new(len: usize, stream: Stream) -> Self {
        let mut b = Batches { stream, order: (0..len).collect(), pos: len, epoch: 0 };
        b.reshuffle();
        b
    }

    fn reshuffle(&mut self) {
        self.order.sort_unstable();
        self.order.shuffle(&mut self.stream.child(self.epoch).rng());
        self.epoch += 1;
        self.pos = 0;
    }

    fn next(&mut self, size: usize) -> Vec<usize> {
        let size = size.min(self.order.len());
        if self.pos + size > self.order.len() {
            self.reshuffle();
        }
        let batch = self.order[self.pos..self.pos + size].to_vec();
        self.pos += size;
        batch
    }
}

struct Trainer<'a> {
    config: &'a TrainConfig,
    data: &'a SplitData,
    mode: GatingMode,
    weights: NetWeights,
    velocity: NetWeights,
    batches: Batches,
    t: usize,
    evaluations: u64,
    history: Vec<HistoryPoint>,
}

impl Trainer<'_> {
    fn step(&mut self, mut grad: NetWeights) -> Result<()> {
        weight_update(&mut self.weights, &mut grad, &mut self.velocity, self.t, self.config)?;
        self.t += 1;
        Ok(())
    }

    fn record(&mut self, loss: f64, opt: Option<&OptimizerState>, theta: &ThetaParams) -> Result<()> {
        let checkpoint = self.t.is_multiple_of(self.config.checkpoint_every) || self.t == self.config.updates;
        let (train_accuracy, test_accuracy) = if checkpoint {
            let train = predict_fixed(theta, &self.weights, &self.data.train, self.mode)?;
            let test = predict_fixed(theta, &self.weights, &self.data.test, self.mode)?;
            (Some(train.accuracy), Some(test.accuracy))
        } else {
            (None, None)
        };
        self.history.push(HistoryPoint {
            update: self.t,
            loss,
            lambda_r: opt.map(OptimizerState::lambda_r),
            epsilon: opt.map(OptimizerState::epsilon),
            entropy: theta.mean_entropy(),
            train_accuracy,
            test_accuracy,
        });
        Ok(())
    }

    fn batch_size(&self) -> usize {
        let doubled = self.config.double_batch && self.config.optimizer == NeuroOptimizer::PbilLambda;
        self.config.batch_size * if doubled { 2 } else { 1 }
    }
}

fn build_optimizer(config: &TrainConfig, n: usize) -> Result<Option<OptimizerState>> {
    Ok(match config.optimizer {
        NeuroOptimizer::PbilEps => Some(OptimizerState::new_parameterless(n, Mode::AdaptEpsilon, config.alpha)?),
        NeuroOptimizer::PbilLambda => Some(OptimizerState::new_parameterless(n, Mode::AdaptLambda, config.alpha)?),
        NeuroOptimizer::Cga => Some(OptimizerState::new_baseline(Baseline::Cga, n, 2, 1.0 / n as f64)?),
        NeuroOptimizer::AllOnes | NeuroOptimizer::AllZeros => None,
    })
}

/// Trains until `config.updates` weight updates have been made.
///
/// Two-mask optimizers (PBIL-ε, cGA) draw one mini-batch per iteration,
/// evaluate both masks on it, step the weights once with the mean gradient
/// and then update `θ`. PBIL-λ draws a fresh mini-batch for each of its `λ`
/// masks and steps the weights after each one, updating `θ` once all `λ`
/// losses are in; an iteration cut short by the update limit does not
/// update `θ`. Fixed masks train the weights only.
///
/// The initial weights and the mini-batch sequence depend only on the seed,
/// so runs with different optimizers start from the same network.
pub fn train_simultaneous(config: &TrainConfig, data: &SplitData) -> Result<TrainOutput> {
    config.validate()?;
    let widths = config.widths(&data.train);
    let mode = GatingMode::new(config.gating, &widths)?;
    let n = mode.mask_dim;
    let stream = Stream::new(config.seed);
    let weights = NetWeights::init(&widths, &stream.child(tag::INIT))?;
    let mut trainer = Trainer {
        config,
        data,
        mode,
        velocity: weights.zeros_like(),
        weights,
        batches: Batches::new(data.train.len(), stream.child(tag::MINIBATCH)),
        t: 0,
        evaluations: 0,
        history: Vec::with_capacity(config.updates),
    };
    let mut opt = build_optimizer(config, n)?;
    let fixed_theta = match config.optimizer {
        NeuroOptimizer::AllZeros => ThetaParams::from_probs(vec![0.0; n])?,
        _ => ThetaParams::from_probs(vec![1.0; n])?,
    };
    let initial_entropy = opt.as_ref().map_or(0.0, |o| o.theta().mean_entropy());
    let sample_stream = stream.child(tag::SAMPLES);

    while trainer.t < config.updates {
        match opt.as_mut() {
            None => {
                let batch = trainer.batches.next(trainer.batch_size());
                let mask = threshold_mask(&fixed_theta);
                let (loss, grad) = loss_and_grad(&trainer.weights, &mask, &data.train, &batch, mode)?;
                trainer.evaluations += 1;
                trainer.step(grad)?;
                trainer.record(loss, None, &fixed_theta)?;
            }
            Some(o) if o.mode() == Mode::AdaptLambda => {
                let masks = o.ask(&sample_stream);
                let mut losses = Vec::with_capacity(masks.len());
                for mask in &masks {
                    if trainer.t >= config.updates {
                        break;
                    }
                    let batch = trainer.batches.next(trainer.batch_size());
                    let (loss, grad) = loss_and_grad(&trainer.weights, mask, &data.train, &batch, mode)?;
                    trainer.evaluations += 1;
                    trainer.step(grad)?;
                    losses.push(loss);
                    trainer.record(loss, Some(o), o.theta())?;
                }
                if losses.len() == masks.len() {
                    o.tell(&masks, &losses)?;
                    if let Some(last) = trainer.history.last_mut() {
                        last.lambda_r = Some(o.lambda_r());
                        last.epsilon = Some(o.epsilon());
                        last.entropy = o.theta().mean_entropy();
                    }
                }
            }
            Some(o) => {
                let batch = trainer.batches.next(trainer.batch_size());
                let masks = o.ask(&sample_stream);
                let mut losses = Vec::with_capacity(masks.len());
                let mut mean_grad = trainer.weights.zeros_like();
                let share = 1.0 / masks.len() as f64;
                for mask in &masks {
                    let (loss, grad) = loss_and_grad(&trainer.weights, mask, &data.train, &batch, mode)?;
                    mean_grad.axpy(share, &grad)?;
                    losses.push(loss);
                }
                trainer.evaluations += masks.len() as u64;
                trainer.step(mean_grad)?;
                o.tell(&masks, &losses)?;
                let loss = losses.iter().sum::<f64>() * share;
                trainer.record(loss, Some(o), o.theta())?;
            }
        }
    }

    let theta = opt.as_ref().map_or(fixed_theta, |o| o.theta().clone());
    let losses: Vec<f64> = trainer.history.iter().map(|h| h.loss).collect();
    let summary = TrainSummary {
        optimizer: config.optimizer.label().to_string(),
        gating: config.gating,
        seed: config.seed,
        updates: trainer.t,
        evaluations: trainer.evaluations,
        initial_loss: losses[0],
        final_moving_loss: *moving_average(&losses, MOVING_AVERAGE_WINDOW).last().unwrap(),
        final_mask: threshold_mask(&theta),
        final_entropy: opt.as_ref().map_or(0.0, |o| o.theta().mean_entropy()),
        initial_entropy,
        train: predict_fixed(&theta, &trainer.weights, &data.train, mode)?,
        test: predict_fixed(&theta, &trainer.weights, &data.test, mode)?,
    };
    Ok(TrainOutput { weights: trainer.weights, theta, history: trainer.history, summary })
}
