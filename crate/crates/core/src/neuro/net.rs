//! Fully connected classifier with binary gating.
//!
//! Parameters of all layers live in one flat vector. Layer `l` maps width
//! `widths[l]` to `widths[l + 1]`; its weight matrix is stored row-major
//! (one row per output unit) and is followed by its bias vector.
//!
//! Gating is applied by branching, never by multiplying with the mask bit,
//! so a closed gate leaves the other branch out of the arithmetic entirely.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use crate::error::{Error, Result};
use crate::family::BitString;
use crate::rng::Stream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GatingKind {
    /// `X_{k+2} = X_{k+1} + m_k · H_{k+1}(X_{k+1})` for every hidden layer
    /// after the first.
    LayerSkip,
    /// Each hidden unit uses relu when its bit is one and tanh otherwise.
    ActivationSelect,
}

impl std::str::FromStr for GatingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "layerskip" | "layer-skip" => Ok(GatingKind::LayerSkip),
            "activation" | "activation-select" => Ok(GatingKind::ActivationSelect),
            other => Err(Error::InvalidConfig(format!("unknown gating mode {other:?}"))),
        }
    }
}

/// Gating kind together with the mask length it implies for an architecture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatingMode {
    pub kind: GatingKind,
    pub mask_dim: usize,
}

impl GatingMode {
    /// LayerSkip needs at least two hidden layers of equal width and gates
    /// all but the first. ActivationSelect gates every hidden unit.
    pub fn new(kind: GatingKind, widths: &[usize]) -> Result<Self> {
        check_widths(widths)?;
        let hidden = &widths[1..widths.len() - 1];
        let mask_dim = match kind {
            GatingKind::LayerSkip => {
                if hidden.len() < 2 {
                    return Err(Error::InvalidConfig("layer skipping needs at least two hidden layers".into()));
                }
                if hidden.iter().any(|&h| h != hidden[0]) {
                    return Err(Error::InvalidConfig("layer skipping needs equal hidden widths".into()));
                }
                hidden.len() - 1
            }
            GatingKind::ActivationSelect => {
                if hidden.is_empty() {
                    return Err(Error::InvalidConfig("activation selection needs a hidden layer".into()));
                }
                hidden.iter().sum()
            }
        };
        Ok(GatingMode { kind, mask_dim })
    }
}

fn check_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 || widths.contains(&0) {
        return Err(Error::InvalidConfig(format!("invalid layer widths {widths:?}")));
    }
    Ok(())
}

/// Network parameters, or a gradient or velocity of the same shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetWeights {
    widths: Vec<usize>,
    params: Vec<f64>,
}

impl NetWeights {
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        check_widths(widths)?;
        let count = widths.windows(2).map(|w| w[1] * (w[0] + 1)).sum();
        Ok(NetWeights { widths: widths.to_vec(), params: vec![0.0; count] })
    }

    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn init(widths: &[usize], stream: &Stream) -> Result<Self> {
        let mut net = Self::zeros(widths)?;
        let mut rng = stream.rng();
        for l in 0..net.layer_count() {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let (w, _) = net.layer_mut(l);
            for v in w {
                *v = rng.random_range(-limit..limit);
            }
        }
        Ok(net)
    }

    pub fn from_params(widths: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(widths)?;
        if params.len() != net.params.len() {
            return Err(Error::DimensionMismatch { expected: net.params.len(), actual: params.len() });
        }
        net.params = params;
        Ok(net)
    }

    pub fn zeros_like(&self) -> Self {
        NetWeights { widths: self.widths.clone(), params: vec![0.0; self.params.len()] }
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    fn offset(&self, l: usize) -> usize {
        self.widths[..=l].windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    /// Weight matrix (row-major, `out × in`) and bias of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
        let start = self.offset(l);
        let (w, rest) = self.params[start..].split_at(fan_in * fan_out);
        (w, &rest[..fan_out])
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
        let start = self.offset(l);
        let (w, rest) = self.params[start..].split_at_mut(fan_in * fan_out);
        (w, &mut rest[..fan_out])
    }

    pub fn norm(&self) -> f64 {
        self.params.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn check_shape(&self, other: &NetWeights) -> Result<()> {
        if self.widths != other.widths {
            return Err(Error::InvalidConfig(format!(
                "shape mismatch: {:?} vs {:?}",
                self.widths, other.widths
            )));
        }
        Ok(())
    }

    /// `self += a · other`.
    pub fn axpy(&mut self, a: f64, other: &NetWeights) -> Result<()> {
        self.check_shape(other)?;
        for (x, y) in self.params.iter_mut().zip(&other.params) {
            *x += a * y;
        }
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        for x in &mut self.params {
            *x *= c;
        }
    }

    pub(crate) fn same_shape(&self, other: &NetWeights) -> Result<()> {
        self.check_shape(other)
    }
}

/// Pre-activations and outputs of every layer for a batch, row-major by
/// example.
struct Trace {
    /// `inputs[l]` is the input of layer `l`; the last entry holds the logits.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of hidden layers (empty for a skipped layer).
    pre: Vec<Vec<f64>>,
}

fn affine(w: &[f64], b: &[f64], x: &[f64], fan_in: usize, out: &mut [f64]) {
    for (j, o) in out.iter_mut().enumerate() {
        let row = &w[j * fan_in..(j + 1) * fan_in];
        let mut z = b[j];
        for (wi, xi) in row.iter().zip(x) {
            z += wi * xi;
        }
        *o = z;
    }
}

fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

fn check_mask(mask: &BitString, mode: GatingMode, widths: &[usize]) -> Result<()> {
    let expected = GatingMode::new(mode.kind, widths)?.mask_dim;
    if mode.mask_dim != expected {
        return Err(Error::DimensionMismatch { expected, actual: mode.mask_dim });
    }
    if mask.len() != expected {
        return Err(Error::DimensionMismatch { expected, actual: mask.len() });
    }
    Ok(())
}

fn forward(net: &NetWeights, mask: &BitString, data: &Dataset, batch: &[usize], mode: GatingMode) -> Result<Trace> {
    let widths = net.widths();
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    if data.dim() != widths[0] {
        return Err(Error::DimensionMismatch { expected: widths[0], actual: data.dim() });
    }
    if data.classes() > widths[widths.len() - 1] {
        return Err(Error::DimensionMismatch { expected: widths[widths.len() - 1], actual: data.classes() });
    }
    check_mask(mask, mode, widths)?;
    let bits = mask.bits();
    let layers = net.layer_count();
    let nb = batch.len();

    let mut input = Vec::with_capacity(nb * widths[0]);
    for &i in batch {
        input.extend_from_slice(data.features(i));
    }
    let mut inputs = vec![input];
    let mut pre = Vec::with_capacity(layers - 1);
    let mut unit_offset = 0;

    for l in 0..layers {
        let (fan_in, fan_out) = (widths[l], widths[l + 1]);
        let (w, b) = net.layer(l);
        let x = &inputs[l];
        let skippable = mode.kind == GatingKind::LayerSkip && l >= 1 && l < layers - 1;
        if skippable && !bits[l - 1] {
            pre.push(Vec::new());
            inputs.push(x.clone());
            continue;
        }
        let mut z = vec![0.0; nb * fan_out];
        for e in 0..nb {
            affine(w, b, &x[e * fan_in..(e + 1) * fan_in], fan_in, &mut z[e * fan_out..(e + 1) * fan_out]);
        }
        if l == layers - 1 {
            inputs.push(z);
            break;
        }
        let mut out = vec![0.0; nb * fan_out];
        match mode.kind {
            GatingKind::LayerSkip if skippable => {
                for k in 0..nb * fan_out {
                    out[k] = x[k] + relu(z[k]);
                }
            }
            GatingKind::LayerSkip => {
                for k in 0..nb * fan_out {
                    out[k] = relu(z[k]);
                }
            }
            GatingKind::ActivationSelect => {
                let unit_bits = &bits[unit_offset..unit_offset + fan_out];
                for e in 0..nb {
                    for (j, &on) in unit_bits.iter().enumerate() {
                        let k = e * fan_out + j;
                        out[k] = if on { relu(z[k]) } else { z[k].tanh() };
                    }
                }
                unit_offset += fan_out;
            }
        }
        pre.push(z);
        inputs.push(out);
    }
    Ok(Trace { inputs, pre })
}

/// Mean softmax cross-entropy and, per example, `softmax - onehot`.
fn softmax_xent(logits: &[f64], classes: usize, labels: impl Iterator<Item = usize>) -> Result<(f64, Vec<f64>)> {
    let mut loss = 0.0;
    let mut delta = vec![0.0; logits.len()];
    let mut count = 0;
    for (e, y) in labels.enumerate() {
        let row = &logits[e * classes..(e + 1) * classes];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[y];
        for (k, d) in delta[e * classes..(e + 1) * classes].iter_mut().enumerate() {
            *d = (row[k] - log_z).exp() - if k == y { 1.0 } else { 0.0 };
        }
        count += 1;
    }
    let loss = loss / count as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite { index: 0, value: loss });
    }
    Ok((loss, delta))
}

/// Mean cross-entropy over `batch` under gating `mask`.
pub fn loss(net: &NetWeights, mask: &BitString, data: &Dataset, batch: &[usize], mode: GatingMode) -> Result<f64> {
    let trace = forward(net, mask, data, batch, mode)?;
    let classes = *net.widths().last().unwrap();
    let labels = batch.iter().map(|&i| data.label(i));
    Ok(softmax_xent(trace.inputs.last().unwrap(), classes, labels)?.0)
}

/// Mean cross-entropy over `batch` and its gradient with respect to every
/// parameter. Parameters of a skipped layer get an exact zero.
pub fn loss_and_grad(
    net: &NetWeights,
    mask: &BitString,
    data: &Dataset,
    batch: &[usize],
    mode: GatingMode,
) -> Result<(f64, NetWeights)> {
    let trace = forward(net, mask, data, batch, mode)?;
    let widths = net.widths();
    let layers = net.layer_count();
    let nb = batch.len();
    let labels = batch.iter().map(|&i| data.label(i));
    let (loss, mut delta) = softmax_xent(&trace.inputs[layers], widths[layers], labels)?;
    let inv = 1.0 / nb as f64;
    for d in &mut delta {
        *d *= inv;
    }

    let bits = mask.bits();
    let mut grad = net.zeros_like();
    accumulate(&mut grad, layers - 1, &delta, &trace.inputs[layers - 1], nb);
    // Gradient with respect to the input of the layer just processed.
    let mut g = back(net, layers - 1, &delta, nb);
    let mut unit_end: usize = widths[1..layers].iter().sum();

    for l in (0..layers - 1).rev() {
        let z = &trace.pre[l];
        match mode.kind {
            GatingKind::LayerSkip => {
                if l >= 1 && !bits[l - 1] {
                    continue;
                }
                let delta: Vec<f64> = g.iter().zip(z).map(|(&gi, &zi)| if zi > 0.0 { gi } else { 0.0 }).collect();
                accumulate(&mut grad, l, &delta, &trace.inputs[l], nb);
                if l >= 1 {
                    let through = back(net, l, &delta, nb);
                    for (gi, ti) in g.iter_mut().zip(&through) {
                        *gi += ti;
                    }
                }
            }
            GatingKind::ActivationSelect => {
                let width = widths[l + 1];
                let unit_start = unit_end - width;
                let unit_bits = &bits[unit_start..unit_end];
                let out = &trace.inputs[l + 1];
                let mut delta = vec![0.0; nb * width];
                for e in 0..nb {
                    for (j, &on) in unit_bits.iter().enumerate() {
                        let k = e * width + j;
                        delta[k] = if on {
                            if z[k] > 0.0 {
                                g[k]
                            } else {
                                0.0
                            }
                        } else {
                            g[k] * (1.0 - out[k] * out[k])
                        };
                    }
                }
                unit_end = unit_start;
                accumulate(&mut grad, l, &delta, &trace.inputs[l], nb);
                if l >= 1 {
                    g = back(net, l, &delta, nb);
                }
            }
        }
    }
    if let Some(index) = grad.params.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index, value: grad.params[index] });
    }
    Ok((loss, grad))
}

/// Adds `delta · xᵀ` and `delta` to the weight and bias gradient of layer `l`.
fn accumulate(grad: &mut NetWeights, l: usize, delta: &[f64], x: &[f64], nb: usize) {
    let (fan_in, fan_out) = (grad.widths[l], grad.widths[l + 1]);
    let (gw, gb) = grad.layer_mut(l);
    for e in 0..nb {
        let xe = &x[e * fan_in..(e + 1) * fan_in];
        for (j, &dj) in delta[e * fan_out..(e + 1) * fan_out].iter().enumerate() {
            gb[j] += dj;
            for (g, xi) in gw[j * fan_in..(j + 1) * fan_in].iter_mut().zip(xe) {
                *g += dj * xi;
            }
        }
    }
}

/// `Wᵀ delta` for layer `l`, per example.
fn back(net: &NetWeights, l: usize, delta: &[f64], nb: usize) -> Vec<f64> {
    let (fan_in, fan_out) = (net.widths[l], net.widths[l + 1]);
    let (w, _) = net.layer(l);
    let mut gx = vec![0.0; nb * fan_in];
    for e in 0..nb {
        let g = &mut gx[e * fan_in..(e + 1) * fan_in];
        for (j, &dj) in delta[e * fan_out..(e + 1) * fan_out].iter().enumerate() {
            for (gi, wi) in g.iter_mut().zip(&w[j * fan_in..(j + 1) * fan_in]) {
                *gi += dj * wi;
            }
        }
    }
    gx
}

/// Class scores of every example in `batch`, row-major.
pub fn logits(net: &NetWeights, mask: &BitString, data: &Dataset, batch: &[usize], mode: GatingMode) -> Result<Vec<f64>> {
    let mut trace = forward(net, mask, data, batch, mode)?;
    Ok(trace.inputs.pop().unwrap())
}
