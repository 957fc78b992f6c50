//! Labelled examples: interleaved spirals and CSV files.

use std::f64::consts::PI;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Dense feature rows with integer labels in `0..classes`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    dim: usize,
    classes: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(dim: usize, classes: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if dim == 0 || classes < 2 {
            return Err(Error::InvalidConfig(format!("need dim ≥ 1 and at least two classes, got {dim}, {classes}")));
        }
        if features.len() != dim * labels.len() {
            return Err(Error::DimensionMismatch { expected: dim * labels.len(), actual: features.len() });
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::InvalidConfig(format!("label {y} outside 0..{classes}")));
        }
        crate::error::check_finite(&features)?;
        Ok(Dataset { dim, classes, features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Per-feature mean and standard deviation.
    pub fn standardization(&self) -> Standardization {
        let n = self.len() as f64;
        let mut mean = vec![0.0; self.dim];
        for i in 0..self.len() {
            for (m, v) in mean.iter_mut().zip(self.features(i)) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; self.dim];
        for i in 0..self.len() {
            for ((s, v), m) in var.iter_mut().zip(self.features(i)).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let std = var.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        Standardization { mean, std }
    }

    pub fn standardize(&mut self, s: &Standardization) -> Result<()> {
        if s.mean.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: s.mean.len() });
        }
        for row in self.features.chunks_mut(self.dim) {
            for ((v, m), sd) in row.iter_mut().zip(&s.mean).zip(&s.std) {
                *v = (*v - m) / sd;
            }
        }
        Ok(())
    }

    /// Rows whose index satisfies `keep`, in order.
    pub fn subset(&self, keep: impl Fn(usize) -> bool) -> Dataset {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in (0..self.len()).filter(|&i| keep(i)) {
            features.extend_from_slice(self.features(i));
            labels.push(self.labels[i]);
        }
        Dataset { dim: self.dim, classes: self.classes, features, labels }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Point of spiral `class` at radius `r ∈ [0, 1]`, before noise.
pub fn spiral_point(class: usize, classes: usize, r: f64) -> [f64; 2] {
    let angle = spiral_angle(class, classes, r);
    [r * angle.sin(), r * angle.cos()]
}

fn spiral_angle(class: usize, classes: usize, r: f64) -> f64 {
    // Each arm turns by 4 radians and the arms start evenly spaced.
    2.0 * PI * class as f64 / classes as f64 + 4.0 * r
}

/// Unstandardized spirals; class `c` gets `points / classes` points plus one
/// if `c < points % classes`. Angular noise has standard deviation `noise`.
pub fn raw_spirals(points: usize, classes: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if classes < 2 || points < classes {
        return Err(Error::InvalidConfig(format!("need points ≥ classes ≥ 2, got {points}, {classes}")));
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise must be finite and non-negative, got {noise}")));
    }
    let mut rng = Stream::new(seed).rng();
    let mut features = Vec::with_capacity(2 * points);
    let mut labels = Vec::with_capacity(points);
    for c in 0..classes {
        let count = points / classes + usize::from(c < points % classes);
        for j in 0..count {
            let r = if count > 1 { j as f64 / (count - 1) as f64 } else { 0.5 };
            let jitter: f64 = StandardNormal.sample(&mut rng);
            let angle = spiral_angle(c, classes, r) + noise * jitter;
            features.extend_from_slice(&[r * angle.sin(), r * angle.cos()]);
            labels.push(c);
        }
    }
    Dataset::new(2, classes, features, labels)
}

/// Class-balanced interleaved spirals standardized to zero mean and unit
/// variance per feature. Deterministic in `seed`.
pub fn gen_spiral_dataset(points: usize, classes: usize, noise: f64, seed: u64) -> Result<Dataset> {
    let mut data = raw_spirals(points, classes, noise, seed)?;
    let s = data.standardization();
    data.standardize(&s)?;
    Ok(data)
}

/// Training and test sets drawn from independent seeds. Both are scaled with
/// the statistics of the training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitData {
    pub train: Dataset,
    pub test: Dataset,
}

impl SplitData {
    pub fn spirals(train: usize, test: usize, classes: usize, noise: f64, seed: u64) -> Result<Self> {
        let stream = Stream::new(seed);
        let train = raw_spirals(train, classes, noise, stream.child(0).key())?;
        let test = raw_spirals(test, classes, noise, stream.child(1).key())?;
        Self::standardized(train, test)
    }

    /// Scales both sets with the statistics of `train`.
    pub fn standardized(mut train: Dataset, mut test: Dataset) -> Result<Self> {
        if train.dim() != test.dim() {
            return Err(Error::DimensionMismatch { expected: train.dim(), actual: test.dim() });
        }
        let classes = train.classes().max(test.classes());
        train.classes = classes;
        test.classes = classes;
        let s = train.standardization();
        train.standardize(&s)?;
        test.standardize(&s)?;
        Ok(SplitData { train, test })
    }

    /// Every fourth row of `data` goes to the test set.
    pub fn holdout(data: Dataset) -> Result<Self> {
        let train = data.subset(|i| i % 4 != 3);
        let test = data.subset(|i| i % 4 == 3);
        if train.is_empty() || test.is_empty() {
            return Err(Error::InvalidConfig("dataset too small to split".into()));
        }
        Self::standardized(train, test)
    }
}

/// Reads rows of numeric features followed by an integer label. A first row
/// that does not parse is taken as a header.
pub fn load_csv_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
    let mut dim = None;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() < 2 {
            return Err(Error::InvalidConfig(format!("row {row}: need at least one feature and a label")));
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().take(record.len() - 1).map(str::parse::<f64>).collect();
        let label = record[record.len() - 1].parse::<usize>();
        let (values, label) = match (parsed, label) {
            (Ok(v), Ok(y)) => (v, y),
            _ if row == 0 => continue,
            _ => return Err(Error::InvalidConfig(format!("row {row}: unparseable values"))),
        };
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::DimensionMismatch { expected: d, actual: values.len() });
            }
            Some(_) => {}
        }
        features.extend(values);
        labels.push(label);
    }
    let dim = dim.ok_or_else(|| Error::InvalidConfig("dataset has no rows".into()))?;
    let classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
    Dataset::new(dim, classes, features, labels)
}
