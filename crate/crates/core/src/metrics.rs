//! Evaluation metrics. Cross-entropy is kept in nats; bits per character
//! and perplexity are derived from it when reported.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("target id {id} outside {classes} classes")]
    BadTarget { id: usize, classes: usize },
    #[error("{left} predictions for {right} targets")]
    Length { left: usize, right: usize },
    #[error("no samples to score")]
    Empty,
}

/// Mean squared error.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64, MetricError> {
    if pred.len() != target.len() {
        return Err(MetricError::Length {
            left: pred.len(),
            right: target.len(),
        });
    }
    if pred.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

/// `-log softmax(logits)[target]`, stabilised by subtracting the maximum.
pub fn log_loss(logits: &[f64], target: usize) -> Result<f64, MetricError> {
    if target >= logits.len() {
        return Err(MetricError::BadTarget {
            id: target,
            classes: logits.len(),
        });
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    Ok(max + sum.ln() - logits[target])
}

/// Mean cross-entropy in nats over positions.
pub fn cross_entropy(logits: &[Vec<f64>], targets: &[usize]) -> Result<f64, MetricError> {
    if logits.len() != targets.len() {
        return Err(MetricError::Length {
            left: logits.len(),
            right: targets.len(),
        });
    }
    if logits.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut total = 0.0;
    for (z, &y) in logits.iter().zip(targets) {
        total += log_loss(z, y)?;
    }
    Ok(total / logits.len() as f64)
}

pub fn bpc(ce_nats: f64) -> f64 {
    ce_nats / std::f64::consts::LN_2
}

pub fn ppl(ce_nats: f64) -> f64 {
    ce_nats.exp()
}

/// Index of the largest logit; ties go to the lowest index.
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (k, &z) in logits.iter().enumerate().skip(1) {
        if z > logits[best] {
            best = k;
        }
    }
    best
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy(logits: &[Vec<f64>], labels: &[usize]) -> Result<f64, MetricError> {
    if logits.len() != labels.len() {
        return Err(MetricError::Length {
            left: logits.len(),
            right: labels.len(),
        });
    }
    if logits.is_empty() {
        return Err(MetricError::Empty);
    }
    let hits = logits.iter().zip(labels).filter(|(z, &y)| argmax(z) == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mse,
    Ce,
    Bpc,
    Ppl,
    Acc,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::Ce => "ce",
            Metric::Bpc => "bpc",
            Metric::Ppl => "ppl",
            Metric::Acc => "acc",
        }
    }

    /// Whether larger values are better.
    pub fn higher_is_better(self) -> bool {
        self == Metric::Acc
    }

    /// `true` if `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        if self.higher_is_better() {
            a > b
        } else {
            a < b
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mse" => Ok(Metric::Mse),
            "ce" => Ok(Metric::Ce),
            "bpc" => Ok(Metric::Bpc),
            "ppl" => Ok(Metric::Ppl),
            "acc" => Ok(Metric::Acc),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "valid" | "validation" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}` (expected train, valid or test)")),
        }
    }
}

/// One evaluated number.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: Metric,
    pub value: f64,
    pub samples: usize,
    pub split: Split,
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}={:.6} (n={})", self.split, self.metric, self.value, self.samples)
    }
}
