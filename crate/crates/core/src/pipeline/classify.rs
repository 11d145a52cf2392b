use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::ClassifierConfig;
use crate::c3d::FeatureBundle;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionLabel {
    pub class_index: usize,
    pub class_name: String,
    pub confidence: f64,
    pub probabilities: Vec<f64>,
}

/// Linear map followed by a softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    names: Vec<String>,
    /// `classes x features`, row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
    features: usize,
}

impl ClassifierHead {
    pub fn new(names: Vec<String>, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let c = names.len();
        if c == 0 {
            return Err(Error::invalid("classifier needs at least one class"));
        }
        if bias.len() != c || weights.is_empty() || !weights.len().is_multiple_of(c) {
            return Err(Error::shape(format!(
                "classifier with {c} classes got {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        let features = weights.len() / c;
        Ok(ClassifierHead {
            names,
            weights,
            bias,
            features,
        })
    }

    /// Uses the configured weights, or draws `N(0, 1/features)` weights and
    /// zero biases from `seed`.
    pub fn from_config(cfg: &ClassifierConfig, features: usize, seed: u64) -> Result<Self> {
        let c = cfg.classes.len();
        let weights = match &cfg.weights {
            Some(rows) => rows.iter().flatten().copied().collect(),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let n = Normal::new(0.0, (1.0 / features.max(1) as f64).sqrt())
                    .map_err(|e| Error::invalid(e.to_string()))?;
                (0..c * features).map(|_| n.sample(&mut rng)).collect()
            }
        };
        let bias = cfg.bias.clone().unwrap_or_else(|| vec![0.0; c]);
        Self::new(cfg.classes.clone(), weights, bias)
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn classes(&self) -> &[String] {
        &self.names
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Softmax over `W x + b` of the bundle's flat output; the argmax goes to
/// the lowest class index on ties.
pub fn classify_action(bundle: &FeatureBundle, head: &ClassifierHead) -> Result<ActionLabel> {
    let x = &bundle.output;
    if x.len() != head.features {
        return Err(Error::shape(format!(
            "classifier expects {} features, bundle has {}",
            head.features,
            x.len()
        )));
    }
    let logits: Vec<f64> = head
        .weights
        .chunks(head.features)
        .zip(&head.bias)
        .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
        .collect();
    let probabilities = softmax(&logits);
    let mut best = 0;
    for (i, &p) in probabilities.iter().enumerate() {
        if p > probabilities[best] {
            best = i;
        }
    }
    Ok(ActionLabel {
        class_index: best,
        class_name: head.names[best].clone(),
        confidence: probabilities[best],
        probabilities,
    })
}
