use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Anything that turns a score vector into per-class decision values.
pub trait Classifier {
    fn n_classes(&self) -> usize;

    fn decision(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Argmax of the decision values; ties go to the lowest class index.
    fn predict(&self, x: &[f64]) -> Result<usize> {
        let d = self.decision(x)?;
        let mut best = 0;
        for (c, v) in d.iter().enumerate() {
            if *v > d[best] {
                best = c;
            }
        }
        Ok(best)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Mini-batch size; `None` uses every sample at every step.
    #[serde(default)]
    pub batch: Option<usize>,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            epochs: 2000,
            seed: 0,
            batch: None,
        }
    }
}

/// One-vs-rest linear hinge-loss model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub config: SvmConfig,
}

impl ClassifierModel {
    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }
}

impl Classifier for ClassifierModel {
    fn n_classes(&self) -> usize {
        self.weights.len()
    }

    fn decision(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::contract(format!(
                "feature vector has {} entries, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + b)
            .collect())
    }
}

/// Pegasos subgradient training of `n_classes` binary problems. The bias is
/// a regularized weight on a constant feature.
pub fn train_classifier(features: &[&[f64]], labels: &[usize], n_classes: usize, cfg: &SvmConfig) -> Result<ClassifierModel> {
    if features.len() != labels.len() {
        return Err(Error::contract("one label per feature vector required"));
    }
    if !(cfg.lambda > 0.0) || cfg.epochs == 0 {
        return Err(Error::contract("lambda must be positive and epochs at least 1"));
    }
    let mut present: Vec<usize> = labels.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(Error::contract("classifier training needs at least two classes"));
    }
    if present.last().is_some_and(|&c| c >= n_classes) {
        return Err(Error::contract("label out of range"));
    }
    let dim = features[0].len();
    if features.iter().any(|f| f.len() != dim) {
        return Err(Error::contract("feature vectors differ in length"));
    }
    let n = features.len();
    let radius = 1.0 / cfg.lambda.sqrt();

    let mut weights = Vec::with_capacity(n_classes);
    let mut bias = Vec::with_capacity(n_classes);
    for c in 0..n_classes {
        let y: Vec<f64> = labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
        let mut w = vec![0.0; dim + 1];
        let mut rng = stream_rng(cfg.seed, c as u64);
        let mut batch: Vec<usize> = (0..n).collect();
        let mut grad = vec![0.0; dim + 1];
        for t in 1..=cfg.epochs {
            if let Some(b) = cfg.batch {
                batch.clear();
                batch.extend((0..b.max(1)).map(|_| rng.random_range(0..n)));
            }
            let eta = 1.0 / (cfg.lambda * t as f64);
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in &batch {
                let x = features[i];
                let margin = y[i] * (x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + w[dim]);
                if margin < 1.0 {
                    for j in 0..dim {
                        grad[j] += y[i] * x[j];
                    }
                    grad[dim] += y[i];
                }
            }
            let scale = eta / batch.len() as f64;
            for (wj, gj) in w.iter_mut().zip(&grad) {
                *wj = (1.0 - eta * cfg.lambda) * *wj + scale * gj;
            }
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > radius {
                w.iter_mut().for_each(|v| *v *= radius / norm);
            }
        }
        bias.push(w[dim]);
        w.truncate(dim);
        weights.push(w);
    }
    Ok(ClassifierModel {
        weights,
        bias,
        config: cfg.clone(),
    })
}
