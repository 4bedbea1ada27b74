use std::fmt;

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::corpus::StanceLabel;

/// Inverse-frequency class weights `w_c = N / (C * N_c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub labels: Vec<StanceLabel>,
    pub weights: Vec<f64>,
}

impl ClassWeights {
    pub fn uniform(labels: &[StanceLabel]) -> Self {
        Self {
            labels: labels.to_vec(),
            weights: vec![1.0; labels.len()],
        }
    }

    pub fn get(&self, label: StanceLabel) -> Option<f64> {
        self.labels.iter().position(|&l| l == label).map(|i| self.weights[i])
    }

    /// Every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            labels: self.labels.clone(),
            weights: self.weights.iter().map(|w| w * factor).collect(),
        }
    }
}

impl fmt::Display for ClassWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .labels
            .iter()
            .zip(&self.weights)
            .map(|(l, w)| format!("{l}={w:.3}"))
            .collect();
        f.write_str(&parts.join(" "))
    }
}

/// Class weights from per-label counts, in the order given.
pub fn compute_class_weights(counts: &[(StanceLabel, usize)]) -> Result<ClassWeights, TrainError> {
    if counts.is_empty() {
        return Err(TrainError::DegenerateClass("no classes given".into()));
    }
    if let Some((label, _)) = counts.iter().find(|(_, n)| *n == 0) {
        return Err(TrainError::DegenerateClass(format!("class {label} has no examples")));
    }
    let n: usize = counts.iter().map(|(_, c)| c).sum();
    let c = counts.len() as f64;
    Ok(ClassWeights {
        labels: counts.iter().map(|(l, _)| *l).collect(),
        weights: counts.iter().map(|(_, nc)| n as f64 / (c * *nc as f64)).collect(),
    })
}
