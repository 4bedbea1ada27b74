use serde::Serialize;

use super::EvalError;
use crate::corpus::{ClassScheme, StanceLabel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

fn check(preds: &[usize], golds: &[usize], classes: usize) -> Result<(), EvalError> {
    if preds.len() != golds.len() {
        return Err(EvalError::LengthMismatch {
            predictions: preds.len(),
            golds: golds.len(),
        });
    }
    if let Some(&bad) = preds.iter().chain(golds).find(|&&i| i >= classes) {
        return Err(EvalError::LabelOutOfRange { index: bad, classes });
    }
    Ok(())
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `counts[g][p]`: examples of gold class `g` predicted as `p`.
pub fn confusion_matrix(preds: &[usize], golds: &[usize], classes: usize) -> Result<Vec<Vec<usize>>, EvalError> {
    check(preds, golds, classes)?;
    let mut m = vec![vec![0; classes]; classes];
    for (&p, &g) in preds.iter().zip(golds) {
        m[g][p] += 1;
    }
    Ok(m)
}

/// Each row divided by its total; rows with no gold examples stay zero.
pub fn row_normalize(counts: &[Vec<usize>]) -> Vec<Vec<f64>> {
    counts
        .iter()
        .map(|row| {
            let total: usize = row.iter().sum();
            row.iter().map(|&v| ratio(v, total)).collect()
        })
        .collect()
}

pub fn confusion_matrix_normalized(
    preds: &[usize],
    golds: &[usize],
    classes: usize,
) -> Result<Vec<Vec<f64>>, EvalError> {
    Ok(row_normalize(&confusion_matrix(preds, golds, classes)?))
}

/// Precision, recall and F1 per class index; zero denominators give 0.
pub fn per_class_prf(preds: &[usize], golds: &[usize], classes: usize) -> Result<Vec<Prf>, EvalError> {
    let m = confusion_matrix(preds, golds, classes)?;
    Ok((0..classes)
        .map(|c| {
            let tp = m[c][c];
            let support: usize = m[c].iter().sum();
            let predicted: usize = m.iter().map(|row| row[c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            Prf {
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect())
}

/// Unweighted mean of per-class F1 over all `classes`, including classes
/// with no gold examples.
pub fn macro_f1(preds: &[usize], golds: &[usize], classes: usize) -> Result<f64, EvalError> {
    let prf = per_class_prf(preds, golds, classes)?;
    Ok(prf.iter().map(|p| p.f1).sum::<f64>() / classes as f64)
}

pub fn accuracy(preds: &[usize], golds: &[usize], classes: usize) -> Result<f64, EvalError> {
    check(preds, golds, classes)?;
    let hits = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(ratio(hits, golds.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub label: StanceLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub scheme: ClassScheme,
    pub per_class: Vec<ClassMetrics>,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
    pub confusion_row_norm: Vec<Vec<f64>>,
    pub total: usize,
}

impl MetricsReport {
    pub fn class(&self, label: StanceLabel) -> Option<&ClassMetrics> {
        self.per_class.iter().find(|c| c.label == label)
    }

    pub fn anti_recall(&self) -> f64 {
        self.class(StanceLabel::Anti).map_or(0.0, |c| c.recall)
    }

    pub fn anti_f1(&self) -> f64 {
        self.class(StanceLabel::Anti).map_or(0.0, |c| c.f1)
    }
}

fn indices(scheme: ClassScheme, labels: &[StanceLabel]) -> Result<Vec<usize>, EvalError> {
    labels
        .iter()
        .map(|&l| {
            scheme
                .index_of(l)
                .ok_or(EvalError::LabelOutsideScheme { label: l, scheme })
        })
        .collect()
}

/// Full report for label-valued predictions and golds.
pub fn evaluate_labels(
    scheme: ClassScheme,
    predictions: &[StanceLabel],
    golds: &[StanceLabel],
) -> Result<MetricsReport, EvalError> {
    let c = scheme.num_classes();
    let p = indices(scheme, predictions)?;
    let g = indices(scheme, golds)?;
    let confusion = confusion_matrix(&p, &g, c)?;
    let prf = per_class_prf(&p, &g, c)?;
    Ok(MetricsReport {
        scheme,
        per_class: scheme
            .labels()
            .iter()
            .zip(&prf)
            .map(|(&label, m)| ClassMetrics {
                label,
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
                support: m.support,
            })
            .collect(),
        macro_f1: prf.iter().map(|m| m.f1).sum::<f64>() / c as f64,
        accuracy: accuracy(&p, &g, c)?,
        confusion_row_norm: row_normalize(&confusion),
        confusion,
        total: golds.len(),
    })
}
