use marketstance_nn::softmax;
use ndarray::{Array1, Array2};

use super::TrainError;

/// Weighted cross-entropy with weighted-mean reduction:
/// `sum_i w_{y_i} * nll_i / sum_i w_{y_i}`.
pub fn weighted_ce_loss(logits: &Array2<f64>, labels: &[usize], weights: &[f64]) -> Result<f64, TrainError> {
    Ok(weighted_ce_with_grad(logits, labels, weights)?.0)
}

/// Loss and its gradient with respect to the logits.
pub fn weighted_ce_with_grad(
    logits: &Array2<f64>,
    labels: &[usize],
    weights: &[f64],
) -> Result<(f64, Array2<f64>), TrainError> {
    let (rows, classes) = logits.dim();
    if rows != labels.len() {
        return Err(TrainError::Shape(format!(
            "{rows} logit rows for {} labels",
            labels.len()
        )));
    }
    if classes != weights.len() {
        return Err(TrainError::Shape(format!(
            "{classes} classes but {} weights",
            weights.len()
        )));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
        return Err(TrainError::Shape(format!(
            "label index {y} out of range for {classes} classes"
        )));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(TrainError::NonFinite("logits contain NaN or infinity".into()));
    }
    let total_weight: f64 = labels.iter().map(|&y| weights[y]).sum();
    let mut grad = Array2::zeros((rows, classes));
    if rows == 0 || total_weight <= 0.0 {
        return Ok((0.0, grad));
    }
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row: Array1<f64> = logits.row(i).to_owned();
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let log_sum = row.mapv(|v| (v - max).exp()).sum().ln() + max;
        let w = weights[y] / total_weight;
        loss += w * (log_sum - row[y]);
        let mut g = softmax(&row) * w;
        g[y] -= w;
        grad.row_mut(i).assign(&g);
    }
    Ok((loss, grad))
}
