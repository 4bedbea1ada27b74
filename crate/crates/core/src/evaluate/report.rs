use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{AblationResult, EvalError, MarketRow, MetricsReport};

#[derive(Serialize)]
struct MetricsRow<'a> {
    class: &'a str,
    precision: Option<f64>,
    recall: Option<f64>,
    f1: f64,
    support: usize,
}

/// Per-class rows followed by `macro_avg` and `accuracy` rows.
pub fn write_metrics_csv(report: &MetricsReport, path: impl AsRef<Path>) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    for c in &report.per_class {
        w.serialize(MetricsRow {
            class: c.label.as_str(),
            precision: Some(c.precision),
            recall: Some(c.recall),
            f1: c.f1,
            support: c.support,
        })?;
    }
    let n = report.per_class.len() as f64;
    w.serialize(MetricsRow {
        class: "macro_avg",
        precision: Some(report.per_class.iter().map(|c| c.precision).sum::<f64>() / n),
        recall: Some(report.per_class.iter().map(|c| c.recall).sum::<f64>() / n),
        f1: report.macro_f1,
        support: report.total,
    })?;
    w.serialize(MetricsRow {
        class: "accuracy",
        precision: None,
        recall: None,
        f1: report.accuracy,
        support: report.total,
    })?;
    w.flush()?;
    Ok(())
}

/// Long format: one row per (gold, predicted) pair with count and row share.
pub fn write_confusion_csv(report: &MetricsReport, path: impl AsRef<Path>) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["gold", "predicted", "count", "row_fraction"])?;
    let labels = report.scheme.labels();
    for (g, gold) in labels.iter().enumerate() {
        for (p, pred) in labels.iter().enumerate() {
            w.write_record([
                gold.as_str().to_string(),
                pred.as_str().to_string(),
                report.confusion[g][p].to_string(),
                report.confusion_row_norm[g][p].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Anti metrics are left blank for markets without Anti gold examples.
pub fn write_per_market_csv(rows: &[MarketRow], path: impl AsRef<Path>) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "market_id",
        "domain",
        "support",
        "accuracy",
        "macro_f1",
        "anti_support",
        "anti_precision",
        "anti_recall",
        "anti_f1",
        "zero_anti_gold",
    ])?;
    for row in rows {
        let anti = row.report.class(crate::corpus::StanceLabel::Anti);
        w.write_record([
            row.market_id.clone(),
            row.domain.to_string(),
            row.report.total.to_string(),
            row.report.accuracy.to_string(),
            row.report.macro_f1.to_string(),
            anti.map_or(0, |a| a.support).to_string(),
            opt((!row.zero_anti_gold).then(|| anti.map_or(0.0, |a| a.precision))),
            opt(row.anti_recall()),
            opt(row.anti_f1()),
            row.zero_anti_gold.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (mean, sd)
}

/// Writes per-cell metrics, confusion and per-market files plus the grid-level
/// `dose_response.csv`, `heatmap.csv` and `summary.csv`. Returns every path written.
pub fn write_ablation_reports(result: &AblationResult, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, EvalError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for cell in &result.cells {
        if let Some(report) = &cell.report {
            let tag = cell.cell.tag();
            let p = dir.join(format!("metrics_{tag}.csv"));
            write_metrics_csv(report, &p)?;
            written.push(p);
            let p = dir.join(format!("confusion_{tag}.csv"));
            write_confusion_csv(report, &p)?;
            written.push(p);
            let p = dir.join(format!("per_market_{tag}.csv"));
            write_per_market_csv(&cell.per_market, &p)?;
            written.push(p);
        }
    }

    let p = dir.join("dose_response.csv");
    let mut w = csv::Writer::from_path(&p)?;
    w.write_record([
        "configuration",
        "scheme",
        "with_context",
        "dose",
        "seed",
        "synthetic_added",
        "anti_f1",
        "anti_recall",
        "macro_f1",
        "accuracy",
        "status",
    ])?;
    for c in &result.cells {
        let r = c.report.as_ref();
        w.write_record([
            c.cell.configuration(),
            c.cell.scheme.as_str().to_string(),
            c.cell.with_context.to_string(),
            c.cell.dose.to_string(),
            c.cell.seed.to_string(),
            c.synthetic_added.to_string(),
            opt(r.map(MetricsReport::anti_f1)),
            opt(r.map(MetricsReport::anti_recall)),
            opt(r.map(|r| r.macro_f1)),
            opt(r.map(|r| r.accuracy)),
            if r.is_some() {
                "ok".into()
            } else {
                format!("failed: {}", c.error.as_deref().unwrap_or(""))
            },
        ])?;
    }
    w.flush()?;
    written.push(p);

    // (configuration, dose) in grid order
    let mut groups: Vec<((String, String), Vec<&MetricsReport>)> = Vec::new();
    for c in &result.cells {
        let key = (c.cell.configuration(), c.cell.dose.to_string());
        let idx = match groups.iter().position(|(k, _)| *k == key) {
            Some(i) => i,
            None => {
                groups.push((key, Vec::new()));
                groups.len() - 1
            }
        };
        if let Some(r) = &c.report {
            groups[idx].1.push(r);
        }
    }

    let p = dir.join("heatmap.csv");
    let mut w = csv::Writer::from_path(&p)?;
    w.write_record(["configuration", "dose", "macro_f1"])?;
    for ((config, dose), reports) in &groups {
        let f1: Vec<f64> = reports.iter().map(|r| r.macro_f1).collect();
        let value = if f1.is_empty() {
            String::new()
        } else {
            mean_sd(&f1).0.to_string()
        };
        w.write_record([config.clone(), dose.clone(), value])?;
    }
    w.flush()?;
    written.push(p);

    let p = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&p)?;
    w.write_record([
        "configuration",
        "dose",
        "runs",
        "macro_f1_mean",
        "macro_f1_sd",
        "anti_f1_mean",
        "anti_f1_sd",
        "anti_recall_mean",
        "anti_recall_sd",
        "accuracy_mean",
        "accuracy_sd",
    ])?;
    for ((config, dose), reports) in &groups {
        let mut fields = vec![config.clone(), dose.clone(), reports.len().to_string()];
        let stats: BTreeMap<usize, (f64, f64)> = [
            reports.iter().map(|r| r.macro_f1).collect::<Vec<_>>(),
            reports.iter().map(|r| r.anti_f1()).collect(),
            reports.iter().map(|r| r.anti_recall()).collect(),
            reports.iter().map(|r| r.accuracy).collect(),
        ]
        .iter()
        .enumerate()
        .map(|(i, v)| (i, mean_sd(v)))
        .collect();
        for (_, (mean, sd)) in stats {
            fields.push(if reports.is_empty() {
                String::new()
            } else {
                mean.to_string()
            });
            fields.push(if reports.is_empty() {
                String::new()
            } else {
                sd.to_string()
            });
        }
        w.write_record(&fields)?;
    }
    w.flush()?;
    written.push(p);

    let p = dir.join("cells.json");
    std::fs::write(
        &p,
        serde_json::to_string_pretty(result).map_err(|e| EvalError::Config(e.to_string()))?,
    )?;
    written.push(p);
    Ok(written)
}
