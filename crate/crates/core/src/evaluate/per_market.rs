use std::collections::BTreeMap;

use serde::Serialize;

use super::{evaluate_labels, EvalError, MetricsReport};
use crate::corpus::{ClassScheme, Domain, Market, StanceLabel};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarketRow {
    pub market_id: String,
    pub domain: Domain,
    pub report: MetricsReport,
    /// The market has no Anti gold examples, so Anti recall and F1 are undefined.
    pub zero_anti_gold: bool,
}

impl MarketRow {
    pub fn anti_recall(&self) -> Option<f64> {
        (!self.zero_anti_gold).then(|| self.report.anti_recall())
    }

    pub fn anti_f1(&self) -> Option<f64> {
        (!self.zero_anti_gold).then(|| self.report.anti_f1())
    }
}

/// One report per market, in market-id order.
pub fn per_market_report(
    scheme: ClassScheme,
    predictions: &[StanceLabel],
    golds: &[StanceLabel],
    market_ids: &[String],
    markets: &[Market],
) -> Result<Vec<MarketRow>, EvalError> {
    if predictions.len() != golds.len() || golds.len() != market_ids.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            golds: golds.len().min(market_ids.len()),
        });
    }
    let mut groups: BTreeMap<&str, (Vec<StanceLabel>, Vec<StanceLabel>)> = BTreeMap::new();
    for ((p, g), m) in predictions.iter().zip(golds).zip(market_ids) {
        let entry = groups.entry(m.as_str()).or_default();
        entry.0.push(*p);
        entry.1.push(*g);
    }
    groups
        .into_iter()
        .map(|(id, (p, g))| {
            let market = markets
                .iter()
                .find(|m| m.market_id == id)
                .ok_or_else(|| EvalError::UnknownMarket(id.to_string()))?;
            Ok(MarketRow {
                market_id: id.to_string(),
                domain: market.domain,
                zero_anti_gold: !g.contains(&StanceLabel::Anti),
                report: evaluate_labels(scheme, &p, &g)?,
            })
        })
        .collect()
}
