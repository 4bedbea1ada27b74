use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClassScheme, CorpusError, DatasetBundle, Provenance, Split, StanceLabel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(CorpusError::Ratios(format!("ratios must lie in [0, 1]: {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::Ratios(format!("ratios sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Split sizes for `n` examples: validation and test take
    /// `ceil(ratio * n)`, training takes the remainder.
    pub fn sizes(&self, n: usize) -> [usize; 3] {
        let take = |r: f64| ((r * n as f64) - 1e-9).ceil().max(0.0) as usize;
        let val = take(self.val).min(n);
        let test = take(self.test).min(n - val);
        [n - val - test, val, test]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassCount {
    pub label: StanceLabel,
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassDistribution {
    pub rows: Vec<ClassCount>,
    pub total: usize,
}

impl ClassDistribution {
    pub fn count(&self, label: StanceLabel) -> usize {
        self.rows.iter().find(|r| r.label == label).map_or(0, |r| r.count)
    }

    pub fn percent(&self, label: StanceLabel) -> f64 {
        self.rows.iter().find(|r| r.label == label).map_or(0.0, |r| r.percent)
    }
}

impl fmt::Display for ClassDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in &self.rows {
            writeln!(f, "{:<8} {:>6} {:>6.1}%", row.label.as_str(), row.count, row.percent)?;
        }
        write!(f, "{:<8} {:>6} {:>6.1}%", "Total", self.total, 100.0)
    }
}

/// Counts and percentages per label of the bundle's scheme.
pub fn class_distribution(bundle: &DatasetBundle) -> Result<ClassDistribution, CorpusError> {
    if bundle.is_empty() {
        return Err(CorpusError::EmptyBundle);
    }
    let total = bundle.len();
    let rows = bundle
        .scheme
        .labels()
        .iter()
        .map(|&label| {
            let count = bundle.count_label(label);
            ClassCount {
                label,
                count,
                percent: 100.0 * count as f64 / total as f64,
            }
        })
        .collect();
    Ok(ClassDistribution { rows, total })
}

/// Drops Neutral examples and switches the bundle to the two-class scheme.
pub fn project_two_class(bundle: &DatasetBundle) -> Result<DatasetBundle, CorpusError> {
    if bundle.scheme == ClassScheme::TwoClass {
        return Err(CorpusError::AlreadyTwoClass);
    }
    let examples: Vec<_> = bundle
        .examples
        .iter()
        .filter(|e| e.label != StanceLabel::Neutral)
        .cloned()
        .collect();
    if examples.is_empty() && !bundle.is_empty() {
        log::warn!("two-class projection removed every example (bundle was all Neutral)");
    }
    Ok(DatasetBundle {
        examples,
        scheme: ClassScheme::TwoClass,
        markets: bundle.markets.clone(),
        transform: bundle.transform.clone(),
    })
}

/// Per-class split counts whose row sums are the class sizes, column sums the
/// split sizes, and every cell within one example of its proportional quota.
///
/// Cells start at the floor of their quota; the leftover units form a 0/1
/// matrix with known row and column sums, filled greedily (Gale-Ryser order:
/// rows with most leftovers first, each into the columns with most remaining
/// capacity, ties to the larger fractional part).
pub fn allocate(class_sizes: &[usize], split_sizes: [usize; 3]) -> Vec<[usize; 3]> {
    let n: usize = class_sizes.iter().sum();
    if n == 0 {
        return vec![[0; 3]; class_sizes.len()];
    }
    let quota: Vec<[f64; 3]> = class_sizes
        .iter()
        .map(|&c| split_sizes.map(|s| c as f64 * s as f64 / n as f64))
        .collect();
    let mut cells: Vec<[usize; 3]> = quota.iter().map(|q| q.map(|v| v.floor() as usize)).collect();
    let row_left: Vec<usize> = class_sizes
        .iter()
        .zip(&cells)
        .map(|(&c, row)| c - row.iter().sum::<usize>())
        .collect();
    let mut col_left: [usize; 3] = std::array::from_fn(|s| split_sizes[s] - cells.iter().map(|r| r[s]).sum::<usize>());
    let mut order: Vec<usize> = (0..class_sizes.len()).collect();
    order.sort_by(|&a, &b| row_left[b].cmp(&row_left[a]).then(a.cmp(&b)));
    for c in order {
        let mut splits = [0usize, 1, 2];
        splits.sort_by(|&a, &b| {
            col_left[b]
                .cmp(&col_left[a])
                .then_with(|| {
                    let fa = quota[c][a] - quota[c][a].floor();
                    let fb = quota[c][b] - quota[c][b].floor();
                    fb.total_cmp(&fa)
                })
                .then(a.cmp(&b))
        });
        for &s in splits.iter().take(row_left[c]) {
            cells[c][s] += 1;
            col_left[s] -= 1;
        }
    }
    cells
}

/// Assigns every real example to train/val/test, stratified by label.
///
/// Split totals come from [`SplitRatios::sizes`]; within a class, members are
/// shuffled by a generator seeded from `(seed, label)` and sliced in
/// train/val/test order. Synthetic examples stay in train and are not counted.
pub fn stratified_split(bundle: &DatasetBundle, ratios: SplitRatios, seed: u64) -> Result<DatasetBundle, CorpusError> {
    ratios.validate()?;
    let labels = bundle.scheme.labels();
    let members: Vec<Vec<usize>> = labels
        .iter()
        .map(|&label| {
            bundle
                .examples
                .iter()
                .enumerate()
                .filter(|(_, e)| e.provenance == Provenance::Real && e.label == label)
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    for (label, m) in labels.iter().zip(&members) {
        if m.len() < 3 {
            return Err(CorpusError::Stratification {
                label: *label,
                count: m.len(),
            });
        }
    }
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let total: usize = sizes.iter().sum();
    let cells = allocate(&sizes, ratios.sizes(total));

    let mut out = bundle.clone();
    for ((label, mut idx), counts) in labels.iter().zip(members).zip(cells) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(label.ordinal() as u64 + 1);
        idx.shuffle(&mut rng);
        let mut it = idx.into_iter();
        for (split, count) in Split::ASSIGNED.into_iter().zip(counts) {
            for i in it.by_ref().take(count) {
                out.examples[i].split = split;
            }
        }
    }
    for ex in out
        .examples
        .iter_mut()
        .filter(|e| e.provenance == Provenance::Synthetic)
    {
        ex.split = Split::Train;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_reproduce_published_split_counts() {
        let r = SplitRatios::default();
        assert_eq!(r.sizes(2229), [1559, 335, 335]);
        assert_eq!(r.sizes(822), [574, 124, 124]);
        assert_eq!(r.sizes(0), [0, 0, 0]);
        assert_eq!(r.sizes(3), [1, 1, 1]);
    }

    #[test]
    fn allocation_respects_margins_and_quotas() {
        let cells = allocate(&[1407, 628, 194], [1559, 335, 335]);
        assert_eq!(cells, vec![[984, 212, 211], [439, 94, 95], [136, 29, 29]]);
        let cells = allocate(&[628, 194], [574, 124, 124]);
        assert_eq!(cells, vec![[438, 95, 95], [136, 29, 29]]);
    }

    #[test]
    fn ratio_validation() {
        assert!(SplitRatios {
            train: 0.7,
            val: 0.2,
            test: 0.2
        }
        .validate()
        .is_err());
        assert!(SplitRatios {
            train: 1.1,
            val: -0.05,
            test: -0.05
        }
        .validate()
        .is_err());
        assert!(SplitRatios::default().validate().is_ok());
    }
}
