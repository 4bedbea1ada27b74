use std::collections::HashSet;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::CorpusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Politics,
    Sports,
    Finance,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::Politics, Domain::Sports, Domain::Finance];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Politics => "politics",
            Domain::Sports => "sports",
            Domain::Finance => "finance",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Market {
    pub market_id: String,
    pub question: String,
    pub domain: Domain,
}

impl Market {
    pub fn new(market_id: impl Into<String>, question: impl Into<String>, domain: Domain) -> Result<Self, CorpusError> {
        let market = Self {
            market_id: market_id.into(),
            question: question.into(),
            domain,
        };
        market.validate()?;
        Ok(market)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.question.trim().is_empty() {
            return Err(CorpusError::Invalid(format!(
                "market {} has an empty question",
                self.market_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comment {
    pub comment_id: String,
    pub market_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<DateTime<Utc>>,
}

impl Comment {
    pub fn new(comment_id: impl Into<String>, market_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            comment_id: comment_id.into(),
            market_id: market_id.into(),
            text: text.into(),
            timestamp: None,
        }
    }
}

/// Direction of a comment relative to the market's stated outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StanceLabel {
    #[serde(alias = "pro", alias = "PRO", alias = "Pro_Position", alias = "PRO_POSITION")]
    Pro,
    #[serde(alias = "anti", alias = "ANTI", alias = "Anti_Position", alias = "ANTI_POSITION")]
    Anti,
    #[serde(alias = "neutral", alias = "NEUTRAL")]
    Neutral,
}

impl StanceLabel {
    pub const ALL: [StanceLabel; 3] = [StanceLabel::Pro, StanceLabel::Anti, StanceLabel::Neutral];

    pub fn as_str(self) -> &'static str {
        match self {
            StanceLabel::Pro => "Pro",
            StanceLabel::Anti => "Anti",
            StanceLabel::Neutral => "Neutral",
        }
    }

    /// Stable index independent of the class scheme.
    pub fn ordinal(self) -> usize {
        self as usize
    }
}

impl fmt::Display for StanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StanceLabel {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pro" | "pro_position" => Ok(StanceLabel::Pro),
            "anti" | "anti_position" => Ok(StanceLabel::Anti),
            "neutral" => Ok(StanceLabel::Neutral),
            other => Err(CorpusError::Invalid(format!("unknown stance label `{other}`"))),
        }
    }
}

/// Label set used by a model: `{Pro, Anti}` or `{Pro, Anti, Neutral}`.
///
/// Class indices follow [`ClassScheme::labels`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassScheme {
    TwoClass,
    ThreeClass,
}

impl ClassScheme {
    pub fn labels(self) -> &'static [StanceLabel] {
        match self {
            ClassScheme::TwoClass => &StanceLabel::ALL[..2],
            ClassScheme::ThreeClass => &StanceLabel::ALL,
        }
    }

    pub fn num_classes(self) -> usize {
        self.labels().len()
    }

    pub fn index_of(self, label: StanceLabel) -> Option<usize> {
        self.labels().iter().position(|&l| l == label)
    }

    pub fn label_at(self, index: usize) -> Option<StanceLabel> {
        self.labels().get(index).copied()
    }

    pub fn from_num_classes(c: usize) -> Option<Self> {
        match c {
            2 => Some(ClassScheme::TwoClass),
            3 => Some(ClassScheme::ThreeClass),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassScheme::TwoClass => "2class",
            ClassScheme::ThreeClass => "3class",
        }
    }
}

impl fmt::Display for ClassScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Real,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
    Unassigned,
}

impl Split {
    pub const ASSIGNED: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub comment: Comment,
    pub label: StanceLabel,
    pub provenance: Provenance,
    pub split: Split,
}

impl LabeledExample {
    pub fn real(comment: Comment, label: StanceLabel) -> Self {
        Self {
            comment,
            label,
            provenance: Provenance::Real,
            split: Split::Unassigned,
        }
    }

    pub fn id(&self) -> &str {
        &self.comment.comment_id
    }

    pub fn market_id(&self) -> &str {
        &self.comment.market_id
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.comment.text.trim().is_empty() {
            return Err(CorpusError::Invalid(format!("comment {} has empty text", self.id())));
        }
        if self.provenance == Provenance::Synthetic && (self.label != StanceLabel::Anti || self.split != Split::Train) {
            return Err(CorpusError::Invalid(format!(
                "synthetic example {} must be an Anti training example",
                self.id()
            )));
        }
        Ok(())
    }
}

/// Records how a dataset's comment text was transformed after ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextTransform {
    pub masked: bool,
    pub recognizer: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub examples: Vec<LabeledExample>,
    pub scheme: ClassScheme,
    pub markets: Vec<Market>,
    pub transform: Option<TextTransform>,
}

impl DatasetBundle {
    pub fn new(examples: Vec<LabeledExample>, scheme: ClassScheme, markets: Vec<Market>) -> Result<Self, CorpusError> {
        let bundle = Self {
            examples,
            scheme,
            markets,
            transform: None,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let known: HashSet<&str> = self.markets.iter().map(|m| m.market_id.as_str()).collect();
        for market in &self.markets {
            market.validate()?;
        }
        for ex in &self.examples {
            ex.validate()?;
            if !known.contains(ex.market_id()) {
                return Err(CorpusError::UnknownMarket(ex.market_id().to_string()));
            }
            if self.scheme.index_of(ex.label).is_none() {
                return Err(CorpusError::Invalid(format!(
                    "example {} has label {} outside the {} scheme",
                    ex.id(),
                    ex.label,
                    self.scheme
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn market(&self, market_id: &str) -> Option<&Market> {
        self.markets.iter().find(|m| m.market_id == market_id)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &LabeledExample> {
        self.examples.iter().filter(move |e| e.split == split)
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.split(split).count()
    }

    /// Same bundle restricted to `split`.
    pub fn subset(&self, split: Split) -> DatasetBundle {
        DatasetBundle {
            examples: self.split(split).cloned().collect(),
            scheme: self.scheme,
            markets: self.markets.clone(),
            transform: self.transform.clone(),
        }
    }

    pub fn count_label(&self, label: StanceLabel) -> usize {
        self.examples.iter().filter(|e| e.label == label).count()
    }
}
