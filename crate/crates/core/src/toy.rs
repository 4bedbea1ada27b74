//! Deterministic templated corpora for smoke runs and tests.
//!
//! Every Pro comment carries one Pro cue word, every Anti comment one Anti cue
//! word and Neutral comments neither, so a bag-of-words rule labels the
//! corpus perfectly.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{ClassScheme, Comment, DatasetBundle, Domain, LabeledExample, Market, StanceLabel};

pub const PRO_CUES: [&str; 5] = ["bullish", "lock", "printing", "moon", "easy"];
pub const ANTI_CUES: [&str; 5] = ["bearish", "fade", "cooked", "dead", "never"];
pub const NEUTRAL_CUES: [&str; 5] = ["watching", "news", "when", "interesting", "following"];
const FILLERS: [&str; 8] = ["honestly", "lol", "today", "tbh", "ngl", "rn", "fr", "imo"];

/// Twelve markets: five politics, five sports, two finance.
pub fn toy_markets() -> Vec<(Market, &'static str)> {
    let rows: [(&str, &str, Domain, &str); 12] = [
        (
            "pres-2024",
            "Presidential Election Winner 2024?",
            Domain::Politics,
            "Trump",
        ),
        (
            "kr-pres",
            "Next president of South Korea?",
            Domain::Politics,
            "Lee Jae-myung",
        ),
        (
            "pa-senate",
            "Will Republicans win the Pennsylvania Senate race?",
            Domain::Politics,
            "Pennsylvania",
        ),
        (
            "popular-vote",
            "Will Harris win the popular vote?",
            Domain::Politics,
            "Harris",
        ),
        (
            "ohio-margin",
            "Trump wins Ohio by more than 8 points?",
            Domain::Politics,
            "Ohio",
        ),
        ("super-bowl", "Chiefs win the Super Bowl?", Domain::Sports, "Chiefs"),
        ("nba-finals", "Celtics win the NBA Finals?", Domain::Sports, "Celtics"),
        (
            "world-series",
            "Dodgers win the World Series?",
            Domain::Sports,
            "Dodgers",
        ),
        ("mvp", "Mahomes named MVP?", Domain::Sports, "Mahomes"),
        ("ohtani-hr", "Ohtani hits 50 home runs?", Domain::Sports, "Ohtani"),
        ("fed-dec", "Fed decision in December?", Domain::Finance, "Fed"),
        (
            "btc-100k",
            "Bitcoin above 100k by year end?",
            Domain::Finance,
            "Bitcoin",
        ),
    ];
    rows.into_iter()
        .map(|(id, q, d, entity)| (Market::new(id, q, d).expect("non-empty question"), entity))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyCorpusSpec {
    pub pro: usize,
    pub anti: usize,
    pub neutral: usize,
}

impl ToyCorpusSpec {
    /// The 628 / 194 / 1407 class sizes of the annotated corpus.
    pub const FULL_SCALE: ToyCorpusSpec = ToyCorpusSpec {
        pro: 628,
        anti: 194,
        neutral: 1407,
    };

    pub fn total(&self) -> usize {
        self.pro + self.anti + self.neutral
    }
}

fn comment_text(rng: &mut ChaCha8Rng, cue: &str, entity: &str) -> String {
    let a = FILLERS.choose(rng).expect("fillers");
    let b = FILLERS.choose(rng).expect("fillers");
    match rng.gen_range(0..3) {
        0 => format!("{a} {cue} on {entity} {b}"),
        1 => format!("{entity} {cue} {a}"),
        _ => format!("{cue} {a} {entity} {b}"),
    }
}

/// Three-class corpus with unassigned splits; labels are interleaved and
/// spread round-robin over the twelve markets.
pub fn toy_corpus(spec: ToyCorpusSpec, seed: u64) -> DatasetBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let markets = toy_markets();
    let mut labels: Vec<StanceLabel> = std::iter::repeat(StanceLabel::Pro)
        .take(spec.pro)
        .chain(std::iter::repeat(StanceLabel::Anti).take(spec.anti))
        .chain(std::iter::repeat(StanceLabel::Neutral).take(spec.neutral))
        .collect();
    labels.shuffle(&mut rng);
    let examples = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let (market, entity) = &markets[i % markets.len()];
            let cues = match label {
                StanceLabel::Pro => &PRO_CUES,
                StanceLabel::Anti => &ANTI_CUES,
                StanceLabel::Neutral => &NEUTRAL_CUES,
            };
            let cue = cues.choose(&mut rng).expect("cues");
            let text = comment_text(&mut rng, cue, entity);
            LabeledExample::real(Comment::new(format!("c{i:05}"), market.market_id.clone(), text), label)
        })
        .collect();
    DatasetBundle::new(
        examples,
        ClassScheme::ThreeClass,
        markets.into_iter().map(|(m, _)| m).collect(),
    )
    .expect("toy corpus is valid")
}

/// Label implied by cue words, `None` when the text has no cue.
pub fn bag_of_words_label(text: &str) -> Option<StanceLabel> {
    let words: Vec<String> = text.split_whitespace().map(str::to_lowercase).collect();
    let has = |cues: &[&str]| words.iter().any(|w| cues.contains(&w.as_str()));
    if has(&PRO_CUES) {
        Some(StanceLabel::Pro)
    } else if has(&ANTI_CUES) {
        Some(StanceLabel::Anti)
    } else if has(&NEUTRAL_CUES) {
        Some(StanceLabel::Neutral)
    } else {
        None
    }
}

/// Canned Anti rewrites for every Pro comment of `bundle`, keyed by comment id.
/// Every fifth source gets a verbatim echo so the echo filter has work to do.
pub fn toy_flip_replies(bundle: &DatasetBundle) -> HashMap<String, String> {
    bundle
        .examples
        .iter()
        .filter(|e| e.label == StanceLabel::Pro)
        .enumerate()
        .map(|(i, e)| {
            let text = if i % 5 == 4 {
                e.comment.text.clone()
            } else {
                let cue = ANTI_CUES[i % ANTI_CUES.len()];
                let entity = toy_markets()
                    .into_iter()
                    .find(|(m, _)| m.market_id == e.market_id())
                    .map_or("this", |(_, ent)| ent);
                format!("{cue} on {entity} not happening")
            };
            (e.id().to_string(), text)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_labels_toy_corpus_perfectly() {
        let b = toy_corpus(
            ToyCorpusSpec {
                pro: 30,
                anti: 20,
                neutral: 40,
            },
            1,
        );
        assert_eq!(b.len(), 90);
        for e in &b.examples {
            assert_eq!(bag_of_words_label(&e.comment.text), Some(e.label), "{}", e.comment.text);
        }
        let domains = toy_markets().iter().fold([0; 3], |mut acc, (m, _)| {
            acc[Domain::ALL.iter().position(|d| *d == m.domain).unwrap()] += 1;
            acc
        });
        assert_eq!(domains, [5, 5, 2]);
    }

    #[test]
    fn canned_flips_mostly_pass_filters() {
        let b = toy_corpus(
            ToyCorpusSpec {
                pro: 50,
                anti: 5,
                neutral: 5,
            },
            2,
        );
        let replies = toy_flip_replies(&b);
        let accepted = b
            .examples
            .iter()
            .filter(|e| e.label == StanceLabel::Pro)
            .filter(|e| crate::augment::quality_verdict(&e.comment.text, &replies[e.id()]).accepted)
            .count();
        assert_eq!(accepted, 40);
    }
}
