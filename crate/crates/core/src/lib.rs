//! Stance detection on prediction-market comments: corpus handling, entity
//! masking and context formatting, counterfactual augmentation, weighted
//! fine-tuning, evaluation and attention inspection.

pub mod augment;
pub mod corpus;
pub mod evaluate;
pub mod interpret;
pub mod preprocess;
pub mod toy;
pub mod trainer;
mod util;

pub use util::sha256_hex;
