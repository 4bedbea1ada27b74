use std::fmt::Display;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("stage `{stage}` failed: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("ablation grid incomplete: {failed} of {total} cells failed")]
    PartialGrid { failed: usize, total: usize },
}

impl CliError {
    /// 1 for validation, 2 for a failed stage, 3 for a partial grid.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Stage { .. } => 2,
            CliError::PartialGrid { .. } => 3,
        }
    }

    pub fn stage(stage: &'static str, message: impl Display) -> Self {
        CliError::Stage {
            stage,
            message: message.to_string(),
        }
    }
}

/// `map_err` adapter tagging an error with the stage it came from.
pub fn in_stage<E: Display>(stage: &'static str) -> impl Fn(E) -> CliError {
    move |e| CliError::stage(stage, e)
}
