#![allow(dead_code)]

use std::path::{Path, PathBuf};

use marketstance_cli::config::PipelineConfig;

pub fn toy_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/toy")
}

/// The committed toy config with its output root pointed at `out`.
pub fn toy_config(out: &Path) -> PipelineConfig {
    let dir = toy_dir();
    let text = std::fs::read_to_string(dir.join("config.toml")).unwrap();
    let out = out.to_string_lossy().into_owned();
    PipelineConfig::from_toml(&text, &dir, &move |name| {
        (name == "MARKETSTANCE_OUT").then(|| out.clone())
    })
    .unwrap()
}
