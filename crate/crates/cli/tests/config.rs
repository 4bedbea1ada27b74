mod common;

use std::collections::HashMap;
use std::path::Path;

use marketstance_cli::config::{interpolate, Overrides, PipelineConfig, Section};
use marketstance_cli::error::CliError;
use proptest::prelude::*;

fn no_env(_: &str) -> Option<String> {
    None
}

proptest! {
    #[test]
    fn text_without_placeholders_is_unchanged(text in "[^$]{0,40}") {
        prop_assert_eq!(interpolate(&text, &no_env).unwrap(), text);
    }

    #[test]
    fn set_variables_win_over_defaults(
        prefix in "[a-z /]{0,8}",
        name in "[A-Z_][A-Z0-9_]{0,8}",
        value in "[a-z0-9/]{0,12}",
        default in "[a-z0-9/]{0,12}",
    ) {
        let env: HashMap<String, String> = [(name.clone(), value.clone())].into();
        let lookup = |n: &str| env.get(n).cloned();
        let text = format!("{prefix}${{{name}:-{default}}}");
        prop_assert_eq!(interpolate(&text, &lookup).unwrap(), format!("{prefix}{value}"));
        prop_assert_eq!(interpolate(&text, &no_env).unwrap(), format!("{prefix}{default}"));
    }
}

#[test]
fn unset_variable_without_default_is_an_error() {
    assert!(interpolate("${MISSING_VAR}", &no_env).is_err());
    assert!(interpolate("${UNTERMINATED", &no_env).is_err());
}

#[test]
fn unknown_keys_are_rejected() {
    let err = PipelineConfig::from_toml("[augment]\ndoze = 0.5\n", Path::new("."), &no_env).unwrap_err();
    assert!(
        matches!(err, CliError::Validation(ref m) if m.contains("doze")),
        "{err}"
    );
}

#[test]
fn input_paths_resolve_against_the_config_directory() {
    let config = common::toy_config(Path::new("somewhere"));
    let dir = common::toy_dir();
    assert_eq!(
        config.corpus.markets_file.as_deref(),
        Some(dir.join("markets.csv").as_path())
    );
    assert_eq!(config.corpus.api.fixtures.as_deref(), Some(dir.join("api").as_path()));
    assert_eq!(config.output_root, Path::new("somewhere"));
    config.validate().unwrap();
}

#[test]
fn global_seed_drives_training_and_grid_seeds() {
    let mut config = common::toy_config(Path::new("o"));
    config.ablation.num_seeds = 3;
    config.apply(&Overrides {
        seed: Some(7),
        jobs: Some(3),
        output_root: None,
    });
    assert_eq!(config.train.seed, 7);
    assert_eq!(config.grid_seeds(), vec![7, 8, 9]);
    assert_eq!(config.ablation_config().jobs, 3);
}

#[test]
fn validation_reports_every_problem_at_once() {
    let mut config = common::toy_config(Path::new("o"));
    config.augment.dose = 1.5;
    config.interpret.dose = -0.1;
    config.ablation.doses = vec![2.0];
    let CliError::Validation(message) = config.validate().unwrap_err() else {
        panic!("expected validation error")
    };
    assert!(message.contains("augment.dose"), "{message}");
    assert!(message.contains("interpret.dose"), "{message}");
    assert!(message.contains("2"), "{message}");
    config.validate_sections(&[Section::Corpus, Section::Train]).unwrap();
}

#[test]
fn effective_config_redacts_the_token() {
    let mut config = common::toy_config(Path::new("o"));
    config.corpus.api.bearer_token = Some("secret-token".into());
    let text = config.effective_toml().unwrap();
    assert!(!text.contains("secret-token"));
    let reparsed = PipelineConfig::from_toml(&text, Path::new("/"), &no_env).unwrap();
    assert_eq!(reparsed.augment, config.augment);
    assert_eq!(reparsed.train, config.train);
}
