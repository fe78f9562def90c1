use std::path::Path;

use wdro::harness::{ExperimentConfig, OutputPaths};

fn load(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::load(&path).unwrap()
}

#[test]
fn shipped_synthetic_config_is_the_default() {
    let mut config = load("synthetic.toml");
    assert!(config.output.csv.is_some());
    config.output = OutputPaths::default();
    assert_eq!(config, ExperimentConfig::default());
}

#[test]
fn quick_config_parses() {
    let config = load("quick.toml");
    assert_eq!(config.trials, 3);
    assert_eq!(config.sources, ExperimentConfig::default().sources);
}
