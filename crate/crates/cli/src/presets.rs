//! Scenario files shipped with the binary.

use crate::error::{CliError, Result};
use crate::scenario::ScenarioFile;

macro_rules! presets {
    ($($name:literal),* $(,)?) => {
        pub const PRESETS: &[(&str, &str)] = &[
            $(($name, include_str!(concat!("../presets/", $name, ".toml")))),*
        ];
    };
}

presets!(
    "scenario-a-proportional",
    "scenario-a-contested-garment",
    "scenario-a-canonical-3",
    "scenario-a-myopic",
    "free-market-a",
    "scenario-b-proportional",
    "scenario-b-contested-garment",
    "free-market-b",
    "cosine-supply-b",
    "step-supply-b",
    "logistic-supply-b",
    "bullwhip-supply-b",
    "hubbert-supply-b",
    "dirichlet-8",
    "negative-control-markup",
);

pub fn preset_text(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
        .ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            CliError::Parse(format!(
                "unknown preset `{name}`; available: {}",
                names.join(", ")
            ))
        })
}

pub fn preset(name: &str) -> Result<ScenarioFile> {
    ScenarioFile::parse(preset_text(name)?)
        .map_err(|e| CliError::Parse(format!("preset {name}: {e}")))
}
