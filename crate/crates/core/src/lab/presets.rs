use std::fs;
use std::path::Path;

use super::config::ExperimentConfig;
use crate::error::Result;

/// A shipped configuration.
#[derive(Debug, Clone, Copy)]
pub struct Preset {
    pub name: &'static str,
    pub text: &'static str,
}

impl Preset {
    pub fn config(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::from_toml(self.text)
    }

    /// The `description` line of the config.
    pub fn description(&self) -> String {
        self.config().map(|c| c.description).unwrap_or_default()
    }
}

macro_rules! preset {
    ($name:literal) => {
        Preset {
            name: $name,
            text: include_str!(concat!("../../presets/", $name, ".toml")),
        }
    };
}

/// One or more presets per acceptance criterion; the leading `cNN` is the
/// criterion number.
pub const PRESETS: &[Preset] = &[
    preset!("c01-stable-iid"),
    preset!("c02-stable-asclt"),
    preset!("c03a-gm-clt"),
    preset!("c03b-gm-asclt"),
    preset!("c04a-tight-maxima"),
    preset!("c04b-cauchy-maxima"),
    preset!("c05a-kac-half"),
    preset!("c05b-kac-quarter"),
    preset!("c06-inducing-lift"),
    preset!("c07a-lsv-clt"),
    preset!("c07b-lsv-asclt"),
    preset!("c08a-spectral-bernoulli"),
    preset!("c08b-spectral-doubling"),
    preset!("c09a-charfn-bernoulli"),
    preset!("c09b-charfn-doubling"),
    preset!("c10-gordin"),
    preset!("c11a-reverse-md-iid"),
    preset!("c11b-reverse-md-dynamical"),
    preset!("c12-weighted-log-average"),
    preset!("c13-random-index"),
];

pub fn preset(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

/// Presets whose name starts with `cNN` for criterion `n`.
pub fn presets_for_criterion(n: u32) -> Vec<&'static Preset> {
    let prefix = format!("c{n:02}");
    PRESETS
        .iter()
        .filter(|p| p.name.starts_with(&prefix))
        .collect()
}

/// Writes every preset as `<dir>/<name>.toml`.
pub fn write_presets(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for p in PRESETS {
        fs::write(dir.join(format!("{}.toml", p.name)), p.text)?;
    }
    Ok(())
}
