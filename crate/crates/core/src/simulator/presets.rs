//! Named simulator presets shipped as JSON under `presets/`.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{SimError, SyntheticModelConfig};
use crate::trace::Workload;

/// A fixed token count or an inclusive range drawn uniformly per trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TokenCount {
    Fixed(u64),
    Range { min: u64, max: u64 },
}

impl TokenCount {
    pub fn draw(&self, rng: &mut impl Rng) -> u64 {
        match *self {
            TokenCount::Fixed(n) => n,
            TokenCount::Range { min, max } => rng.random_range(min..=max.max(min)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub model_name: String,
    pub workload: Workload,
    pub input_tokens: TokenCount,
    pub output_tokens: TokenCount,
    pub max_new_tokens: u64,
    pub model: SyntheticModelConfig,
}

const BUILTIN: &[(&str, &str)] = &[
    (
        "0-shot-like",
        include_str!("../../presets/0-shot-like.json"),
    ),
    (
        "paper-CU-like",
        include_str!("../../presets/paper-CU-like.json"),
    ),
    (
        "codellama-CoT-like",
        include_str!("../../presets/codellama-CoT-like.json"),
    ),
    (
        "codellama-CU-long-like",
        include_str!("../../presets/codellama-CU-long-like.json"),
    ),
    (
        "phi4-CoT-like",
        include_str!("../../presets/phi4-CoT-like.json"),
    ),
    (
        "phi4-CU-long-like",
        include_str!("../../presets/phi4-CU-long-like.json"),
    ),
];

fn parse(label: &str, json: &str) -> Result<Preset, SimError> {
    let preset: Preset = serde_json::from_str(json).map_err(|e| SimError::PresetFile {
        path: label.to_string(),
        reason: e.to_string(),
    })?;
    preset.model.validate()?;
    Ok(preset)
}

pub fn builtin_presets() -> Vec<Preset> {
    BUILTIN
        .iter()
        .map(|(name, json)| parse(name, json).expect("bundled presets are valid"))
        .collect()
}

pub fn builtin_preset(name: &str) -> Result<Preset, SimError> {
    BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(n, json)| parse(n, json))
        .unwrap_or_else(|| Err(SimError::UnknownPreset(name.to_string())))
}

impl Preset {
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let json = std::fs::read_to_string(path).map_err(|e| SimError::PresetFile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        parse(&path.display().to_string(), &json)
    }

    /// A bundled preset name, or else a path to a preset file.
    pub fn resolve(name_or_path: &str) -> Result<Self, SimError> {
        match builtin_preset(name_or_path) {
            Err(SimError::UnknownPreset(_)) => {
                let path = Path::new(name_or_path);
                if path.exists() {
                    Self::load(path)
                } else {
                    Err(SimError::UnknownPreset(name_or_path.to_string()))
                }
            }
            other => other,
        }
    }
}
