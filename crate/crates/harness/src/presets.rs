//! Scenario presets shipped inside the binary.

use crate::config::ScenarioConfig;
use crate::error::{HarnessError, Result};

pub const PRESETS: [(&str, &str); 7] = [
    ("fig2", include_str!("../presets/fig2.toml")),
    ("fig3", include_str!("../presets/fig3.toml")),
    ("fig4", include_str!("../presets/fig4.toml")),
    ("table4", include_str!("../presets/table4.toml")),
    ("table6", include_str!("../presets/table6.toml")),
    ("table8", include_str!("../presets/table8.toml")),
    ("logistic", include_str!("../presets/logistic.toml")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn load_preset(name: &str) -> Result<ScenarioConfig> {
    let text = preset_text(name).ok_or_else(|| {
        let known: Vec<_> = preset_names().collect();
        HarnessError::validation("preset", format!("unknown preset {name:?}; known: {}", known.join(", ")))
    })?;
    let cfg = ScenarioConfig::from_toml(text)?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses_and_validates() {
        for name in preset_names() {
            load_preset(name).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
}
