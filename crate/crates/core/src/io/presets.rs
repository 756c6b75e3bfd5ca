//! Scenario files shipped with the crate.
//!
//! The CLI accepts a preset name wherever a config path is expected, so
//! `nanotherm run spherical_lumped` works without a checkout of `presets/`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::sim::ScenarioConfig;

/// Name and file contents of every bundled preset.
pub const PRESETS: [(&str, &str); 4] = [
    ("spherical_lumped", include_str!("../../../../presets/spherical_lumped.cfg")),
    ("discrete_network", include_str!("../../../../presets/discrete_network.cfg")),
    ("mouse_homogeneous", include_str!("../../../../presets/mouse_homogeneous.cfg")),
    ("mouse_clustered", include_str!("../../../../presets/mouse_clustered.cfg")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Parse a bundled preset.
pub fn load(name: &str) -> Result<ScenarioConfig> {
    let text = text(name).ok_or_else(|| {
        Error::config(format!(
            "unknown preset '{name}' (available: {})",
            names().collect::<Vec<_>>().join(", ")
        ))
    })?;
    ScenarioConfig::parse(text, Path::new(&format!("{name}.cfg")))
}

/// Load `arg` as a file if it exists, otherwise as a preset name.
pub fn resolve(arg: &str) -> Result<ScenarioConfig> {
    let path = Path::new(arg);
    if path.exists() || text(arg).is_none() {
        ScenarioConfig::load(path)
    } else {
        load(arg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses() {
        for name in names() {
            let cfg = load(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(cfg.name, name);
        }
    }

    #[test]
    fn unknown_preset_is_a_config_error() {
        let err = load("no_such_preset").unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn missing_file_that_is_not_a_preset_fails() {
        assert!(resolve("/nonexistent/dir/x.cfg").is_err());
    }
}
