//! Built-in scenarios shipped with the library.

use crate::sim::scenario::Scenario;

const PRESETS: &[(&str, &str)] = &[
    ("shared-sequencer", include_str!("../../presets/shared-sequencer.toml")),
    ("multi-rollup-mesh", include_str!("../../presets/multi-rollup-mesh.toml")),
    ("rogue-rollup", include_str!("../../presets/rogue-rollup.toml")),
    ("honest-watchers", include_str!("../../presets/honest-watchers.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

/// The TOML text of a preset.
pub fn source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn get(name: &str) -> Option<Scenario> {
    source(name).map(|s| Scenario::from_toml(s).expect("built-in presets are valid"))
}
