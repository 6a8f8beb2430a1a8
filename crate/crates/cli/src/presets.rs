//! Bundled scenarios, one per standard figure setup.

const PRESETS: &[(&str, &str)] = &[
    ("fig1", include_str!("../presets/fig1.json")),
    ("fig2a", include_str!("../presets/fig2a.json")),
    ("fig4", include_str!("../presets/fig4.json")),
    ("fig5", include_str!("../presets/fig5.json")),
    ("fig6a", include_str!("../presets/fig6a.json")),
    ("fig6b", include_str!("../presets/fig6b.json")),
    ("fig6c", include_str!("../presets/fig6c.json")),
    ("fig8", include_str!("../presets/fig8.json")),
    ("fig9", include_str!("../presets/fig9.json")),
];

pub fn get(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Scenario;

    #[test]
    fn every_preset_validates() {
        for name in names() {
            Scenario::from_json(get(name).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
}
