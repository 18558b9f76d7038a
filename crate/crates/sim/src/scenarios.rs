//! Built-in scenarios, one configuration file each.

use crate::config::ExperimentConfig;
use crate::error::{Result, SimError};

/// `(name, config text)` in listing order.
pub const BUILTIN: [(&str, &str); 8] = [
    ("fig2a", include_str!("../scenarios/fig2a.conf")),
    ("fig2b", include_str!("../scenarios/fig2b.conf")),
    ("fig2c", include_str!("../scenarios/fig2c.conf")),
    ("fig2d", include_str!("../scenarios/fig2d.conf")),
    ("fig2e", include_str!("../scenarios/fig2e.conf")),
    ("fig3", include_str!("../scenarios/fig3.conf")),
    ("table1_trend", include_str!("../scenarios/table1_trend.conf")),
    ("smoke", include_str!("../scenarios/smoke.conf")),
];

pub fn builtin_text(name: &str) -> Option<&'static str> {
    BUILTIN.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

pub fn builtin(name: &str) -> Result<ExperimentConfig> {
    let text = builtin_text(name).ok_or_else(|| SimError::UnknownScenario(name.to_string()))?;
    ExperimentConfig::parse(text)
}

/// One `name  description` line per built-in scenario.
pub fn listing() -> String {
    let mut out = String::new();
    for (name, _) in BUILTIN {
        let description = builtin(name).map(|c| c.description).unwrap_or_default();
        out.push_str(&format!("{name:<14}{description}\n"));
    }
    out
}
