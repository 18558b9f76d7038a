//! Experiment configuration files.
//!
//! The format is flat `key = value` lines grouped under `[section]` headers,
//! with `#` starting a comment:
//!
//! ```text
//! [experiment]
//! scenario = fig2e
//! num_environments = 100
//!
//! [protocol]
//! ndr = 1
//!
//! [sweep]
//! switching_period = 1, 6, 12, 60, 120
//! ```
//!
//! Every `[sweep]` key names a `[protocol]` or `[leakage]` key and lists the
//! values to try; several sweep keys form a grid, first key slowest. Unknown
//! keys, duplicate keys and out-of-range values are rejected with the key
//! named, and every sweep point is validated before anything runs.

use std::collections::HashSet;
use std::path::PathBuf;

use robin_core::channel::{make_pattern, AntennaPattern, EveScatterers, LobeShape, PatternFamily};
use robin_core::protocol::ProtocolConfig;
use robin_core::secrecy::{ChainKind, MarkovChannelParams};

use crate::error::{Result, SimError};

const SECTIONS: [&str; 5] = ["experiment", "protocol", "pattern", "leakage", "sweep"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioKind {
    /// Full protocol runs over synthetic environments.
    Protocol,
    /// Leakage of the synthetic Markov channel model.
    Leakage,
    /// Leakage of CSI sequences produced by the protocol, or read from a
    /// record file.
    Replay,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatternSettings {
    pub family: String,
    pub num_modes: usize,
    pub directivity: Option<f64>,
    pub ripple: Option<f64>,
    pub phase_offset: Option<f64>,
    pub seed: Option<u64>,
}

impl Default for PatternSettings {
    fn default() -> Self {
        PatternSettings {
            family: "directional".into(),
            num_modes: 360,
            directivity: None,
            ripple: None,
            phase_offset: None,
            seed: None,
        }
    }
}

impl PatternSettings {
    pub fn family(&self) -> Result<PatternFamily> {
        let family = PatternFamily::from_name(&self.family).map_err(|e| SimError::invalid("pattern.family", e))?;
        let overrides = self.directivity.is_some() || self.ripple.is_some() || self.phase_offset.is_some() || self.seed.is_some();
        match family {
            PatternFamily::Omni if overrides => Err(SimError::invalid("pattern.family", "lobe settings need a directional family")),
            PatternFamily::Omni => Ok(family),
            PatternFamily::Directional(base) => Ok(PatternFamily::Directional(LobeShape {
                directivity: self.directivity.unwrap_or(base.directivity),
                ripple: self.ripple.unwrap_or(base.ripple),
                phase_offset: self.phase_offset.unwrap_or(base.phase_offset),
                seed: self.seed.unwrap_or(base.seed),
            })),
        }
    }

    pub fn build(&self) -> Result<AntennaPattern> {
        Ok(make_pattern(&self.family()?, self.num_modes, self.num_modes)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LeakageSettings {
    pub params: MarkovChannelParams,
    pub samples: u64,
}

impl Default for LeakageSettings {
    fn default() -> Self {
        LeakageSettings {
            params: MarkovChannelParams::new(0.0, 0.0),
            samples: 3_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<String>,
}

/// One resolved point of the sweep grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    /// `key=value` pairs joined by `;`, or `base` without a sweep.
    pub label: String,
    pub protocol: ProtocolConfig,
    pub leakage: LeakageSettings,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub description: String,
    pub kind: ScenarioKind,
    pub num_environments: u64,
    pub seed: u64,
    /// CSV file name, relative to the output directory.
    pub output: String,
    pub replay_path: Option<PathBuf>,
    pub protocol: ProtocolConfig,
    pub pattern: PatternSettings,
    pub leakage: LeakageSettings,
    pub sweep: Vec<SweepAxis>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: String::new(),
            description: String::new(),
            kind: ScenarioKind::Protocol,
            num_environments: 100,
            seed: 0,
            output: String::new(),
            replay_path: None,
            protocol: ProtocolConfig {
                subcarriers: 1,
                ..ProtocolConfig::default()
            },
            pattern: PatternSettings::default(),
            leakage: LeakageSettings::default(),
            sweep: Vec::new(),
        }
    }
}

fn number<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| SimError::invalid(key, format!("`{v}`: {e}")))
}

fn positive(key: &str, v: &str) -> Result<usize> {
    let n: usize = number(key, v)?;
    if n == 0 {
        return Err(SimError::invalid(key, "must be at least 1"));
    }
    Ok(n)
}

fn real(key: &str, v: &str) -> Result<f64> {
    let x: f64 = number(key, v)?;
    if !x.is_finite() {
        return Err(SimError::invalid(key, format!("`{v}` is not finite")));
    }
    Ok(x)
}

fn real_in(key: &str, v: &str, lo: f64, hi: f64, hi_inclusive: bool) -> Result<f64> {
    let x = real(key, v)?;
    let ok = x >= lo && if hi_inclusive { x <= hi } else { x < hi };
    if !ok {
        let close = if hi_inclusive { ']' } else { ')' };
        return Err(SimError::invalid(key, format!("{x} outside [{lo}, {hi}{close}")));
    }
    Ok(x)
}

/// Decibels: finite or `inf` for a noiseless link.
fn decibels(key: &str, v: &str) -> Result<f64> {
    if v == "inf" {
        return Ok(f64::INFINITY);
    }
    real(key, v)
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(SimError::invalid(key, format!("`{v}` is not true or false"))),
    }
}

/// Applies a `[protocol]` key. Returns `false` for an unknown key.
fn set_protocol(p: &mut ProtocolConfig, key: &str, v: &str, name: &str) -> Result<bool> {
    match key {
        "num_training_modes" => p.num_training_modes = positive(name, v)?,
        "switching_period" => p.switching_period = positive(name, v)?,
        "frames_per_coherence" => p.frames_per_coherence = positive(name, v)?,
        "symbols_per_frame" => p.symbols_per_frame = positive(name, v)?,
        "subcarriers" => p.subcarriers = positive(name, v)?,
        "known_symbols_per_frame" => p.known_symbols_per_frame = number(name, v)?,
        "ndr" => p.ndr = real_in(name, v, 0.0, f64::MAX, true)?,
        "snr_db" => p.snr_db = decibels(name, v)?,
        "feedback_snr_db" => p.feedback_snr_db = if v == "none" { None } else { Some(decibels(name, v)?) },
        "n_a" => p.n_a = positive(name, v)?,
        "n_b" => p.n_b = positive(name, v)?,
        "n_e" => p.n_e = positive(name, v)?,
        "num_paths" => p.num_paths = positive(name, v)?,
        "eve_scatterers" => {
            p.eve_scatterers = match v {
                "shared" => EveScatterers::Shared,
                "independent" => EveScatterers::Independent,
                _ => return Err(SimError::invalid(name, format!("`{v}` is not shared or independent"))),
            }
        }
        "step_size" => {
            let mu = real(name, v)?;
            if !(mu > 0.0 && mu < 2.0) {
                return Err(SimError::invalid(name, format!("{mu} outside (0, 2)")));
            }
            p.attack.step_size = mu;
        }
        "passes" => p.attack.passes = positive(name, v)?,
        "trace_positions" => p.attack.trace_positions = if v == "all" { None } else { Some(positive(name, v)?) },
        "max_iter" => p.solver.max_iter = positive(name, v)?,
        _ => return Ok(false),
    }
    Ok(true)
}

fn set_leakage(l: &mut LeakageSettings, key: &str, v: &str, name: &str) -> Result<bool> {
    match key {
        "samples" => l.samples = positive(name, v)? as u64,
        "cross_correlation" => l.params.cross_correlation = real_in(name, v, 0.0, 1.0, true)?,
        "temporal_correlation" => l.params.temporal_correlation = real_in(name, v, 0.0, 1.0, false)?,
        "truncation" => l.params.truncation = real_in(name, v, f64::MIN_POSITIVE, f64::MAX, true)?,
        "noise_variance" => l.params.noise_variance = real_in(name, v, 0.0, f64::MAX, true)?,
        "real_valued" => l.params.real_valued = boolean(name, v)?,
        "chain" => {
            l.params.kind = match v {
                "markov" => ChainKind::Markov,
                "quantized_markov" => ChainKind::QuantizedMarkov,
                "second_order" => ChainKind::SecondOrder,
                _ => return Err(SimError::invalid(name, format!("`{v}` is not markov, quantized_markov or second_order"))),
            }
        }
        _ => return Ok(false),
    }
    Ok(true)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut section: Option<&str> = None;
        let mut seen = HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| SimError::Syntax {
                        line,
                        message: format!("unterminated section header `{content}`"),
                    })?
                    .trim();
                section = Some(SECTIONS.iter().copied().find(|s| *s == name).ok_or_else(|| SimError::Syntax {
                    line,
                    message: format!("unknown section `[{name}]`"),
                })?);
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| SimError::Syntax {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let sec = section.ok_or_else(|| SimError::Syntax {
                line,
                message: format!("`{key}` appears before any section header"),
            })?;
            let full = format!("{sec}.{key}");
            if !seen.insert(full.clone()) {
                return Err(SimError::Syntax {
                    line,
                    message: format!("duplicate key `{full}`"),
                });
            }
            if !cfg.set(sec, key, value, &full)? {
                return Err(SimError::UnknownKey { key: full, line });
            }
        }
        cfg.finish()?;
        Ok(cfg)
    }

    fn set(&mut self, section: &str, key: &str, v: &str, name: &str) -> Result<bool> {
        match section {
            "experiment" => match key {
                "scenario" => self.scenario = v.to_string(),
                "description" => self.description = v.to_string(),
                "kind" => {
                    self.kind = match v {
                        "protocol" => ScenarioKind::Protocol,
                        "leakage" => ScenarioKind::Leakage,
                        "replay" => ScenarioKind::Replay,
                        _ => return Err(SimError::invalid(name, format!("`{v}` is not protocol, leakage or replay"))),
                    }
                }
                "num_environments" => self.num_environments = positive(name, v)? as u64,
                "seed" => self.seed = number(name, v)?,
                "output" => self.output = v.to_string(),
                "replay_path" => self.replay_path = Some(PathBuf::from(v)),
                _ => return Ok(false),
            },
            "protocol" => return set_protocol(&mut self.protocol, key, v, name),
            "leakage" => return set_leakage(&mut self.leakage, key, v, name),
            "pattern" => match key {
                "family" => self.pattern.family = v.to_string(),
                "num_modes" => self.pattern.num_modes = positive(name, v)?,
                "directivity" => self.pattern.directivity = Some(real_in(name, v, f64::MIN_POSITIVE, f64::MAX, true)?),
                "ripple" => self.pattern.ripple = Some(real_in(name, v, 0.0, 1.0, false)?),
                "phase_offset" => self.pattern.phase_offset = Some(real(name, v)?),
                "seed" => self.pattern.seed = Some(number(name, v)?),
                _ => return Ok(false),
            },
            "sweep" => {
                let values: Vec<String> = v.split(',').map(|s| s.trim().to_string()).collect();
                if values.iter().any(String::is_empty) {
                    return Err(SimError::invalid(name, "empty value in list"));
                }
                // the values themselves are checked in `finish`
                if !is_protocol_key(key) && !is_leakage_key(key) {
                    return Ok(false);
                }
                self.sweep.push(SweepAxis {
                    key: key.to_string(),
                    values,
                });
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn finish(&mut self) -> Result<()> {
        if self.scenario.is_empty() {
            return Err(SimError::invalid("experiment.scenario", "missing"));
        }
        if self.output.is_empty() {
            self.output = format!("{}.csv", self.scenario);
        }
        if self.output.contains(['/', '\\']) {
            return Err(SimError::invalid("experiment.output", "must be a file name, not a path"));
        }
        self.pattern.family()?;
        for axis in &self.sweep {
            let ok = match self.kind {
                ScenarioKind::Leakage => is_leakage_key(&axis.key),
                ScenarioKind::Protocol | ScenarioKind::Replay => is_protocol_key(&axis.key),
            };
            if !ok {
                return Err(SimError::invalid(format!("sweep.{}", axis.key), format!("cannot be swept in a {:?} scenario", self.kind)));
            }
        }
        if self.replay_path.is_some() && (self.kind != ScenarioKind::Replay || !self.sweep.is_empty()) {
            return Err(SimError::invalid("experiment.replay_path", "only valid for a replay scenario without a sweep"));
        }
        // resolves and checks every point
        self.points()?;
        Ok(())
    }

    /// The sweep grid, each point fully validated.
    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        let mut grid: Vec<Vec<(usize, usize)>> = vec![Vec::new()];
        for (a, axis) in self.sweep.iter().enumerate() {
            grid = grid
                .into_iter()
                .flat_map(|prefix| {
                    (0..axis.values.len()).map(move |v| {
                        let mut p = prefix.clone();
                        p.push((a, v));
                        p
                    })
                })
                .collect();
        }
        grid.into_iter()
            .enumerate()
            .map(|(index, choice)| {
                let mut protocol = ProtocolConfig {
                    seed: self.seed,
                    ..self.protocol.clone()
                };
                let mut leakage = self.leakage.clone();
                let mut label = Vec::new();
                for (a, v) in choice {
                    let axis = &self.sweep[a];
                    let value = &axis.values[v];
                    let name = format!("sweep.{}", axis.key);
                    if !set_protocol(&mut protocol, &axis.key, value, &name)? {
                        set_leakage(&mut leakage, &axis.key, value, &name)?;
                    }
                    label.push(format!("{}={value}", axis.key));
                }
                let label = if label.is_empty() { "base".to_string() } else { label.join(";") };
                let context = if self.sweep.is_empty() { "protocol".to_string() } else { format!("protocol (point {label})") };
                match self.kind {
                    ScenarioKind::Protocol | ScenarioKind::Replay => protocol
                        .validate(self.pattern.num_modes)
                        .map_err(|e| SimError::invalid(context, e))?,
                    ScenarioKind::Leakage => leakage
                        .params
                        .validate()
                        .map_err(|e| SimError::invalid(format!("leakage (point {label})"), e))?,
                }
                Ok(SweepPoint {
                    index,
                    label,
                    protocol,
                    leakage,
                })
            })
            .collect()
    }
}

const PROTOCOL_KEYS: [&str; 18] = [
    "num_training_modes",
    "switching_period",
    "frames_per_coherence",
    "symbols_per_frame",
    "subcarriers",
    "known_symbols_per_frame",
    "ndr",
    "snr_db",
    "feedback_snr_db",
    "n_a",
    "n_b",
    "n_e",
    "num_paths",
    "eve_scatterers",
    "step_size",
    "passes",
    "trace_positions",
    "max_iter",
];

const LEAKAGE_KEYS: [&str; 7] = ["samples", "cross_correlation", "temporal_correlation", "truncation", "noise_variance", "real_valued", "chain"];

fn is_protocol_key(key: &str) -> bool {
    PROTOCOL_KEYS.contains(&key)
}

fn is_leakage_key(key: &str) -> bool {
    LEAKAGE_KEYS.contains(&key)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_order_is_first_key_slowest() {
        let cfg = ExperimentConfig::parse("[experiment]\nscenario = x\n[sweep]\nndr = 1, 2\nsnr_db = 15, 35\n").unwrap();
        let labels: Vec<String> = cfg.points().unwrap().into_iter().map(|p| p.label).collect();
        assert_eq!(labels, ["ndr=1;snr_db=15", "ndr=1;snr_db=35", "ndr=2;snr_db=15", "ndr=2;snr_db=35"]);
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg = ExperimentConfig::parse("# header\n\n[experiment]   # trailing\nscenario = y # name\n").unwrap();
        assert_eq!(cfg.scenario, "y");
        assert_eq!(cfg.output, "y.csv");
    }

    #[test]
    fn infinite_snr() {
        let cfg = ExperimentConfig::parse("[experiment]\nscenario = z\n[protocol]\nsnr_db = inf\nfeedback_snr_db = none\n").unwrap();
        assert_eq!(cfg.protocol.snr_db, f64::INFINITY);
        assert_eq!(cfg.protocol.feedback_snr_db, None);
    }
}
