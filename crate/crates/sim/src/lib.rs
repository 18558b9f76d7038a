//! Experiment harness for `robin-core`: configuration files, batch runs on
//! a worker pool, CSV results and complex record files.
//!
//! ```no_run
//! use robin_sim::{report, runner, scenarios};
//!
//! let cfg = scenarios::builtin("smoke").unwrap();
//! let out = runner::run(&cfg, &runner::RunOptions::default(), |p| println!("{}", p.summary)).unwrap();
//! report::write_csv(std::io::stdout(), "example", &out.rows).unwrap();
//! ```

pub mod config;
mod error;
pub mod records;
pub mod report;
pub mod runner;
pub mod scenarios;

pub use crate::config::ExperimentConfig;
pub use crate::error::{Result, SimError};

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

/// Reads `arg` as a built-in scenario name, or else as a config file path.
pub fn load_config(arg: &str) -> Result<ExperimentConfig> {
    if let Some(text) = scenarios::builtin_text(arg) {
        return ExperimentConfig::parse(text);
    }
    let path = Path::new(arg);
    if !path.exists() {
        return Err(SimError::UnknownScenario(arg.to_string()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
    ExperimentConfig::parse(&text)
}

/// Writes the results of `outcome` to `<out_dir>/<cfg.output>` and returns
/// the path.
pub fn write_results(cfg: &ExperimentConfig, outcome: &runner::RunOutcome, out_dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir).map_err(|e| SimError::io(out_dir, e))?;
    let path = out_dir.join(&cfg.output);
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let comment = format!(
        "scenario={} generated_unix={stamp} wall_time_s={:.3}",
        cfg.scenario,
        outcome.wall_time.as_secs_f64()
    );
    let mut buf = Vec::new();
    report::write_csv(&mut buf, &comment, &outcome.rows)?;
    std::fs::write(&path, buf).map_err(|e| SimError::io(&path, e))?;
    Ok(path)
}
