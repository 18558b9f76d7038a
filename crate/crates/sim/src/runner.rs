//! Batch execution of a configured experiment.
//!
//! Sweep points run one after another; the environments (or leakage shards)
//! of a point run on a rayon pool. Results are gathered by index before any
//! floating-point reduction, so the worker count never changes the output.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use robin_core::aod::select_training_modes;
use robin_core::channel::{channel_matrix, synthesize_subcarriers, AntennaPattern, Link};
use robin_core::protocol::{aggregate, environment_seed, mode_schedule, run_environment, training_phase, ExperimentMetrics, ProtocolConfig};
use robin_core::rng::{self, label};
use robin_core::secrecy::{block_count, leakage_counts, replay_counts, CmiEstimate, ChainState, JointCounts};
use robin_core::C64;

use crate::config::{ExperimentConfig, ScenarioKind, SweepPoint};
use crate::error::{Result, SimError};
use crate::records;
use crate::report::{MetricsRecord, Scheme};

/// Leakage runs split their generator blocks into this many shards. Fixed,
/// so the split does not follow the worker count (it would not matter
/// anyway: merged counts are exact).
const LEAKAGE_SHARDS: u64 = 64;

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; 0 lets rayon decide.
    pub workers: usize,
}

#[derive(Clone, Debug)]
pub struct PointReport {
    pub index: usize,
    pub label: String,
    pub wall_time: Duration,
    /// One-line human summary.
    pub summary: String,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub rows: Vec<MetricsRecord>,
    pub points: Vec<PointReport>,
    pub wall_time: Duration,
}

impl RunOutcome {
    pub fn failed_points(&self) -> usize {
        self.rows.iter().filter(|r| r.is_error()).count()
    }
}

/// Runs every sweep point of `cfg`. `on_point` sees each point's report as
/// soon as it finishes. A point whose computation fails becomes an error row
/// and the run continues.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions, mut on_point: impl FnMut(&PointReport)) -> Result<RunOutcome> {
    let started = Instant::now();
    let points = cfg.points()?;
    let pattern = cfg.pattern.build()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| SimError::Pool(e.to_string()))?;
    let replay = match &cfg.replay_path {
        Some(path) => Some(records::sequence_from_matrix(&records::load_matrix(path)?)?),
        None => None,
    };

    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for point in &points {
        let t0 = Instant::now();
        let base = MetricsRecord {
            scenario: cfg.scenario.clone(),
            seed: cfg.seed,
            point: point.index,
            parameter: point.label.clone(),
            ..MetricsRecord::default()
        };
        let outcome = pool.install(|| match cfg.kind {
            ScenarioKind::Protocol => protocol_point(cfg, point, &pattern, &base),
            ScenarioKind::Leakage => leakage_point(cfg, point, &base),
            ScenarioKind::Replay => replay_point(cfg, point, &pattern, replay.as_deref(), &base),
        });
        let (point_rows, summary) = match outcome {
            Ok(v) => v,
            Err(e) => {
                let msg = e.to_string();
                (
                    vec![MetricsRecord {
                        error: Some(msg.clone()),
                        ..base.clone()
                    }],
                    format!("error: {msg}"),
                )
            }
        };
        let wall_time = t0.elapsed();
        let report = PointReport {
            index: point.index,
            label: point.label.clone(),
            wall_time,
            summary: format!("{} [{}] {summary} ({:.1} s)", cfg.scenario, point.label, wall_time.as_secs_f64()),
        };
        on_point(&report);
        reports.push(report);
        rows.extend(point_rows);
    }
    Ok(RunOutcome {
        rows,
        points: reports,
        wall_time: started.elapsed(),
    })
}

/// Checks every row against the schema; the first violation is returned.
pub fn check_invariants(rows: &[MetricsRecord]) -> Result<()> {
    rows.iter().try_for_each(MetricsRecord::validate)
}

fn protocol_point(cfg: &ExperimentConfig, point: &SweepPoint, pattern: &AntennaPattern, base: &MetricsRecord) -> Result<(Vec<MetricsRecord>, String)> {
    let m = run_protocol_point(&point.protocol, pattern, cfg.num_environments)?;
    let summary = format!(
        "bob {:.3e} eve {:.3} (sd {:.3}) baseline bob {:.3e} eve {:.3} improvement {:.3}",
        m.bob_ser_mean, m.eve_ser_mean, m.eve_ser_std, m.baseline_bob_ser_mean, m.baseline_eve_ser_mean, m.security_improvement
    );
    let envs = Some(m.environments as u64);
    let mut rows = vec![
        MetricsRecord {
            scheme: Some(Scheme::Robin),
            bob_ser: Some(m.bob_ser_mean),
            eve_ser: Some(m.eve_ser_mean),
            eve_ser_std: Some(m.eve_ser_std),
            security_improvement: Some(m.security_improvement),
            prediction_error: Some(m.prediction_error_mean),
            environments: envs,
            flagged: Some(m.flagged_frames as u64),
            ..base.clone()
        },
        MetricsRecord {
            scheme: Some(Scheme::Baseline),
            bob_ser: Some(m.baseline_bob_ser_mean),
            eve_ser: Some(m.baseline_eve_ser_mean),
            environments: envs,
            ..base.clone()
        },
    ];
    for (scheme, trace) in [(Scheme::Robin, &m.eve_trace), (Scheme::Baseline, &m.baseline_eve_trace)] {
        rows.extend(trace.iter().enumerate().map(|(k, &v)| MetricsRecord {
            scheme: Some(scheme),
            iteration: Some(k + 1),
            eve_ser: Some(v),
            ..base.clone()
        }));
    }
    Ok((rows, summary))
}

/// [`run_environment`] over `0..num_environments` on the current pool,
/// then [`aggregate`].
pub fn run_protocol_point(cfg: &ProtocolConfig, pattern: &AntennaPattern, num_environments: u64) -> Result<ExperimentMetrics> {
    let runs = (0..num_environments)
        .into_par_iter()
        .map(|i| run_environment(cfg, pattern, i))
        .collect::<robin_core::Result<Vec<_>>>()?;
    Ok(aggregate(runs)?)
}

fn merge_all(parts: Vec<JointCounts>) -> Result<JointCounts> {
    let mut it = parts.into_iter();
    let mut total = it.next().ok_or_else(|| SimError::Invariant("no samples to count".into()))?;
    for c in it {
        total.merge(&c)?;
    }
    Ok(total)
}

fn leakage_row(base: &MetricsRecord, e: &CmiEstimate, environments: Option<u64>) -> (Vec<MetricsRecord>, String) {
    let summary = format!(
        "leakage {:.4} bits from {} samples (coverage {:.2}{})",
        e.bits,
        e.samples,
        e.coverage_ratio,
        if e.undersampled() { ", undersampled" } else { "" }
    );
    let row = MetricsRecord {
        scheme: Some(Scheme::Leakage),
        leakage_bits: Some(e.bits),
        samples: Some(e.samples),
        coverage_ratio: Some(e.coverage_ratio),
        environments,
        ..base.clone()
    };
    (vec![row], summary)
}

fn leakage_point(cfg: &ExperimentConfig, point: &SweepPoint, base: &MetricsRecord) -> Result<(Vec<MetricsRecord>, String)> {
    let params = point.leakage.params;
    let n = point.leakage.samples;
    let blocks = block_count(n);
    let shards = LEAKAGE_SHARDS.min(blocks);
    let parts = (0..shards)
        .into_par_iter()
        .map(|s| leakage_counts(&params, n, cfg.seed, (s * blocks / shards)..((s + 1) * blocks / shards)))
        .collect::<robin_core::Result<Vec<_>>>()?;
    Ok(leakage_row(base, &merge_all(parts)?.estimate(), None))
}

fn replay_point(
    cfg: &ExperimentConfig,
    point: &SweepPoint,
    pattern: &AntennaPattern,
    replay: Option<&[ChainState]>,
    base: &MetricsRecord,
) -> Result<(Vec<MetricsRecord>, String)> {
    if let Some(seq) = replay {
        let counts = replay_counts(seq, cfg.seed)?;
        return Ok(leakage_row(base, &counts.estimate(), None));
    }
    let parts = (0..cfg.num_environments)
        .into_par_iter()
        .map(|i| -> robin_core::Result<Vec<JointCounts>> {
            let seed = environment_seed(point.protocol.seed, i);
            replay_sequences(&point.protocol, pattern, i)?
                .iter()
                .enumerate()
                .map(|(k, seq)| replay_counts(seq, rng::derive_seed(seed, &[k as u64])))
                .collect()
        })
        .collect::<robin_core::Result<Vec<_>>>()?;
    let counts = merge_all(parts.into_iter().flatten().collect())?;
    Ok(leakage_row(base, &counts.estimate(), Some(cfg.num_environments)))
}

fn normalized(values: impl Iterator<Item = C64> + Clone) -> Vec<C64> {
    let n = values.clone().count().max(1) as f64;
    let power = values.clone().map(|z| z.norm_sqr()).sum::<f64>() / n;
    // unit variance per real and imaginary part, the scale of the chain model
    let g = if power > 0.0 { (2.0 / power).sqrt() } else { 1.0 };
    values.map(|z| z * g).collect()
}

/// Per-subcarrier CSI sequences of environment `index` as ROBin uses them:
/// Alice's predicted `h_AB` and Eve's true `h_AE` (first antenna pair) in
/// the mode of every frame, each link scaled to unit variance per part.
/// The environment, training set and schedule are the ones
/// [`run_environment`] draws for the same index.
pub fn replay_sequences(cfg: &ProtocolConfig, pattern: &AntennaPattern, index: u64) -> robin_core::Result<Vec<Vec<ChainState>>> {
    cfg.validate(pattern.num_modes())?;
    let seed = environment_seed(cfg.seed, index);
    let envs = synthesize_subcarriers(seed, &cfg.environment_spec(pattern), cfg.subcarriers)?;
    let training = select_training_modes(seed, cfg.num_training_modes, pattern.num_modes())?;
    let schedule = mode_schedule(cfg, pattern.num_modes(), &training, &mut rng::stream(seed, &[label::TRAINING_MODES, 1]))?;
    envs.iter()
        .enumerate()
        .map(|(k, env)| {
            let est = training_phase(env, pattern, &training, cfg, &mut rng::stream(seed, &[label::FEEDBACK_NOISE, k as u64]))?;
            let mut ab = Vec::with_capacity(schedule.len());
            let mut ae = Vec::with_capacity(schedule.len());
            for &u in &schedule {
                ab.push(est.predict(pattern, u)?[(0, 0)]);
                ae.push(channel_matrix(env, pattern, u, Link::AliceEve)?.matrix[(0, 0)]);
            }
            let ab = normalized(ab.into_iter());
            let ae = normalized(ae.into_iter());
            Ok(ab.into_iter().zip(ae).collect())
        })
        .collect()
}
