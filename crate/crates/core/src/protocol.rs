//! The two-phase ROBin protocol.
//!
//! In the training phase Alice sounds Bob's channel in a random set `S_1` of
//! antenna modes and recovers each pair's AoD distribution. In the secure
//! transmission phase she switches to a fresh mode from `S \ S_1` every `T`
//! frames, predicts Bob's CSI in that mode and precodes with orthogonal
//! blinding on the prediction. Eve runs the known-plaintext attack on what
//! she receives. The same environment is also run through plain orthogonal
//! blinding (one fixed mode, measured CSI) as the baseline.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::aod::{self, BpOptions, SensingProblem, SparseSolution};
use crate::attacker::{train_and_attack, AttackConfig};
use crate::blinding::{decide, encode, BlindingFilter, SymbolStream, SYMBOL_POWER};
use crate::channel::{
    add_noise, channel_matrix, csi_from_aod, noise_variance, synthesize_subcarriers, AntennaPattern,
    EnvironmentSpec, EveScatterers, Link, MultipathEnvironment,
};
use crate::error::{config, contract, Result};
use crate::linalg::CMatrix;
use crate::rng::{self, label};

/// SER of a uniformly random guess on 4-QAM.
pub const RANDOM_GUESS_SER: f64 = 0.75;

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolConfig {
    pub num_training_modes: usize,
    /// Frames per antenna mode, `T`.
    pub switching_period: usize,
    pub frames_per_coherence: usize,
    pub symbols_per_frame: usize,
    pub subcarriers: usize,
    pub ndr: f64,
    pub snr_db: f64,
    /// Leading symbols of every frame that Eve knows.
    pub known_symbols_per_frame: usize,
    /// SNR of the CSI feedback used in training; `None` is noiseless.
    pub feedback_snr_db: Option<f64>,
    pub n_a: usize,
    pub n_b: usize,
    pub n_e: usize,
    pub num_paths: usize,
    pub eve_scatterers: EveScatterers,
    pub attack: AttackConfig,
    pub solver: BpOptions,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            num_training_modes: 20,
            switching_period: 1,
            frames_per_coherence: 120,
            symbols_per_frame: 192,
            subcarriers: 48,
            ndr: 1.0,
            snr_db: 25.0,
            known_symbols_per_frame: 2,
            feedback_snr_db: None,
            n_a: 2,
            n_b: 1,
            n_e: 2,
            num_paths: 5,
            eve_scatterers: EveScatterers::Shared,
            attack: AttackConfig {
                trace_positions: Some(1024),
                ..AttackConfig::default()
            },
            solver: BpOptions::default(),
            seed: 0,
        }
    }
}

impl ProtocolConfig {
    /// Number of distinct transmission modes one coherence period uses.
    pub fn transmission_blocks(&self) -> usize {
        self.frames_per_coherence.div_ceil(self.switching_period.max(1))
    }

    pub fn validate(&self, total_modes: usize) -> Result<()> {
        if self.frames_per_coherence == 0 || self.symbols_per_frame == 0 || self.subcarriers == 0 {
            return Err(config("frames, symbols per frame and subcarriers must be at least 1"));
        }
        if !(1..=self.frames_per_coherence).contains(&self.switching_period) {
            return Err(config(format!(
                "switching period {} outside 1..={}",
                self.switching_period, self.frames_per_coherence
            )));
        }
        if self.num_training_modes == 0 {
            return Err(config("at least one training mode is needed"));
        }
        if self.num_training_modes + self.transmission_blocks() > total_modes {
            return Err(config(format!(
                "{} training modes plus {} transmission modes exceed the {total_modes} available",
                self.num_training_modes,
                self.transmission_blocks()
            )));
        }
        if self.known_symbols_per_frame > self.symbols_per_frame {
            return Err(config("more known symbols than symbols per frame"));
        }
        if !(self.ndr.is_finite() && self.ndr >= 0.0) {
            return Err(config(format!("NDR must be finite and >= 0, got {}", self.ndr)));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(config("SNR must be finite or +inf"));
        }
        if matches!(self.feedback_snr_db, Some(s) if s.is_nan() || s == f64::NEG_INFINITY) {
            return Err(config("feedback SNR must be finite or +inf"));
        }
        if self.n_b == 0 || self.n_a <= self.n_b || self.n_e == 0 {
            return Err(config(format!(
                "need n_a > n_b >= 1 and n_e >= 1, got n_a={} n_b={} n_e={}",
                self.n_a, self.n_b, self.n_e
            )));
        }
        if !(self.attack.step_size > 0.0 && self.attack.step_size < 2.0) || self.attack.passes == 0 {
            return Err(config("attack step size must lie in (0, 2) with at least one pass"));
        }
        Ok(())
    }

    pub fn environment_spec(&self, pattern: &AntennaPattern) -> EnvironmentSpec {
        EnvironmentSpec {
            n_a: self.n_a,
            n_b: self.n_b,
            n_e: self.n_e,
            num_paths: self.num_paths,
            num_angles: pattern.num_angles(),
            eve_scatterers: self.eve_scatterers,
        }
    }
}

/// Seed of environment `index` under the experiment seed.
pub fn environment_seed(seed: u64, index: u64) -> u64 {
    rng::derive_seed(seed, &[label::ENVIRONMENT, index])
}

/// One AoD estimate per Alice->Bob pair, row-major by Bob antenna.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingEstimates {
    pub n_b: usize,
    pub n_a: usize,
    pub training_modes: Vec<usize>,
    pub solutions: Vec<SparseSolution>,
}

impl TrainingEstimates {
    pub fn solution(&self, i: usize, j: usize) -> &SparseSolution {
        &self.solutions[i * self.n_a + j]
    }

    /// `H_AB` predicted for `mode`.
    pub fn predict(&self, pattern: &AntennaPattern, mode: usize) -> Result<CMatrix> {
        let mut h = CMatrix::zeros(self.n_b, self.n_a);
        for i in 0..self.n_b {
            for j in 0..self.n_a {
                h[(i, j)] = aod::predict_csi(self.solution(i, j), pattern, mode)?;
            }
        }
        Ok(h)
    }

    pub fn all_converged(&self) -> bool {
        self.solutions.iter().all(|s| s.converged)
    }
}

/// Sounds every Alice->Bob pair in `training_modes` and solves for its AoD
/// distribution. Feedback noise, when configured, is drawn from `rng`.
pub fn training_phase<R: Rng + ?Sized>(
    env: &MultipathEnvironment,
    pattern: &AntennaPattern,
    training_modes: &[usize],
    cfg: &ProtocolConfig,
    rng: &mut R,
) -> Result<TrainingEstimates> {
    let mut solutions = Vec::with_capacity(env.n_b() * env.n_a());
    for i in 0..env.n_b() {
        for j in 0..env.n_a() {
            let aod = env.aod(Link::AliceBob, i, j);
            let mut h = training_modes
                .iter()
                .map(|&u| csi_from_aod(aod, pattern, u))
                .collect::<Result<Vec<_>>>()?;
            if let Some(snr) = cfg.feedback_snr_db {
                let power = h.iter().map(|v| v.norm_sqr()).sum::<f64>() / h.len() as f64;
                let var = noise_variance(power, snr);
                for v in h.iter_mut() {
                    *v += rng::complex_gaussian(rng, var);
                }
            }
            let problem = SensingProblem::new(pattern, training_modes, h)?;
            solutions.push(aod::solve_bp(&problem, &cfg.solver)?);
        }
    }
    Ok(TrainingEstimates {
        n_b: env.n_b(),
        n_a: env.n_a(),
        training_modes: training_modes.to_vec(),
        solutions,
    })
}

/// Where Alice gets the `H_AB` she precodes with.
#[derive(Clone, Copy, Debug)]
pub enum CsiSource<'a> {
    Predicted(&'a TrainingEstimates),
    /// Channel sounding: the true CSI of the mode in use.
    Measured,
}

/// Everything Bob and Eve received during one coherence period on one
/// subcarrier. Columns are symbol times of the frames actually sent.
#[derive(Clone, Debug, PartialEq)]
pub struct TranscriptPair {
    pub bob_received: CMatrix,
    pub eve_received: CMatrix,
    /// Transmitted symbols, one row per Bob stream.
    pub ground_truth: CMatrix,
    /// Columns whose symbols Eve knows.
    pub known_plaintext_index: Vec<usize>,
    /// Mode of every frame of the period, sent or not.
    pub modes_used: Vec<usize>,
    /// Frames that were not sent because no precoder could be built.
    pub flagged_frames: Vec<usize>,
}

impl TranscriptPair {
    pub fn ground_truth_stream(&self, row: usize) -> SymbolStream {
        SymbolStream::from_indices(
            self.ground_truth
                .row(row)
                .iter()
                .map(|s| (usize::from(s.re < 0.0) << 1) | usize::from(s.im < 0.0)),
        )
    }

    /// Bob's SER with direct symbol decisions.
    pub fn bob_ser(&self) -> f64 {
        let total = self.ground_truth.as_slice().len();
        if total == 0 {
            return 0.0;
        }
        let errors = self
            .bob_received
            .as_slice()
            .iter()
            .zip(self.ground_truth.as_slice())
            .filter(|(r, s)| decide(**r) != **s)
            .count();
        errors as f64 / total as f64
    }
}

/// Per-frame mode schedule: a fresh mode from outside `training_modes`
/// every `T` frames.
pub fn mode_schedule<R: Rng + ?Sized>(cfg: &ProtocolConfig, total_modes: usize, training_modes: &[usize], rng: &mut R) -> Result<Vec<usize>> {
    let available: Vec<usize> = (0..total_modes).filter(|u| !training_modes.contains(u)).collect();
    let blocks = cfg.transmission_blocks();
    if blocks > available.len() {
        return Err(config("not enough modes outside the training set"));
    }
    let picks = rng::sample_distinct(rng, blocks, available.len());
    Ok((0..cfg.frames_per_coherence)
        .map(|f| available[picks[f / cfg.switching_period]])
        .collect())
}

/// Average per-antenna received data power `E|(H F_A)[i, bob] d|^2`.
fn data_power(h: &CMatrix, f_a: &CMatrix, n_b: usize, ndr: f64) -> f64 {
    let eff = h.matmul(f_a);
    let mut p = 0.0;
    for i in 0..eff.rows() {
        p += eff.row(i)[..n_b].iter().map(|v| v.norm_sqr()).sum::<f64>();
    }
    p / eff.rows() as f64 * SYMBOL_POWER / ((ndr + 1.0) * (ndr + 1.0))
}

/// Sends one coherence period following `schedule`.
pub fn transmission_phase<R: Rng + ?Sized>(
    env: &MultipathEnvironment,
    pattern: &AntennaPattern,
    csi: CsiSource<'_>,
    schedule: &[usize],
    cfg: &ProtocolConfig,
    rng: &mut R,
) -> Result<TranscriptPair> {
    let n_b = env.n_b();
    let len = cfg.symbols_per_frame;
    let mut sent = Vec::with_capacity(schedule.len());
    let mut flagged = Vec::new();
    let mut current: Option<(usize, core::result::Result<(CMatrix, CMatrix, BlindingFilter), ()>)> = None;

    let mut bob_cols: Vec<CMatrix> = Vec::new();
    let mut eve_cols: Vec<CMatrix> = Vec::new();
    let mut truth_cols: Vec<CMatrix> = Vec::new();

    for (frame, &mode) in schedule.iter().enumerate() {
        if current.as_ref().map(|(m, _)| *m) != Some(mode) {
            let h_ab = channel_matrix(env, pattern, mode, Link::AliceBob)?.matrix;
            let h_ae = channel_matrix(env, pattern, mode, Link::AliceEve)?.matrix;
            let precode_with = match csi {
                CsiSource::Predicted(est) => est.predict(pattern, mode)?,
                CsiSource::Measured => h_ab.clone(),
            };
            let filter = BlindingFilter::with_rng(&precode_with, rng).map_err(|_| ());
            current = Some((mode, filter.map(|f| (h_ab, h_ae, f))));
        }
        let Some((_, Ok((h_ab, h_ae, filter)))) = current.as_ref() else {
            flagged.push(frame);
            continue;
        };
        let data = CMatrix::from_fn(n_b, len, |_, _| crate::blinding::QAM4[rng.random_range(0..4)]);
        let x = encode(&filter.f_a, &data, cfg.ndr, rng)?;
        let mut r_b = h_ab.matmul(&x);
        add_noise(&mut r_b, noise_variance(data_power(h_ab, &filter.f_a, n_b, cfg.ndr), cfg.snr_db), rng);
        let mut r_e = h_ae.matmul(&x);
        add_noise(&mut r_e, noise_variance(data_power(h_ae, &filter.f_a, n_b, cfg.ndr), cfg.snr_db), rng);
        sent.push(frame);
        bob_cols.push(r_b);
        eve_cols.push(r_e);
        truth_cols.push(data);
    }

    let hcat = |blocks: &[CMatrix], rows: usize| {
        let cols = blocks.len() * len;
        CMatrix::from_fn(rows, cols, |i, t| blocks[t / len][(i, t % len)])
    };
    let known = (0..sent.len())
        .flat_map(|k| (0..cfg.known_symbols_per_frame).map(move |s| k * len + s))
        .collect();
    Ok(TranscriptPair {
        bob_received: hcat(&bob_cols, n_b),
        eve_received: hcat(&eve_cols, env.n_e()),
        ground_truth: hcat(&truth_cols, n_b),
        known_plaintext_index: known,
        modes_used: schedule.to_vec(),
        flagged_frames: flagged,
    })
}

/// Outcome of one scheme on one environment, averaged over subcarriers.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemeMetrics {
    pub bob_ser: f64,
    pub eve_ser: f64,
    /// Eve's SER after each NLMS iteration.
    pub eve_trace: Vec<f64>,
    pub flagged_frames: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvironmentMetrics {
    pub index: u64,
    pub seed: u64,
    pub robin: SchemeMetrics,
    pub baseline: SchemeMetrics,
    /// Mean relative CSI prediction error over non-training modes.
    pub prediction_error: f64,
    pub solver_converged: bool,
}

fn mean_trace(traces: &[Vec<f64>]) -> Vec<f64> {
    let len = traces.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|k| traces.iter().map(|t| t[k]).sum::<f64>() / traces.len() as f64)
        .collect()
}

fn attack_transcript(t: &TranscriptPair, cfg: &ProtocolConfig) -> Result<(f64, Vec<f64>)> {
    if t.ground_truth.cols() == 0 {
        return Ok((0.0, Vec::new()));
    }
    let out = train_and_attack(&t.eve_received, &t.ground_truth, &t.known_plaintext_index, &cfg.attack)?;
    Ok((out.final_ser, out.trace))
}

/// Full pipeline on environment `index`: ROBin and the baseline on every
/// subcarrier.
pub fn run_environment(cfg: &ProtocolConfig, pattern: &AntennaPattern, index: u64) -> Result<EnvironmentMetrics> {
    cfg.validate(pattern.num_modes())?;
    let seed = environment_seed(cfg.seed, index);
    let envs = synthesize_subcarriers(seed, &cfg.environment_spec(pattern), cfg.subcarriers)?;
    let training_modes = aod::select_training_modes(seed, cfg.num_training_modes, pattern.num_modes())?;
    let schedule = mode_schedule(cfg, pattern.num_modes(), &training_modes, &mut rng::stream(seed, &[label::TRAINING_MODES, 1]))?;
    let baseline_schedule = vec![schedule[0]; schedule.len()];

    let mut robin = Vec::with_capacity(envs.len());
    let mut baseline = Vec::with_capacity(envs.len());
    let mut prediction_error = 0.0;
    let mut converged = true;
    for (k, env) in envs.iter().enumerate() {
        let k = k as u64;
        let estimates = training_phase(env, pattern, &training_modes, cfg, &mut rng::stream(seed, &[label::FEEDBACK_NOISE, k]))?;
        converged &= estimates.all_converged();
        let mut pe = 0.0;
        for i in 0..env.n_b() {
            for j in 0..env.n_a() {
                pe += aod::mean_prediction_error(
                    &estimates.solution(i, j).aod_estimate,
                    env.aod(Link::AliceBob, i, j),
                    pattern,
                    &training_modes,
                )?;
            }
        }
        prediction_error += pe / (env.n_b() * env.n_a()) as f64;

        let t = transmission_phase(env, pattern, CsiSource::Predicted(&estimates), &schedule, cfg, &mut rng::stream(seed, &[label::TRANSMISSION, k, 0]))?;
        let (eve, trace) = attack_transcript(&t, cfg)?;
        robin.push((t.bob_ser(), eve, trace, t.flagged_frames.len()));

        let t = transmission_phase(env, pattern, CsiSource::Measured, &baseline_schedule, cfg, &mut rng::stream(seed, &[label::TRANSMISSION, k, 1]))?;
        let (eve, trace) = attack_transcript(&t, cfg)?;
        baseline.push((t.bob_ser(), eve, trace, t.flagged_frames.len()));
    }

    let summarize = |runs: Vec<(f64, f64, Vec<f64>, usize)>| {
        let n = runs.len() as f64;
        let traces: Vec<Vec<f64>> = runs.iter().map(|r| r.2.clone()).collect();
        SchemeMetrics {
            bob_ser: runs.iter().map(|r| r.0).sum::<f64>() / n,
            eve_ser: runs.iter().map(|r| r.1).sum::<f64>() / n,
            eve_trace: mean_trace(&traces),
            flagged_frames: runs.iter().map(|r| r.3).sum(),
        }
    };
    Ok(EnvironmentMetrics {
        index,
        seed,
        robin: summarize(robin),
        baseline: summarize(baseline),
        prediction_error: prediction_error / envs.len() as f64,
        solver_converged: converged,
    })
}

/// `(SER_ROBin - SER_OB) / 0.75`.
pub fn security_improvement(ser_robin: f64, ser_baseline: f64) -> f64 {
    (ser_robin - ser_baseline) / RANDOM_GUESS_SER
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentMetrics {
    pub environments: usize,
    pub bob_ser_mean: f64,
    pub bob_ser_std: f64,
    pub eve_ser_mean: f64,
    pub eve_ser_std: f64,
    pub baseline_bob_ser_mean: f64,
    pub baseline_eve_ser_mean: f64,
    pub eve_trace: Vec<f64>,
    pub baseline_eve_trace: Vec<f64>,
    pub prediction_error_mean: f64,
    pub security_improvement: f64,
    pub flagged_frames: usize,
    pub unconverged_environments: usize,
    pub seeds: Vec<u64>,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    if n == 0.0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Combines per-environment results. The input order does not matter: runs
/// are sorted by index before any floating-point sum.
pub fn aggregate(mut runs: Vec<EnvironmentMetrics>) -> Result<ExperimentMetrics> {
    runs.sort_by_key(|r| r.index);
    if runs.windows(2).any(|w| w[0].index == w[1].index) {
        return Err(contract("duplicate environment index"));
    }
    let (bob_ser_mean, bob_ser_std) = mean_std(runs.iter().map(|r| r.robin.bob_ser));
    let (eve_ser_mean, eve_ser_std) = mean_std(runs.iter().map(|r| r.robin.eve_ser));
    let (baseline_bob_ser_mean, _) = mean_std(runs.iter().map(|r| r.baseline.bob_ser));
    let (baseline_eve_ser_mean, _) = mean_std(runs.iter().map(|r| r.baseline.eve_ser));
    let (prediction_error_mean, _) = mean_std(runs.iter().map(|r| r.prediction_error));
    let robin_traces: Vec<Vec<f64>> = runs.iter().map(|r| r.robin.eve_trace.clone()).collect();
    let baseline_traces: Vec<Vec<f64>> = runs.iter().map(|r| r.baseline.eve_trace.clone()).collect();
    Ok(ExperimentMetrics {
        environments: runs.len(),
        bob_ser_mean,
        bob_ser_std,
        eve_ser_mean,
        eve_ser_std,
        baseline_bob_ser_mean,
        baseline_eve_ser_mean,
        eve_trace: mean_trace(&robin_traces),
        baseline_eve_trace: mean_trace(&baseline_traces),
        prediction_error_mean,
        security_improvement: security_improvement(eve_ser_mean, baseline_eve_ser_mean),
        flagged_frames: runs.iter().map(|r| r.robin.flagged_frames + r.baseline.flagged_frames).sum(),
        unconverged_environments: runs.iter().filter(|r| !r.solver_converged).count(),
        seeds: runs.iter().map(|r| r.seed).collect(),
    })
}

/// Sequential [`run_environment`] over `0..num_environments` followed by
/// [`aggregate`].
pub fn run_experiment(cfg: &ProtocolConfig, pattern: &AntennaPattern, num_environments: u64) -> Result<ExperimentMetrics> {
    let runs = (0..num_environments)
        .map(|i| run_environment(cfg, pattern, i))
        .collect::<Result<Vec<_>>>()?;
    aggregate(runs)
}
