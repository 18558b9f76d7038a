//! Secrecy leakage as an empirical conditional mutual information.
//!
//! The reduced single-antenna model: `h_AB(t)` and `h_AE(t)` evolve as a
//! jointly Markov pair of truncated Gaussian processes. Eve knows
//! `h_AB(T-1)`, `h_AE(T-1)` and `h_AE(T)` (together `dH(T)`) and receives
//! `R_E(T) = h_AB(T)^{-1} D_B(T)`. The leakage is
//! `I(D_B(T); R_E(T) | dH(T))` with every channel value and `R_E` quantized
//! to four levels per real and imaginary part.
//!
//! Samples are produced in fixed-size blocks, each with its own generator
//! derived from `(seed, block)`. Counts are integers and merge by addition,
//! so the estimate does not depend on how blocks are spread over workers.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::blinding::QAM4;
use crate::error::{config, contract, Error, Result};
use crate::linalg::C64;
use crate::rng::{self, label, SimRng};

/// Quantizer output levels, in index order.
pub const LEVELS: [f64; 4] = [-1.5, -0.5, 0.5, 1.5];

/// Samples per generator block.
pub const BLOCK_LEN: usize = 4096;

/// Largest dense count table we are willing to allocate.
pub const MAX_TABLE_CELLS: u64 = 1 << 24;

/// Chain steps discarded at the start of every block.
const BURN_IN: usize = 16;

/// Level index of one real value. Bin edges are -1, 0 and 1; a value on an
/// edge goes to the upper level.
pub fn quantize_level(x: f64) -> usize {
    if x < -1.0 {
        0
    } else if x < 0.0 {
        1
    } else if x < 1.0 {
        2
    } else {
        3
    }
}

pub fn quantize(z: C64) -> C64 {
    C64::new(LEVELS[quantize_level(z.re)], LEVELS[quantize_level(z.im)])
}

/// `4 * level(re) + level(im)`, in `0..16`.
pub fn quantized_index(z: C64) -> usize {
    4 * quantize_level(z.re) + quantize_level(z.im)
}

/// How the next channel state depends on the past.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ChainKind {
    /// First-order Gaussian autoregression on the raw values.
    Markov,
    /// Autoregression on the quantized previous value, so the quantized
    /// chain itself is exactly Markov.
    QuantizedMarkov,
    /// Autoregression on the quantized value two steps back: a chain that
    /// is not first-order Markov.
    SecondOrder,
    /// Both channels frozen at the given values.
    Constant { h_ab: C64, h_ae: C64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarkovChannelParams {
    /// Correlation between `h_AB(t)` and `h_AE(t)`, per real/imaginary part.
    pub cross_correlation: f64,
    /// Lag-one correlation of each process.
    pub temporal_correlation: f64,
    /// Values are resampled until they fall in `(-truncation, truncation)`.
    pub truncation: f64,
    pub kind: ChainKind,
    /// Zero imaginary parts, which shrinks every channel alphabet from 16 to
    /// 4 values.
    pub real_valued: bool,
    /// Variance of optional complex AWGN added to `R_E`.
    pub noise_variance: f64,
}

impl MarkovChannelParams {
    pub fn new(cross_correlation: f64, temporal_correlation: f64) -> Self {
        MarkovChannelParams {
            cross_correlation,
            temporal_correlation,
            truncation: 2.0,
            kind: ChainKind::Markov,
            real_valued: false,
            noise_variance: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.cross_correlation) {
            return Err(config(format!("cross correlation {} outside [0, 1]", self.cross_correlation)));
        }
        if !(0.0..1.0).contains(&self.temporal_correlation) {
            return Err(config(format!("temporal correlation {} outside [0, 1)", self.temporal_correlation)));
        }
        if !(self.truncation > 0.0 && self.truncation.is_finite()) {
            return Err(config("truncation must be positive and finite"));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(config("noise variance must be finite and >= 0"));
        }
        if let ChainKind::Constant { h_ab, .. } = self.kind {
            if h_ab.norm() == 0.0 {
                return Err(config("a constant h_AB must be nonzero"));
            }
        }
        Ok(())
    }

    /// Number of distinct quantized values per channel.
    fn channel_alphabet(&self) -> usize {
        if self.real_valued {
            4
        } else {
            16
        }
    }

    fn channel_index(&self, z: C64) -> usize {
        if self.real_valued {
            quantize_level(z.re)
        } else {
            quantized_index(z)
        }
    }
}

/// One time step: `(h_AB(t), h_AE(t))`.
pub type ChainState = (C64, C64);

/// Stateful generator for one chain.
pub struct ChainSampler {
    params: MarkovChannelParams,
    rng: SimRng,
    prev: ChainState,
    prev2: ChainState,
}

impl ChainSampler {
    pub fn new(params: MarkovChannelParams, mut rng: SimRng) -> Result<Self> {
        params.validate()?;
        let start = match params.kind {
            ChainKind::Constant { h_ab, h_ae } => (h_ab, h_ae),
            _ => {
                let re = stationary_pair(&params, &mut rng);
                let im = if params.real_valued { (0.0, 0.0) } else { stationary_pair(&params, &mut rng) };
                (C64::new(re.0, im.0), C64::new(re.1, im.1))
            }
        };
        let mut sampler = ChainSampler {
            params,
            rng,
            prev: start,
            prev2: start,
        };
        for _ in 0..BURN_IN {
            sampler.step();
        }
        Ok(sampler)
    }

    pub fn step(&mut self) -> ChainState {
        let p = self.params;
        let (base, base2) = (self.prev, self.prev2);
        let next = match p.kind {
            ChainKind::Constant { .. } => base,
            kind => {
                let anchor = |z: C64, z2: C64| match kind {
                    ChainKind::QuantizedMarkov => quantize(z),
                    ChainKind::SecondOrder => quantize(z2),
                    _ => z,
                };
                let ab = anchor(base.0, base2.0);
                let ae = anchor(base.1, base2.1);
                let re = next_pair(&p, &mut self.rng, ab.re, ae.re);
                let im = if p.real_valued { (0.0, 0.0) } else { next_pair(&p, &mut self.rng, ab.im, ae.im) };
                (C64::new(re.0, im.0), C64::new(re.1, im.1))
            }
        };
        self.prev2 = self.prev;
        self.prev = next;
        next
    }
}

fn correlated_normals(rho: f64, rng: &mut SimRng) -> (f64, f64) {
    let w1 = rng::standard_normal(rng);
    let w2 = rng::standard_normal(rng);
    (w1, rho * w1 + (1.0 - rho * rho).sqrt() * w2)
}

fn accept(p: &MarkovChannelParams, x: f64, y: f64) -> bool {
    x.abs() < p.truncation && y.abs() < p.truncation && x != 0.0
}

fn stationary_pair(p: &MarkovChannelParams, rng: &mut SimRng) -> (f64, f64) {
    loop {
        let (x, y) = correlated_normals(p.cross_correlation, rng);
        if accept(p, x, y) {
            return (x, y);
        }
    }
}

/// `rho_t * anchor + sqrt(1 - rho_t^2) * innovation`, resampled into range.
fn next_pair(p: &MarkovChannelParams, rng: &mut SimRng, ax: f64, ay: f64) -> (f64, f64) {
    let a = p.temporal_correlation;
    let s = (1.0 - a * a).sqrt();
    loop {
        let (wx, wy) = correlated_normals(p.cross_correlation, rng);
        let x = a * ax + s * wx;
        let y = a * ay + s * wy;
        if accept(p, x, y) {
            return (x, y);
        }
    }
}

/// `length` consecutive states of one chain.
pub fn sample_chain(params: &MarkovChannelParams, length: usize, seed: u64) -> Result<Vec<ChainState>> {
    let mut s = ChainSampler::new(*params, rng::stream(seed, &[label::CHAIN_BLOCK]))?;
    Ok((0..length).map(|_| s.step()).collect())
}

/// One observation of the leakage experiment, quantized.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretizedSample {
    pub d_b: C64,
    pub r_e: C64,
    /// `(h_AB(T-1), h_AE(T-1), h_AE(T))`.
    pub delta_h: [C64; 3],
}

impl DiscretizedSample {
    pub fn new(d_b: C64, r_e: C64, delta_h: [C64; 3]) -> Result<Self> {
        if !QAM4.contains(&d_b) {
            return Err(contract(format!("{d_b} is not a 4-QAM symbol")));
        }
        let on_grid = |z: C64| quantize(z) == z;
        if !on_grid(r_e) || !delta_h.iter().all(|&z| on_grid(z)) {
            return Err(contract("sample values must be quantized"));
        }
        Ok(DiscretizedSample { d_b, r_e, delta_h })
    }
}

fn symbol_index(s: C64) -> usize {
    (usize::from(s.re < 0.0) << 1) | usize::from(s.im < 0.0)
}

/// Dense counts of `(condition, d, r)`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointCounts {
    conditions: usize,
    d_size: usize,
    r_size: usize,
    counts: Vec<u32>,
    total: u64,
}

impl JointCounts {
    pub fn new(conditions: usize, d_size: usize, r_size: usize) -> Result<Self> {
        let cells = conditions as u64 * d_size as u64 * r_size as u64;
        if cells > MAX_TABLE_CELLS {
            return Err(Error::AlphabetTooLarge {
                cells,
                limit: MAX_TABLE_CELLS,
            });
        }
        if cells == 0 {
            return Err(contract("empty alphabet"));
        }
        Ok(JointCounts {
            conditions,
            d_size,
            r_size,
            counts: vec![0; cells as usize],
            total: 0,
        })
    }

    pub fn cells(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    #[inline]
    pub fn add(&mut self, condition: usize, d: usize, r: usize) {
        debug_assert!(condition < self.conditions && d < self.d_size && r < self.r_size);
        self.counts[(condition * self.d_size + d) * self.r_size + r] += 1;
        self.total += 1;
    }

    /// Adds `other` cell by cell. Integer addition, so merging is exact and
    /// associative.
    pub fn merge(&mut self, other: &JointCounts) -> Result<()> {
        if (self.conditions, self.d_size, self.r_size) != (other.conditions, other.d_size, other.r_size) {
            return Err(contract("merging count tables of different shapes"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        Ok(())
    }

    /// Samples per joint cell.
    pub fn coverage_ratio(&self) -> f64 {
        self.total as f64 / self.cells() as f64
    }

    /// Plug-in `I(D; R | C)` in bits.
    pub fn cmi_bits(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let mut acc = 0.0;
        let mut n_d = vec![0u64; self.d_size];
        let mut n_r = vec![0u64; self.r_size];
        for c in 0..self.conditions {
            let block = &self.counts[c * self.d_size * self.r_size..(c + 1) * self.d_size * self.r_size];
            n_d.iter_mut().for_each(|v| *v = 0);
            n_r.iter_mut().for_each(|v| *v = 0);
            let mut n_c = 0u64;
            for d in 0..self.d_size {
                for r in 0..self.r_size {
                    let n = u64::from(block[d * self.r_size + r]);
                    n_d[d] += n;
                    n_r[r] += n;
                    n_c += n;
                }
            }
            if n_c == 0 {
                continue;
            }
            for d in 0..self.d_size {
                for r in 0..self.r_size {
                    let n = u64::from(block[d * self.r_size + r]);
                    if n > 0 {
                        let ratio = (n as f64 * n_c as f64) / (n_d[d] as f64 * n_r[r] as f64);
                        acc += n as f64 * ratio.log2();
                    }
                }
            }
        }
        acc / self.total as f64
    }

    pub fn estimate(&self) -> CmiEstimate {
        CmiEstimate {
            bits: self.cmi_bits(),
            samples: self.total,
            coverage_ratio: self.coverage_ratio(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CmiEstimate {
    pub bits: f64,
    pub samples: u64,
    pub coverage_ratio: f64,
}

impl CmiEstimate {
    /// Fewer than 100 samples per joint cell.
    pub fn undersampled(&self) -> bool {
        self.coverage_ratio < 100.0
    }
}

/// Plug-in `I(D_B; R_E | dH)` over complex-quantized samples.
pub fn estimate_cmi(samples: &[DiscretizedSample]) -> Result<CmiEstimate> {
    let mut counts = JointCounts::new(16 * 16 * 16, 4, 16)?;
    for s in samples {
        let c = quantized_index(s.delta_h[0]) + 16 * quantized_index(s.delta_h[1]) + 256 * quantized_index(s.delta_h[2]);
        counts.add(c, symbol_index(s.d_b), quantized_index(s.r_e));
    }
    Ok(counts.estimate())
}

/// Packed observation: condition with history, condition index of `dH`
/// alone is `full % L^3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Packed {
    condition: u32,
    d: u8,
    r: u8,
}

struct Layout {
    /// Channel alphabet per value.
    l: usize,
    /// Past steps in the condition (1 means `dH` only).
    depth: usize,
}

impl Layout {
    fn delta_conditions(&self) -> usize {
        self.l.pow(3)
    }

    fn full_conditions(&self) -> usize {
        self.l.pow(3 + 2 * (self.depth - 1) as u32)
    }
}

fn sample_block(params: &MarkovChannelParams, layout: &Layout, seed: u64, block: u64, len: usize, out: &mut Vec<Packed>) -> Result<()> {
    let mut rng = rng::stream(seed, &[label::CHAIN_BLOCK, block]);
    let data_rng_seed = rng.random::<u64>();
    let mut data_rng = rng::stream(data_rng_seed, &[]);
    let mut chain = ChainSampler::new(*params, rng)?;
    // history[k] is the state k steps before the newest.
    let mut history: Vec<ChainState> = Vec::with_capacity(layout.depth + 1);
    for _ in 0..=layout.depth {
        history.insert(0, chain.step());
    }
    let l = layout.l;
    for n in 0..len {
        if n > 0 {
            history.pop();
            history.insert(0, chain.step());
        }
        let (x_t, y_t) = history[0];
        let (x_1, y_1) = history[1];
        let mut condition = params.channel_index(x_1) + l * params.channel_index(y_1) + l * l * params.channel_index(y_t);
        let mut scale = l * l * l;
        for &(x_k, y_k) in &history[2..] {
            condition += scale * (params.channel_index(x_k) + l * params.channel_index(y_k));
            scale *= l * l;
        }
        let d = data_rng.random_range(0..4usize);
        let mut r = QAM4[d] / x_t;
        if params.noise_variance > 0.0 {
            r += rng::complex_gaussian(&mut data_rng, params.noise_variance);
        }
        out.push(Packed {
            condition: condition as u32,
            d: d as u8,
            r: quantized_index(r) as u8,
        });
    }
    Ok(())
}

fn block_lengths(n_samples: u64) -> impl Iterator<Item = (u64, usize)> {
    let blocks = n_samples.div_ceil(BLOCK_LEN as u64);
    (0..blocks).map(move |b| (b, (n_samples - b * BLOCK_LEN as u64).min(BLOCK_LEN as u64) as usize))
}

/// Number of generator blocks behind `n_samples` samples.
pub fn block_count(n_samples: u64) -> u64 {
    n_samples.div_ceil(BLOCK_LEN as u64)
}

/// Leakage counts for the blocks in `blocks` (a shard). Merging the counts
/// of any partition of `0..block_count(n_samples)` gives the same table.
pub fn leakage_counts(params: &MarkovChannelParams, n_samples: u64, seed: u64, blocks: Range<u64>) -> Result<JointCounts> {
    params.validate()?;
    let layout = Layout {
        l: params.channel_alphabet(),
        depth: 1,
    };
    let mut counts = JointCounts::new(layout.delta_conditions(), 4, 16)?;
    let mut buf = Vec::with_capacity(BLOCK_LEN);
    for (b, len) in block_lengths(n_samples).filter(|(b, _)| blocks.contains(b)) {
        buf.clear();
        sample_block(params, &layout, seed, b, len, &mut buf)?;
        for p in &buf {
            counts.add(p.condition as usize, p.d as usize, p.r as usize);
        }
    }
    Ok(counts)
}

/// `I(D_B; R_E | dH)` for the chain described by `params`.
pub fn leakage_model(params: &MarkovChannelParams, n_samples: u64, seed: u64) -> Result<CmiEstimate> {
    leakage_sharded(params, n_samples, seed, 1)
}

/// [`leakage_model`] computed as `shards` independent count tables merged at
/// the end. The result does not depend on `shards`.
pub fn leakage_sharded(params: &MarkovChannelParams, n_samples: u64, seed: u64, shards: u64) -> Result<CmiEstimate> {
    let blocks = block_count(n_samples);
    let shards = shards.clamp(1, blocks.max(1));
    let mut total: Option<JointCounts> = None;
    for s in 0..shards {
        let range = (s * blocks / shards)..((s + 1) * blocks / shards);
        let c = leakage_counts(params, n_samples, seed, range)?;
        match total.as_mut() {
            Some(t) => t.merge(&c)?,
            None => total = Some(c),
        }
    }
    Ok(total.expect("at least one shard").estimate())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarkovVerification {
    /// `I(D_B; R_E | history, dH)`, plug-in.
    pub lhs: f64,
    /// `I(D_B; R_E | dH)`, plug-in.
    pub rhs: f64,
    pub gap: f64,
    /// Gap after split-half bias correction, `2 gap - mean(half gaps)`.
    pub corrected_gap: f64,
    /// Standard error of the gap estimated from random half splits.
    pub standard_error: f64,
    /// Plug-in bias of the gap, `mean(half gaps) - gap`. Plug-in bias
    /// scales as `1/n`, so halving the sample roughly doubles it.
    pub bias: f64,
    /// `sqrt(standard_error^2 + bias^2)`: how far from the truth the plug-in
    /// gap can be expected to sit at this sample size.
    pub noise_floor: f64,
    pub lhs_coverage: f64,
    pub rhs_coverage: f64,
    pub splits: usize,
}

fn gap_of(samples: &[Packed], layout: &Layout, keep: impl Fn(usize) -> bool) -> Result<(f64, f64, f64, f64)> {
    let mut full = JointCounts::new(layout.full_conditions(), 4, 16)?;
    let mut delta = JointCounts::new(layout.delta_conditions(), 4, 16)?;
    let dc = layout.delta_conditions() as u32;
    for (i, p) in samples.iter().enumerate() {
        if keep(i / BLOCK_LEN) {
            full.add(p.condition as usize, p.d as usize, p.r as usize);
            delta.add((p.condition % dc) as usize, p.d as usize, p.r as usize);
        }
    }
    let (l, r) = (full.cmi_bits(), delta.cmi_bits());
    Ok((l, r, full.coverage_ratio(), delta.coverage_ratio()))
}

/// Compares the leakage conditioned on `history_depth` past steps against
/// the leakage conditioned on `dH(T)` alone, on one sample set.
///
/// The noise floor comes from `splits` random halvings of the generator
/// blocks: each half yields a gap. The spread of those half gaps, scaled by
/// `1/sqrt(2)`, estimates the standard error of the full-sample gap, and
/// their offset from it estimates the plug-in bias. With many samples the
/// bias dominates.
pub fn verify_markov_simplification(params: &MarkovChannelParams, n_samples: u64, history_depth: usize, seed: u64, splits: usize) -> Result<MarkovVerification> {
    params.validate()?;
    if history_depth < 2 {
        return Err(config("history depth must be at least 2"));
    }
    if splits == 0 {
        return Err(config("at least one split is needed"));
    }
    let layout = Layout {
        l: params.channel_alphabet(),
        depth: history_depth,
    };
    let cells = layout.full_conditions() as u64 * 64;
    if layout.full_conditions() > u32::MAX as usize || cells > MAX_TABLE_CELLS {
        return Err(Error::AlphabetTooLarge {
            cells,
            limit: MAX_TABLE_CELLS,
        });
    }
    let blocks = block_count(n_samples);
    if blocks < 2 {
        return Err(config(format!("split-half needs at least {} samples", BLOCK_LEN + 1)));
    }
    let mut samples = Vec::with_capacity(n_samples as usize);
    for (b, len) in block_lengths(n_samples) {
        sample_block(params, &layout, seed, b, len, &mut samples)?;
    }

    let (lhs, rhs, lhs_coverage, rhs_coverage) = gap_of(&samples, &layout, |_| true)?;
    let gap = lhs - rhs;
    let mut half_gaps = Vec::with_capacity(2 * splits);
    for s in 0..splits {
        let mut rng = rng::stream(seed, &[label::SPLIT, s as u64]);
        let order = rng::sample_distinct(&mut rng, blocks as usize, blocks as usize);
        let mut in_first = vec![false; blocks as usize];
        for &b in &order[..blocks as usize / 2] {
            in_first[b] = true;
        }
        for side in [true, false] {
            let (l, r, _, _) = gap_of(&samples, &layout, |b| in_first[b] == side)?;
            half_gaps.push(l - r);
        }
    }
    let mean = half_gaps.iter().sum::<f64>() / half_gaps.len() as f64;
    let var = half_gaps.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / (half_gaps.len() - 1).max(1) as f64;
    let standard_error = (var / 2.0).sqrt();
    let bias = mean - gap;
    Ok(MarkovVerification {
        lhs,
        rhs,
        gap,
        corrected_gap: 2.0 * gap - mean,
        standard_error,
        bias,
        noise_floor: standard_error.hypot(bias),
        lhs_coverage,
        rhs_coverage,
        splits,
    })
}

/// Counts for a recorded sequence `(x_t, y_t)` of Alice->Bob and Alice->Eve
/// CSI, already scaled to the quantizer range. Every window of two
/// consecutive steps is one sample; symbols come from `seed`. Tables of
/// several sequences can be merged.
pub fn replay_counts(sequence: &[ChainState], seed: u64) -> Result<JointCounts> {
    let mut counts = JointCounts::new(16 * 16 * 16, 4, 16)?;
    let mut rng = rng::stream(seed, &[label::CHAIN_BLOCK]);
    for w in sequence.windows(2) {
        let ((x_1, y_1), (x_t, y_t)) = (w[0], w[1]);
        if x_t.norm() == 0.0 {
            continue;
        }
        let d = rng.random_range(0..4usize);
        let c = quantized_index(x_1) + 16 * quantized_index(y_1) + 256 * quantized_index(y_t);
        counts.add(c, d, quantized_index(QAM4[d] / x_t));
    }
    Ok(counts)
}

/// Leakage of one replayed sequence, see [`replay_counts`].
pub fn leakage_from_sequence(sequence: &[ChainState], seed: u64) -> Result<CmiEstimate> {
    Ok(replay_counts(sequence, seed)?.estimate())
}
