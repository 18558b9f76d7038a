//! Multipath channels seen through a reconfigurable antenna.
//!
//! A physical channel between transmit antenna `j` and receive antenna `i` is
//! a sparse distribution of complex gains over `D` discretized departure
//! angles. Switching the transmit antenna to mode `u` weights each angle by
//! the pattern gain `G(u, theta)`, so the CSI in mode `u` is
//! `h_ij(u) = sum_d G(u, theta_d) a_ij(theta_d)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

// Float supplies f64 math without std; unused when std is in the graph.
#[allow(unused_imports)]
use num_traits::Float;
use num_traits::Zero;
use rand::Rng;

use crate::error::{config, contract, Result};
use crate::linalg::{CMatrix, C64};
use crate::rng::{self, label, SimRng};

/// One azimuth bin per degree.
pub const DEFAULT_NUM_ANGLES: usize = 360;

/// Shape parameters for the rotated directional pattern.
///
/// The base gain over angle `theta` is a cardioid-like lobe
/// `((1 + cos theta) / 2)^directivity`, blended with a fixed pseudo-random
/// fine structure (weight `ripple`) that stands in for the element and
/// ground-plane scattering of a physical antenna. With `phase_offset > 0` the
/// antenna's phase centre sits that many wavelengths from the rotation axis,
/// which adds the propagation phase `2 pi phase_offset cos theta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LobeShape {
    pub directivity: f64,
    pub ripple: f64,
    pub phase_offset: f64,
    pub seed: u64,
}

impl Default for LobeShape {
    fn default() -> Self {
        LobeShape {
            directivity: 1.0,
            ripple: 0.3,
            phase_offset: 0.0,
            seed: 7,
        }
    }
}

impl LobeShape {
    /// Same lobe with the phase centre offset from the rotation axis.
    pub fn offset(phase_offset: f64) -> Self {
        LobeShape {
            phase_offset,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.directivity.is_finite() && self.directivity >= 0.0) {
            return Err(config(format!("directivity must be finite and >= 0, got {}", self.directivity)));
        }
        if !(0.0..=1.0).contains(&self.ripple) {
            return Err(config(format!("ripple must lie in [0, 1], got {}", self.ripple)));
        }
        if !self.phase_offset.is_finite() {
            return Err(config("phase offset must be finite"));
        }
        Ok(())
    }

    /// Base gains `G(0, theta_d)` for `d` in `0..num_angles`.
    fn base_gains(&self, num_angles: usize) -> Vec<C64> {
        let mut rng = rng::stream(self.seed, &[label::PATTERN]);
        (0..num_angles)
            .map(|d| {
                let theta = 2.0 * PI * d as f64 / num_angles as f64;
                let lobe = ((1.0 + theta.cos()) / 2.0).powf(self.directivity);
                let fine: f64 = rng.random();
                let magnitude = (1.0 - self.ripple) * lobe + self.ripple * fine * (0.25 + lobe);
                let phase = 2.0 * PI * self.phase_offset * theta.cos();
                if self.phase_offset == 0.0 {
                    C64::new(magnitude, 0.0)
                } else {
                    C64::from_polar(magnitude, phase)
                }
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PatternFamily {
    /// Unit gain in every direction and mode.
    Omni,
    /// A single lobe rotated by one angle bin per mode.
    Directional(LobeShape),
}

impl PatternFamily {
    /// `omni`, `directional` (real lobe) or `offset` (lobe with a phase
    /// centre one half wavelength off the rotation axis).
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "omni" => Ok(PatternFamily::Omni),
            "directional" => Ok(PatternFamily::Directional(LobeShape::default())),
            "offset" => Ok(PatternFamily::Directional(LobeShape::offset(0.5))),
            other => Err(config(format!("unknown pattern family `{other}`"))),
        }
    }
}

/// Gains `G(u, theta_d)` for `num_modes` modes over `num_angles` angles.
#[derive(Clone, Debug, PartialEq)]
pub struct AntennaPattern {
    num_modes: usize,
    num_angles: usize,
    gains: Vec<C64>,
}

pub fn make_pattern(family: &PatternFamily, num_modes: usize, num_angles: usize) -> Result<AntennaPattern> {
    if num_modes == 0 {
        return Err(config("a pattern needs at least one mode"));
    }
    if num_angles < num_modes {
        return Err(config(format!(
            "num_angles ({num_angles}) must be at least num_modes ({num_modes})"
        )));
    }
    let base = match family {
        PatternFamily::Omni => vec![C64::new(1.0, 0.0); num_angles],
        PatternFamily::Directional(shape) => {
            shape.validate()?;
            shape.base_gains(num_angles)
        }
    };
    let mut gains = Vec::with_capacity(num_modes * num_angles);
    for u in 0..num_modes {
        gains.extend((0..num_angles).map(|d| base[(d + num_angles - u) % num_angles]));
    }
    AntennaPattern::from_gains(num_modes, num_angles, gains)
}

impl AntennaPattern {
    /// Wraps an explicit gain table (row-major, one row per mode), checking
    /// that gains are finite and no mode is identically zero.
    pub fn from_gains(num_modes: usize, num_angles: usize, gains: Vec<C64>) -> Result<Self> {
        if num_modes == 0 || num_angles == 0 || gains.len() != num_modes * num_angles {
            return Err(contract(format!(
                "gain table of length {} does not match {num_modes} modes x {num_angles} angles",
                gains.len()
            )));
        }
        if gains.iter().any(|g| !(g.re.is_finite() && g.im.is_finite())) {
            return Err(contract("pattern gains must be finite"));
        }
        for u in 0..num_modes {
            if gains[u * num_angles..(u + 1) * num_angles].iter().all(|g| g.is_zero()) {
                return Err(contract(format!("mode {u} has no nonzero gain")));
            }
        }
        Ok(AntennaPattern {
            num_modes,
            num_angles,
            gains,
        })
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn num_angles(&self) -> usize {
        self.num_angles
    }

    #[inline]
    pub fn gain(&self, mode: usize, angle: usize) -> C64 {
        self.gains[mode * self.num_angles + angle]
    }

    #[inline]
    pub fn mode_row(&self, mode: usize) -> &[C64] {
        &self.gains[mode * self.num_angles..(mode + 1) * self.num_angles]
    }

    pub fn gains(&self) -> &[C64] {
        &self.gains
    }

    /// `U x D` sensing matrix whose rows are the given modes.
    pub fn sensing_matrix(&self, modes: &[usize]) -> Result<CMatrix> {
        if let Some(&bad) = modes.iter().find(|&&u| u >= self.num_modes) {
            return Err(contract(format!("mode {bad} out of range 0..{}", self.num_modes)));
        }
        Ok(CMatrix::from_fn(modes.len(), self.num_angles, |r, d| self.gain(modes[r], d)))
    }

    /// Largest normalized correlation `|<g_u, g_v>| / (|g_u| |g_v|)` over
    /// distinct mode pairs.
    pub fn max_mode_correlation(&self) -> f64 {
        let norms: Vec<f64> = (0..self.num_modes)
            .map(|u| crate::linalg::norm(self.mode_row(u)))
            .collect();
        let mut best = 0.0f64;
        for u in 0..self.num_modes {
            for v in (u + 1)..self.num_modes {
                let c = crate::linalg::inner(self.mode_row(u), self.mode_row(v)).norm() / (norms[u] * norms[v]);
                best = best.max(c);
            }
        }
        best
    }
}

/// Complex gain per discretized departure angle for one antenna pair.
#[derive(Clone, Debug, PartialEq)]
pub struct AoDDistribution {
    values: Vec<C64>,
}

impl AoDDistribution {
    pub fn zeros(num_angles: usize) -> Self {
        AoDDistribution {
            values: vec![C64::zero(); num_angles],
        }
    }

    pub fn from_values(values: Vec<C64>) -> Self {
        AoDDistribution { values }
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Indices of the nonzero entries.
    pub fn support(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_zero())
            .map(|(d, _)| d)
            .collect()
    }

    /// Omnidirectional channel coefficient, `sum_d a(theta_d)`.
    pub fn physical_coefficient(&self) -> C64 {
        self.values.iter().sum()
    }
}

/// One propagation path: departure angle bin, path loss and fading.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathComponent {
    pub angle: usize,
    pub loss: f64,
    pub amplitude: f64,
    pub phase: f64,
}

impl PathComponent {
    /// `L alpha e^{-j phi}`.
    pub fn coefficient(&self) -> C64 {
        C64::from_polar(self.loss * self.amplitude, -self.phase)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairChannel {
    paths: Vec<PathComponent>,
    aod: AoDDistribution,
}

impl PairChannel {
    pub fn new(paths: Vec<PathComponent>, num_angles: usize) -> Result<Self> {
        let mut aod = AoDDistribution::zeros(num_angles);
        for p in &paths {
            if p.angle >= num_angles {
                return Err(contract(format!("path angle {} out of range", p.angle)));
            }
            aod.values[p.angle] += p.coefficient();
        }
        Ok(PairChannel { paths, aod })
    }

    pub fn paths(&self) -> &[PathComponent] {
        &self.paths
    }

    pub fn aod(&self) -> &AoDDistribution {
        &self.aod
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Link {
    AliceBob,
    AliceEve,
}

/// Whether Eve's paths leave Alice through Bob's scatterers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EveScatterers {
    /// Same departure angles and path losses as Bob, independent fading.
    Shared,
    /// Eve sees her own scatterers.
    Independent,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvironmentSpec {
    pub n_a: usize,
    pub n_b: usize,
    pub n_e: usize,
    pub num_paths: usize,
    pub num_angles: usize,
    pub eve_scatterers: EveScatterers,
}

impl EnvironmentSpec {
    pub fn new(n_a: usize, n_b: usize, n_e: usize, num_paths: usize) -> Self {
        EnvironmentSpec {
            n_a,
            n_b,
            n_e,
            num_paths,
            num_angles: DEFAULT_NUM_ANGLES,
            eve_scatterers: EveScatterers::Shared,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_a == 0 || self.n_b == 0 || self.n_e == 0 {
            return Err(config("antenna counts must be at least 1"));
        }
        if self.num_angles == 0 || self.num_paths > self.num_angles {
            return Err(config(format!(
                "{} paths do not fit on {} angle bins",
                self.num_paths, self.num_angles
            )));
        }
        Ok(())
    }
}

/// Physical channels for Alice->Bob and Alice->Eve, fixed for a coherence
/// period.
#[derive(Clone, Debug, PartialEq)]
pub struct MultipathEnvironment {
    n_a: usize,
    n_b: usize,
    n_e: usize,
    num_angles: usize,
    ab: Vec<PairChannel>,
    ae: Vec<PairChannel>,
}

/// Path angles and losses shared by all subcarriers of one environment.
struct Geometry {
    bob: Vec<(usize, f64)>,
    eve: Vec<(usize, f64)>,
}

fn draw_geometry(rng: &mut SimRng, spec: &EnvironmentSpec) -> Geometry {
    let scatterers = |rng: &mut SimRng| -> Vec<(usize, f64)> {
        rng::sample_distinct(rng, spec.num_paths, spec.num_angles)
            .into_iter()
            .map(|angle| (angle, 0.5 + 0.5 * rng.random::<f64>()))
            .collect()
    };
    let bob = scatterers(rng);
    let eve = match spec.eve_scatterers {
        EveScatterers::Shared => bob.clone(),
        EveScatterers::Independent => scatterers(rng),
    };
    Geometry { bob, eve }
}

fn draw_pairs(rng: &mut SimRng, geometry: &[(usize, f64)], count: usize, num_angles: usize) -> Result<Vec<PairChannel>> {
    (0..count)
        .map(|_| {
            let paths = geometry
                .iter()
                .map(|&(angle, loss)| PathComponent {
                    angle,
                    loss,
                    amplitude: rng::rayleigh(rng, 1.0),
                    phase: rng::uniform_phase(rng),
                })
                .collect();
            PairChannel::new(paths, num_angles)
        })
        .collect()
}

/// Environment with `num_paths` scatterers shared by every antenna pair
/// (independent fading per pair), deterministic in `seed`.
pub fn synthesize_environment(seed: u64, n_a: usize, n_b: usize, n_e: usize, num_paths: usize) -> Result<MultipathEnvironment> {
    synthesize(seed, &EnvironmentSpec::new(n_a, n_b, n_e, num_paths))
}

pub fn synthesize(seed: u64, spec: &EnvironmentSpec) -> Result<MultipathEnvironment> {
    let mut envs = synthesize_subcarriers(seed, spec, 1)?;
    Ok(envs.remove(0))
}

/// Independent flat sub-channels over one scatterer geometry: all
/// subcarriers share departure angles and path losses, each draws its own
/// fading.
pub fn synthesize_subcarriers(seed: u64, spec: &EnvironmentSpec, subcarriers: usize) -> Result<Vec<MultipathEnvironment>> {
    spec.validate()?;
    let mut geo_rng = rng::stream(seed, &[label::ENVIRONMENT, 0]);
    let geometry = draw_geometry(&mut geo_rng, spec);
    (0..subcarriers)
        .map(|k| {
            let mut rng = rng::stream(seed, &[label::ENVIRONMENT, 1 + k as u64]);
            let ab = draw_pairs(&mut rng, &geometry.bob, spec.n_b * spec.n_a, spec.num_angles)?;
            let ae = draw_pairs(&mut rng, &geometry.eve, spec.n_e * spec.n_a, spec.num_angles)?;
            Ok(MultipathEnvironment {
                n_a: spec.n_a,
                n_b: spec.n_b,
                n_e: spec.n_e,
                num_angles: spec.num_angles,
                ab,
                ae,
            })
        })
        .collect()
}

impl MultipathEnvironment {
    /// Builds an environment from explicit AoD distributions (row-major by
    /// receive antenna), e.g. when loading recorded data.
    pub fn from_aods(n_a: usize, n_b: usize, n_e: usize, ab: Vec<AoDDistribution>, ae: Vec<AoDDistribution>) -> Result<Self> {
        if ab.len() != n_b * n_a || ae.len() != n_e * n_a {
            return Err(contract("AoD count does not match antenna counts"));
        }
        let num_angles = ab.first().map(AoDDistribution::len).unwrap_or(0);
        if num_angles == 0 || ab.iter().chain(&ae).any(|a| a.len() != num_angles) {
            return Err(contract("AoD distributions must share one nonzero length"));
        }
        let wrap = |v: Vec<AoDDistribution>| {
            v.into_iter()
                .map(|aod| PairChannel { paths: Vec::new(), aod })
                .collect()
        };
        Ok(MultipathEnvironment {
            n_a,
            n_b,
            n_e,
            num_angles,
            ab: wrap(ab),
            ae: wrap(ae),
        })
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }

    pub fn n_b(&self) -> usize {
        self.n_b
    }

    pub fn n_e(&self) -> usize {
        self.n_e
    }

    pub fn num_angles(&self) -> usize {
        self.num_angles
    }

    pub fn receivers(&self, link: Link) -> usize {
        match link {
            Link::AliceBob => self.n_b,
            Link::AliceEve => self.n_e,
        }
    }

    fn pairs(&self, link: Link) -> &[PairChannel] {
        match link {
            Link::AliceBob => &self.ab,
            Link::AliceEve => &self.ae,
        }
    }

    /// Channel from Alice's antenna `j` to receive antenna `i` of `link`.
    pub fn pair(&self, link: Link, i: usize, j: usize) -> &PairChannel {
        &self.pairs(link)[i * self.n_a + j]
    }

    pub fn aod(&self, link: Link, i: usize, j: usize) -> &AoDDistribution {
        self.pair(link, i, j).aod()
    }
}

/// Channel matrix in one antenna mode.
#[derive(Clone, Debug, PartialEq)]
pub struct Csi {
    pub matrix: CMatrix,
    pub mode: usize,
}

/// `sum_d G(mode, theta_d) a(theta_d)`.
pub fn csi_from_aod(aod: &AoDDistribution, pattern: &AntennaPattern, mode: usize) -> Result<C64> {
    csi_from_values(aod.values(), pattern, mode)
}

pub(crate) fn csi_from_values(values: &[C64], pattern: &AntennaPattern, mode: usize) -> Result<C64> {
    if mode >= pattern.num_modes() {
        return Err(contract(format!("mode {mode} out of range 0..{}", pattern.num_modes())));
    }
    if values.len() != pattern.num_angles() {
        return Err(contract(format!(
            "AoD length {} does not match pattern with {} angles",
            values.len(),
            pattern.num_angles()
        )));
    }
    Ok(pattern.mode_row(mode).iter().zip(values).map(|(g, a)| g * a).sum())
}

/// `n_rx x n_a` CSI of `link` in antenna mode `mode`.
pub fn channel_matrix(env: &MultipathEnvironment, pattern: &AntennaPattern, mode: usize, link: Link) -> Result<Csi> {
    let rows = env.receivers(link);
    let mut matrix = CMatrix::zeros(rows, env.n_a);
    for i in 0..rows {
        for j in 0..env.n_a {
            matrix[(i, j)] = csi_from_aod(env.aod(link, i, j), pattern, mode)?;
        }
    }
    Ok(Csi { matrix, mode })
}

/// Noise power that puts `signal_power / noise_power` at `snr_db`. Zero for
/// an infinite SNR.
pub fn noise_variance(signal_power: f64, snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        signal_power / 10f64.powf(snr_db / 10.0)
    }
}

/// Adds circularly-symmetric complex Gaussian noise of the given per-entry
/// variance.
pub fn add_noise<R: Rng + ?Sized>(signal: &mut CMatrix, variance: f64, rng: &mut R) {
    if variance == 0.0 {
        return;
    }
    for v in signal.as_mut_slice() {
        *v += rng::complex_gaussian(rng, variance);
    }
}

/// `R = H D + N` with the noise scaled to the average received power of
/// `H D`. `snr_db = +inf` is noiseless.
pub fn apply_channel<R: Rng + ?Sized>(h: &CMatrix, d: &CMatrix, snr_db: f64, rng: &mut R) -> Result<CMatrix> {
    if h.cols() != d.rows() {
        return Err(contract(format!(
            "channel has {} transmit antennas but the signal has {} rows",
            h.cols(),
            d.rows()
        )));
    }
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(config("SNR must be finite or +inf"));
    }
    let mut r = h.matmul(d);
    let variance = noise_variance(r.mean_power(), snr_db);
    add_noise(&mut r, variance, rng);
    Ok(r)
}
