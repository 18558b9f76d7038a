//! Orthogonal blinding and the 4-QAM modem.
//!
//! Alice stacks Bob's channel `H_AB` over a set of artificial-noise channels
//! `H_AN` that span its null space, and precodes with the right inverse of
//! that stack. Bob sees only his data; any receiver whose channel is not in
//! the row space of `H_AB` also sees the noise.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{config, contract, Error, Result};
use crate::linalg::{gram_schmidt_rows, CMatrix, C64};
use crate::rng::{self, label};

/// Condition-number ceiling for the Gram matrices we invert.
pub const CONDITION_LIMIT: f64 = 1e12;

/// `H_p = H^H (H H^H)^{-1} H`, the orthogonal projector onto the row space
/// of `h_ab`.
pub fn projection_matrix(h_ab: &CMatrix) -> Result<CMatrix> {
    if h_ab.rows() == 0 || h_ab.rows() > h_ab.cols() {
        return Err(contract(format!(
            "projector needs 1 <= n_b <= n_a, got a {}x{} channel",
            h_ab.rows(),
            h_ab.cols()
        )));
    }
    let gram = h_ab.matmul(&h_ab.adjoint());
    let condition = gram.condition_number();
    if !(condition <= CONDITION_LIMIT) {
        return Err(Error::SingularChannel { condition });
    }
    let lu = gram.lu().ok_or(Error::SingularChannel { condition })?;
    Ok(h_ab.adjoint().matmul(&lu.solve(h_ab)))
}

/// Random orthonormal basis of the null space of `h_ab`, one row per AN
/// channel, seeded from `(seed, NULL_SPACE)`.
pub fn null_space_channels(h_ab: &CMatrix, seed: u64) -> Result<CMatrix> {
    null_space_channels_with(h_ab, &mut rng::stream(seed, &[label::NULL_SPACE]))
}

/// Same as [`null_space_channels`] drawing the seed matrix from `rng`.
///
/// A uniform complex matrix `H'` is projected off the row space of `h_ab`
/// and the remainder orthonormalized with Gram-Schmidt.
pub fn null_space_channels_with<R: Rng + ?Sized>(h_ab: &CMatrix, rng: &mut R) -> Result<CMatrix> {
    let (n_b, n_a) = h_ab.shape();
    if n_a <= n_b {
        return Err(Error::NoNullSpace { n_tx: n_a, n_rx: n_b });
    }
    let h_p = projection_matrix(h_ab)?;
    // A draw that lands (numerically) in the row space is astronomically
    // unlikely; retry a few times rather than fail.
    for _ in 0..8 {
        let seed_matrix = CMatrix::from_fn(n_a - n_b, n_a, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let residual = seed_matrix.sub(&seed_matrix.matmul(&h_p));
        if let Some(q) = gram_schmidt_rows(&residual, 1e-8) {
            return Ok(q);
        }
    }
    Err(Error::SingularChannel { condition: f64::INFINITY })
}

/// `F_A = S^H (S S^H)^{-1}` for the stack `S = [h_ab; h_an]`.
pub fn transmit_filter(h_ab: &CMatrix, h_an: &CMatrix) -> Result<CMatrix> {
    if h_ab.cols() != h_an.cols() || h_ab.rows() + h_an.rows() != h_ab.cols() {
        return Err(contract(format!(
            "stack of {}x{} and {}x{} is not square",
            h_ab.rows(),
            h_ab.cols(),
            h_an.rows(),
            h_an.cols()
        )));
    }
    let stack = h_ab.vstack(h_an);
    let gram = stack.matmul(&stack.adjoint());
    let condition = gram.condition_number();
    if !(condition <= CONDITION_LIMIT) {
        return Err(Error::SingularFilter { condition });
    }
    let lu = gram.lu().ok_or(Error::SingularFilter { condition })?;
    // (S S^H) is Hermitian, so F_A^H = (S S^H)^{-1} S.
    Ok(lu.solve(&stack).adjoint())
}

/// Bob's channel, the AN channels built for it and the resulting precoder.
#[derive(Clone, Debug, PartialEq)]
pub struct BlindingFilter {
    pub h_ab: CMatrix,
    pub h_an: CMatrix,
    pub f_a: CMatrix,
}

impl BlindingFilter {
    pub fn new(h_ab: &CMatrix, seed: u64) -> Result<Self> {
        Self::with_rng(h_ab, &mut rng::stream(seed, &[label::NULL_SPACE]))
    }

    pub fn with_rng<R: Rng + ?Sized>(h_ab: &CMatrix, rng: &mut R) -> Result<Self> {
        let h_an = null_space_channels_with(h_ab, rng)?;
        let f_a = transmit_filter(h_ab, &h_an)?;
        Ok(BlindingFilter {
            h_ab: h_ab.clone(),
            h_an,
            f_a,
        })
    }

    pub fn n_a(&self) -> usize {
        self.f_a.rows()
    }

    pub fn n_b(&self) -> usize {
        self.h_ab.rows()
    }
}

/// `F_A [D_B; NDR * AN] / (NDR + 1)`.
///
/// `data` holds one row per Bob stream. The AN rows are complex Gaussian with
/// the constellation's average power, so at NDR 1 data and noise rows carry
/// equal power before the common scale.
pub fn encode<R: Rng + ?Sized>(f_a: &CMatrix, data: &CMatrix, ndr: f64, rng: &mut R) -> Result<CMatrix> {
    let an_rows = f_a
        .cols()
        .checked_sub(data.rows())
        .ok_or_else(|| contract("more data streams than transmit antennas"))?;
    let an = CMatrix::from_fn(an_rows, data.cols(), |_, _| rng::complex_gaussian(rng, SYMBOL_POWER));
    encode_with_noise(f_a, data, &an, ndr)
}

/// [`encode`] with caller-supplied AN samples.
pub fn encode_with_noise(f_a: &CMatrix, data: &CMatrix, an: &CMatrix, ndr: f64) -> Result<CMatrix> {
    if !(ndr.is_finite() && ndr >= 0.0) {
        return Err(config(format!("NDR must be finite and >= 0, got {ndr}")));
    }
    if data.cols() == 0 {
        return Err(contract("nothing to encode"));
    }
    if f_a.rows() != f_a.cols() || data.rows() + an.rows() != f_a.cols() || an.cols() != data.cols() {
        return Err(contract(format!(
            "filter {}x{} cannot precode {} data rows and {} AN rows",
            f_a.rows(),
            f_a.cols(),
            data.rows(),
            an.rows()
        )));
    }
    let scale = 1.0 / (ndr + 1.0);
    let stacked = data.scale(C64::new(scale, 0.0)).vstack(&an.scale(C64::new(ndr * scale, 0.0)));
    Ok(f_a.matmul(&stacked))
}

/// Constellation in index order; the index bits are `(re < 0, im < 0)`.
pub const QAM4: [C64; 4] = [
    C64 { re: 1.0, im: 1.0 },
    C64 { re: 1.0, im: -1.0 },
    C64 { re: -1.0, im: 1.0 },
    C64 { re: -1.0, im: -1.0 },
];

/// Average power of [`QAM4`].
pub const SYMBOL_POWER: f64 = 2.0;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SymbolStream {
    symbols: Vec<C64>,
}

impl SymbolStream {
    /// Rejects anything that is not exactly a constellation point.
    pub fn from_symbols(symbols: Vec<C64>) -> Result<Self> {
        if let Some(s) = symbols.iter().find(|s| !QAM4.contains(s)) {
            return Err(contract(format!("{s} is not a 4-QAM point")));
        }
        Ok(SymbolStream { symbols })
    }

    /// Wraps outputs of [`decide`], which are always on the grid.
    pub(crate) fn from_decisions(symbols: Vec<C64>) -> Self {
        SymbolStream { symbols }
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Self {
        SymbolStream {
            symbols: indices.into_iter().map(|i| QAM4[i & 3]).collect(),
        }
    }

    /// `len` uniformly random symbols.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Self {
        Self::from_indices((0..len).map(|_| rng.random_range(0..4)))
    }

    pub fn symbols(&self) -> &[C64] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.symbols.iter().map(|&s| symbol_index(s)).collect()
    }

    /// Two bits per symbol, Gray order.
    pub fn bits(&self) -> Vec<bool> {
        self.indices().iter().flat_map(|&i| [i & 2 != 0, i & 1 != 0]).collect()
    }
}

fn symbol_index(s: C64) -> usize {
    (usize::from(s.re < 0.0) << 1) | usize::from(s.im < 0.0)
}

/// Gray-mapped 4-QAM: the first bit of each pair picks the sign of the real
/// part, the second the imaginary part. An odd trailing bit is padded with 0.
pub fn modulate(bits: &[bool]) -> SymbolStream {
    SymbolStream::from_indices(bits.chunks(2).map(|pair| {
        let b0 = usize::from(pair[0]);
        let b1 = usize::from(pair.get(1).copied().unwrap_or(false));
        (b0 << 1) | b1
    }))
}

/// Nearest constellation point. A value exactly on a decision boundary goes
/// to the point with the smaller index, which is the non-negative side.
pub fn decide(r: C64) -> C64 {
    let re = if r.re >= 0.0 { 1.0 } else { -1.0 };
    let im = if r.im >= 0.0 { 1.0 } else { -1.0 };
    C64::new(re, im)
}

pub fn demodulate(received: &[C64]) -> SymbolStream {
    SymbolStream {
        symbols: received.iter().map(|&r| decide(r)).collect(),
    }
}

/// Fraction of positions where the streams differ.
pub fn ser(reference: &SymbolStream, decoded: &SymbolStream) -> Result<f64> {
    if reference.len() != decoded.len() {
        return Err(contract(format!(
            "SER over streams of length {} and {}",
            reference.len(),
            decoded.len()
        )));
    }
    if reference.is_empty() {
        return Ok(0.0);
    }
    Ok(symbol_errors(reference.symbols(), decoded.symbols()) as f64 / reference.len() as f64)
}

pub(crate) fn symbol_errors(a: &[C64], b: &[C64]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}
