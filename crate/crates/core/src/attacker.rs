//! Known-plaintext eavesdropper.
//!
//! Eve has `n_e` antennas and knows a few transmitted symbols. She trains a
//! linear receive filter `F_E` with NLMS so that `F_E r_e` tracks the known
//! symbols, which suppresses the artificial noise whenever the precoder stays
//! fixed long enough, then decodes everything else with it.

use alloc::format;
use alloc::vec::Vec;

use crate::blinding::{decide, SymbolStream};
use crate::error::{config, contract, Result};
use crate::linalg::{CMatrix, C64};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttackConfig {
    /// NLMS step size, in (0, 2).
    pub step_size: f64,
    /// Regularizer added to `|r|^2`.
    pub epsilon: f64,
    /// Number of passes over the known symbols.
    pub passes: usize,
    /// Cap on the number of unknown positions scored after each iteration;
    /// `None` scores all of them. The final SER always uses every position.
    pub trace_positions: Option<usize>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            step_size: 0.5,
            epsilon: 1e-8,
            passes: 1,
            trace_positions: None,
        }
    }
}

/// Receive filter under training: one row per data stream, one column per
/// Eve antenna.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackerState {
    f_e: CMatrix,
    step_size: f64,
    epsilon: f64,
    iterations_run: usize,
}

impl AttackerState {
    /// All-zero filter.
    pub fn new(n_streams: usize, n_e: usize, step_size: f64, epsilon: f64) -> Result<Self> {
        if !(step_size > 0.0 && step_size < 2.0) {
            return Err(config(format!("NLMS step size must lie in (0, 2), got {step_size}")));
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(config("NLMS epsilon must be finite and >= 0"));
        }
        if n_streams == 0 || n_e == 0 {
            return Err(config("attacker needs at least one stream and one antenna"));
        }
        Ok(AttackerState {
            f_e: CMatrix::zeros(n_streams, n_e),
            step_size,
            epsilon,
            iterations_run: 0,
        })
    }

    pub fn filter(&self) -> &CMatrix {
        &self.f_e
    }

    pub fn iterations_run(&self) -> usize {
        self.iterations_run
    }

    /// `F_E r`.
    pub fn estimate(&self, r_e: &[C64]) -> Vec<C64> {
        self.f_e.mul_vec(r_e)
    }

    /// One NLMS step: `F_E += mu e r^H / (eps + |r|^2)` with `e = known - F_E r`.
    pub fn update(&mut self, r_e: &[C64], known: &[C64]) -> Result<()> {
        let (n_streams, n_e) = self.f_e.shape();
        if r_e.len() != n_e || known.len() != n_streams {
            return Err(contract(format!(
                "NLMS update with {} samples and {} symbols for a {n_streams}x{n_e} filter",
                r_e.len(),
                known.len()
            )));
        }
        let power: f64 = r_e.iter().map(|v| v.norm_sqr()).sum();
        let gain = self.step_size / (self.epsilon + power);
        if gain.is_finite() {
            let y = self.estimate(r_e);
            for s in 0..n_streams {
                let e = (known[s] - y[s]) * gain;
                for (f, r) in self.f_e.row_mut(s).iter_mut().zip(r_e) {
                    *f += e * r.conj();
                }
            }
        }
        self.iterations_run += 1;
        Ok(())
    }
}

/// Functional form of [`AttackerState::update`].
pub fn nlms_update(mut state: AttackerState, r_e: &[C64], known: &[C64]) -> Result<AttackerState> {
    state.update(r_e, known)?;
    Ok(state)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackOutcome {
    /// Decisions at the unknown positions, one stream per data row.
    pub decoded: Vec<SymbolStream>,
    /// SER after each NLMS iteration.
    pub trace: Vec<f64>,
    /// SER of `decoded` against the reference.
    pub final_ser: f64,
    pub unknown_positions: usize,
    /// True when there were no known symbols to train on.
    pub untrained: bool,
}

/// Trains on the known positions (in the order given) and decodes the rest.
///
/// `r_e_all` holds Eve's reception, one row per antenna and one column per
/// symbol time. `reference` holds the transmitted symbols, one row per data
/// stream: Eve reads it only at `known_positions`; the other columns are used
/// to score her.
pub fn train_and_attack(
    r_e_all: &CMatrix,
    reference: &CMatrix,
    known_positions: &[usize],
    cfg: &AttackConfig,
) -> Result<AttackOutcome> {
    let (n_e, len) = r_e_all.shape();
    let n_streams = reference.rows();
    if reference.cols() != len {
        return Err(contract("reception and reference cover different symbol times"));
    }
    if let Some(&p) = known_positions.iter().find(|&&p| p >= len) {
        return Err(contract(format!("known position {p} outside 0..{len}")));
    }
    let mut is_known = alloc::vec![false; len];
    for &p in known_positions {
        is_known[p] = true;
    }
    let unknown: Vec<usize> = (0..len).filter(|&t| !is_known[t]).collect();
    let traced: Vec<usize> = match cfg.trace_positions {
        Some(cap) if cap < unknown.len() => (0..cap).map(|k| unknown[k * unknown.len() / cap]).collect(),
        _ => unknown.clone(),
    };

    // Column-major copies so each symbol time is a contiguous slice.
    let columns = r_e_all.transpose();
    let refs = reference.transpose();
    let column = |t: usize| &columns.as_slice()[t * n_e..(t + 1) * n_e];
    let truth = |t: usize| &refs.as_slice()[t * n_streams..(t + 1) * n_streams];

    let mut state = AttackerState::new(n_streams, n_e, cfg.step_size, cfg.epsilon)?;
    let score = |state: &AttackerState, positions: &[usize]| -> f64 {
        if positions.is_empty() {
            return 0.0;
        }
        let errors: usize = positions
            .iter()
            .map(|&t| {
                let y = state.estimate(column(t));
                y.iter().zip(truth(t)).filter(|(y, s)| decide(**y) != **s).count()
            })
            .sum();
        errors as f64 / (positions.len() * n_streams) as f64
    };

    let mut trace = Vec::with_capacity(cfg.passes * known_positions.len());
    for _ in 0..cfg.passes {
        for &p in known_positions {
            state.update(column(p), truth(p))?;
            trace.push(score(&state, &traced));
        }
    }

    let mut decoded = alloc::vec![Vec::with_capacity(unknown.len()); n_streams];
    for &t in &unknown {
        for (s, y) in state.estimate(column(t)).into_iter().enumerate() {
            decoded[s].push(decide(y));
        }
    }
    let final_ser = score(&state, &unknown);
    Ok(AttackOutcome {
        decoded: decoded.into_iter().map(SymbolStream::from_decisions).collect(),
        trace,
        final_ser,
        unknown_positions: unknown.len(),
        untrained: known_positions.is_empty(),
    })
}
