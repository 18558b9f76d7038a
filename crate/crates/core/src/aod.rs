//! Sparse AoD recovery and CSI prediction.
//!
//! Alice measures a pair's CSI in a few training modes `u in S_1`. Each
//! measurement is a linear functional of the sparse AoD vector,
//! `h(u) = sum_d G(u, theta_d) a(theta_d)`, so the vector can be recovered
//! by L1 minimization and then used to predict the CSI in any other mode.
//!
//! The solver works on the penalized form
//! `min lambda |a|_1 + 1/2 |W (Phi a - h)|^2`, where `W` whitens the rows of
//! `Phi` (`W Phi` has orthonormal rows). Whitening leaves the equality
//! constraint untouched but makes the gradient step perfectly conditioned,
//! which is what lets the `lambda` continuation reach basis-pursuit accuracy
//! in a few thousand iterations. Each stage runs monotone FISTA, so the
//! objective never increases within a stage.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

// Float supplies f64 math without std; unused when std is in the graph.
#[allow(unused_imports)]
use num_traits::Float;
use num_traits::Zero;

use crate::channel::{csi_from_values, AntennaPattern, AoDDistribution};
use crate::error::{config, contract, Result};
use crate::linalg::{norm, CMatrix, C64};
use crate::rng::{self, label};

/// `count` distinct modes out of `0..total`, sorted, deterministic in `seed`.
pub fn select_training_modes(seed: u64, count: usize, total: usize) -> Result<Vec<usize>> {
    if count > total {
        return Err(config(format!("cannot pick {count} training modes out of {total}")));
    }
    let mut rng = rng::stream(seed, &[label::TRAINING_MODES]);
    let mut modes = rng::sample_distinct(&mut rng, count, total);
    modes.sort_unstable();
    Ok(modes)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensingProblem {
    sensing_matrix: CMatrix,
    measurements: Vec<C64>,
    training_modes: Vec<usize>,
}

impl SensingProblem {
    pub fn new(pattern: &AntennaPattern, training_modes: &[usize], measurements: Vec<C64>) -> Result<Self> {
        if training_modes.len() != measurements.len() {
            return Err(contract(format!(
                "{} training modes but {} measurements",
                training_modes.len(),
                measurements.len()
            )));
        }
        let mut seen = vec![false; pattern.num_modes()];
        for &u in training_modes {
            if u >= pattern.num_modes() || seen[u] {
                return Err(contract(format!("training mode {u} is out of range or repeated")));
            }
            seen[u] = true;
        }
        Ok(SensingProblem {
            sensing_matrix: pattern.sensing_matrix(training_modes)?,
            measurements,
            training_modes: training_modes.to_vec(),
        })
    }

    /// Noiseless measurements of `aod`.
    pub fn from_aod(pattern: &AntennaPattern, training_modes: &[usize], aod: &AoDDistribution) -> Result<Self> {
        let measurements = training_modes
            .iter()
            .map(|&u| csi_from_values(aod.values(), pattern, u))
            .collect::<Result<Vec<_>>>()?;
        Self::new(pattern, training_modes, measurements)
    }

    pub fn sensing_matrix(&self) -> &CMatrix {
        &self.sensing_matrix
    }

    pub fn measurements(&self) -> &[C64] {
        &self.measurements
    }

    pub fn training_modes(&self) -> &[usize] {
        &self.training_modes
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BpOptions {
    /// Final penalty. `None` means `1e-6 * |A^H b|_inf` in whitened units.
    pub lambda: Option<f64>,
    /// Factor applied to `lambda` between stages.
    pub continuation: f64,
    /// Relative step-length tolerance of the final stage.
    pub tol: f64,
    /// Looser tolerance for the intermediate stages.
    pub stage_tol: f64,
    /// Iteration budget over all stages.
    pub max_iter: usize,
    /// Keep the per-iteration objective for inspection.
    pub record_objective: bool,
}

impl Default for BpOptions {
    fn default() -> Self {
        BpOptions {
            lambda: None,
            continuation: 0.5,
            tol: 1e-8,
            stage_tol: 1e-3,
            max_iter: 5000,
            record_objective: false,
        }
    }
}

/// Objective value after one iteration of continuation stage `stage`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveSample {
    pub stage: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparseSolution {
    pub aod_estimate: AoDDistribution,
    /// `max_u |h(u) - sum_d G(u, theta_d) a(theta_d)|`, recomputed after the
    /// solve on the original (unwhitened) problem.
    pub residual: f64,
    pub solver_iterations: usize,
    pub converged: bool,
    pub objective: Vec<ObjectiveSample>,
}

/// Operator and data of the problem actually iterated on.
struct Whitened {
    a: CMatrix,
    b: Vec<C64>,
    lipschitz: f64,
}

fn whiten(problem: &SensingProblem) -> Whitened {
    let phi = &problem.sensing_matrix;
    let h = CMatrix::column_vector(&problem.measurements);
    if let Some(l) = phi.matmul(&phi.adjoint()).cholesky() {
        let a = l.solve_lower(phi);
        let b = l.solve_lower(&h).into_vec();
        if a.is_finite() && b.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            // W Phi has orthonormal rows, so |A|_2 = 1.
            return Whitened { a, b, lipschitz: 1.0 };
        }
    }
    // Rank-deficient rows (e.g. a pattern with identical modes): iterate on
    // the raw problem with a power-iteration step size.
    let lipschitz = spectral_norm_sq(phi) * 1.01;
    Whitened {
        a: phi.clone(),
        b: problem.measurements.clone(),
        lipschitz: lipschitz.max(f64::MIN_POSITIVE),
    }
}

fn spectral_norm_sq(a: &CMatrix) -> f64 {
    let mut x = vec![C64::new(1.0, 0.0); a.cols()];
    let mut estimate = 0.0;
    for _ in 0..100 {
        let y = a.adjoint_mul_vec(&a.mul_vec(&x));
        let n = norm(&y);
        if n == 0.0 {
            return 0.0;
        }
        estimate = n / norm(&x);
        x = y.into_iter().map(|v| v / n).collect();
    }
    estimate
}

fn soft_threshold(z: C64, t: f64) -> C64 {
    let m = z.norm();
    if m <= t {
        C64::zero()
    } else {
        z * ((m - t) / m)
    }
}

/// Least squares restricted to the support of `x`. Soft thresholding
/// shrinks every surviving coefficient by `lambda`; refitting on the support
/// removes that bias and usually lands on the exact sparse solution.
fn debias(a: &CMatrix, b: &[C64], x: &[C64]) -> Option<(Vec<C64>, Vec<C64>)> {
    let peak = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let support: Vec<usize> = (0..x.len()).filter(|&k| x[k].norm() > 1e-3 * peak).collect();
    if support.is_empty() || support.len() > a.rows() {
        return None;
    }
    let sub = CMatrix::from_fn(a.rows(), support.len(), |i, k| a[(i, support[k])]);
    let gram = sub.adjoint().matmul(&sub);
    let rhs = CMatrix::column_vector(&sub.adjoint_mul_vec(b));
    let coef = gram.lu()?.solve(&rhs).into_vec();
    if !coef.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        return None;
    }
    let mut out = vec![C64::zero(); x.len()];
    for (k, &s) in support.iter().enumerate() {
        out[s] = coef[k];
    }
    let a_out = sub.mul_vec(&coef);
    Some((out, a_out))
}

fn objective(lambda: f64, x: &[C64], ax: &[C64], b: &[C64]) -> f64 {
    let l1: f64 = x.iter().map(|v| v.norm()).sum();
    let fit: f64 = ax.iter().zip(b).map(|(p, q)| (p - q).norm_sqr()).sum();
    lambda * l1 + 0.5 * fit
}

/// Complex L1 recovery with `lambda` continuation.
pub fn solve_bp(problem: &SensingProblem, opts: &BpOptions) -> Result<SparseSolution> {
    if !(opts.continuation > 0.0 && opts.continuation < 1.0) {
        return Err(config("continuation factor must lie in (0, 1)"));
    }
    if !(opts.tol > 0.0 && opts.stage_tol > 0.0) {
        return Err(config("solver tolerances must be positive"));
    }
    let num_angles = problem.sensing_matrix.cols();
    let Whitened { a, b, lipschitz } = whiten(problem);

    let g = a.adjoint_mul_vec(&b);
    let gmax = g.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if gmax == 0.0 || problem.measurements.is_empty() {
        return Ok(SparseSolution {
            aod_estimate: AoDDistribution::zeros(num_angles),
            residual: problem.measurements.iter().map(|v| v.norm()).fold(0.0, f64::max),
            solver_iterations: 0,
            converged: true,
            objective: Vec::new(),
        });
    }
    let lambda_min = opts.lambda.unwrap_or(1e-6 * gmax);
    if !(lambda_min > 0.0) {
        return Err(config("final lambda must be positive"));
    }
    let mut lambda = (0.5 * gmax).max(lambda_min);

    let mut x = vec![C64::zero(); num_angles];
    let mut ax = vec![C64::zero(); b.len()];
    let mut y = x.clone();
    let mut ay = ax.clone();
    let mut t = 1.0f64;
    let mut fx = objective(lambda, &x, &ax, &b);
    let mut stage = 0;
    let mut iterations = 0;
    let mut converged = false;
    let mut trace = Vec::new();

    while iterations < opts.max_iter {
        iterations += 1;
        let last_stage = lambda <= lambda_min;
        let tol = if last_stage { opts.tol } else { opts.stage_tol };

        let resid: Vec<C64> = ay.iter().zip(&b).map(|(p, q)| p - q).collect();
        let grad = a.adjoint_mul_vec(&resid);
        let z: Vec<C64> = y
            .iter()
            .zip(&grad)
            .map(|(yk, gk)| soft_threshold(yk - gk / lipschitz, lambda / lipschitz))
            .collect();
        let az = a.mul_vec(&z);
        let fz = objective(lambda, &z, &az, &b);
        let step: f64 = z.iter().zip(&y).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt();

        let accept = fz <= fx;
        // Gradient restart: momentum pointing against the prox step is
        // dropped, which keeps the fast local rate near a sparse solution.
        let uphill: f64 = y
            .iter()
            .zip(&z)
            .zip(&x)
            .map(|((yk, zk), xk)| ((yk - zk).conj() * (zk - xk)).re)
            .sum();
        if uphill > 0.0 {
            t = 1.0;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let (x_next, ax_next, f_next) = if accept { (z.clone(), az.clone(), fz) } else { (x.clone(), ax.clone(), fx) };
        let c1 = t / t_next;
        let c2 = (t - 1.0) / t_next;
        for k in 0..num_angles {
            y[k] = x_next[k] + (z[k] - x_next[k]) * c1 + (x_next[k] - x[k]) * c2;
        }
        for k in 0..ay.len() {
            ay[k] = ax_next[k] + (az[k] - ax_next[k]) * c1 + (ax_next[k] - ax[k]) * c2;
        }
        x = x_next;
        ax = ax_next;
        fx = f_next;
        t = t_next;
        if opts.record_objective {
            trace.push(ObjectiveSample { stage, value: fx });
        }

        if step <= tol * norm(&x).max(1.0) {
            if last_stage {
                converged = true;
                break;
            }
            lambda = (lambda * opts.continuation).max(lambda_min);
            if let Some((polished, a_polished)) = debias(&a, &b, &x) {
                if objective(lambda, &polished, &a_polished, &b) < objective(lambda, &x, &ax, &b) {
                    x = polished;
                    ax = a_polished;
                }
            }
            stage += 1;
            t = 1.0;
            y.clone_from(&x);
            ay.clone_from(&ax);
            fx = objective(lambda, &x, &ax, &b);
        }
    }

    if let Some((polished, a_polished)) = debias(&a, &b, &x) {
        if objective(lambda, &polished, &a_polished, &b) <= objective(lambda, &x, &ax, &b) {
            x = polished;
        }
    }

    let predicted = problem.sensing_matrix.mul_vec(&x);
    let residual = predicted
        .iter()
        .zip(&problem.measurements)
        .map(|(p, h)| (p - h).norm())
        .fold(0.0, f64::max);
    Ok(SparseSolution {
        aod_estimate: AoDDistribution::from_values(x),
        residual,
        solver_iterations: iterations,
        converged,
        objective: trace,
    })
}

/// `sum_d G(mode, theta_d) a_hat(theta_d)`.
pub fn predict_csi(solution: &SparseSolution, pattern: &AntennaPattern, mode: usize) -> Result<C64> {
    csi_from_values(solution.aod_estimate.values(), pattern, mode)
}

/// `|a_hat - a| / |a|`.
pub fn relative_error(estimate: &AoDDistribution, truth: &AoDDistribution) -> f64 {
    let diff: Vec<C64> = estimate.values().iter().zip(truth.values()).map(|(p, q)| p - q).collect();
    norm(&diff) / norm(truth.values())
}

/// Mean of `|h_hat(u) - h(u)| / |h(u)|` over every mode not in
/// `training_modes`.
pub fn mean_prediction_error(estimate: &AoDDistribution, truth: &AoDDistribution, pattern: &AntennaPattern, training_modes: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for u in (0..pattern.num_modes()).filter(|u| !training_modes.contains(u)) {
        let h = csi_from_values(truth.values(), pattern, u)?;
        let h_hat = csi_from_values(estimate.values(), pattern, u)?;
        if h.norm() > 0.0 {
            total += (h_hat - h).norm() / h.norm();
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}
