use rand::Rng;
use robin_core::attacker::*;
use robin_core::blinding::{encode, BlindingFilter, QAM4};
use robin_core::channel::{add_noise, noise_variance};
use robin_core::rng::{self, SimRng};
use robin_core::{CMatrix, C64};

fn gaussian(rows: usize, cols: usize, g: &mut SimRng) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| rng::complex_gaussian(g, 1.0))
}

fn symbols(rows: usize, cols: usize, g: &mut SimRng) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| QAM4[g.random_range(0..4)])
}

/// Eve's reception of `frames` frames with `n_a = 2`, `n_b = 1`, `n_e = 2`.
/// A fresh random channel pair is drawn every `period` frames.
fn blinded_run(seed: u64, frames: usize, len: usize, period: usize, known: usize, ndr: f64) -> (CMatrix, CMatrix, Vec<usize>) {
    let mut g = rng::stream(seed, &[]);
    let mut r_cols = Vec::new();
    let mut d_cols = Vec::new();
    let mut state = None;
    for f in 0..frames {
        if f % period == 0 {
            let h_ab = gaussian(1, 2, &mut g);
            let h_ae = gaussian(2, 2, &mut g);
            let filt = BlindingFilter::new(&h_ab, seed ^ f as u64).unwrap();
            state = Some((h_ae, filt));
        }
        let (h_ae, filt) = state.as_ref().unwrap();
        let d = symbols(1, len, &mut g);
        let x = encode(&filt.f_a, &d, ndr, &mut g).unwrap();
        let mut r = h_ae.matmul(&x);
        let p = r.mean_power();
        add_noise(&mut r, noise_variance(p, 25.0), &mut g);
        r_cols.push(r);
        d_cols.push(d);
    }
    let hcat = |b: &[CMatrix], rows: usize| CMatrix::from_fn(rows, frames * len, |i, t| b[t / len][(i, t % len)]);
    let known_pos = (0..frames).flat_map(|f| (0..known).map(move |k| f * len + k)).collect();
    (hcat(&r_cols, 2), hcat(&d_cols, 1), known_pos)
}

fn smoothed(trace: &[f64], w: usize) -> Vec<f64> {
    trace.windows(w).map(|x| x.iter().sum::<f64>() / w as f64).collect()
}

#[test]
fn two_by_two_mixture_converges() {
    let mut g = rng::stream(4, &[]);
    let mix = CMatrix::from_vec(2, 2, vec![C64::new(1.0, 0.0), C64::new(0.0, 0.3), C64::new(0.2, 0.0), C64::new(0.8, -0.1)]).unwrap();
    let mut s = AttackerState::new(2, 2, 0.5, 1e-8).unwrap();
    for _ in 0..100 {
        let d: Vec<C64> = (0..2).map(|_| QAM4[g.random_range(0..4)]).collect();
        s.update(&mix.mul_vec(&d), &d).unwrap();
    }
    // the trained filter should invert the mixture
    let residual = s.filter().matmul(&mix).sub(&CMatrix::identity(2)).max_abs();
    assert!(residual < 1e-6, "residual {residual}");
}

#[test]
fn filter_stays_bounded() {
    let mut g = rng::stream(5, &[]);
    let mut s = AttackerState::new(1, 3, 1.9, 1e-8).unwrap();
    for _ in 0..10_000 {
        let r: Vec<C64> = (0..3).map(|_| C64::new(g.random_range(-1.0..1.0), g.random_range(-1.0..1.0))).collect();
        s.update(&r, &[QAM4[g.random_range(0..4)]]).unwrap();
        assert!(s.filter().is_finite());
    }
    assert!(s.filter().max_abs() < 1e6);
    assert_eq!(s.iterations_run(), 10_000);
}

#[test]
fn scalar_channel_inversion() {
    let mut g = rng::stream(6, &[]);
    let h = C64::new(0.4, -0.9);
    let d = symbols(1, 500, &mut g);
    let r = d.scale(h);
    let known: Vec<usize> = (0..30).collect();
    let out = train_and_attack(&r, &d, &known, &AttackConfig::default()).unwrap();
    assert_eq!(out.final_ser, 0.0);
    assert_eq!(out.unknown_positions, 470);
    assert_eq!(out.trace.len(), 30);
}

#[test]
fn static_channel_falls_to_low_ser() {
    let mut finals = Vec::new();
    let mut traces = Vec::new();
    for seed in 0..20 {
        let (r, d, known) = blinded_run(seed, 120, 192, 120, 2, 1.0);
        let out = train_and_attack(&r, &d, &known, &AttackConfig { trace_positions: Some(512), ..AttackConfig::default() }).unwrap();
        finals.push(out.final_ser);
        traces.push(out.trace);
    }
    let mean = finals.iter().sum::<f64>() / finals.len() as f64;
    assert!(mean < 0.15, "mean Eve SER {mean}");
    let avg: Vec<f64> = (0..240).map(|k| traces.iter().map(|t| t[k]).sum::<f64>() / traces.len() as f64).collect();
    let s = smoothed(&avg, 10);
    assert!(avg[0] > 0.3 && s[s.len() - 1] < 0.15);
    // decreasing on average: every later quarter is no worse than the one before
    let q = s.len() / 4;
    let quarter = |k: usize| s[k * q..(k + 1) * q].iter().sum::<f64>() / q as f64;
    for k in 1..4 {
        assert!(quarter(k) <= quarter(k - 1) + 1e-9);
    }
}

#[test]
fn per_frame_switching_leaves_eve_guessing() {
    let mut total = 0.0;
    for seed in 0..100 {
        let (r, d, known) = blinded_run(1000 + seed, 120, 192, 1, 2, 1.0);
        let cfg = AttackConfig { trace_positions: Some(64), ..AttackConfig::default() };
        total += train_and_attack(&r, &d, &known, &cfg).unwrap().final_ser;
    }
    let mean = total / 100.0;
    assert!((mean - 0.75).abs() < 0.05, "mean Eve SER {mean}");
}

#[test]
fn more_known_symbols_do_not_hurt_eve() {
    let cfg = AttackConfig { trace_positions: Some(64), ..AttackConfig::default() };
    let mut few = 0.0;
    let mut many = 0.0;
    for seed in 0..20 {
        let (r, d, k2) = blinded_run(2000 + seed, 120, 192, 120, 2, 1.0);
        few += train_and_attack(&r, &d, &k2, &cfg).unwrap().final_ser;
        let k20: Vec<usize> = (0..120).flat_map(|f| (0..20).map(move |k| f * 192 + k)).collect();
        many += train_and_attack(&r, &d, &k20, &cfg).unwrap().final_ser;
    }
    assert!(many <= few + 1e-9, "2 known: {few}, 20 known: {many}");
}

#[test]
fn trace_subsampling_keeps_final_ser() {
    let (r, d, known) = blinded_run(3, 20, 192, 20, 2, 1.0);
    let full = train_and_attack(&r, &d, &known, &AttackConfig::default()).unwrap();
    let thin = train_and_attack(&r, &d, &known, &AttackConfig { trace_positions: Some(64), ..AttackConfig::default() }).unwrap();
    assert_eq!(full.final_ser, thin.final_ser);
    assert_eq!(full.decoded, thin.decoded);
    assert_eq!(full.trace.len(), thin.trace.len());
}
