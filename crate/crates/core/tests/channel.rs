use robin_core::channel::*;
use robin_core::rng;
use robin_core::{CMatrix, C64};

fn directional() -> AntennaPattern {
    make_pattern(&PatternFamily::from_name("directional").unwrap(), 360, 360).unwrap()
}

// Plain double loop over angles, reading the base row through the rotation.
fn csi_by_loop(aod: &AoDDistribution, p: &AntennaPattern, mode: usize) -> C64 {
    let d_total = p.num_angles();
    let mut acc = C64::new(0.0, 0.0);
    for d in 0..d_total {
        let g = p.gain(0, (d + d_total - mode) % d_total);
        acc += g * aod.values()[d];
    }
    acc
}

#[test]
fn rotation_holds_for_every_mode_and_angle() {
    let p = directional();
    for u in 0..360 {
        for d in 0..360 {
            assert_eq!(p.gain(u, d), p.gain(0, (d + 360 - u) % 360));
        }
    }
}

#[test]
fn omni_channel_does_not_depend_on_mode() {
    let p = make_pattern(&PatternFamily::Omni, 360, 360).unwrap();
    let env = synthesize_environment(3, 2, 1, 2, 5).unwrap();
    let h0 = channel_matrix(&env, &p, 0, Link::AliceEve).unwrap().matrix;
    for u in 1..360 {
        let h = channel_matrix(&env, &p, u, Link::AliceEve).unwrap().matrix;
        assert_eq!(h.sub(&h0).max_abs(), 0.0);
    }
    // and equals the physical coefficient
    assert_eq!(h0[(0, 1)], env.aod(Link::AliceEve, 0, 1).physical_coefficient());
}

#[test]
fn mode_rows_are_distinguishable() {
    let c = directional().max_mode_correlation();
    assert!(c < 0.99, "max mode correlation {c}");
}

#[test]
fn every_row_has_some_gain() {
    let p = directional();
    for u in 0..360 {
        assert!(p.mode_row(u).iter().any(|g| g.norm() > 0.0));
        assert!(p.mode_row(u).iter().all(|g| g.re.is_finite() && g.im.is_finite()));
    }
}

#[test]
fn unknown_family_is_rejected() {
    assert!(PatternFamily::from_name("yagi").is_err());
}

#[test]
fn five_paths_everywhere() {
    let env = synthesize_environment(1, 2, 1, 2, 5).unwrap();
    for link in [Link::AliceBob, Link::AliceEve] {
        for i in 0..env.receivers(link) {
            for j in 0..2 {
                let pair = env.pair(link, i, j);
                assert_eq!(pair.aod().support().len(), 5);
                for path in pair.paths() {
                    let expect = C64::from_polar(path.loss * path.amplitude, -path.phase);
                    assert!((pair.aod().values()[path.angle] - expect).norm() < 1e-12);
                    assert!((0.5..=1.0).contains(&path.loss));
                }
            }
        }
    }
}

#[test]
fn scatterer_angles_are_shared() {
    let env = synthesize_environment(9, 2, 1, 2, 5).unwrap();
    let s = env.aod(Link::AliceBob, 0, 0).support();
    assert_eq!(env.aod(Link::AliceBob, 0, 1).support(), s);
    assert_eq!(env.aod(Link::AliceEve, 1, 0).support(), s);
}

#[test]
fn empty_environment() {
    let env = synthesize_environment(1, 2, 1, 2, 0).unwrap();
    let aod = env.aod(Link::AliceBob, 0, 0);
    assert!(aod.support().is_empty());
    assert_eq!(aod.physical_coefficient(), C64::new(0.0, 0.0));
    let h = channel_matrix(&env, &directional(), 17, Link::AliceBob).unwrap();
    assert_eq!(h.matrix, CMatrix::zeros(1, 2));
}

#[test]
fn same_seed_same_environment() {
    let a = synthesize_environment(42, 3, 2, 2, 5).unwrap();
    let b = synthesize_environment(42, 3, 2, 2, 5).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, synthesize_environment(43, 3, 2, 2, 5).unwrap());
}

#[test]
fn aod_sum_is_physical_coefficient() {
    let env = synthesize_environment(5, 2, 1, 1, 5).unwrap();
    let aod = env.aod(Link::AliceBob, 0, 1);
    let mut sum = C64::new(0.0, 0.0);
    for v in aod.values() {
        sum += v;
    }
    assert!((sum - aod.physical_coefficient()).norm() < 1e-12);
}

#[test]
fn csi_matches_loop_oracle() {
    let p = directional();
    let env = synthesize_environment(11, 2, 1, 1, 5).unwrap();
    let aod = env.aod(Link::AliceBob, 0, 0);
    let h0 = csi_from_aod(aod, &p, 0).unwrap();
    let h180 = csi_from_aod(aod, &p, 180).unwrap();
    assert!((h0 - h180).norm() > 1e-6);
    for u in [0, 1, 90, 180, 359] {
        let h = csi_from_aod(aod, &p, u).unwrap();
        assert!((h - csi_by_loop(aod, &p, u)).norm() < 1e-12);
    }
}

#[test]
fn single_path_is_one_gain() {
    let p = directional();
    let mut v = vec![C64::new(0.0, 0.0); 360];
    let c = C64::new(0.3, -0.4);
    v[77] = c;
    let aod = AoDDistribution::from_values(v);
    for u in [0, 45, 300] {
        assert_eq!(csi_from_aod(&aod, &p, u).unwrap(), p.gain(u, 77) * c);
    }
}

#[test]
fn csi_rejects_mismatched_lengths() {
    let aod = AoDDistribution::zeros(180);
    assert!(csi_from_aod(&aod, &directional(), 0).is_err());
    assert!(csi_from_aod(&AoDDistribution::zeros(360), &directional(), 360).is_err());
}

#[test]
fn channel_matrix_is_elementwise_csi() {
    let p = directional();
    let env = synthesize_environment(21, 2, 1, 2, 5).unwrap();
    let h = channel_matrix(&env, &p, 33, Link::AliceBob).unwrap();
    assert_eq!(h.matrix.shape(), (1, 2));
    assert_eq!(h.mode, 33);
    let e = channel_matrix(&env, &p, 33, Link::AliceEve).unwrap();
    assert_eq!(e.matrix.shape(), (2, 2));
    for i in 0..2 {
        for j in 0..2 {
            assert_eq!(e.matrix[(i, j)], csi_from_aod(env.aod(Link::AliceEve, i, j), &p, 33).unwrap());
        }
    }
}

#[test]
fn noiseless_identity_channel_is_transparent() {
    let d = CMatrix::from_fn(2, 50, |i, t| C64::new(i as f64 - t as f64, 0.5 * t as f64));
    let r = apply_channel(&CMatrix::identity(2), &d, f64::INFINITY, &mut rng::stream(1, &[])).unwrap();
    assert_eq!(r, d);
}

#[test]
fn measured_snr_is_on_target() {
    let mut g = rng::stream(2, &[]);
    let h = CMatrix::from_fn(1, 2, |_, j| C64::new(0.7, 0.2 * j as f64));
    let d = CMatrix::from_fn(2, 100_000, |_, _| rng::complex_gaussian(&mut g, 1.0));
    let clean = h.matmul(&d);
    let noisy = apply_channel(&h, &d, 25.0, &mut g).unwrap();
    let noise = noisy.sub(&clean);
    let snr = 10.0 * (clean.mean_power() / noise.mean_power()).log10();
    assert!((snr - 25.0).abs() < 0.2, "measured {snr} dB");
}

#[test]
fn pure_noise_has_configured_variance() {
    let mut r = CMatrix::zeros(1, 200_000);
    add_noise(&mut r, 0.37, &mut rng::stream(3, &[]));
    let v = r.mean_power();
    assert!((v / 0.37 - 1.0).abs() < 0.02, "variance {v}");
}

#[test]
fn noise_error_shrinks_like_inverse_root_n() {
    // relative error of the sample variance should fall about 10x per 100x
    // more samples; average over repeats to tame the randomness
    let err = |n: usize| {
        (0..20)
            .map(|s| {
                let mut r = CMatrix::zeros(1, n);
                add_noise(&mut r, 1.0, &mut rng::stream(s, &[n as u64]));
                (r.mean_power() - 1.0).abs()
            })
            .sum::<f64>()
            / 20.0
    };
    let ratio = err(1_000) / err(100_000);
    assert!((3.0..30.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn apply_channel_checks_shapes() {
    let h = CMatrix::zeros(1, 2);
    let d = CMatrix::zeros(3, 4);
    assert!(apply_channel(&h, &d, 10.0, &mut rng::stream(0, &[])).is_err());
}
