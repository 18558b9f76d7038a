//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero when a criterion fails that is not listed in `KNOWN_FAILURES`.

use std::collections::HashMap;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use robin_core::aod::{mean_prediction_error, relative_error, select_training_modes, solve_bp, BpOptions, SensingProblem};
use robin_core::blinding::{BlindingFilter, QAM4};
use robin_core::channel::{make_pattern, synthesize_environment, AntennaPattern, AoDDistribution, Link, PatternFamily};
use robin_core::linalg::inner;
use robin_core::protocol::{mode_schedule, transmission_phase, CsiSource, ExperimentMetrics, ProtocolConfig};
use robin_core::secrecy::{
    estimate_cmi, quantize, verify_markov_simplification, ChainKind, DiscretizedSample, MarkovChannelParams,
};
use robin_core::{rng, CMatrix, C64};
use robin_sim::config::ExperimentConfig;
use robin_sim::report::{read_csv, strip_timestamp, write_csv};
use robin_sim::runner::{run, run_protocol_point, RunOptions};
use robin_sim::scenarios;

/// Criteria that fail with the default channel model; see the decisions
/// notes. A listed criterion that passes is reported but not an error.
const KNOWN_FAILURES: [u32; 2] = [3, 6];

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Protocol points shared between criteria, computed once.
struct Points {
    pattern: AntennaPattern,
    environments: u64,
    /// Metrics and compute seconds, keyed by the protocol settings.
    cache: HashMap<String, (ExperimentMetrics, f64)>,
}

impl Points {
    fn get(&mut self, cfg: &ProtocolConfig) -> ExperimentMetrics {
        let key = format!("{cfg:?}");
        if let Some((m, _)) = self.cache.get(&key) {
            return m.clone();
        }
        let started = Instant::now();
        let m = run_protocol_point(cfg, &self.pattern, self.environments).expect("protocol point");
        self.cache.insert(key, (m.clone(), started.elapsed().as_secs_f64()));
        m
    }

    /// Seconds spent computing the points of a built-in scenario, whenever
    /// that happened.
    fn compute_seconds(&self, name: &str) -> f64 {
        let cfg = scenarios::builtin(name).unwrap();
        cfg.points().unwrap().iter().filter_map(|p| self.cache.get(&format!("{:?}", p.protocol))).map(|(_, t)| t).sum()
    }

    fn scenario(&mut self, name: &str) -> Vec<(String, ExperimentMetrics)> {
        let cfg = scenarios::builtin(name).unwrap();
        assert_eq!(cfg.num_environments, self.environments);
        cfg.points().unwrap().into_iter().map(|p| (p.label, self.get(&p.protocol))).collect()
    }
}

fn random_matrix(rows: usize, cols: usize, g: &mut impl Rng) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| rng::complex_gaussian(g, 1.0))
}

fn orthogonality() -> Verdict {
    let started = Instant::now();
    let mut g = rng::stream(1, &[]);
    let (mut worst_inner, mut worst_inverse) = (0.0f64, 0.0f64);
    for case in 0..1000u64 {
        let n_a = g.random_range(2..=4usize);
        let n_b = g.random_range(1..n_a);
        let h = random_matrix(n_b, n_a, &mut g);
        let f = BlindingFilter::new(&h, case).unwrap();
        for i in 0..n_b {
            for k in 0..f.h_an.rows() {
                worst_inner = worst_inner.max(inner(f.h_an.row(k), h.row(i)).norm());
            }
        }
        let stack = h.vstack(&f.h_an);
        worst_inverse = worst_inverse.max(stack.matmul(&f.f_a).sub(&CMatrix::identity(n_a)).max_abs());
    }
    let secs = started.elapsed().as_secs_f64();
    verdict(
        worst_inner < 1e-10 && worst_inverse < 1e-8 && secs < 10.0,
        format!("max |H_AB H_AN^H| {worst_inner:.1e}, max |[H_AB;H_AN] F_A - I| {worst_inverse:.1e}, {secs:.1} s"),
    )
}

fn an_transparency(pattern: &AntennaPattern) -> Verdict {
    let started = Instant::now();
    let mut clean = 0;
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let env = synthesize_environment(seed, 2, 1, 2, 5).unwrap();
        let training = select_training_modes(seed, 20, 360).unwrap();
        let mut all_zero = true;
        for ndr in [0.0, 1.0, 2.0, 4.0, 8.0] {
            let cfg = ProtocolConfig {
                ndr,
                snr_db: f64::INFINITY,
                frames_per_coherence: 12,
                symbols_per_frame: 64,
                subcarriers: 1,
                ..ProtocolConfig::default()
            };
            let schedule = mode_schedule(&cfg, 360, &training, &mut rng::stream(seed, &[1])).unwrap();
            let t = transmission_phase(&env, pattern, CsiSource::Measured, &schedule, &cfg, &mut rng::stream(seed, &[2])).unwrap();
            worst = worst.max(t.bob_ser());
            all_zero &= t.bob_ser() == 0.0;
        }
        clean += all_zero as usize;
    }
    let secs = started.elapsed().as_secs_f64();
    verdict(clean == 100 && secs < 30.0, format!("{clean}/100 seeds error-free, worst Bob SER {worst}, {secs:.1} s"))
}

fn smoothed(trace: &[f64], w: usize) -> Vec<f64> {
    trace.windows(w).map(|x| x.iter().sum::<f64>() / w as f64).collect()
}

fn attack_baseline(points: &mut Points) -> Verdict {
    // the baseline keeps one antenna mode for the whole coherence period:
    // a static channel
    let m = points.scenario("fig2e").remove(0).1;
    let trace = &m.baseline_eve_trace;
    let s = smoothed(trace, 10);
    let rises = s.windows(2).filter(|w| w[1] > w[0]).count();
    let worst_rise = s.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let low = m.baseline_eve_ser_mean < 0.15;
    let long = trace.len() >= 240;
    verdict(
        low && long && rises == 0,
        format!(
            "static-channel Eve SER {:.4} over {} environments (< 0.15: {}) after {} iterations (>= 240: {}); smoothed trace {:.3} -> {:.4} with {rises} rises, largest {worst_rise:.1e} (non-increasing: {})",
            m.baseline_eve_ser_mean,
            m.environments,
            pass_word(low),
            trace.len(),
            pass_word(long),
            s[0],
            s[s.len() - 1],
            pass_word(rises == 0)
        ),
    )
}

fn ndr_suppression(points: &mut Points) -> Verdict {
    let eve: Vec<f64> = points.scenario("fig2c").iter().map(|(_, m)| m.eve_ser_mean).collect();
    let ok = eve.windows(2).all(|w| w[1] - w[0] >= 0.02);
    verdict(ok, format!("Eve SER at NDR 1/4/8: {:.3} / {:.3} / {:.3}", eve[0], eve[1], eve[2]))
}

fn snr_insensitivity(points: &mut Points) -> Verdict {
    let pts = points.scenario("fig2d");
    let at = |label: &str| pts.iter().find(|(l, _)| l == label).unwrap().1.eve_ser_mean;
    let (low, high) = (at("snr_db=15"), at("snr_db=35"));
    verdict((low - high).abs() < 0.05, format!("Eve SER {low:.3} at 15 dB, {high:.3} at 35 dB, difference {:.3}", (low - high).abs()))
}

fn headline(points: &mut Points) -> Verdict {
    let pts = points.scenario("fig2e");
    let seconds = points.compute_seconds("fig2e");
    let eve: Vec<f64> = pts.iter().map(|(_, m)| m.eve_ser_mean).collect();
    let t1 = &pts[0].1;
    let random = (t1.eve_ser_mean - 0.75).abs() < 0.05;
    let monotone = eve.windows(2).all(|w| w[1] <= w[0]);
    let improvement = t1.security_improvement > 0.3;
    let symbols = 120 * 192 * t1.environments;
    verdict(
        random && monotone && improvement && seconds < 600.0,
        format!(
            "T=1 Eve SER {:.3} (target 0.75 +- 0.05: {}); Eve SER over T 1/6/12/60/120 {:.3} / {:.3} / {:.3} / {:.3} / {:.3} (non-increasing: {}); improvement {:.3} (> 0.3: {}); {symbols} symbols per point, {seconds:.0} s for the sweep (< 600: {})",
            t1.eve_ser_mean,
            pass_word(random),
            eve[0],
            eve[1],
            eve[2],
            eve[3],
            eve[4],
            pass_word(monotone),
            t1.security_improvement,
            pass_word(improvement),
            pass_word(seconds < 600.0)
        ),
    )
}

fn pass_word(ok: bool) -> &'static str {
    if ok {
        "yes"
    } else {
        "no"
    }
}

fn planted(seed: u64) -> AoDDistribution {
    let mut g = rng::stream(seed, &[17]);
    let mut v = vec![c(0.0, 0.0); 360];
    for d in rng::sample_distinct(&mut g, 5, 360) {
        v[d] = rng::complex_gaussian(&mut g, 1.0);
        if v[d].norm() < 0.1 {
            v[d] = c(0.1 + g.random_range(0.0..0.5), 0.0);
        }
    }
    AoDDistribution::from_values(v)
}

fn compressive(points: &mut Points) -> Verdict {
    let p = &points.pattern;
    let recovered = (0..200u64)
        .filter(|&s| {
            let truth = planted(s);
            let modes = select_training_modes(1000 + s, 40, 360).unwrap();
            let prob = SensingProblem::from_aod(p, &modes, &truth).unwrap();
            let sol = solve_bp(&prob, &BpOptions::default()).unwrap();
            relative_error(&sol.aod_estimate, &truth) < 1e-2
        })
        .count();
    let mut pred = Vec::new();
    for u in [10, 20, 30, 40] {
        let mut total = 0.0;
        for s in 0..100u64 {
            let env = synthesize_environment(s, 2, 1, 1, 5).unwrap();
            let truth = env.aod(Link::AliceBob, 0, 0);
            let modes = select_training_modes(5000 + s, u, 360).unwrap();
            let prob = SensingProblem::from_aod(p, &modes, truth).unwrap();
            let sol = solve_bp(&prob, &BpOptions::default()).unwrap();
            total += mean_prediction_error(&sol.aod_estimate, truth, p, &modes).unwrap();
        }
        pred.push(total / 100.0);
    }
    let pred_ok = pred.windows(2).all(|w| w[1] <= w[0]);
    let pts = points.scenario("fig2a");
    let bob: Vec<f64> = pts.iter().map(|(_, m)| m.bob_ser_mean).collect();
    let eve: Vec<f64> = pts.iter().map(|(_, m)| m.eve_ser_mean).collect();
    let bob_ok = bob.windows(2).all(|w| w[1] <= w[0]);
    let spread = eve.iter().copied().fold(f64::MIN, f64::max) - eve.iter().copied().fold(f64::MAX, f64::min);
    // "flat" uses the same 0.05 band as the SNR criterion
    let eve_ok = spread < 0.05;
    verdict(
        recovered >= 190 && pred_ok && bob_ok && eve_ok,
        format!(
            "{recovered}/200 recovered at U=40; prediction error at U=10/20/30/40 {:.3} / {:.3} / {:.3} / {:.3}; Bob SER over |S_1| {:.1e} / {:.1e} / {:.1e} / {:.1e}; Eve SER spread {spread:.3}",
            pred[0], pred[1], pred[2], pred[3], bob[0], bob[1], bob[2], bob[3]
        ),
    )
}

fn bob_magnitude(points: &mut Points) -> Verdict {
    let base = ExperimentConfig::parse("[experiment]\nscenario = bob\n[protocol]\nndr = 2\nsnr_db = 25\nnum_training_modes = 20\n").unwrap();
    let m = points.get(&base.points().unwrap()[0].protocol);
    verdict(
        (1e-4..=1e-2).contains(&m.bob_ser_mean),
        format!("Bob SER {:.2e} at |S_1|=20, 25 dB, NDR 2 over {} environments", m.bob_ser_mean, m.environments),
    )
}

fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&v| v > 0.0).map(|v| -v * v.log2()).sum()
}

fn cmi_suite() -> Verdict {
    let mut g = rng::stream(7, &[]);
    let independent: Vec<DiscretizedSample> = (0..200_000)
        .map(|_| {
            let d = QAM4[g.random_range(0..4)];
            let r = quantize(c(g.random_range(-2.0..2.0), g.random_range(-2.0..2.0)));
            let h = quantize(c(g.random_range(-2.0..2.0), 0.5));
            DiscretizedSample::new(d, r, [h, c(0.5, 0.5), c(0.5, 0.5)]).unwrap()
        })
        .collect();
    let zero = estimate_cmi(&independent).unwrap().bits;
    let copies: Vec<DiscretizedSample> = (0..100_000)
        .map(|_| {
            let d = QAM4[g.random_range(0..4)];
            let h = quantize(c(g.random_range(-2.0..2.0), g.random_range(-2.0..2.0)));
            DiscretizedSample::new(d, quantize(d), [h, h, h]).unwrap()
        })
        .collect();
    let two = estimate_cmi(&copies).unwrap().bits;

    // two conditions over a two-symbol, two-reception alphabet
    let table = [[[40, 10], [10, 40]], [[25, 25], [25, 25]]];
    let mut samples = Vec::new();
    let mut analytic = 0.0;
    for (ci, t) in table.iter().enumerate() {
        let cond = if ci == 0 { c(0.5, 0.5) } else { c(-0.5, -0.5) };
        for (di, row) in t.iter().enumerate() {
            for (ri, &n) in row.iter().enumerate() {
                let r = if ri == 0 { c(0.5, 0.5) } else { c(-1.5, -1.5) };
                for _ in 0..n {
                    samples.push(DiscretizedSample::new(QAM4[3 * di], r, [cond, c(0.5, 0.5), c(0.5, 0.5)]).unwrap());
                }
            }
        }
        let n: f64 = t.iter().flatten().map(|&v| v as f64).sum();
        let pd: Vec<f64> = t.iter().map(|row| row.iter().sum::<i32>() as f64 / n).collect();
        let pr: Vec<f64> = (0..2).map(|r| (t[0][r] + t[1][r]) as f64 / n).collect();
        let pj: Vec<f64> = t.iter().flatten().map(|&v| v as f64 / n).collect();
        analytic += 0.5 * (entropy(&pd) + entropy(&pr) - entropy(&pj));
    }
    let small = estimate_cmi(&samples).unwrap().bits;
    verdict(
        zero < 0.02 && (two - 2.0).abs() < 0.02 && (small - analytic).abs() < 0.01,
        format!("independent {zero:.4} bits, copy {two:.4} bits, small alphabet {small:.4} vs analytic {analytic:.4}"),
    )
}

fn markov_verification() -> Verdict {
    let started = Instant::now();
    let params = |kind| {
        let mut p = MarkovChannelParams::new(0.8, 0.9);
        p.kind = kind;
        p.real_valued = true;
        p
    };
    let m = verify_markov_simplification(&params(ChainKind::QuantizedMarkov), 8_000_000, 2, 3, 8).unwrap();
    let n = verify_markov_simplification(&params(ChainKind::SecondOrder), 8_000_000, 2, 3, 8).unwrap();
    verdict(
        m.gap.abs() < m.noise_floor && n.gap > 3.0 * n.noise_floor,
        format!(
            "Markov gap {:.1e} vs floor {:.1e} (coverage {:.0}); second-order gap {:.1e} = {:.1}x its floor; {:.0} s",
            m.gap,
            m.noise_floor,
            m.lhs_coverage,
            n.gap,
            n.gap / n.noise_floor,
            started.elapsed().as_secs_f64()
        ),
    )
}

fn leakage_trend() -> Verdict {
    let started = Instant::now();
    let cfg = scenarios::builtin("fig3").unwrap();
    let out = run(&cfg, &RunOptions::default(), |_| {}).unwrap();
    let bits: Vec<f64> = out.rows.iter().map(|r| r.leakage_bits.unwrap()).collect();
    let secs = started.elapsed().as_secs_f64();
    let ok = bits.windows(2).all(|w| w[1] >= w[0] - 0.01) && secs < 300.0 && out.rows[0].samples == Some(3_000_000);
    let listed: Vec<String> = bits.iter().map(|b| format!("{b:.3}")).collect();
    verdict(ok, format!("leakage over rho 0..0.95: {} bits, {secs:.0} s", listed.join(" / ")))
}

fn csv_bytes(cfg: &ExperimentConfig, workers: usize) -> String {
    let out = run(cfg, &RunOptions { workers }, |_| {}).unwrap();
    let mut buf = Vec::new();
    write_csv(&mut buf, &format!("generated {:?}", Instant::now()), &out.rows).unwrap();
    strip_timestamp(&String::from_utf8(buf).unwrap()).to_string()
}

fn reproducibility() -> Verdict {
    let mut checked = Vec::new();
    let mut same = true;
    let mut configs = vec![scenarios::builtin("smoke").unwrap()];
    let mut fig3 = scenarios::builtin("fig3").unwrap();
    fig3.leakage.samples = 300_000;
    configs.push(fig3);
    let mut table = scenarios::builtin("table1_trend").unwrap();
    table.num_environments = 4;
    configs.push(table);
    let mut fig2e = scenarios::builtin("fig2e").unwrap();
    fig2e.num_environments = 3;
    configs.push(fig2e);
    for cfg in &configs {
        let a = csv_bytes(cfg, 1);
        let b = csv_bytes(cfg, 2);
        let rows = read_csv(&a).unwrap_or_default();
        let ok = a == b && !rows.is_empty() && !rows.iter().any(|r| r.is_error());
        same &= ok;
        checked.push(format!("{} ({} bytes, {})", cfg.scenario, a.len(), if ok { "identical" } else { "differs or failed" }));
    }
    verdict(same, format!("byte-identical reruns of {}", checked.join(", ")))
}

fn main() -> ExitCode {
    let pattern = make_pattern(&PatternFamily::from_name("directional").unwrap(), 360, 360).unwrap();
    let mut points = Points {
        pattern: pattern.clone(),
        environments: 100,
        cache: HashMap::new(),
    };
    let criteria: Vec<(u32, &str, Box<dyn FnOnce(&mut Points) -> Verdict>)> = vec![
        (1, "orthogonality suite", Box::new(|_| orthogonality())),
        (2, "AN transparency", Box::new(move |_| an_transparency(&pattern))),
        (3, "attack on a static channel", Box::new(attack_baseline)),
        (4, "NDR suppression", Box::new(ndr_suppression)),
        (5, "SNR insensitivity for Eve", Box::new(snr_insensitivity)),
        (6, "ROBin headline claim", Box::new(headline)),
        (7, "compressive recovery", Box::new(compressive)),
        (8, "Bob SER magnitude", Box::new(bob_magnitude)),
        (9, "CMI estimator suite", Box::new(|_| cmi_suite())),
        (10, "Markov simplification", Box::new(|_| markov_verification())),
        (11, "leakage trend over rho", Box::new(|_| leakage_trend())),
        (12, "reproducibility", Box::new(|_| reproducibility())),
    ];
    let mut unexpected = 0;
    for (id, name, check) in criteria {
        let started = Instant::now();
        let v = check(&mut points);
        let known = KNOWN_FAILURES.contains(&id);
        let tag = match (v.passed, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => {
                unexpected += 1;
                "FAIL"
            }
        };
        println!("criterion {id:>2} {tag}: {name}: {} [{:.1} s]", v.detail, started.elapsed().as_secs_f64());
    }
    if unexpected > 0 {
        println!("{unexpected} criterion(s) failed unexpectedly");
        ExitCode::FAILURE
    } else {
        println!("acceptance: all criteria pass except the known failures {KNOWN_FAILURES:?}");
        ExitCode::SUCCESS
    }
}
