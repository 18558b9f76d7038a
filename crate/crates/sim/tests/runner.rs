use robin_core::secrecy::{leakage_model, MarkovChannelParams};
use robin_sim::config::ExperimentConfig;
use robin_sim::report::{read_csv, strip_timestamp, write_csv, Scheme};
use robin_sim::runner::{check_invariants, replay_sequences, run, RunOptions};
use robin_sim::{records, scenarios};

const TINY: &str = "
[experiment]
scenario = tiny
num_environments = 3
seed = 4

[protocol]
frames_per_coherence = 6
symbols_per_frame = 24
trace_positions = 16

[sweep]
switching_period = 1, 6
";

fn csv_body(cfg: &ExperimentConfig, workers: usize) -> String {
    let out = run(cfg, &RunOptions { workers }, |_| {}).unwrap();
    let mut buf = Vec::new();
    write_csv(&mut buf, "t", &out.rows).unwrap();
    strip_timestamp(&String::from_utf8(buf).unwrap()).to_string()
}

#[test]
fn smoke_runs_quickly_and_cleanly() {
    let cfg = scenarios::builtin("smoke").unwrap();
    let started = std::time::Instant::now();
    let out = run(&cfg, &RunOptions::default(), |_| {}).unwrap();
    assert!(started.elapsed().as_secs_f64() < 5.0);
    check_invariants(&out.rows).unwrap();
    assert_eq!(out.failed_points(), 0);
    assert_eq!(out.points.len(), 1);
    let summary = out.rows.iter().filter(|r| r.iteration.is_none()).count();
    assert_eq!(summary, 2);
}

#[test]
fn protocol_rows_have_summaries_and_traces() {
    let cfg = ExperimentConfig::parse(TINY).unwrap();
    let mut seen = Vec::new();
    let out = run(&cfg, &RunOptions { workers: 1 }, |p| seen.push(p.label.clone())).unwrap();
    assert_eq!(seen, ["switching_period=1", "switching_period=6"]);
    for point in 0..2 {
        let robin: Vec<_> = out.rows.iter().filter(|r| r.point == point && r.scheme == Some(Scheme::Robin)).collect();
        assert!(robin[0].iteration.is_none() && robin[0].security_improvement.is_some());
        assert_eq!(robin[0].environments, Some(3));
        // two known symbols in each of six frames
        assert_eq!(robin.len() - 1, 12);
        assert!(robin.iter().all(|r| r.seed == 4 && r.scenario == "tiny"));
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let cfg = ExperimentConfig::parse(TINY).unwrap();
    assert_eq!(csv_body(&cfg, 1), csv_body(&cfg, 3));
}

#[test]
fn seed_changes_results() {
    let mut cfg = ExperimentConfig::parse(TINY).unwrap();
    let a = csv_body(&cfg, 1);
    cfg.seed = 5;
    assert_ne!(a, csv_body(&cfg, 1));
}

#[test]
fn leakage_scenario_matches_the_direct_estimate() {
    let cfg = ExperimentConfig::parse(
        "[experiment]\nscenario = l\nkind = leakage\nseed = 8\n[leakage]\nsamples = 200000\n[sweep]\ncross_correlation = 0, 0.9\n",
    )
    .unwrap();
    let out = run(&cfg, &RunOptions { workers: 2 }, |_| {}).unwrap();
    assert_eq!(out.rows.len(), 2);
    for (row, rho) in out.rows.iter().zip([0.0, 0.9]) {
        let direct = leakage_model(&MarkovChannelParams::new(rho, 0.0), 200_000, 8).unwrap();
        assert_eq!(row.leakage_bits, Some(direct.bits));
        assert_eq!(row.samples, Some(200_000));
        assert_eq!(row.coverage_ratio, Some(direct.coverage_ratio));
    }
}

#[test]
fn replay_sequences_follow_the_schedule() {
    let cfg = ExperimentConfig::parse(TINY).unwrap();
    let pattern = cfg.pattern.build().unwrap();
    let point = &cfg.points().unwrap()[0];
    let seqs = replay_sequences(&point.protocol, &pattern, 0).unwrap();
    assert_eq!(seqs.len(), 1);
    assert_eq!(seqs[0].len(), 6);
    // unit variance per part on each link
    let power: f64 = seqs[0].iter().map(|s| s.0.norm_sqr()).sum::<f64>() / 6.0;
    assert!((power - 2.0).abs() < 1e-9);
    assert_eq!(seqs, replay_sequences(&point.protocol, &pattern, 0).unwrap());
}

#[test]
fn replay_from_a_record_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("seq.txt");
    let seq = robin_core::secrecy::sample_chain(&MarkovChannelParams::new(0.7, 0.2), 5_000, 3).unwrap();
    records::save_matrix(&path, &records::sequence_to_matrix(&seq)).unwrap();
    let text = format!("[experiment]\nscenario = r\nkind = replay\nseed = 2\nreplay_path = {}\n", path.display());
    let out = run(&ExperimentConfig::parse(&text).unwrap(), &RunOptions::default(), |_| {}).unwrap();
    let expect = robin_core::secrecy::leakage_from_sequence(&seq, 2).unwrap();
    assert_eq!(out.rows[0].leakage_bits, Some(expect.bits));
    assert_eq!(out.rows[0].samples, Some(4_999));
}

#[test]
fn written_results_parse_back() {
    let cfg = ExperimentConfig::parse(TINY).unwrap();
    let out = run(&cfg, &RunOptions::default(), |_| {}).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = robin_sim::write_results(&cfg, &out, dir.path()).unwrap();
    assert_eq!(path.file_name().unwrap(), "tiny.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# scenario=tiny generated_unix="));
    let mut rows = out.rows.clone();
    robin_sim::report::sort_rows(&mut rows);
    assert_eq!(read_csv(&text).unwrap(), rows);
}
