//! Harness examples at their stated sizes, and the shipped configs.

use std::path::PathBuf;

use majority_lab::harness::{
    majority_at_t, run_experiment, safe_probability_sweep, stabilization_stats, ExperimentConfig, FamilyKind,
    GraphSpec, Horizon, MeasureAt, MeasureRule, Measurement, SafeTarget, MAX_TRUNCATION_RATE,
};

fn config(name: &str, graph: GraphSpec, trials: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig::new(name, graph, 0.3, trials, seed)
}

fn star_safety(forced: usize, degrees: Vec<usize>, trials: usize, seed: u64) -> ExperimentConfig {
    let mut c = config("star_safety", GraphSpec::sized(FamilyKind::Star, 2), trials, seed);
    c.measurement = Measurement::SafeProbability {
        target: SafeTarget::Center,
        forced_neighbors: forced,
        horizon: Horizon::NTimesDegree,
        degrees: Some(degrees),
    };
    c
}

#[test]
fn complete_cascade_matches_signal_bias() {
    let r = run_experiment(&config("complete_cascade", GraphSpec::sized(FamilyKind::Complete, 100), 10_000, 31)).unwrap();
    let v = r.aggregates.metrics["correct_consensus"].value;
    assert!((v - 0.8).abs() <= 0.012, "{v}");
}

#[test]
fn pa_majority_at_desk_scale() {
    let r = run_experiment(&config("pa_majority", GraphSpec::sized(FamilyKind::Pa, 10_000), 200, 32)).unwrap();
    assert!(r.aggregates.metrics["correct_majority"].value >= 0.9);
}

#[test]
fn line_roadblock_leaves_incorrect_nodes() {
    let r = run_experiment(&config("line_roadblock", GraphSpec::sized(FamilyKind::Line, 1000), 200, 33)).unwrap();
    assert!(r.aggregates.metrics["incorrect_fraction"].value > 0.0);
    assert!(r.aggregates.metrics["correct_fraction"].value > 0.5);
}

#[test]
fn majority_at_theorem_step() {
    for graph in [GraphSpec::sized(FamilyKind::Pa, 10_000), GraphSpec::mary(3, 8)] {
        let mut c = config("majority_at_t", graph, 200, 34);
        c.measure_at = Some(MeasureAt::Rule(MeasureRule::Theorem));
        assert!(majority_at_t(&c).unwrap().value >= 0.95);
    }
}

#[test]
fn line_stabilization_within_bound() {
    let s = stabilization_stats(&config("stab", GraphSpec::sized(FamilyKind::Line, 500), 500, 35)).unwrap();
    assert!(s.bound_violation_rate <= 0.01, "{s:?}");
    assert!(s.p50 <= s.p90 && s.p90 <= s.p99 && s.p99 <= s.max);
}

#[test]
fn star_center_safety_improves_with_degree() {
    let t = safe_probability_sweep(&star_safety(0, vec![10, 40, 160], 10_000, 36)).unwrap();
    assert!(t.decreasing, "{t:?}");
    for row in &t.rows {
        assert!(row.unsafe_rate <= t.envelope_c / row.degree as f64 + 1e-12);
        assert!(row.unsafe_rate > 0.0);
    }
}

/// Star with 200 leaves, horizon `n e^{deg/10}`; trials end at stabilization.
#[test]
fn star_center_safe_thru_long_horizon() {
    let mut c = config("safe_center", GraphSpec::sized(FamilyKind::Star, 201), 10_000, 37);
    c.measurement = Measurement::SafeProbability {
        target: SafeTarget::Center,
        forced_neighbors: 0,
        horizon: Horizon::Steps((201.0 * (20.0f64).exp()) as u64),
        degrees: None,
    };
    let safe = 1.0 - run_experiment(&c).unwrap().aggregates.metrics["unsafe"].value;
    assert!(safe >= 1.0 - 25.0 / 200.0, "{safe}");
}

/// Two pinned leaves against none on a degree-40 star, expected within a
/// factor of two. Measured: about 0.105 against 0.021. The per-degree
/// constant grows with the number of pinned neighbors, so the factor-two
/// expectation does not hold; kept for reference.
#[test]
#[ignore = "expected factor-two agreement does not hold; see decisions ledger"]
fn pinned_leaves_within_factor_two() {
    let rate = |s| safe_probability_sweep(&star_safety(s, vec![40], 10_000, 38)).unwrap().rows[0].unsafe_rate;
    let (r0, r2) = (rate(0), rate(2));
    assert!(r2 <= 2.0 * r0 && r0 <= 2.0 * r2, "{r0} vs {r2}");
}

#[test]
fn pinned_leaves_raise_the_unsafe_rate() {
    let rows = |s| safe_probability_sweep(&star_safety(s, vec![10, 40], 10_000, 39)).unwrap().rows;
    let (a, b) = (rows(0), rows(2));
    for (x, y) in a.iter().zip(&b) {
        assert!(y.unsafe_rate > x.unsafe_rate, "{x:?} {y:?}");
    }
}

fn shipped_configs() -> Vec<PathBuf> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml" || e == "json"))
        .collect();
    paths.sort();
    paths
}

#[test]
fn shipped_configs_pass_with_low_truncation() {
    let paths = shipped_configs();
    assert!(paths.len() >= 8);
    for p in paths {
        let c = ExperimentConfig::load(&p).unwrap();
        let r = run_experiment(&c).unwrap();
        assert!(r.aggregates.truncation_rate < MAX_TRUNCATION_RATE, "{}", p.display());
        assert!(r.passed, "{}: {:?}", p.display(), r.thresholds);
    }
}
