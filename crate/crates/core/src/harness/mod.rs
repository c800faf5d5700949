//! Seeded Monte Carlo experiments.
//!
//! A run draws an independent seed per trial from `(master seed, trial
//! index)`, executes the trials on a thread pool, collects the records in
//! trial order and derives every aggregate from those records alone. Results
//! therefore do not depend on the number of workers.

mod aggregate;
mod config;
mod output;
mod trial;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use aggregate::{
    aggregate, check_thresholds, majority_threshold, stabilization_bound, Aggregates, CriticalFit, Estimate,
    StabilizationSummary, SweepRow, SweepTable, ThresholdOutcome,
};
pub use config::{
    theorem_measure_step, ExperimentConfig, FamilyKind, GraphSpec, Horizon, MeasureAt, MeasureRule, Measurement,
    SafeTarget, Threshold, MAX_TRUNCATION_RATE, MIN_GOF_SAMPLES,
};
pub use output::{
    curve_svg, histogram_svg, read_records_csv, records_csv_bytes, write_atomic, write_outputs, write_records_csv,
};
pub use trial::TrialRecord;

use crate::graphgen::Graph;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Performance {
    pub wall_clock_ms: u64,
    pub total_steps: u64,
    pub steps_per_second: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    /// Source of truth for the aggregates; written as CSV, not JSON.
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
    pub aggregates: Aggregates,
    pub thresholds: Vec<ThresholdOutcome>,
    pub passed: bool,
    pub performance: Performance,
    pub outputs: Vec<PathBuf>,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    execute(config, None)
}

/// Runs `config` on a given graph instead of its family.
pub fn run_experiment_on(config: &ExperimentConfig, graph: Arc<Graph>) -> Result<ExperimentResult> {
    execute(config, Some(graph))
}

/// Records only, in trial order.
pub fn run_trials(config: &ExperimentConfig, graph: Option<Arc<Graph>>) -> Result<Vec<TrialRecord>> {
    config.validate()?;
    let plan = trial::plan(config, graph)?;
    let total = plan.total(config.trials);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| {
        (0..total)
            .into_par_iter()
            .map(|i| trial::run_trial(config, &plan, i))
            .collect()
    })
}

fn execute(config: &ExperimentConfig, graph: Option<Arc<Graph>>) -> Result<ExperimentResult> {
    let started = Instant::now();
    let records = run_trials(config, graph)?;
    let aggregates = aggregate(config, &records)?;
    let thresholds = check_thresholds(&config.thresholds, &aggregates);
    let elapsed = started.elapsed();
    let total_steps = records.iter().map(|r| r.steps).sum();
    let mut result = ExperimentResult {
        config: config.clone(),
        passed: thresholds.iter().all(|t| t.passed),
        thresholds,
        aggregates,
        records,
        performance: Performance {
            wall_clock_ms: elapsed.as_millis() as u64,
            total_steps,
            steps_per_second: total_steps as f64 / elapsed.as_secs_f64().max(1e-9),
        },
        outputs: Vec::new(),
    };
    if let Some(dir) = &config.output {
        result.outputs = write_outputs(&result, dir)?;
    }
    Ok(result)
}

/// Fraction of trials with at least `(1/2 + δ/2 - e^{-T/n}) n` correct
/// announcements right after step `T`.
pub fn majority_at_t(config: &ExperimentConfig) -> Result<Estimate> {
    if config.measure_at.is_none() {
        return Err(Error::invalid("majority_at_t needs measure_at"));
    }
    let mut c = config.clone();
    c.measurement = Measurement::Outcome;
    let r = run_experiment(&c)?;
    Ok(r.aggregates.metrics["majority_at_t"].clone())
}

pub fn stabilization_stats(config: &ExperimentConfig) -> Result<StabilizationSummary> {
    let mut c = config.clone();
    c.measurement = Measurement::Outcome;
    let r = run_experiment(&c)?;
    r.aggregates
        .stabilization
        .ok_or_else(|| Error::IncompleteInput("no trial stabilized".into()))
}

pub fn critical_time_gof(config: &ExperimentConfig) -> Result<CriticalFit> {
    if !matches!(config.measurement, Measurement::CriticalTime { .. }) {
        return Err(Error::invalid("critical_time_gof needs a critical-time measurement"));
    }
    let r = run_experiment(config)?;
    r.aggregates.critical.ok_or_else(|| Error::IncompleteInput("no fit produced".into()))
}

pub fn safe_probability_sweep(config: &ExperimentConfig) -> Result<SweepTable> {
    if !matches!(config.measurement, Measurement::SafeProbability { degrees: Some(_), .. }) {
        return Err(Error::invalid("safe_probability_sweep needs a safe-probability measurement with degrees"));
    }
    let r = run_experiment(config)?;
    r.aggregates.sweep.ok_or_else(|| Error::IncompleteInput("no sweep produced".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(name: &str, family: FamilyKind, n: usize, trials: usize) -> ExperimentConfig {
        ExperimentConfig::new(name, GraphSpec::sized(family, n), 0.3, trials, 5)
    }

    #[test]
    fn worker_count_does_not_change_records() {
        let mut c = small("det", FamilyKind::Pa, 60, 40);
        c.measure_at = Some(MeasureAt::Rule(MeasureRule::Theorem));
        let runs: Vec<Vec<u8>> = [1, 3, 8]
            .iter()
            .map(|&w| {
                c.workers = Some(w);
                records_csv_bytes(&run_trials(&c, None).unwrap()).unwrap()
            })
            .collect();
        assert_eq!(runs[0], runs[1]);
        assert_eq!(runs[0], runs[2]);
    }

    #[test]
    fn aggregates_recompute_from_written_csv() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small("recompute", FamilyKind::Line, 25, 30);
        c.output = Some(dir.path().to_path_buf());
        c.plot = true;
        c.measure_at = Some(MeasureAt::Step(50));
        let r = run_experiment(&c).unwrap();
        assert_eq!(r.outputs.len(), 3);
        let csv = std::fs::read(dir.path().join("recompute.trials.csv")).unwrap();
        let records = read_records_csv(&csv[..]).unwrap();
        assert_eq!(records, r.records);
        assert_eq!(aggregate(&c, &records).unwrap(), r.aggregates);
        let json: ExperimentResult =
            serde_json::from_slice(&std::fs::read(dir.path().join("recompute.result.json")).unwrap()).unwrap();
        assert_eq!(json.aggregates, r.aggregates);
        assert_eq!(json.config.seed, 5);
    }

    #[test]
    fn declared_thresholds_decide_pass() {
        let mut c = small("thr", FamilyKind::Complete, 10, 50);
        c.thresholds = vec![Threshold::at_least("correct_fraction", 2.0)];
        let r = run_experiment(&c).unwrap();
        assert!(!r.passed);
        c.thresholds = vec![Threshold::between("correct_fraction", 0.0, 1.0)];
        assert!(run_experiment(&c).unwrap().passed);
    }

    #[test]
    fn truncation_is_counted_and_fails() {
        let mut c = small("trunc", FamilyKind::Line, 50, 20);
        c.max_steps = Some(10);
        let r = run_experiment(&c).unwrap();
        assert_eq!(r.aggregates.truncated, 20);
        assert!(!r.passed);
    }

    #[test]
    fn single_node_always_stabilizes_at_step_one() {
        let c = small("one", FamilyKind::Line, 1, 50);
        let s = stabilization_stats(&c).unwrap();
        assert_eq!((s.p50, s.max), (1, 1));
        assert_eq!(s.bound_violation_rate, 0.0);
    }

    #[test]
    fn measurement_at_zero_is_vacuous() {
        let mut c = small("zero", FamilyKind::Line, 30, 50);
        c.measure_at = Some(MeasureAt::Step(0));
        let e = majority_at_t(&c).unwrap();
        assert_eq!(e.value, 1.0);
    }

    #[test]
    fn critical_fit_refuses_small_samples() {
        let mut c = small("crit", FamilyKind::Line, 20, 999);
        c.measurement = Measurement::CriticalTime { source: 0, target: 0 };
        assert!(matches!(critical_time_gof(&c), Err(Error::Underpowered(_))));
    }

    #[test]
    fn leaf_of_two_path_unsafe_rate() {
        let mut c = small("leaf", FamilyKind::Line, 2, 4000);
        c.measurement = Measurement::SafeProbability {
            target: SafeTarget::Node(1),
            forced_neighbors: 0,
            horizon: Horizon::PerNode(10.0),
            degrees: None,
        };
        let u = run_experiment(&c).unwrap().aggregates.metrics["unsafe"].clone();
        assert!(u.value > 0.0 && u.value < 0.5, "{u:?}");
    }
}
