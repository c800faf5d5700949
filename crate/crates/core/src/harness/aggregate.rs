use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Measurement, Threshold, MAX_TRUNCATION_RATE, MIN_GOF_SAMPLES};
use super::trial::TrialRecord;
use crate::oracle::negbinom_pmf;
use crate::stats::{binomial_se, chi_square_gof, mean_se, quantile, GofReport, Z95};
use crate::{Error, Result};

/// Point estimate with a 95% confidence radius when one applies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub radius: Option<f64>,
    pub count: usize,
}

impl Estimate {
    fn rate(hits: usize, count: usize) -> Self {
        let p = hits as f64 / count.max(1) as f64;
        Estimate { value: p, radius: Some(Z95 * binomial_se(p, count.max(1))), count }
    }

    fn mean(values: &[f64]) -> Self {
        let (m, se) = mean_se(values);
        Estimate { value: m, radius: se.is_finite().then_some(Z95 * se), count: values.len() }
    }

    fn exact(value: f64, count: usize) -> Self {
        Estimate { value, radius: None, count }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilizationSummary {
    pub p50: u64,
    pub p90: u64,
    pub p99: u64,
    pub max: u64,
    /// Trials whose last change exceeds `8 max(2 ln n, D + 1) n`, truncated
    /// trials included.
    pub bound_violation_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalFit {
    pub n: u64,
    pub distance: u64,
    /// Against the negative binomial with `distance + 1` successes of rate `1/n`.
    pub fit: GofReport,
    /// Against the mis-specified `distance` successes (absent for distance 0).
    pub control: Option<GofReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub degree: u64,
    pub trials: usize,
    pub unsafe_rate: f64,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Least-squares `c` in `unsafe ≈ c / deg`.
    pub fitted_c: f64,
    /// `max(unsafe * deg)`: the smallest `c` with `unsafe <= c / deg` at every point.
    pub envelope_c: f64,
    /// Unsafe rate non-increasing in degree.
    pub decreasing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub trials: usize,
    pub truncated: usize,
    pub truncation_rate: f64,
    pub metrics: BTreeMap<String, Estimate>,
    pub stabilization: Option<StabilizationSummary>,
    pub critical: Option<CriticalFit>,
    pub sweep: Option<SweepTable>,
}

/// `8 max(2 ln n, D + 1) n`.
pub fn stabilization_bound(n: u64, diameter: u64) -> f64 {
    let nf = n as f64;
    8.0 * (2.0 * nf.ln()).max(diameter as f64 + 1.0) * nf
}

/// `(1/2 + delta/2 - e^{-T/n}) n`.
pub fn majority_threshold(n: u64, delta: f64, t: u64) -> f64 {
    let nf = n as f64;
    (0.5 + delta / 2.0 - (-(t as f64) / nf).exp()) * nf
}

fn outcome_metrics(config: &ExperimentConfig, records: &[TrialRecord], out: &mut Aggregates) {
    let done: Vec<&TrialRecord> = records.iter().filter(|r| !r.truncated).collect();
    let m = done.len();
    let hits = |f: &dyn Fn(&TrialRecord) -> bool| done.iter().filter(|r| f(r)).count();
    let correct = |r: &TrialRecord| r.correct.unwrap_or(0);
    let incorrect = |r: &TrialRecord| r.incorrect.unwrap_or(0);
    let metrics = &mut out.metrics;
    metrics.insert("correct_majority".into(), Estimate::rate(hits(&|r| 2 * correct(r) > r.n), m));
    metrics.insert("correct_consensus".into(), Estimate::rate(hits(&|r| correct(r) == r.n), m));
    metrics.insert("incorrect_consensus".into(), Estimate::rate(hits(&|r| incorrect(r) == r.n), m));
    metrics.insert(
        "consensus".into(),
        Estimate::rate(hits(&|r| correct(r) == r.n || incorrect(r) == r.n), m),
    );
    let frac = |f: &dyn Fn(&TrialRecord) -> u64| done.iter().map(|r| f(r) as f64 / r.n as f64).collect::<Vec<_>>();
    metrics.insert("correct_fraction".into(), Estimate::mean(&frac(&correct)));
    metrics.insert("incorrect_fraction".into(), Estimate::mean(&frac(&incorrect)));
    let steps: Vec<f64> = done.iter().map(|r| r.last_change.unwrap_or(0) as f64).collect();
    metrics.insert("stabilization_step".into(), Estimate::mean(&steps));

    let within = records
        .iter()
        .filter(|r| {
            !r.truncated
                && (r.last_change.unwrap_or(0) as f64) <= stabilization_bound(r.n, r.diameter.unwrap_or(0))
        })
        .count();
    metrics.insert("within_bound".into(), Estimate::rate(within, records.len()));
    let mut sorted: Vec<u64> = done.iter().map(|r| r.last_change.unwrap_or(0)).collect();
    sorted.sort_unstable();
    if !sorted.is_empty() {
        out.stabilization = Some(StabilizationSummary {
            p50: quantile(&sorted, 0.5).unwrap_or(0),
            p90: quantile(&sorted, 0.9).unwrap_or(0),
            p99: quantile(&sorted, 0.99).unwrap_or(0),
            max: *sorted.last().unwrap_or(&0),
            bound_violation_rate: 1.0 - within as f64 / records.len() as f64,
        });
    }

    if config.measure_at.is_some() {
        let measured: Vec<&TrialRecord> = records.iter().filter(|r| r.correct_at_t.is_some()).collect();
        let ok = measured
            .iter()
            .filter(|r| {
                let t = r.measure_at.unwrap_or(0);
                r.correct_at_t.unwrap_or(0) as f64 >= majority_threshold(r.n, config.delta, t)
            })
            .count();
        metrics.insert("majority_at_t".into(), Estimate::rate(ok, measured.len()));
    }
}

fn critical_metrics(records: &[TrialRecord], out: &mut Aggregates) -> Result<()> {
    let samples: Vec<u64> = records.iter().filter_map(|r| r.critical_time).collect();
    let values: Vec<f64> = samples.iter().map(|&s| s as f64).collect();
    out.metrics.insert("critical_time".into(), Estimate::mean(&values));
    if samples.len() < MIN_GOF_SAMPLES {
        return Err(Error::Underpowered(format!(
            "{} critical-time samples, at least {MIN_GOF_SAMPLES} needed",
            samples.len()
        )));
    }
    let first = &records[0];
    if records.iter().any(|r| r.n != first.n || r.distance != first.distance) {
        return Err(Error::invalid("critical-time records mix graphs"));
    }
    let n = first.n;
    let d = first.distance.unwrap_or(0);
    let p = 1.0 / n as f64;
    let fit = chi_square_gof(&samples, d + 1, |t| negbinom_pmf(t, d + 1, p).unwrap_or(0.0))?;
    let control = if d >= 1 {
        Some(chi_square_gof(&samples, d, |t| negbinom_pmf(t, d, p).unwrap_or(0.0))?)
    } else {
        None
    };
    out.metrics.insert("gof_p_value".into(), Estimate::exact(fit.p_value, samples.len()));
    if let Some(c) = &control {
        out.metrics.insert("control_p_value".into(), Estimate::exact(c.p_value, samples.len()));
    }
    out.critical = Some(CriticalFit { n, distance: d, fit, control });
    Ok(())
}

fn safety_metrics(records: &[TrialRecord], out: &mut Aggregates) {
    let unsafe_count = |rs: &[&TrialRecord]| rs.iter().filter(|r| r.safe == Some(false)).count();
    let all: Vec<&TrialRecord> = records.iter().collect();
    out.metrics.insert("unsafe".into(), Estimate::rate(unsafe_count(&all), all.len()));
    let mut by_degree: BTreeMap<u64, Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        if let Some(d) = r.degree {
            by_degree.entry(d).or_default().push(r);
        }
    }
    if by_degree.is_empty() {
        return;
    }
    let rows: Vec<SweepRow> = by_degree
        .iter()
        .map(|(&degree, rs)| {
            let e = Estimate::rate(unsafe_count(rs), rs.len());
            SweepRow { degree, trials: rs.len(), unsafe_rate: e.value, radius: e.radius.unwrap_or(0.0) }
        })
        .collect();
    let (num, den) = rows.iter().fold((0.0, 0.0), |(a, b), r| {
        let x = 1.0 / r.degree as f64;
        (a + r.unsafe_rate * x, b + x * x)
    });
    let envelope_c = rows.iter().map(|r| r.unsafe_rate * r.degree as f64).fold(0.0, f64::max);
    let decreasing = rows.windows(2).all(|w| w[1].unsafe_rate <= w[0].unsafe_rate);
    let count = records.len();
    out.metrics.insert("sweep_fitted_c".into(), Estimate::exact(num / den, count));
    out.metrics.insert("sweep_envelope_c".into(), Estimate::exact(envelope_c, count));
    out.metrics.insert("sweep_decreasing".into(), Estimate::exact(decreasing as u8 as f64, count));
    out.sweep = Some(SweepTable { rows, fitted_c: num / den, envelope_c, decreasing });
}

/// Every aggregate, recomputed from the records alone.
pub fn aggregate(config: &ExperimentConfig, records: &[TrialRecord]) -> Result<Aggregates> {
    if records.is_empty() {
        return Err(Error::invalid("no trial records"));
    }
    let truncated = records.iter().filter(|r| r.truncated).count();
    let mut out = Aggregates {
        trials: records.len(),
        truncated,
        truncation_rate: truncated as f64 / records.len() as f64,
        metrics: BTreeMap::new(),
        stabilization: None,
        critical: None,
        sweep: None,
    };
    out.metrics.insert("truncation_rate".into(), Estimate::exact(out.truncation_rate, records.len()));
    match config.measurement {
        Measurement::Outcome => outcome_metrics(config, records, &mut out),
        Measurement::CriticalTime { .. } => critical_metrics(records, &mut out)?,
        Measurement::SafeProbability { .. } => safety_metrics(records, &mut out),
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdOutcome {
    pub metric: String,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub observed: Option<f64>,
    pub passed: bool,
}

/// The declared thresholds plus the truncation limit.
pub fn check_thresholds(declared: &[Threshold], agg: &Aggregates) -> Vec<ThresholdOutcome> {
    declared
        .iter()
        .cloned()
        .chain(std::iter::once(Threshold::at_most("truncation_rate", MAX_TRUNCATION_RATE)))
        .map(|t| {
            let observed = agg.metrics.get(&t.metric).map(|e| e.value);
            let passed = observed.is_some_and(|v| t.min.is_none_or(|m| v >= m) && t.max.is_none_or(|m| v <= m));
            ThresholdOutcome { metric: t.metric, min: t.min, max: t.max, observed, passed }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{FamilyKind, GraphSpec};

    fn outcome(n: u64, correct: u64, incorrect: u64, last: u64) -> TrialRecord {
        TrialRecord {
            n,
            diameter: Some(n - 1),
            correct: Some(correct),
            incorrect: Some(incorrect),
            unannounced: Some(0),
            last_change: Some(last),
            ..TrialRecord::default()
        }
    }

    #[test]
    fn outcome_rates() {
        let c = ExperimentConfig::new("x", GraphSpec::sized(FamilyKind::Line, 4), 0.3, 4, 0);
        let mut rs = vec![outcome(4, 4, 0, 10), outcome(4, 3, 1, 20), outcome(4, 2, 2, 500), outcome(4, 0, 4, 30)];
        rs.push(TrialRecord { truncated: true, n: 4, ..TrialRecord::default() });
        let a = aggregate(&c, &rs).unwrap();
        assert_eq!(a.truncated, 1);
        assert_eq!(a.metrics["correct_majority"].value, 0.5);
        assert_eq!(a.metrics["correct_consensus"].value, 0.25);
        assert_eq!(a.metrics["consensus"].value, 0.5);
        // bound for n=4, D=3: 8 * 4 * 4 = 128; 500 and the truncated trial violate
        assert_eq!(a.metrics["within_bound"].value, 3.0 / 5.0);
        assert_eq!(a.stabilization.as_ref().unwrap().max, 500);
        let checks = check_thresholds(&[Threshold::at_least("correct_majority", 0.5)], &a);
        assert!(checks[0].passed);
        assert!(!checks[1].passed, "20% truncation fails");
        assert!(!check_thresholds(&[Threshold::at_least("nope", 0.0)], &a)[0].passed);
    }

    #[test]
    fn majority_threshold_is_vacuous_at_zero() {
        assert!(majority_threshold(100, 0.3, 0) <= 0.0);
        assert!((majority_threshold(100, 0.3, u64::MAX) - 65.0).abs() < 1e-9);
    }

    #[test]
    fn sweep_fit() {
        let mut c = ExperimentConfig::new("x", GraphSpec::sized(FamilyKind::Star, 2), 0.3, 4, 0);
        c.measurement = Measurement::SafeProbability {
            target: crate::harness::config::SafeTarget::Center,
            forced_neighbors: 0,
            horizon: crate::harness::config::Horizon::NTimesDegree,
            degrees: Some(vec![10, 20]),
        };
        let mk = |d: u64, safe: bool| TrialRecord { degree: Some(d), safe: Some(safe), ..TrialRecord::default() };
        let rs = vec![mk(10, false), mk(10, true), mk(20, false), mk(20, true), mk(20, true), mk(20, true)];
        let a = aggregate(&c, &rs).unwrap();
        let s = a.sweep.unwrap();
        assert_eq!(s.rows[0].unsafe_rate, 0.5);
        assert_eq!(s.rows[1].unsafe_rate, 0.25);
        assert!(s.decreasing);
        assert!((s.fitted_c - 5.0).abs() < 1e-12);
        assert_eq!(s.envelope_c, 5.0);
    }
}
