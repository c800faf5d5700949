//! Small statistical helpers shared by the harness and the acceptance suite.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Minimum expected count per chi-square bin.
pub const MIN_EXPECTED: f64 = 5.0;

pub fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Sample mean and standard error of the mean.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Nearest-rank quantile of ascending data.
pub fn quantile(sorted: &[u64], q: f64) -> Option<u64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GofBin {
    /// Smallest value in the bin; the last bin is open-ended.
    pub from: u64,
    pub observed: u64,
    pub expected: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub samples: usize,
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub bins: Vec<GofBin>,
}

fn chi_square_sf(statistic: f64, dof: usize) -> Result<f64> {
    if !statistic.is_finite() {
        return Ok(0.0);
    }
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(dist.sf(statistic))
}

/// Pearson chi-square test of integer samples against a pmf supported on
/// `support_start..`. Consecutive values are merged left to right until each
/// bin expects at least [`MIN_EXPECTED`]; the rest of the support forms an
/// open tail bin. No parameters are estimated, so `dof = bins - 1`.
pub fn chi_square_gof(samples: &[u64], support_start: u64, pmf: impl Fn(u64) -> f64) -> Result<GofReport> {
    let total = samples.len();
    if total == 0 {
        return Err(Error::Underpowered("no samples".into()));
    }
    let nf = total as f64;
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let below = sorted.partition_point(|&s| s < support_start);
    let count_in = |lo: u64, hi: u64| (sorted.partition_point(|&s| s < hi) - sorted.partition_point(|&s| s < lo)) as u64;
    let mut bins = Vec::new();
    let mut from = support_start;
    let mut expected = 0.0;
    let mut cumulative = 0.0;
    let mut t = support_start;
    loop {
        let p = pmf(t);
        expected += nf * p;
        cumulative += p;
        t += 1;
        let rest = nf * (1.0 - cumulative);
        if expected >= MIN_EXPECTED && rest >= MIN_EXPECTED {
            bins.push(GofBin { from, observed: count_in(from, t), expected });
            from = t;
            expected = 0.0;
        } else if expected + rest < 2.0 * MIN_EXPECTED && cumulative > 0.5 {
            // what is left cannot fill two bins: close an open tail
            let observed = count_in(from, u64::MAX) + (sorted.last() == Some(&u64::MAX)) as u64;
            bins.push(GofBin { from, observed, expected: expected + rest.max(0.0) });
            break;
        }
        if t - support_start > 100_000_000 {
            return Err(Error::Capacity("pmf support too long to bin".into()));
        }
    }
    if below > 0 {
        // outside the support: impossible under the null
        return Ok(GofReport { samples: total, statistic: f64::INFINITY, dof: bins.len().saturating_sub(1), p_value: 0.0, bins });
    }
    if bins.len() < 2 {
        return Err(Error::Underpowered("fewer than two chi-square bins".into()));
    }
    let statistic = bins
        .iter()
        .map(|b| (b.observed as f64 - b.expected).powi(2) / b.expected)
        .sum();
    let dof = bins.len() - 1;
    Ok(GofReport { samples: total, statistic, dof, p_value: chi_square_sf(statistic, dof)?, bins })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityReport {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Lower edges of the merged categories.
    pub bins: Vec<u64>,
}

/// Chi-square test that two samples of integer categories come from the
/// same distribution. Categories are merged in ascending order until each
/// merged bin has expected count at least [`MIN_EXPECTED`] in both samples.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> Result<HomogeneityReport> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Underpowered("empty sample".into()));
    }
    let mut counts: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    for &x in a {
        counts.entry(x).or_default().0 += 1;
    }
    for &x in b {
        counts.entry(x).or_default().1 += 1;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;
    let mut merged: Vec<(u64, u64, u64)> = Vec::new();
    let mut current: Option<(u64, u64, u64)> = None;
    for (&k, &(ca, cb)) in &counts {
        let c = current.get_or_insert((k, 0, 0));
        c.1 += ca;
        c.2 += cb;
        let pooled = (c.1 + c.2) as f64;
        if pooled * na.min(nb) / n >= MIN_EXPECTED {
            merged.push(current.take().expect("just set"));
        }
    }
    if let Some(rest) = current {
        match merged.last_mut() {
            Some(last) => {
                last.1 += rest.1;
                last.2 += rest.2;
            }
            None => merged.push(rest),
        }
    }
    if merged.len() < 2 {
        return Err(Error::Underpowered("fewer than two categories after merging".into()));
    }
    let mut statistic = 0.0;
    for &(_, ca, cb) in &merged {
        let pooled = (ca + cb) as f64;
        let ea = pooled * na / n;
        let eb = pooled * nb / n;
        statistic += (ca as f64 - ea).powi(2) / ea + (cb as f64 - eb).powi(2) / eb;
    }
    let dof = merged.len() - 1;
    Ok(HomogeneityReport {
        statistic,
        dof,
        p_value: chi_square_sf(statistic, dof)?,
        bins: merged.iter().map(|m| m.0).collect(),
    })
}
