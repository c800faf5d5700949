use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::graphgen::{
    gen_balanced_mary, gen_baseline, gen_pa_pittel, gen_preferential_attachment, gen_random_recursive, Baseline,
    Graph,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    /// Preferential attachment tree on `n + 1` nodes.
    Pa,
    /// Preferential attachment through exponential clocks, `n + 1` nodes.
    PaPittel,
    /// Balanced tree with branching `m_ary` and the given depth.
    Mary,
    Line,
    Star,
    Complete,
    RandomRecursive,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub family: FamilyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_ary: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
}

impl GraphSpec {
    pub fn sized(family: FamilyKind, n: usize) -> Self {
        GraphSpec { family, n: Some(n), m_ary: None, depth: None }
    }

    pub fn mary(m: usize, depth: usize) -> Self {
        GraphSpec { family: FamilyKind::Mary, n: None, m_ary: Some(m), depth: Some(depth) }
    }

    /// A fresh graph is drawn for every trial.
    pub fn is_random(&self) -> bool {
        matches!(self.family, FamilyKind::Pa | FamilyKind::PaPittel | FamilyKind::RandomRecursive)
    }

    pub fn validate(&self) -> Result<()> {
        match self.family {
            FamilyKind::Mary => {
                if self.m_ary.is_none() || self.depth.is_none() {
                    return Err(Error::invalid("family mary needs m_ary and depth"));
                }
                if self.n.is_some() {
                    return Err(Error::invalid("family mary takes m_ary and depth, not n"));
                }
            }
            _ => {
                if self.n.is_none() {
                    return Err(Error::invalid(format!("family {:?} needs n", self.family)));
                }
                if self.m_ary.is_some() || self.depth.is_some() {
                    return Err(Error::invalid("m_ary and depth only apply to family mary"));
                }
            }
        }
        Ok(())
    }

    /// Builds the graph; `seed` is ignored by deterministic families.
    pub fn build(&self, seed: u64) -> Result<Graph> {
        self.validate()?;
        let n = self.n.unwrap_or(0);
        match self.family {
            FamilyKind::Pa => gen_preferential_attachment(n, seed),
            FamilyKind::PaPittel => gen_pa_pittel(n, seed),
            FamilyKind::RandomRecursive => gen_random_recursive(n, seed),
            FamilyKind::Mary => gen_balanced_mary(self.m_ary.unwrap_or(0), self.depth.unwrap_or(0)),
            FamilyKind::Line => gen_baseline(Baseline::Line, n),
            FamilyKind::Star => gen_baseline(Baseline::Star, n),
            FamilyKind::Complete => gen_baseline(Baseline::Complete, n),
        }
    }
}

/// Named measurement steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureRule {
    /// `floor(n ln n / (32 ln ln n))`.
    Theorem,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeasureAt {
    Step(u64),
    Rule(MeasureRule),
}

impl MeasureAt {
    pub fn resolve(self, n: usize) -> Result<u64> {
        match self {
            MeasureAt::Step(t) => Ok(t),
            MeasureAt::Rule(MeasureRule::Theorem) => theorem_measure_step(n),
        }
    }
}

/// `floor(n ln n / (32 ln ln n))`, defined for `n >= 16`.
pub fn theorem_measure_step(n: usize) -> Result<u64> {
    if n < 16 {
        return Err(Error::invalid(format!("measurement step needs n >= 16, got {n}")));
    }
    let nf = n as f64;
    Ok((nf * nf.ln() / (32.0 * nf.ln().ln())).floor() as u64)
}

/// How long a safety trial runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Horizon {
    Steps(u64),
    /// `factor * n` steps.
    PerNode(f64),
    /// `n * deg(target)` steps.
    NTimesDegree,
}

impl Horizon {
    pub fn resolve(self, n: usize, degree: usize) -> u64 {
        match self {
            Horizon::Steps(t) => t,
            Horizon::PerNode(f) => (f * n as f64).ceil() as u64,
            Horizon::NTimesDegree => (n * degree) as u64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SafeTarget {
    /// Node 0, the center of a star.
    Center,
    /// Lowest-index node of maximum degree.
    MaxDegree,
    Node(usize),
}

impl SafeTarget {
    pub fn resolve(self, g: &Graph) -> Result<usize> {
        let n = g.node_count();
        match self {
            SafeTarget::Center => Ok(0),
            SafeTarget::MaxDegree => Ok((0..n).max_by_key(|&v| (g.degree(v), std::cmp::Reverse(v))).unwrap_or(0)),
            SafeTarget::Node(v) if v < n => Ok(v),
            SafeTarget::Node(v) => Err(Error::invalid(format!("target node {v} out of range"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Measurement {
    /// Run to stabilization; record the final profile and, with
    /// `measure_at`, the number of correct announcements at that step.
    #[default]
    Outcome,
    /// Sample the critical time from `source` to `target`.
    CriticalTime { source: usize, target: usize },
    /// Whether `target` stays safe thru the horizon with its
    /// `forced_neighbors` lowest-index neighbors pinned to `Incorrect`.
    /// With `degrees`, the family must be a star and each degree `d` is run
    /// on a star with `d` leaves.
    SafeProbability {
        target: SafeTarget,
        #[serde(default)]
        forced_neighbors: usize,
        horizon: Horizon,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        degrees: Option<Vec<usize>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Threshold {
    pub metric: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

impl Threshold {
    pub fn at_least(metric: &str, min: f64) -> Self {
        Threshold { metric: metric.into(), min: Some(min), max: None }
    }

    pub fn at_most(metric: &str, max: f64) -> Self {
        Threshold { metric: metric.into(), min: None, max: Some(max) }
    }

    pub fn between(metric: &str, min: f64, max: f64) -> Self {
        Threshold { metric: metric.into(), min: Some(min), max: Some(max) }
    }
}

/// Truncation rate above which an experiment fails regardless of its
/// declared thresholds.
pub const MAX_TRUNCATION_RATE: f64 = 0.01;

/// Minimum sample size for a critical-time fit.
pub const MIN_GOF_SAMPLES: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub graph: GraphSpec,
    pub delta: f64,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Step budget per trial; `None` uses `64 max(2 ln n, D + 1) n` for
    /// each trial's graph.
    #[serde(default)]
    pub max_steps: Option<u64>,
    #[serde(default)]
    pub measure_at: Option<MeasureAt>,
    #[serde(default)]
    pub measurement: Measurement,
    #[serde(default)]
    pub thresholds: Vec<Threshold>,
    /// Directory for the per-trial CSV, aggregate JSON and plots.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Worker threads; `None` uses every core. Never affects results.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub plot: bool,
}

impl ExperimentConfig {
    pub fn new(name: &str, graph: GraphSpec, delta: f64, trials: usize, seed: u64) -> Self {
        ExperimentConfig {
            name: name.into(),
            graph,
            delta,
            trials,
            seed,
            max_steps: None,
            measure_at: None,
            measurement: Measurement::Outcome,
            thresholds: Vec::new(),
            output: None,
            workers: None,
            plot: false,
        }
    }

    /// Reads JSON (`.json`) or TOML (anything else).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: ExperimentConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| {
                let offset = line_col_offset(&text, e.line(), e.column());
                Error::parse(offset, e.to_string())
            })?
        } else {
            toml::from_str(&text).map_err(|e| {
                let offset = e.span().map_or(0, |s| s.start as u64);
                Error::parse(offset, e.message().to_string())
            })?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
            return Err(Error::invalid(format!("experiment name {:?} must be a plain file stem", self.name)));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trial count must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::invalid(format!("delta {} not in (0, 1/2)", self.delta)));
        }
        if self.workers == Some(0) {
            return Err(Error::invalid("workers must be at least 1"));
        }
        for t in &self.thresholds {
            if t.min.is_none() && t.max.is_none() {
                return Err(Error::invalid(format!("threshold on {} has neither min nor max", t.metric)));
            }
        }
        self.graph.validate()?;
        match &self.measurement {
            Measurement::Outcome => {}
            Measurement::CriticalTime { .. } => {
                if self.graph.is_random() {
                    return Err(Error::invalid("critical-time fits need a deterministic graph family"));
                }
                if self.trials < MIN_GOF_SAMPLES {
                    return Err(Error::Underpowered(format!(
                        "critical-time fit needs at least {MIN_GOF_SAMPLES} samples, got {}",
                        self.trials
                    )));
                }
            }
            Measurement::SafeProbability { degrees, .. } => {
                if let Some(d) = degrees {
                    if self.graph.family != FamilyKind::Star {
                        return Err(Error::invalid("degree sweeps run on stars"));
                    }
                    if d.is_empty() || d.contains(&0) {
                        return Err(Error::invalid("degree sweep needs positive degrees"));
                    }
                }
            }
        }
        if self.measure_at.is_some() && self.measurement != Measurement::Outcome {
            return Err(Error::invalid("measure_at applies to outcome experiments only"));
        }
        Ok(())
    }
}

fn line_col_offset(text: &str, line: usize, column: usize) -> u64 {
    let before: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (before + column.saturating_sub(1)) as u64
}
