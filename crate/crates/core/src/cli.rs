//! The `majority-lab` command line.
//!
//! Every subcommand first prints `# majority-lab <command> <json>` with its
//! fully resolved settings. Files it writes embed the same settings in their
//! headers. Exit status: 0 success, 1 a check or threshold failed, 2 usage,
//! parse or runtime error.

use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::acceptance::{self, CRITERIA};
use crate::dynamics::trace_io::{read_binary, read_jsonl, write_binary, write_jsonl};
use crate::dynamics::{
    correct_fraction, default_step_cap, run, DynamicsState, RunTrace, Schedule, SignalAssignment, StopCondition,
};
use crate::graphgen::io::{from_dot, graph_hash, read_edge_list, to_dot, write_edge_list};
use crate::graphgen::{Graph, Rooting};
use crate::harness::{run_experiment, run_experiment_on, ExperimentConfig, FamilyKind, GraphSpec, MeasureAt, MeasureRule};
use crate::oracle::{exact_absorption, exact_absorption_cached, exhaustive_boolean_check};
use crate::trace_analysis::{
    audit_finalization, counting_check, critical_times, finalization_report, influence_set, is_safe_thru,
    verify_critical_chain,
};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "majority-lab", version, about = "Asynchronous majority dynamics: generate, run, analyze, solve, experiment")]
pub struct Cli {
    /// Default directory for written files when --out is not given.
    #[arg(long, global = true, env = "MAJORITY_LAB_OUT_DIR", value_name = "DIR")]
    pub out_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a graph and write it as an edge list (or DOT).
    Gen(GenArgs),
    /// Execute one seeded run and write its trace.
    Run(RunArgs),
    /// Analyze a recorded trace.
    Analyze(AnalyzeArgs),
    /// Exact absorption probabilities, or the exhaustive Boolean check with --schedule.
    Oracle(OracleArgs),
    /// Run an experiment config through the harness.
    Experiment(ExperimentArgs),
    /// Run the acceptance suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Args, Clone)]
pub struct GraphArgs {
    /// Graph file (edge list, or DOT when the name ends in .dot); overrides --family.
    #[arg(long, value_name = "FILE")]
    pub graph: Option<PathBuf>,
    /// Graph family.
    #[arg(long, value_enum)]
    pub family: Option<FamilyKind>,
    /// Size parameter (PA families produce n + 1 nodes).
    #[arg(long)]
    pub n: Option<usize>,
    /// Branching factor for --family mary.
    #[arg(long)]
    pub m_ary: Option<usize>,
    /// Depth for --family mary.
    #[arg(long)]
    pub depth: Option<usize>,
}

impl GraphArgs {
    fn spec(&self) -> Result<Option<GraphSpec>> {
        match (&self.graph, self.family) {
            (Some(_), _) => Ok(None),
            (None, Some(family)) => {
                let spec = GraphSpec { family, n: self.n, m_ary: self.m_ary, depth: self.depth };
                spec.validate()?;
                Ok(Some(spec))
            }
            (None, None) => Err(Error::invalid("give --graph FILE or --family")),
        }
    }

    fn load(&self, seed: u64) -> Result<Graph> {
        match &self.graph {
            Some(path) => read_graph(path),
            None => self.spec()?.expect("family given").build(seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphFormat {
    Edges,
    Dot,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output format.
    #[arg(long, value_enum, default_value_t = GraphFormat::Edges)]
    pub format: GraphFormat,
    /// Output file; defaults to a name derived from the settings in the output directory.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceFormat {
    Jsonl,
    Binary,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Signal bias: Pr[X = 1] = 1/2 + delta.
    #[arg(long, default_value_t = 0.3)]
    pub delta: f64,
    /// Seed for signals, schedule and (for random families) the graph.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Step budget; defaults to 64 max(2 ln n, D + 1) n.
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Run exactly --max-steps steps instead of stopping at stabilization.
    #[arg(long)]
    pub no_halt: bool,
    /// Nodes pinned to Incorrect from step 0, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub forced_incorrect: Vec<usize>,
    /// Node that becomes Correct at its first scheduling and stays there.
    #[arg(long)]
    pub forced_correct: Option<usize>,
    /// Trace format; .bin files default to binary.
    #[arg(long, value_enum)]
    pub format: Option<TraceFormat>,
    /// Trace file; defaults to trace-<seed>.jsonl in the output directory.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    /// Every 0/1 switch traced back along neighbor switches (trees only).
    CriticalChain,
    /// Finalization, nearly-finalization and T_v per node, with the lemma audit.
    Finalization,
    /// Critical times from --source to every node.
    CriticalTable,
    /// Nodes whose critical time to --node is at most --at.
    Influence,
    /// Whether --node is safe thru --at.
    Safety,
    /// Child-counting check at --node.
    Counting,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Trace file (JSON lines or binary).
    #[arg(long, value_name = "FILE")]
    pub trace: PathBuf,
    /// Checks to run, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "critical-chain")]
    pub check: Vec<Check>,
    /// Root for finalization and counting.
    #[arg(long, default_value_t = 0)]
    pub root: usize,
    /// Source node for the critical table.
    #[arg(long)]
    pub source: Option<usize>,
    /// Target node for influence, safety and counting.
    #[arg(long)]
    pub node: Option<usize>,
    /// Step for influence and safety; defaults to the last step.
    #[arg(long)]
    pub at: Option<u64>,
    /// Report file (JSON); stdout when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Signal bias.
    #[arg(long, default_value_t = 0.3)]
    pub delta: f64,
    /// Graph seed for random families.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run the exhaustive Boolean check on this schedule (comma separated nodes).
    #[arg(long, value_delimiter = ',')]
    pub schedule: Option<Vec<usize>>,
    /// Cache directory for absorption results.
    #[arg(long, value_name = "DIR")]
    pub cache: Option<PathBuf>,
    /// Include the per-assignment breakdown.
    #[arg(long)]
    pub full: bool,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Experiment config (JSON or TOML).
    #[arg(long, value_name = "FILE")]
    pub config: PathBuf,
    /// Run on this graph file instead of the configured family.
    #[arg(long, value_name = "FILE")]
    pub graph: Option<PathBuf>,
    /// Override the trial count.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Override the master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override delta.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Override the per-trial step budget.
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Override the measurement step: a number or "theorem".
    #[arg(long, value_parser = parse_measure_at)]
    pub measure_at: Option<MeasureAt>,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory for records, aggregates and plots.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Master seed for the suite.
    #[arg(long, default_value_t = acceptance::Options::default().seed)]
    pub seed: u64,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Run only these criteria, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<u8>,
}

fn parse_measure_at(s: &str) -> std::result::Result<MeasureAt, String> {
    if s == "theorem" {
        return Ok(MeasureAt::Rule(MeasureRule::Theorem));
    }
    s.parse().map(MeasureAt::Step).map_err(|_| format!("expected a step or \"theorem\", got {s:?}"))
}

/// Parses `args` (program name first) and executes, writing to `out`.
pub fn dispatch<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let dir = cli.out_dir.clone();
    match &cli.command {
        Command::Gen(a) => gen(a, dir, out),
        Command::Run(a) => run_cmd(a, dir, out),
        Command::Analyze(a) => analyze(a, out),
        Command::Oracle(a) => oracle(a, out),
        Command::Experiment(a) => experiment(a, dir, out),
        Command::Verify(a) => verify(a, out),
    }
}

fn echo(out: &mut dyn Write, command: &str, config: &Value) -> Result<()> {
    writeln!(out, "# majority-lab {command} {}", serde_json::to_string(config)?)?;
    Ok(())
}

fn default_path(dir: Option<PathBuf>, name: String) -> PathBuf {
    dir.unwrap_or_else(|| PathBuf::from(".")).join(name)
}

pub fn read_graph(path: &Path) -> Result<Graph> {
    if path.extension().is_some_and(|e| e == "dot") {
        from_dot(&std::fs::read_to_string(path)?)
    } else {
        read_edge_list(BufReader::new(std::fs::File::open(path)?))
    }
}

pub fn read_trace(path: &Path) -> Result<RunTrace> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(b"MLTRACE\0") {
        read_binary(&bytes[..])
    } else {
        read_jsonl(&bytes[..])
    }
}

fn gen(a: &GenArgs, dir: Option<PathBuf>, out: &mut dyn Write) -> Result<i32> {
    if a.graph.graph.is_some() {
        return Err(Error::invalid("gen builds from --family; --graph is for reading"));
    }
    let spec = a.graph.spec()?.expect("family given");
    let g = spec.build(a.seed)?;
    let ext = match a.format {
        GraphFormat::Edges => "edges",
        GraphFormat::Dot => "dot",
    };
    let size = spec.n.map_or_else(|| format!("m{}-d{}", spec.m_ary.unwrap_or(0), spec.depth.unwrap_or(0)), |n| format!("n{n}"));
    let family = serde_json::to_value(spec.family)?;
    let path = a.out.clone().unwrap_or_else(|| {
        default_path(dir, format!("{}-{size}-s{}.{ext}", family.as_str().unwrap_or("graph"), a.seed))
    });
    // the file header leaves out the path so reruns elsewhere are byte-identical
    let config = json!({ "graph": spec, "seed": a.seed, "format": a.format });
    let mut echoed = config.clone();
    echoed["out"] = json!(path);
    echo(out, "gen", &echoed)?;
    let mut bytes = Vec::new();
    match a.format {
        GraphFormat::Edges => write_edge_list(&g, &[format!("config {}", serde_json::to_string(&config)?)], &mut bytes)?,
        GraphFormat::Dot => bytes.extend_from_slice(to_dot(&g).as_bytes()),
    }
    crate::harness::write_atomic(&path, &bytes)?;
    writeln!(out, "wrote {} ({} nodes, hash {})", path.display(), g.node_count(), graph_hash(&g))?;
    Ok(EXIT_OK)
}

fn run_cmd(a: &RunArgs, dir: Option<PathBuf>, out: &mut dyn Write) -> Result<i32> {
    let g = Arc::new(a.graph.load(a.seed)?);
    let n = g.node_count();
    let signals = SignalAssignment::sample(n, a.delta, a.seed)?;
    let schedule = Schedule::seeded(a.seed);
    let max_steps = match a.max_steps {
        Some(m) => m,
        None if a.no_halt => return Err(Error::invalid("--no-halt needs --max-steps")),
        None => default_step_cap(&g)?,
    };
    let stop = if a.no_halt { StopCondition::exactly(max_steps) } else { StopCondition::stabilize(max_steps) };
    let mut state = DynamicsState::new(n).with_forced_incorrect(&a.forced_incorrect)?;
    if let Some(x) = a.forced_correct {
        state = state.with_forced_correct(x)?;
    }
    let path = a.out.clone().unwrap_or_else(|| default_path(dir, format!("trace-{}.jsonl", a.seed)));
    let format = a.format.unwrap_or(if path.extension().is_some_and(|e| e == "bin") {
        TraceFormat::Binary
    } else {
        TraceFormat::Jsonl
    });
    echo(
        out,
        "run",
        &json!({
            "graph": a.graph.graph.as_ref().map(|p| json!(p)).unwrap_or(json!(a.graph.spec()?)),
            "graph_hash": graph_hash(&g),
            "n": n,
            "delta": a.delta,
            "seed": a.seed,
            "schedule": schedule,
            "stop": stop,
            "forced_incorrect": a.forced_incorrect,
            "forced_correct": a.forced_correct,
            "format": format,
            "out": path,
        }),
    )?;
    let (trace, code) = match run(&g, &signals, &schedule, state, stop) {
        Ok(t) => (t, EXIT_OK),
        Err(Error::Truncated(t)) => (*t, EXIT_FAILED),
        Err(e) => return Err(e),
    };
    let mut bytes = Vec::new();
    match format {
        TraceFormat::Jsonl => write_jsonl(&trace, &mut bytes)?,
        TraceFormat::Binary => write_binary(&trace, &mut bytes)?,
    }
    crate::harness::write_atomic(&path, &bytes)?;
    let f = correct_fraction(&trace.final_state);
    let summary = json!({
        "trace": path,
        "steps": trace.steps(),
        "stabilization_step": trace.stabilization_step,
        "truncated": trace.truncated,
        "final": f,
    });
    writeln!(out, "{}", serde_json::to_string_pretty(&summary)?)?;
    Ok(code)
}

fn analyze(a: &AnalyzeArgs, out: &mut dyn Write) -> Result<i32> {
    let trace = read_trace(&a.trace)?;
    let at = a.at.unwrap_or(trace.steps());
    echo(
        out,
        "analyze",
        &json!({
            "trace": a.trace,
            "graph_hash": graph_hash(&trace.graph),
            "checks": a.check,
            "root": a.root,
            "source": a.source,
            "node": a.node,
            "at": at,
        }),
    )?;
    let need = |v: Option<usize>, flag: &str, check: &str| {
        v.ok_or_else(|| Error::invalid(format!("check {check} needs --{flag}")))
    };
    let mut report = serde_json::Map::new();
    let mut ok = true;
    for check in &a.check {
        let (key, value) = match check {
            Check::CriticalChain => {
                let v = verify_critical_chain(&trace)?;
                ok &= v.is_ok();
                ("critical_chain", serde_json::to_value(v)?)
            }
            Check::Finalization => {
                let rooting = Rooting::new(&trace.graph, a.root)?;
                let rep = finalization_report(&trace, &rooting)?;
                let violations = if rep.partial { None } else { Some(audit_finalization(&trace, &rooting)?) };
                ok &= violations.as_ref().is_none_or(Vec::is_empty);
                ("finalization", json!({ "report": rep, "violations": violations }))
            }
            Check::CriticalTable => {
                let u = need(a.source, "source", "critical-table")?;
                ("critical_table", serde_json::to_value(critical_times(&trace, u))?)
            }
            Check::Influence => {
                let v = need(a.node, "node", "influence")?;
                ("influence", json!({ "node": v, "at": at, "set": influence_set(&trace, v, at) }))
            }
            Check::Safety => {
                let v = need(a.node, "node", "safety")?;
                ("safety", json!({ "node": v, "at": at, "safe": is_safe_thru(&trace, v, at)? }))
            }
            Check::Counting => {
                let v = need(a.node, "node", "counting")?;
                let rooting = Rooting::new(&trace.graph, a.root)?;
                let c = counting_check(&trace, &rooting, v)?;
                ok &= c.is_ok();
                ("counting", serde_json::to_value(c)?)
            }
        };
        report.insert(key.into(), value);
    }
    report.insert("ok".into(), json!(ok));
    let text = serde_json::to_string_pretty(&Value::Object(report))? + "\n";
    match &a.out {
        Some(path) => {
            crate::harness::write_atomic(path, text.as_bytes())?;
            writeln!(out, "wrote {}", path.display())?;
            writeln!(out, "ok {ok}")?;
        }
        None => out.write_all(text.as_bytes())?,
    }
    Ok(if ok { EXIT_OK } else { EXIT_FAILED })
}

fn oracle(a: &OracleArgs, out: &mut dyn Write) -> Result<i32> {
    let g = a.graph.load(a.seed)?;
    let graph = match &a.graph.graph {
        Some(p) => json!(p),
        None => json!(a.graph.spec()?),
    };
    echo(
        out,
        "oracle",
        &json!({
            "graph": graph,
            "graph_hash": graph_hash(&g),
            "n": g.node_count(),
            "delta": a.delta,
            "seed": a.seed,
            "mode": if a.schedule.is_some() { "boolean" } else { "absorption" },
            "schedule": a.schedule,
            "cache": a.cache,
        }),
    )?;
    if let Some(schedule) = &a.schedule {
        let v = exhaustive_boolean_check(&g, schedule, a.delta)?;
        writeln!(out, "{}", serde_json::to_string_pretty(&v)?)?;
        return Ok(if v.passed() { EXIT_OK } else { EXIT_FAILED });
    }
    let mut r = match &a.cache {
        Some(dir) => exact_absorption_cached(&g, a.delta, dir)?,
        None => exact_absorption(&g, a.delta)?,
    };
    if !a.full {
        r.assignments.clear();
    }
    writeln!(out, "{}", serde_json::to_string_pretty(&r)?)?;
    Ok(EXIT_OK)
}

fn experiment(a: &ExperimentArgs, dir: Option<PathBuf>, out: &mut dyn Write) -> Result<i32> {
    let mut c = ExperimentConfig::load(&a.config)?;
    if let Some(t) = a.trials {
        c.trials = t;
    }
    if let Some(s) = a.seed {
        c.seed = s;
    }
    if let Some(d) = a.delta {
        c.delta = d;
    }
    if let Some(m) = a.max_steps {
        c.max_steps = Some(m);
    }
    if let Some(m) = a.measure_at {
        c.measure_at = Some(m);
    }
    if let Some(w) = a.workers {
        c.workers = Some(w);
    }
    c.output = a.out.clone().or(c.output).or(dir).or_else(|| Some(PathBuf::from("results")));
    c.validate()?;
    echo(out, "experiment", &json!({ "config": c, "graph_file": a.graph }))?;
    let r = match &a.graph {
        Some(p) => run_experiment_on(&c, Arc::new(read_graph(p)?))?,
        None => run_experiment(&c)?,
    };
    for t in &r.thresholds {
        writeln!(
            out,
            "{} {} observed {} (min {}, max {})",
            if t.passed { "PASS" } else { "FAIL" },
            t.metric,
            t.observed.map_or("missing".into(), |v| format!("{v:.6}")),
            t.min.map_or("-".into(), |v| v.to_string()),
            t.max.map_or("-".into(), |v| v.to_string()),
        )?;
    }
    writeln!(
        out,
        "{} trials, {} truncated, {} ms",
        r.aggregates.trials, r.aggregates.truncated, r.performance.wall_clock_ms
    )?;
    for p in &r.outputs {
        writeln!(out, "wrote {}", p.display())?;
    }
    Ok(if r.passed { EXIT_OK } else { EXIT_FAILED })
}

fn verify(a: &VerifyArgs, out: &mut dyn Write) -> Result<i32> {
    let opts = acceptance::Options { seed: a.seed, workers: a.workers };
    let ids: Vec<u8> = if a.only.is_empty() { CRITERIA.iter().map(|c| c.0).collect() } else { a.only.clone() };
    echo(out, "verify", &json!({ "seed": a.seed, "workers": a.workers, "criteria": ids }))?;
    let mut all = true;
    for id in ids {
        let o = acceptance::run_criterion(id, &opts);
        writeln!(out, "{o}")?;
        out.flush()?;
        all &= o.passed;
    }
    Ok(if all { EXIT_OK } else { EXIT_FAILED })
}
