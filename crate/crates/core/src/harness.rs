//! Generation, evaluation and batch experiments on top of the solvers.
//!
//! A batch samples RU instances per cell, hardens each with every requested
//! method and budget, solves original and hardened instances with the exact
//! robust solver, and aggregates node-count ratios. Instances run in parallel
//! on a fixed-size pool; results are assembled in input order, so a report
//! depends only on the config (apart from its timing fields).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::instance::{sample_ru, Instance, ProblemKind};
use crate::ldr::ldr_solve;
use crate::midgen::mid_generate;
use crate::mro::{mro_generate, InnerKind, MasterKind, MroOptions};
use crate::robust::solve_exact;
use crate::uncertainty::build_uncertainty;

/// Rounds of block alternation allowed to the decision-rule method.
pub const LDR_MAX_ITERS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ru", alias = "none")]
    Ru,
    #[serde(rename = "mro-ex")]
    MroEx,
    #[serde(rename = "mro-cg")]
    MroCg,
    #[serde(rename = "mro-heu")]
    MroHeu,
    #[serde(rename = "mro-lsheu")]
    MroLsheu,
    #[serde(rename = "mro-ldr")]
    MroLdr,
    #[serde(rename = "mid")]
    Mid,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Ru,
        Method::MroEx,
        Method::MroCg,
        Method::MroHeu,
        Method::MroLsheu,
        Method::MroLdr,
        Method::Mid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ru => "ru",
            Method::MroEx => "mro-ex",
            Method::MroCg => "mro-cg",
            Method::MroHeu => "mro-heu",
            Method::MroLsheu => "mro-lsheu",
            Method::MroLdr => "mro-ldr",
            Method::Mid => "mid",
        }
    }

    /// Master and inner solvers of the iterative variants.
    pub fn mro_kinds(self) -> Option<(MasterKind, InnerKind)> {
        match self {
            Method::MroEx => Some((MasterKind::Exact, InnerKind::Exact)),
            Method::MroCg => Some((MasterKind::Colgen, InnerKind::Exact)),
            Method::MroHeu => Some((MasterKind::Alternating, InnerKind::Exact)),
            Method::MroLsheu => Some((MasterKind::Alternating, InnerKind::Heuristic)),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "none" {
            return Ok(Method::Ru);
        }
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Invariant(format!("unknown method {s:?}")))
    }
}

/// Run log of one generation, written next to hardened instances.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationLog {
    pub method: Method,
    pub budget: f64,
    /// Why the generator stopped; absent for `ru`.
    pub stop: Option<String>,
    pub generation_time: f64,
    /// Method-specific trace.
    pub detail: Value,
}

/// Hardens `instance` with `method`. A generator that runs out of time returns
/// its best scenarios with stop reason `time_limit`; only a timeout before any
/// scenarios exist is an error.
pub fn generate(
    instance: &Instance,
    method: Method,
    budget: f64,
    time_limit: Option<Duration>,
) -> Result<(Instance, GenerationLog)> {
    let start = Instant::now();
    let (hardened, stop, detail) = match method {
        Method::Ru => (instance.clone(), None, Value::Null),
        Method::MroEx | Method::MroCg | Method::MroHeu | Method::MroLsheu => {
            let (master, inner) = method.mro_kinds().expect("iterative method");
            let opts = MroOptions { master, inner, time_limit };
            let (hard, run) = mro_generate(instance, budget, opts)?;
            let stop = serde_json::to_value(run.stop)?.as_str().map(str::to_owned);
            (hard, stop, serde_json::to_value(&run)?)
        }
        Method::MroLdr => {
            let (hard, run) = ldr_solve(instance, budget, LDR_MAX_ITERS)?;
            let stop = if run.hit_soft_bound { "soft_bound" } else { "converged" };
            (hard, Some(stop.to_owned()), serde_json::to_value(&run)?)
        }
        Method::Mid => {
            let (res, stop) = match mid_generate(instance, budget, time_limit) {
                Ok(r) => (r, "converged"),
                Err(Error::MidTimeLimit(r)) => (*r, "time_limit"),
                Err(e) => return Err(e),
            };
            let detail = json!({
                "value": res.value,
                "x_hat": res.x_hat.ones().collect::<Vec<_>>(),
                "nodes": res.nodes,
                "lp_solves": res.lp_solves,
                "proven_optimal": res.proven_optimal,
            });
            (res.instance, Some(stop.to_owned()), detail)
        }
    };
    let log = GenerationLog {
        method,
        budget,
        stop,
        generation_time: start.elapsed().as_secs_f64(),
        detail,
    };
    Ok((hardened, log))
}

/// Result of the exact robust solver on one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    /// Best robust value found; absent if the limit struck before any.
    pub value: Option<f64>,
    pub lower_bound: Option<f64>,
    /// 1-based indices of the ones in the best solution.
    pub solution: Vec<usize>,
    pub nodes: u64,
    pub lp_solves: u64,
    pub wall_time: f64,
    pub optimal: bool,
}

pub fn evaluate(instance: &Instance, time_limit: Option<Duration>) -> Result<Evaluation> {
    let start = Instant::now();
    let (res, optimal) = match solve_exact(instance, time_limit) {
        Ok(r) => (r, true),
        Err(Error::RobustTimeLimit(r)) => (*r, false),
        Err(Error::TimeLimitNoIncumbent) => {
            return Ok(Evaluation {
                value: None,
                lower_bound: None,
                solution: Vec::new(),
                nodes: 0,
                lp_solves: 0,
                wall_time: start.elapsed().as_secs_f64(),
                optimal: false,
            })
        }
        Err(e) => return Err(e),
    };
    Ok(Evaluation {
        value: Some(res.value),
        lower_bound: Some(res.lower_bound),
        solution: res.x.ones().map(|k| k + 1).collect(),
        nodes: res.nodes,
        lp_solves: res.lp_solves,
        wall_time: res.wall_time,
        optimal,
    })
}

fn default_max_cost() -> f64 {
    100.0
}

fn default_limit() -> f64 {
    60.0
}

fn default_count() -> usize {
    10
}

/// Batch description, read from TOML.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchConfig {
    #[serde(default = "default_max_cost")]
    pub max_cost: f64,
    /// Seconds per generation run.
    #[serde(default = "default_limit")]
    pub generation_time_limit: f64,
    /// Seconds per exact evaluation.
    #[serde(default = "default_limit")]
    pub evaluation_time_limit: f64,
    /// Base seed for cells that do not set their own.
    #[serde(default)]
    pub seed: u64,
    pub cells: Vec<CellConfig>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    /// `selection` or `tsp`.
    pub problem: String,
    /// Items (selection).
    pub n: Option<usize>,
    /// Items to choose; defaults to `n / 2`.
    pub p: Option<usize>,
    /// Nodes (tsp).
    pub m: Option<usize>,
    /// Defaults to `n` for selection and `m` for tsp.
    pub scenarios: Option<usize>,
    pub budgets: Vec<f64>,
    pub methods: Vec<Method>,
    #[serde(default = "default_count")]
    pub count: usize,
    /// Instance `k` of the cell uses seed `seed + k`.
    pub seed: Option<u64>,
    #[serde(default)]
    pub symmetric: bool,
}

impl CellConfig {
    pub fn kind(&self) -> Result<(ProblemKind, usize)> {
        match self.problem.as_str() {
            "selection" => {
                let n = self.n.ok_or_else(|| Error::Invariant("selection cell needs n".into()))?;
                let p = self.p.unwrap_or(n / 2);
                Ok((ProblemKind::Selection { n, p }, self.scenarios.unwrap_or(n)))
            }
            "tsp" => {
                let m = self.m.ok_or_else(|| Error::Invariant("tsp cell needs m".into()))?;
                Ok((ProblemKind::Tsp { m }, self.scenarios.unwrap_or(m)))
            }
            other => Err(Error::Invariant(format!("unknown problem {other:?}"))),
        }
    }
}

impl BatchConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: BatchConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|s| {
                    let before = &text[..s.start];
                    let line = before.matches('\n').count() + 1;
                    let column = s.start - before.rfind('\n').map_or(0, |i| i + 1) + 1;
                    (line, column)
                })
                .unwrap_or((0, 0));
            Error::Parse {
                line,
                column,
                message: e.message().to_owned(),
            }
        })?;
        for cell in &cfg.cells {
            cell.kind()?;
            if cell.budgets.is_empty() || cell.methods.is_empty() {
                return Err(Error::Invariant("every cell needs at least one budget and one method".into()));
            }
        }
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// One hardened instance and its comparison with the original.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceRecord {
    pub cell: usize,
    pub instance: usize,
    pub seed: u64,
    pub problem: &'static str,
    pub n: usize,
    pub scenarios: usize,
    pub method: Method,
    pub budget: f64,
    /// `None` when the pipeline succeeded.
    pub error: Option<String>,
    pub stop: Option<String>,
    pub value_before: Option<f64>,
    pub value_after: Option<f64>,
    pub nodes_before: u64,
    pub nodes_after: u64,
    pub solved_before: bool,
    pub solved_after: bool,
    pub node_ratio: Option<f64>,
    /// Hardened optimum exceeds the original one (both solved).
    pub larger: bool,
    pub time_before: f64,
    pub time_after: f64,
    pub time_ratio: Option<f64>,
    pub generation_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub problem: &'static str,
    pub n: usize,
    pub scenarios: usize,
    pub method: Method,
    pub budget: f64,
    pub instances: usize,
    pub failed: usize,
    /// Pairs with both instances solved to optimality; ratios use only these.
    pub solved: usize,
    pub mean_node_ratio: Option<f64>,
    pub max_node_ratio: Option<f64>,
    /// Share of solved pairs whose hardened optimum is strictly larger.
    pub larger_fraction: Option<f64>,
    pub mean_time_ratio: Option<f64>,
    pub max_time_ratio: Option<f64>,
    pub mean_generation_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HardnessReport {
    pub records: Vec<InstanceRecord>,
    pub aggregates: Vec<AggregateRow>,
}

/// Fields that depend on the machine and are dropped for comparisons.
pub const TIMING_FIELDS: [&str; 7] = [
    "time_before",
    "time_after",
    "time_ratio",
    "generation_time",
    "mean_time_ratio",
    "max_time_ratio",
    "mean_generation_time",
];

fn strip_timing(v: &mut Value) {
    match v {
        Value::Object(map) => {
            for f in TIMING_FIELDS {
                map.remove(f);
            }
            map.values_mut().for_each(strip_timing);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

impl HardnessReport {
    /// Pretty JSON; without `timing` the output is reproducible byte for byte.
    pub fn to_json(&self, timing: bool) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if !timing {
            strip_timing(&mut v);
        }
        serde_json::to_string_pretty(&v).expect("report serializes")
    }

    /// Aggregates as an aligned text table: mean (max) ratios per cell.
    pub fn table(&self) -> String {
        let ratio = |mean: Option<f64>, max: Option<f64>| match (mean, max) {
            (Some(a), Some(b)) => format!("{a:.2} ({b:.2})"),
            _ => "-".to_owned(),
        };
        let mut rows = vec![[
            "problem", "n", "N", "method", "b", "solved", "nodes", "time", "larger", "gen s",
        ]
        .map(str::to_owned)];
        for a in &self.aggregates {
            rows.push([
                a.problem.to_owned(),
                a.n.to_string(),
                a.scenarios.to_string(),
                a.method.to_string(),
                a.budget.to_string(),
                format!("{}/{}", a.solved, a.instances),
                ratio(a.mean_node_ratio, a.max_node_ratio),
                ratio(a.mean_time_ratio, a.max_time_ratio),
                a.larger_fraction.map_or("-".to_owned(), |f| format!("{:.0}%", 100.0 * f)),
                format!("{:.2}", a.mean_generation_time),
            ]);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &rows {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (s, &w))| if c == 0 || c == 3 { format!("{s:<w$}") } else { format!("{s:>w$}") })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

fn secs(v: f64) -> Option<Duration> {
    Duration::try_from_secs_f64(v).ok()
}

/// One sampled instance pushed through every (method, budget) pair of its cell.
fn run_instance(cfg: &BatchConfig, cell_idx: usize, k: usize) -> Vec<InstanceRecord> {
    let cell = &cfg.cells[cell_idx];
    let (kind, scenarios) = cell.kind().expect("validated on parse");
    let seed = cell.seed.unwrap_or(cfg.seed).wrapping_add(k as u64);
    let gen_limit = secs(cfg.generation_time_limit);
    let eval_limit = secs(cfg.evaluation_time_limit);
    let blank = |method: Method, budget: f64| InstanceRecord {
        cell: cell_idx,
        instance: k,
        seed,
        problem: kind.name(),
        n: kind.n(),
        scenarios,
        method,
        budget,
        error: None,
        stop: None,
        value_before: None,
        value_after: None,
        nodes_before: 0,
        nodes_after: 0,
        solved_before: false,
        solved_after: false,
        node_ratio: None,
        larger: false,
        time_before: 0.0,
        time_after: 0.0,
        time_ratio: None,
        generation_time: 0.0,
    };
    let pairs: Vec<(Method, f64)> = cell
        .methods
        .iter()
        .flat_map(|&m| cell.budgets.iter().map(move |&b| (m, b)))
        .collect();
    let original = sample_ru(kind, scenarios, cfg.max_cost, seed, cell.symmetric)
        .and_then(|inst| evaluate(&inst, eval_limit).map(|e| (inst, e)));
    let (inst, before) = match original {
        Ok(v) => v,
        Err(e) => {
            return pairs
                .into_iter()
                .map(|(m, b)| InstanceRecord {
                    error: Some(e.to_string()),
                    ..blank(m, b)
                })
                .collect()
        }
    };
    pairs
        .into_iter()
        .map(|(method, budget)| {
            let mut rec = blank(method, budget);
            rec.value_before = before.value;
            rec.nodes_before = before.nodes;
            rec.solved_before = before.optimal;
            rec.time_before = before.wall_time;
            let outcome = (|| -> Result<()> {
                let (hard, log) = generate(&inst, method, budget, gen_limit)?;
                rec.stop = log.stop;
                rec.generation_time = log.generation_time;
                let boxes = build_uncertainty(&inst, budget)?;
                if !boxes.iter().zip(hard.costs()).all(|(b, c)| b.contains(c, 1e-7)) {
                    return Err(Error::Invariant("hardened scenarios leave their boxes".into()));
                }
                // Unchanged costs give an identical solve; reuse it.
                let after = if hard.costs() == inst.costs() {
                    before.clone()
                } else {
                    evaluate(&hard, eval_limit)?
                };
                rec.value_after = after.value;
                rec.nodes_after = after.nodes;
                rec.solved_after = after.optimal;
                rec.time_after = after.wall_time;
                Ok(())
            })();
            if let Err(e) = outcome {
                rec.error = Some(e.to_string());
            } else if rec.solved_before && rec.solved_after {
                rec.node_ratio = Some(rec.nodes_after as f64 / rec.nodes_before.max(1) as f64);
                rec.time_ratio = (rec.time_before > 0.0).then(|| rec.time_after / rec.time_before);
                rec.larger = rec.value_after > rec.value_before;
            }
            rec
        })
        .collect()
}

fn aggregate(records: &[InstanceRecord]) -> Vec<AggregateRow> {
    let mut groups: Vec<Vec<&InstanceRecord>> = Vec::new();
    let mut index: BTreeMap<(usize, usize, &str, Method, u64), usize> = BTreeMap::new();
    for r in records {
        let key = (r.n, r.scenarios, r.problem, r.method, r.budget.to_bits());
        let g = *index.entry(key).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(r);
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let max = |v: &[f64]| v.iter().copied().reduce(f64::max);
    groups
        .into_iter()
        .map(|g| {
            let first = g[0];
            let solved: Vec<&InstanceRecord> = g.iter().copied().filter(|r| r.node_ratio.is_some()).collect();
            let nodes: Vec<f64> = solved.iter().filter_map(|r| r.node_ratio).collect();
            let times: Vec<f64> = solved.iter().filter_map(|r| r.time_ratio).collect();
            let gen: Vec<f64> = g.iter().filter(|r| r.error.is_none()).map(|r| r.generation_time).collect();
            AggregateRow {
                problem: first.problem,
                n: first.n,
                scenarios: first.scenarios,
                method: first.method,
                budget: first.budget,
                instances: g.len(),
                failed: g.iter().filter(|r| r.error.is_some()).count(),
                solved: solved.len(),
                mean_node_ratio: mean(&nodes),
                max_node_ratio: max(&nodes),
                larger_fraction: (!solved.is_empty())
                    .then(|| solved.iter().filter(|r| r.larger).count() as f64 / solved.len() as f64),
                mean_time_ratio: mean(&times),
                max_time_ratio: max(&times),
                mean_generation_time: mean(&gen).unwrap_or(0.0),
            }
        })
        .collect()
}

/// Runs every cell of `cfg` on `jobs` worker threads. Failures inside a
/// pipeline are recorded on the affected rows and the batch carries on.
pub fn run_batch(cfg: &BatchConfig, jobs: usize) -> Result<HardnessReport> {
    let tasks: Vec<(usize, usize)> = cfg
        .cells
        .iter()
        .enumerate()
        .flat_map(|(c, cell)| (0..cell.count).map(move |k| (c, k)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Invariant(format!("cannot start worker pool: {e}")))?;
    let per_task: Vec<Vec<InstanceRecord>> =
        pool.install(|| tasks.par_iter().map(|&(c, k)| run_instance(cfg, c, k)).collect());
    let records: Vec<InstanceRecord> = per_task.into_iter().flatten().collect();
    let aggregates = aggregate(&records);
    Ok(HardnessReport { records, aggregates })
}
