//! Experiment harnesses: period-grid feasibility sweeps, policy comparisons
//! and beam-width studies, each with a CSV writer.
//!
//! CSV schemas (version 1):
//! - sweep: `cell,ratio_<i>...,period_<i>...,method,feasible,max_util,max_util_exact,num_accs,verdict,error`
//! - responses: `task,policy,seed,jobs,max,mean,p99,lower_bound,preemptions,reliable`
//! - beam study: `width,best_max_util,best_max_util_exact,parents,create_acc_calls,evals_to_first_feasible,feasible_designs`
//!
//! Floats are printed with nine decimals; exact utilizations as `num/den`.

use std::io::Write;
use std::sync::Arc;

use num_traits::One;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dse::{
    brute_force_dse, single_accelerator_design, DseError, DseResult, Explorer, Objective, SearchOptions, TableCache,
};
use crate::model::{util_to_f64, Cycles, DesignPoint, Policy, ResourceVector, TaskSet, Util};
use crate::schedulability::segment_wcet;
use crate::sim::{detect_divergence, simulate_design, SimError, SimPolicy, SimTrace, Verdict};

pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Dse(#[from] DseError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("sweep needs one non-empty ratio axis per task ({tasks} tasks, {axes} axes)")]
    BadAxes { tasks: usize, axes: usize },
    #[error("no design could be synthesized for the reference measurement")]
    NoReferenceDesign,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fmt_util(u: &Util) -> String {
    format!("{:.9}", util_to_f64(u))
}

fn fmt_exact(u: &Util) -> String {
    format!("{}/{}", u.numer(), u.denom())
}

/// Seven log-spaced ratios from 0.25 to 4.
pub fn default_axis() -> Vec<f64> {
    (0..7).map(|j| 0.25 * 16f64.powf(j as f64 / 6.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Beam search on maximum utilization.
    Schedulability,
    /// Same skeleton scored by period-unaware bottleneck latency.
    ThroughputGuided,
    /// One accelerator sized for latency over the whole budget.
    SingleAccelerator,
}

impl Method {
    pub const ALL: [Method; 3] = [
        Method::Schedulability,
        Method::ThroughputGuided,
        Method::SingleAccelerator,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Method::Schedulability => "schedulability_beam",
            Method::ThroughputGuided => "throughput_guided",
            Method::SingleAccelerator => "single_accelerator",
        }
    }
}

/// Per-task latency `P'_i` of each task alone on the single-accelerator design.
pub fn reference_periods(template: &TaskSet, budget: ResourceVector) -> Result<Vec<Cycles>, AnalysisError> {
    let d = single_accelerator_design(template, budget, Policy::Fifo).ok_or(AnalysisError::NoReferenceDesign)?;
    Ok(template
        .tasks()
        .iter()
        .map(|t| segment_wcet(t, 0..t.layers.len(), &d.accs[0], Policy::Fifo).total)
        .collect())
}

/// `p_i = round(P'_i / r_i)`, at least 1.
pub fn periods_for(reference: &[Cycles], ratios: &[f64]) -> Vec<Cycles> {
    reference
        .iter()
        .zip(ratios)
        .map(|(&p, &r)| ((p as f64) / r).round().max(1.0) as Cycles)
        .collect()
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    /// One ratio axis per task, ascending.
    pub axes: Vec<Vec<f64>>,
    pub methods: Vec<Method>,
    pub budget: ResourceVector,
    pub options: SearchOptions,
    /// EDF designs are simulated for this many longest periods.
    pub horizon_mult: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub coords: Vec<usize>,
    pub ratios: Vec<f64>,
    pub periods: Vec<Cycles>,
    pub method: Method,
    pub feasible: bool,
    pub max_util: Option<Util>,
    pub num_accs: Option<usize>,
    /// Simulation verdict for EDF designs.
    pub verdict: Option<Verdict>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct FeasibilityGrid {
    pub axes: Vec<Vec<f64>>,
    pub reference: Vec<Cycles>,
    pub methods: Vec<Method>,
    /// Row-major over the axes, methods innermost.
    pub cells: Vec<CellResult>,
}

impl FeasibilityGrid {
    pub fn feasible_count(&self, method: Method) -> usize {
        self.cells.iter().filter(|c| c.method == method && c.feasible).count()
    }

    pub fn cell(&self, coords: &[usize], method: Method) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.method == method && c.coords == coords)
    }

    /// Cells feasible for `method` and infeasible for every other method.
    pub fn exclusive_cells(&self, method: Method) -> Vec<&CellResult> {
        self.cells
            .iter()
            .filter(|c| c.method == method && c.feasible)
            .filter(|c| {
                self.methods
                    .iter()
                    .filter(|&&m| m != method)
                    .all(|&m| self.cell(&c.coords, m).is_some_and(|o| !o.feasible))
            })
            .collect()
    }

    /// Along every axis, feasibility at a larger ratio implies feasibility at
    /// every smaller one (other coordinates fixed).
    pub fn is_down_set(&self, method: Method) -> bool {
        self.cells.iter().filter(|c| c.method == method && c.feasible).all(|c| {
            (0..c.coords.len()).all(|d| {
                if c.coords[d] == 0 {
                    return true;
                }
                let mut lower = c.coords.clone();
                lower[d] -= 1;
                self.cell(&lower, method).is_some_and(|l| l.feasible)
            })
        })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), AnalysisError> {
        let mut out = csv::Writer::from_writer(w);
        let n = self.axes.len();
        let mut header = vec!["cell".to_string()];
        header.extend((0..n).map(|i| format!("ratio_{i}")));
        header.extend((0..n).map(|i| format!("period_{i}")));
        header.extend(
            [
                "method",
                "feasible",
                "max_util",
                "max_util_exact",
                "num_accs",
                "verdict",
                "error",
            ]
            .map(String::from),
        );
        out.write_record(&header)?;
        for c in &self.cells {
            let mut row = vec![c.coords.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(":")];
            row.extend(c.ratios.iter().map(|r| format!("{r:.9}")));
            row.extend(c.periods.iter().map(|p| p.to_string()));
            row.push(c.method.label().into());
            row.push(c.feasible.to_string());
            row.push(c.max_util.as_ref().map(fmt_util).unwrap_or_default());
            row.push(c.max_util.as_ref().map(fmt_exact).unwrap_or_default());
            row.push(c.num_accs.map(|m| m.to_string()).unwrap_or_default());
            row.push(
                c.verdict
                    .map(|v| match v {
                        Verdict::Bounded => "bounded",
                        Verdict::Diverging => "diverging",
                    })
                    .unwrap_or_default()
                    .into(),
            );
            row.push(c.error.clone().unwrap_or_default());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn grid_coords(axes: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..axis.len()).map(move |j| {
                    let mut p = prefix.clone();
                    p.push(j);
                    p
                })
            })
            .collect();
    }
    out
}

/// Runs every method on every cell of the ratio grid. Cells are independent
/// and run in parallel; the result is ordered by coordinates regardless.
pub fn period_sweep(
    template: &TaskSet,
    reference: &[Cycles],
    spec: &SweepSpec,
) -> Result<FeasibilityGrid, AnalysisError> {
    if spec.axes.len() != template.len() || reference.len() != template.len() || spec.axes.iter().any(Vec::is_empty) {
        return Err(AnalysisError::BadAxes {
            tasks: template.len(),
            axes: spec.axes.len(),
        });
    }
    let tables = Arc::new(TableCache::new(template));
    let single = spec
        .methods
        .contains(&Method::SingleAccelerator)
        .then(|| single_accelerator_design(template, spec.budget, spec.options.policy))
        .flatten();

    let cells: Vec<CellResult> = grid_coords(&spec.axes)
        .into_par_iter()
        .flat_map_iter(|coords| {
            let ratios: Vec<f64> = coords.iter().zip(&spec.axes).map(|(&j, a)| a[j]).collect();
            let periods = periods_for(reference, &ratios);
            let ts = template.with_periods(&periods).expect("periods are positive");
            spec.methods
                .iter()
                .map(|&m| run_cell(&ts, &coords, &ratios, &periods, m, spec, &tables, single.as_ref()))
                .collect::<Vec<_>>()
        })
        .collect();

    Ok(FeasibilityGrid {
        axes: spec.axes.clone(),
        reference: reference.to_vec(),
        methods: spec.methods.clone(),
        cells,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    ts: &TaskSet,
    coords: &[usize],
    ratios: &[f64],
    periods: &[Cycles],
    method: Method,
    spec: &SweepSpec,
    tables: &Arc<TableCache>,
    single: Option<&DesignPoint>,
) -> CellResult {
    let mut cell = CellResult {
        coords: coords.to_vec(),
        ratios: ratios.to_vec(),
        periods: periods.to_vec(),
        method,
        feasible: false,
        max_util: None,
        num_accs: None,
        verdict: None,
        error: None,
    };
    let search = |objective| -> Result<DseResult, DseError> {
        Ok(Explorer::with_tables(ts, spec.budget, spec.options, objective, Arc::clone(tables))?.run())
    };
    let candidate: Result<Option<(DesignPoint, bool)>, String> = match method {
        Method::Schedulability => search(Objective::Schedulability)
            .map(|r| r.best.map(|d| (d, true)))
            .map_err(|e| e.to_string()),
        Method::ThroughputGuided => search(Objective::Throughput)
            .map(|r| r.best.map(|d| (d.clone(), r.feasible.contains(&d))))
            .map_err(|e| e.to_string()),
        Method::SingleAccelerator => Ok(single.map(|s| {
            let d = DesignPoint::new(s.accs.clone(), s.mapping.clone(), spec.options.policy, ts)
                .expect("single design has one column per task");
            let ok = d.max_util() <= Util::one();
            (d, ok)
        })),
    };
    match candidate {
        Err(e) => cell.error = Some(e),
        Ok(None) => {}
        Ok(Some((design, passes))) => {
            cell.max_util = Some(design.max_util());
            cell.num_accs = Some(design.num_accs());
            cell.feasible = passes;
            if passes && spec.options.policy == Policy::Edf {
                let horizon = spec.horizon_mult.saturating_mul(ts.max_period());
                match simulate_design(&design, ts, SimPolicy::of(Policy::Edf), horizon, spec.seed)
                    .map_err(AnalysisError::from)
                    .and_then(|t| {
                        detect_divergence(&t).map_err(|e| AnalysisError::Sim(SimError::InvalidSystem(e.to_string())))
                    }) {
                    Ok(r) => {
                        cell.verdict = Some(r.verdict);
                        cell.feasible = r.verdict == Verdict::Bounded;
                    }
                    Err(e) => {
                        cell.feasible = false;
                        cell.error = Some(e.to_string());
                    }
                }
            }
        }
    }
    cell
}

/// Response-time summary of one task in one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskStats {
    pub task: usize,
    pub jobs: usize,
    pub max: Cycles,
    pub mean: f64,
    /// Nearest-rank 99th percentile.
    pub p99: Cycles,
    /// Sum of uncontended segment latencies: no response can be shorter.
    pub lower_bound: Cycles,
}

/// Statistics over completed jobs, recomputed from the trace alone.
pub fn response_stats(trace: &SimTrace, lower_bounds: &[Cycles]) -> Vec<TaskStats> {
    (0..trace.periods.len())
        .map(|task| {
            let mut r = trace.responses(task);
            r.sort_unstable();
            let n = r.len();
            let (max, mean, p99) = if n == 0 {
                (0, 0.0, 0)
            } else {
                let rank = (99 * n).div_ceil(100).max(1);
                (
                    r[n - 1],
                    r.iter().map(|&x| x as f64).sum::<f64>() / n as f64,
                    r[rank - 1],
                )
            };
            TaskStats {
                task,
                jobs: n,
                max,
                mean,
                p99,
                lower_bound: lower_bounds.get(task).copied().unwrap_or(0),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRun {
    pub policy: SimPolicy,
    pub seed: u64,
    pub tasks: Vec<TaskStats>,
    pub preemptions: u64,
    pub verdict: Option<Verdict>,
    /// False when the trace diverged; its statistics then depend on the horizon.
    pub reliable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyComparison {
    pub runs: Vec<PolicyRun>,
}

impl PolicyComparison {
    /// Largest response of `task` under `policy` over all seeds.
    pub fn max_response(&self, policy: SimPolicy, task: usize) -> Option<Cycles> {
        self.runs
            .iter()
            .filter(|r| r.policy == policy)
            .filter_map(|r| r.tasks.get(task).map(|t| t.max))
            .max()
    }

    /// Policy with the smallest worst response for `task` (first listed wins ties).
    pub fn winner(&self, task: usize) -> Option<SimPolicy> {
        let mut seen: Vec<SimPolicy> = Vec::new();
        for r in &self.runs {
            if !seen.contains(&r.policy) {
                seen.push(r.policy);
            }
        }
        seen.into_iter()
            .filter_map(|p| self.max_response(p, task).map(|m| (m, p)))
            .min_by_key(|&(m, _)| m)
            .map(|(_, p)| p)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), AnalysisError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "task",
            "policy",
            "seed",
            "jobs",
            "max",
            "mean",
            "p99",
            "lower_bound",
            "preemptions",
            "reliable",
        ])?;
        for r in &self.runs {
            for t in &r.tasks {
                out.write_record([
                    t.task.to_string(),
                    r.policy.label().to_string(),
                    r.seed.to_string(),
                    t.jobs.to_string(),
                    t.max.to_string(),
                    format!("{:.9}", t.mean),
                    t.p99.to_string(),
                    t.lower_bound.to_string(),
                    r.preemptions.to_string(),
                    r.reliable.to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Uncontended end-to-end latency of every task on a design.
pub fn uncontended_latencies(design: &DesignPoint, ts: &TaskSet) -> Vec<Cycles> {
    ts.tasks()
        .iter()
        .map(|t| {
            design
                .accs
                .iter()
                .enumerate()
                .map(|(k, acc)| segment_wcet(t, design.mapping.segment(t.id, k), acc, Policy::Fifo).base)
                .sum()
        })
        .collect()
}

/// Simulates one design under each policy and seed.
pub fn compare_policies(
    design: &DesignPoint,
    ts: &TaskSet,
    policies: &[SimPolicy],
    horizon: Cycles,
    seeds: &[u64],
) -> Result<PolicyComparison, AnalysisError> {
    let lower = uncontended_latencies(design, ts);
    let mut runs = Vec::new();
    for &policy in policies {
        for &seed in seeds {
            let trace = simulate_design(design, ts, policy, horizon, seed)?;
            let verdict = detect_divergence(&trace).ok().map(|r| r.verdict);
            runs.push(PolicyRun {
                policy,
                seed,
                tasks: response_stats(&trace, &lower),
                preemptions: trace.preemptions.len() as u64,
                verdict,
                reliable: verdict != Some(Verdict::Diverging),
            });
        }
    }
    Ok(PolicyComparison { runs })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BeamRow {
    /// `None` is an unbounded beam (or the brute-force oracle).
    pub width: Option<usize>,
    pub best_max_util: Option<Util>,
    pub parents: u64,
    pub create_acc_calls: u64,
    /// `create_acc` calls made before the first feasible design appeared;
    /// a deterministic stand-in for time-to-first-feasible.
    pub evals_to_first_feasible: Option<u64>,
    pub feasible_designs: usize,
}

impl BeamRow {
    fn of(width: Option<usize>, r: &DseResult) -> Self {
        Self {
            width,
            best_max_util: r.best_max_util(),
            parents: r.stats.parents_expanded,
            create_acc_calls: r.stats.create_acc_calls,
            evals_to_first_feasible: r.stats.evals_to_first_feasible,
            feasible_designs: r.feasible.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BeamStudy {
    pub rows: Vec<BeamRow>,
    /// Absent when the oracle exceeded its node budget.
    pub brute_force: Option<BeamRow>,
}

impl BeamStudy {
    /// Best utilization never gets worse as the beam widens (rows in the
    /// order given, infeasible counting as worst).
    pub fn monotone(&self) -> bool {
        let key = |r: &BeamRow| r.best_max_util.clone().map_or((1, Util::one()), |u| (0, u));
        self.rows.windows(2).all(|w| key(&w[1]) <= key(&w[0]))
    }

    /// The unbounded beam found the oracle's optimum.
    pub fn matches_oracle(&self) -> Option<bool> {
        let bf = self.brute_force.as_ref()?;
        let inf = self.rows.iter().find(|r| r.width.is_none())?;
        Some(inf.best_max_util == bf.best_max_util)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), AnalysisError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "width",
            "best_max_util",
            "best_max_util_exact",
            "parents",
            "create_acc_calls",
            "evals_to_first_feasible",
            "feasible_designs",
        ])?;
        let rows = self
            .rows
            .iter()
            .map(|r| (r.width.map_or("inf".to_string(), |b| b.to_string()), r));
        let bf = self.brute_force.iter().map(|r| ("brute_force".to_string(), r));
        for (label, r) in rows.chain(bf) {
            out.write_record([
                label,
                r.best_max_util.as_ref().map(fmt_util).unwrap_or_default(),
                r.best_max_util.as_ref().map(fmt_exact).unwrap_or_default(),
                r.parents.to_string(),
                r.create_acc_calls.to_string(),
                r.evals_to_first_feasible.map(|e| e.to_string()).unwrap_or_default(),
                r.feasible_designs.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Beam search at each width plus, when affordable, the exhaustive oracle.
pub fn beam_quality_study(
    ts: &TaskSet,
    budget: ResourceVector,
    widths: &[Option<usize>],
    max_m: usize,
    grid: u64,
    policy: Policy,
    node_budget: u64,
) -> Result<BeamStudy, AnalysisError> {
    let tables = Arc::new(TableCache::new(ts));
    let mut rows = Vec::with_capacity(widths.len());
    for &w in widths {
        let options = SearchOptions::new(max_m, w, grid, policy);
        let r = Explorer::with_tables(ts, budget, options, Objective::Schedulability, Arc::clone(&tables))?.run();
        rows.push(BeamRow::of(w, &r));
    }
    let brute_force = match brute_force_dse(ts, budget, max_m, grid, policy, node_budget) {
        Ok(r) => Some(BeamRow::of(None, &r)),
        Err(DseError::NodeBudgetExceeded { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(BeamStudy { rows, brute_force })
}
