//! Deterministic discrete-event simulation of multi-accelerator pipelines.
//!
//! Each accelerator schedules its own pool independently. Jobs move to the
//! next segment of their task the instant the previous segment completes.
//! Under EDF a newly arrived job with a strictly earlier deadline preempts the
//! running one at a tile boundary: the victim saves its partial outputs
//! (`e_store`) and later reloads its buffers (`e_load`) before resuming.

mod audit;
mod divergence;
mod engine;
mod release;
mod trace;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    tile_costs, tile_grid, AcceleratorConfig, Cycles, DesignPoint, LayerShape, Policy, TaskSet, TileCosts,
};

pub use audit::{audit_trace, AuditViolation};
pub use divergence::{detect_divergence, DivergenceError, DivergenceReport, Verdict, MIN_HORIZON_PERIODS};
pub use engine::simulate;
pub use release::{periodic_release_sequence, release_schedule, sporadic_release_sequence, ReleaseSchedule};
pub use trace::{EventKind, JobRecord, OccupancySample, PreemptionRecord, SimTrace, TraceEvent};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("horizon {horizon} is shorter than the longest period {max_period}")]
    HorizonTooShort { horizon: Cycles, max_period: Cycles },
    #[error("simulation clock overflowed at t = {at}")]
    ClockOverflow { at: Cycles },
    #[error("invalid system: {0}")]
    InvalidSystem(String),
}

/// Dispatch discipline of every accelerator in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimPolicy {
    /// Non-preemptive, arrival order, ties by task id then job index.
    FifoPipelined,
    /// A segment waits until the previous job of its task has finished every
    /// segment it has on the same accelerator.
    FifoWithoutPolling,
    /// A segment waits only for the same segment of the previous job.
    FifoWithPolling,
    /// Preemptive earliest deadline first. With `overhead == false`, saving
    /// and reloading are free and a preempted job resumes exactly where it
    /// was cut.
    Edf { overhead: bool },
}

impl SimPolicy {
    pub fn of(policy: Policy) -> Self {
        match policy {
            Policy::Fifo => SimPolicy::FifoPipelined,
            Policy::Edf => SimPolicy::Edf { overhead: true },
        }
    }

    pub fn is_edf(&self) -> bool {
        matches!(self, SimPolicy::Edf { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            SimPolicy::FifoPipelined => "fifo",
            SimPolicy::FifoWithoutPolling => "fifo_no_polling",
            SimPolicy::FifoWithPolling => "fifo_polling",
            SimPolicy::Edf { overhead: true } => "edf",
            SimPolicy::Edf { overhead: false } => "edf_no_overhead",
        }
    }
}

impl fmt::Display for SimPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Timing of one layer: a buffer fill, `tiles` tiles of `compute + stall`
/// cycles each, and a final drain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerWork {
    pub fill: Cycles,
    pub tiles: u64,
    pub compute: Cycles,
    pub stall: Cycles,
    pub drain: Cycles,
}

impl LayerWork {
    pub fn of(layer: &LayerShape, acc: &AcceleratorConfig) -> Self {
        let c = tile_costs(acc);
        let [tm, tk, tn] = tile_grid(layer, acc);
        Self {
            fill: c.e_load,
            tiles: tm * tk * tn,
            compute: c.e_tile,
            stall: c.e_load.saturating_sub(c.e_tile),
            drain: c.e_store,
        }
    }

    pub fn tile_len(&self) -> Cycles {
        self.compute + self.stall
    }

    pub fn len(&self) -> Cycles {
        self.fill + self.tiles * self.tile_len() + self.drain
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Where a preemption requested at some offset takes effect and where the
/// victim continues afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CutPoint {
    /// Offset at which the victim stops executing.
    pub cut: Cycles,
    /// Offset at which it resumes after reloading.
    pub resume: Cycles,
}

/// Consecutive layers executed on one accelerator as one segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentWork {
    layers: Vec<LayerWork>,
    starts: Vec<Cycles>,
    total: Cycles,
}

impl SegmentWork {
    pub fn new(layers: Vec<LayerWork>) -> Self {
        let mut starts = Vec::with_capacity(layers.len());
        let mut total = 0;
        for l in &layers {
            starts.push(total);
            total += l.len();
        }
        Self { layers, starts, total }
    }

    pub fn of_layers(layers: &[LayerShape], acc: &AcceleratorConfig) -> Self {
        Self::new(layers.iter().map(|l| LayerWork::of(l, acc)).collect())
    }

    /// `tiles` back-to-back tiles of `compute` cycles, no fill or drain.
    pub fn uniform(tiles: u64, compute: Cycles) -> Self {
        Self::new(vec![LayerWork {
            fill: 0,
            tiles,
            compute,
            stall: 0,
            drain: 0,
        }])
    }

    pub fn total(&self) -> Cycles {
        self.total
    }

    pub fn layers(&self) -> &[LayerWork] {
        &self.layers
    }

    /// Cut for a preemption requested at offset `at < total`.
    ///
    /// Only a tile's compute is indivisible, so the cut never lies more than
    /// one `compute` past `at`. With `overhead`, resuming restarts from the
    /// next tile boundary and the reload replaces whatever fill or stall was
    /// skipped; without it the job resumes exactly at the cut.
    pub fn cut_at(&self, at: Cycles, overhead: bool) -> CutPoint {
        debug_assert!(at < self.total);
        let l = self.starts.partition_point(|&s| s <= at) - 1;
        let (start, w) = (self.starts[l], self.layers[l]);
        let x = at - start;
        let body_end = w.fill + w.tiles * w.tile_len();
        let (cut, resume) = if x < w.fill {
            (at, start + w.fill)
        } else if x < body_end {
            let y = x - w.fill;
            let (q, r) = (y / w.tile_len(), y % w.tile_len());
            let tile_start = start + w.fill + q * w.tile_len();
            if r == 0 {
                (at, at)
            } else if r < w.compute {
                (tile_start + w.compute, tile_start + w.tile_len())
            } else {
                (at, tile_start + w.tile_len())
            }
        } else {
            let next = self
                .layers
                .get(l + 1)
                .map_or(self.total, |n| self.starts[l + 1] + n.fill);
            (at, next)
        };
        if overhead {
            CutPoint { cut, resume }
        } else {
            CutPoint { cut, resume: cut }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimSegment {
    pub acc: usize,
    pub work: SegmentWork,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimTask {
    pub period: Cycles,
    pub segments: Vec<SimSegment>,
}

/// Everything the engine needs: per-accelerator tile costs and, per task,
/// the ordered segments a job walks through.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimSystem {
    accs: Vec<TileCosts>,
    tasks: Vec<SimTask>,
}

impl SimSystem {
    pub fn new(accs: Vec<TileCosts>, tasks: Vec<SimTask>) -> Result<Self, SimError> {
        if tasks.is_empty() {
            return Err(SimError::InvalidSystem("no tasks".into()));
        }
        for (i, t) in tasks.iter().enumerate() {
            if t.period == 0 {
                return Err(SimError::InvalidSystem(format!("task {i} has period 0")));
            }
            if t.segments.is_empty() {
                return Err(SimError::InvalidSystem(format!("task {i} has no segments")));
            }
            for s in &t.segments {
                if s.acc >= accs.len() {
                    return Err(SimError::InvalidSystem(format!(
                        "task {i} uses accelerator {} of {}",
                        s.acc,
                        accs.len()
                    )));
                }
                if s.work.total() == 0 {
                    return Err(SimError::InvalidSystem(format!("task {i} has an empty segment")));
                }
            }
        }
        Ok(Self { accs, tasks })
    }

    /// Pipelined system of a design: each task visits the accelerators that
    /// host at least one of its layers, in order.
    pub fn from_design(design: &DesignPoint, ts: &TaskSet) -> Result<Self, SimError> {
        if !design.is_coherent(ts) {
            return Err(SimError::InvalidSystem("design does not match the task set".into()));
        }
        let tasks = ts
            .tasks()
            .iter()
            .map(|t| SimTask {
                period: t.period,
                segments: design
                    .accs
                    .iter()
                    .enumerate()
                    .filter_map(|(k, acc)| {
                        let r = design.mapping.segment(t.id, k);
                        (!r.is_empty()).then(|| SimSegment {
                            acc: k,
                            work: SegmentWork::of_layers(&t.layers[r], acc),
                        })
                    })
                    .collect(),
            })
            .collect();
        Self::new(design.accs.iter().map(tile_costs).collect(), tasks)
    }

    /// Arbitrary layer-to-accelerator assignment: `assignment[i][l]` is the
    /// accelerator running layer `l` of task `i`. Maximal runs of layers on
    /// the same accelerator form one segment.
    pub fn from_assignment(
        ts: &TaskSet,
        accs: &[AcceleratorConfig],
        assignment: &[Vec<usize>],
    ) -> Result<Self, SimError> {
        if assignment.len() != ts.len() {
            return Err(SimError::InvalidSystem("one assignment row per task".into()));
        }
        let mut tasks = Vec::with_capacity(ts.len());
        for (t, row) in ts.tasks().iter().zip(assignment) {
            if row.len() != t.layers.len() {
                return Err(SimError::InvalidSystem(format!(
                    "task {} needs one accelerator per layer",
                    t.id
                )));
            }
            let mut segments: Vec<SimSegment> = Vec::new();
            let mut start = 0;
            for l in 1..=row.len() {
                if l == row.len() || row[l] != row[start] {
                    let k = row[start];
                    let acc = accs
                        .get(k)
                        .ok_or_else(|| SimError::InvalidSystem(format!("accelerator {k} does not exist")))?;
                    segments.push(SimSegment {
                        acc: k,
                        work: SegmentWork::of_layers(&t.layers[start..l], acc),
                    });
                    start = l;
                }
            }
            tasks.push(SimTask {
                period: t.period,
                segments,
            });
        }
        Self::new(accs.iter().map(tile_costs).collect(), tasks)
    }

    pub fn accs(&self) -> &[TileCosts] {
        &self.accs
    }

    pub fn tasks(&self) -> &[SimTask] {
        &self.tasks
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn max_period(&self) -> Cycles {
        self.tasks.iter().map(|t| t.period).max().unwrap_or(0)
    }

    pub fn periods(&self) -> Vec<Cycles> {
        self.tasks.iter().map(|t| t.period).collect()
    }

    /// Every task visits strictly increasing accelerators.
    pub fn is_pipelined(&self) -> bool {
        self.tasks
            .iter()
            .all(|t| t.segments.windows(2).all(|w| w[0].acc < w[1].acc))
    }

    /// Most entries a pool should ever hold when the system keeps up: one per
    /// task for pipelined systems, one per (task, segment) pair otherwise.
    pub fn occupancy_bounds(&self) -> Vec<usize> {
        if self.is_pipelined() {
            return vec![self.tasks.len(); self.accs.len()];
        }
        let mut b = vec![0; self.accs.len()];
        for t in &self.tasks {
            for s in &t.segments {
                b[s.acc] += 1;
            }
        }
        b
    }

    /// Index of the last segment of `task` on `acc`, if any.
    pub(crate) fn last_segment_on(&self, task: usize, acc: usize) -> Option<usize> {
        self.tasks[task].segments.iter().rposition(|s| s.acc == acc)
    }
}

/// Simulates a design under the given policy with releases drawn from each
/// task's release model.
pub fn simulate_design(
    design: &DesignPoint,
    ts: &TaskSet,
    policy: SimPolicy,
    horizon: Cycles,
    seed: u64,
) -> Result<SimTrace, SimError> {
    let system = SimSystem::from_design(design, ts)?;
    let releases = release_schedule(ts, horizon, seed);
    simulate(&system, &releases, policy, horizon)
}
