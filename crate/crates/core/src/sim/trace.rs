use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::model::Cycles;

use super::SimPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Release,
    /// A segment entered an accelerator's pool.
    Arrive,
    SegmentStart,
    /// The running segment was cut; it now saves partial outputs.
    Preempt,
    /// A preempted segment went back to the pool.
    Suspend,
    /// A preempted segment was dispatched again (reload starts).
    Resume,
    SegmentDone,
    JobDone,
}

/// One line of the exported trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub time: Cycles,
    pub acc: Option<usize>,
    pub task: usize,
    pub job: u64,
    pub segment: Option<usize>,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobRecord {
    pub task: usize,
    pub job: u64,
    pub release: Cycles,
    pub deadline: Cycles,
    pub completion: Option<Cycles>,
}

impl JobRecord {
    pub fn response(&self) -> Option<Cycles> {
        self.completion.map(|c| c - self.release)
    }
}

/// One preemption and the time it cost.
///
/// The overhead attributed to the preemptor is the time it waited for the cut
/// plus the victim's save and reload, minus victim work the reload made
/// redundant (a skipped fill or stall).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreemptionRecord {
    pub acc: usize,
    pub preemptor: (usize, u64),
    pub victim: (usize, u64),
    pub requested_at: Cycles,
    pub cut_at: Cycles,
    pub store: Cycles,
    /// Reload cycles spent on behalf of this preemption, including a reload
    /// later aborted by another preemptor.
    pub reload: Cycles,
    pub skipped: Cycles,
}

impl PreemptionRecord {
    pub fn overhead(&self) -> Cycles {
        (self.cut_at - self.requested_at + self.store + self.reload).saturating_sub(self.skipped)
    }
}

/// Waiting entries (the running segment excluded) of one pool from `time` on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupancySample {
    pub time: Cycles,
    pub acc: usize,
    pub occupancy: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimTrace {
    pub policy: SimPolicy,
    pub horizon: Cycles,
    pub periods: Vec<Cycles>,
    pub occupancy_bounds: Vec<usize>,
    pub events: Vec<TraceEvent>,
    pub jobs: Vec<JobRecord>,
    pub preemptions: Vec<PreemptionRecord>,
    pub occupancy: Vec<OccupancySample>,
    /// Non-idle cycles per accelerator before the horizon.
    pub busy: Vec<Cycles>,
}

impl SimTrace {
    pub fn max_period(&self) -> Cycles {
        self.periods.iter().copied().max().unwrap_or(0)
    }

    pub fn preemption_counts(&self) -> Vec<u64> {
        let mut c = vec![0; self.busy.len()];
        for p in &self.preemptions {
            c[p.acc] += 1;
        }
        c
    }

    /// Response times of completed jobs of `task`, in release order.
    pub fn responses(&self, task: usize) -> Vec<Cycles> {
        self.jobs
            .iter()
            .filter(|j| j.task == task)
            .filter_map(JobRecord::response)
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }
}
