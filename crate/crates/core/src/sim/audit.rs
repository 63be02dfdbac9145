//! Replays a trace and checks it against the scheduling rules, independently
//! of the engine's internal state.

use std::collections::HashMap;

use crate::model::Cycles;

use super::trace::{EventKind, JobRecord, OccupancySample, SimTrace};
use super::{SimPolicy, SimSystem};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuditViolation {
    TimeWentBackwards {
        index: usize,
    },
    UnknownJob {
        index: usize,
    },
    /// An accelerator sat idle at the end of an instant with a ready segment waiting.
    IdleWithReadyWork {
        acc: usize,
        time: Cycles,
    },
    /// A segment arrived or started before the job's previous segment finished.
    Precedence {
        task: usize,
        job: u64,
        segment: usize,
        time: Cycles,
    },
    /// Dispatch picked something other than the policy's minimum.
    DispatchOrder {
        acc: usize,
        time: Cycles,
        task: usize,
        job: u64,
    },
    DispatchOfAbsent {
        acc: usize,
        time: Cycles,
        task: usize,
        job: u64,
    },
    ResponseMismatch {
        task: usize,
        job: u64,
    },
    /// An uninterrupted segment ran for a different time than its work.
    WorkMismatch {
        task: usize,
        job: u64,
        segment: usize,
    },
    OccupancySeriesMismatch {
        acc: usize,
    },
}

#[derive(Clone, Copy)]
struct Waiting {
    task: usize,
    job: u64,
    segment: usize,
    arrival: Cycles,
}

/// Checks work conservation, pipelined precedence, dispatch order, per-job
/// response identities and the recorded occupancy series.
pub fn audit_trace(trace: &SimTrace, sys: &SimSystem) -> Vec<AuditViolation> {
    let mut out = Vec::new();
    let n_accs = sys.accs().len();
    let mut pools: Vec<Vec<Waiting>> = vec![Vec::new(); n_accs];
    let mut busy = vec![false; n_accs];
    let mut occupancy: Vec<Vec<OccupancySample>> = vec![Vec::new(); n_accs];
    let mut done: HashMap<(usize, u64), usize> = HashMap::new();
    let mut released: HashMap<(usize, u64), Cycles> = HashMap::new();
    let mut arrived: HashMap<(usize, u64, usize), Cycles> = HashMap::new();
    let records: HashMap<(usize, u64), &JobRecord> = trace.jobs.iter().map(|j| ((j.task, j.job), j)).collect();
    // (start time, interrupted) of the running segment per accelerator.
    let mut started: Vec<Option<(Cycles, bool)>> = vec![None; n_accs];

    let ready = |w: &Waiting, done: &HashMap<(usize, u64), usize>| -> bool {
        if w.job == 0 {
            return true;
        }
        let prev = done.get(&(w.task, w.job - 1)).copied().unwrap_or(0);
        match trace.policy {
            SimPolicy::FifoWithPolling => prev > w.segment,
            SimPolicy::FifoWithoutPolling => {
                let acc = sys.tasks()[w.task].segments[w.segment].acc;
                sys.last_segment_on(w.task, acc).is_none_or(|last| prev > last)
            }
            _ => true,
        }
    };
    let key = |w: &Waiting| -> (Cycles, usize, u64) {
        match trace.policy {
            SimPolicy::Edf { .. } => (
                records.get(&(w.task, w.job)).map_or(Cycles::MAX, |j| j.deadline),
                w.task,
                w.job,
            ),
            _ => (w.arrival, w.task, w.job),
        }
    };

    let check_idle = |t: Cycles,
                      pools: &[Vec<Waiting>],
                      busy: &[bool],
                      done: &HashMap<(usize, u64), usize>,
                      out: &mut Vec<AuditViolation>| {
        for a in 0..pools.len() {
            if !busy[a] && pools[a].iter().any(|w| ready(w, done)) {
                out.push(AuditViolation::IdleWithReadyWork { acc: a, time: t });
            }
        }
    };

    let mut last_time = 0;
    for (index, e) in trace.events.iter().enumerate() {
        if e.time < last_time {
            out.push(AuditViolation::TimeWentBackwards { index });
        }
        if e.time != last_time {
            check_idle(last_time, &pools, &busy, &done, &mut out);
            last_time = e.time;
        }
        let id = (e.task, e.job);
        match e.kind {
            EventKind::Release => {
                released.insert(id, e.time);
            }
            EventKind::JobDone => match (released.get(&id), records.get(&id)) {
                (Some(&r), Some(j)) if j.completion == Some(e.time) && j.release == r => {}
                _ => out.push(AuditViolation::ResponseMismatch {
                    task: e.task,
                    job: e.job,
                }),
            },
            _ => {
                let (Some(a), Some(s)) = (e.acc, e.segment) else {
                    out.push(AuditViolation::UnknownJob { index });
                    continue;
                };
                let before = done.get(&id).copied().unwrap_or(0);
                match e.kind {
                    EventKind::Arrive => {
                        if before != s {
                            out.push(AuditViolation::Precedence {
                                task: e.task,
                                job: e.job,
                                segment: s,
                                time: e.time,
                            });
                        }
                        arrived.insert((e.task, e.job, s), e.time);
                        pools[a].push(Waiting {
                            task: e.task,
                            job: e.job,
                            segment: s,
                            arrival: e.time,
                        });
                        occupancy[a].push(OccupancySample {
                            time: e.time,
                            acc: a,
                            occupancy: pools[a].len(),
                        });
                    }
                    EventKind::SegmentStart | EventKind::Resume => {
                        let Some(pos) = pools[a].iter().position(|w| (w.task, w.job) == id) else {
                            out.push(AuditViolation::DispatchOfAbsent {
                                acc: a,
                                time: e.time,
                                task: e.task,
                                job: e.job,
                            });
                            continue;
                        };
                        let chosen = pools[a][pos];
                        if !ready(&chosen, &done) || pools[a].iter().any(|w| ready(w, &done) && key(w) < key(&chosen)) {
                            out.push(AuditViolation::DispatchOrder {
                                acc: a,
                                time: e.time,
                                task: e.task,
                                job: e.job,
                            });
                        }
                        if before != s {
                            out.push(AuditViolation::Precedence {
                                task: e.task,
                                job: e.job,
                                segment: s,
                                time: e.time,
                            });
                        }
                        pools[a].remove(pos);
                        occupancy[a].push(OccupancySample {
                            time: e.time,
                            acc: a,
                            occupancy: pools[a].len(),
                        });
                        busy[a] = true;
                        started[a] = Some((e.time, e.kind == EventKind::Resume));
                    }
                    EventKind::Preempt => {
                        if let Some(st) = started[a].as_mut() {
                            st.1 = true;
                        }
                    }
                    EventKind::Suspend => {
                        pools[a].push(Waiting {
                            task: e.task,
                            job: e.job,
                            segment: s,
                            arrival: arrived.get(&(e.task, e.job, s)).copied().unwrap_or(0),
                        });
                        occupancy[a].push(OccupancySample {
                            time: e.time,
                            acc: a,
                            occupancy: pools[a].len(),
                        });
                        busy[a] = false;
                        started[a] = None;
                    }
                    EventKind::SegmentDone => {
                        if let Some((t0, false)) = started[a] {
                            let w = sys.tasks()[e.task].segments[s].work.total();
                            if e.time - t0 != w {
                                out.push(AuditViolation::WorkMismatch {
                                    task: e.task,
                                    job: e.job,
                                    segment: s,
                                });
                            }
                        }
                        done.insert(id, before + 1);
                        busy[a] = false;
                        started[a] = None;
                    }
                    EventKind::Release | EventKind::JobDone => unreachable!(),
                }
            }
        }
    }
    check_idle(last_time, &pools, &busy, &done, &mut out);

    for (a, series) in occupancy.iter().enumerate() {
        let recorded: Vec<&OccupancySample> = trace.occupancy.iter().filter(|s| s.acc == a).collect();
        if recorded.len() != series.len() || recorded.iter().zip(series).any(|(r, s)| **r != *s) {
            out.push(AuditViolation::OccupancySeriesMismatch { acc: a });
        }
    }
    out
}
