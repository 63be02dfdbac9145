//! Event loop. At every instant the engine repeats three classes of work
//! until nothing changes: activity completions, then releases and arrivals
//! (sorted by task, job), then dispatch on idle accelerators.

use crate::model::Cycles;

use super::trace::{EventKind, JobRecord, OccupancySample, PreemptionRecord, SimTrace, TraceEvent};
use super::{ReleaseSchedule, SimError, SimPolicy, SimSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Run {
    task: usize,
    job: u64,
    seg: usize,
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    run: Run,
    arrival: Cycles,
    deadline: Cycles,
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    cut_time: Cycles,
    resume: Cycles,
    record: usize,
}

#[derive(Debug, Clone, Copy)]
enum Activity {
    Idle,
    Working {
        run: Run,
        deadline: Cycles,
        started_at: Cycles,
        offset: Cycles,
        pending: Option<Pending>,
    },
    Storing {
        run: Run,
        until: Cycles,
        resume: Cycles,
    },
    Reloading {
        run: Run,
        deadline: Cycles,
        started_at: Cycles,
        until: Cycles,
        resume: Cycles,
    },
}

#[derive(Debug, Clone, Copy)]
struct Saved {
    offset: Cycles,
    needs_reload: bool,
    charge_to: usize,
}

#[derive(Debug, Clone)]
struct JobState {
    record: usize,
    deadline: Cycles,
    arrival: Cycles,
    completed_segments: usize,
    saved: Option<Saved>,
    /// Reload charge carried from dispatch until the reload finishes.
    reload_charge: Option<usize>,
    initiated: Vec<bool>,
}

struct AccState {
    pool: Vec<Entry>,
    activity: Activity,
    busy_since: Option<Cycles>,
    busy: Cycles,
}

struct Engine<'a> {
    sys: &'a SimSystem,
    releases: &'a ReleaseSchedule,
    policy: SimPolicy,
    horizon: Cycles,
    now: Cycles,
    next_release: Vec<usize>,
    jobs: Vec<Vec<JobState>>,
    accs: Vec<AccState>,
    arrivals: Vec<Entry>,
    trace: SimTrace,
}

/// Runs `sys` from time 0 until `horizon`. Only releases strictly before the
/// horizon happen; work in flight at the horizon is left unfinished.
pub fn simulate(
    sys: &SimSystem,
    releases: &ReleaseSchedule,
    policy: SimPolicy,
    horizon: Cycles,
) -> Result<SimTrace, SimError> {
    if horizon < sys.max_period() {
        return Err(SimError::HorizonTooShort {
            horizon,
            max_period: sys.max_period(),
        });
    }
    if releases.per_task.len() != sys.num_tasks() {
        return Err(SimError::InvalidSystem("one release list per task".into()));
    }
    let mut engine = Engine {
        sys,
        releases,
        policy,
        horizon,
        now: 0,
        next_release: vec![0; sys.num_tasks()],
        jobs: vec![Vec::new(); sys.num_tasks()],
        accs: (0..sys.accs().len())
            .map(|_| AccState {
                pool: Vec::new(),
                activity: Activity::Idle,
                busy_since: None,
                busy: 0,
            })
            .collect(),
        arrivals: Vec::new(),
        trace: SimTrace {
            policy,
            horizon,
            periods: sys.periods(),
            occupancy_bounds: sys.occupancy_bounds(),
            events: Vec::new(),
            jobs: Vec::new(),
            preemptions: Vec::new(),
            occupancy: Vec::new(),
            busy: vec![0; sys.accs().len()],
        },
    };
    engine.run()?;
    Ok(engine.finish())
}

impl Engine<'_> {
    fn overhead(&self) -> bool {
        matches!(self.policy, SimPolicy::Edf { overhead: true })
    }

    fn emit(&mut self, acc: Option<usize>, run: Run, segment: Option<usize>, kind: EventKind) {
        self.trace.events.push(TraceEvent {
            time: self.now,
            acc,
            task: run.task,
            job: run.job,
            segment,
            kind,
        });
    }

    fn sample(&mut self, acc: usize) {
        let occupancy = self.accs[acc].pool.len();
        self.trace.occupancy.push(OccupancySample {
            time: self.now,
            acc,
            occupancy,
        });
    }

    fn job(&mut self, run: Run) -> &mut JobState {
        &mut self.jobs[run.task][run.job as usize]
    }

    fn acc_of(&self, run: Run) -> usize {
        self.sys.tasks()[run.task].segments[run.seg].acc
    }

    fn work_total(&self, run: Run) -> Cycles {
        self.sys.tasks()[run.task].segments[run.seg].work.total()
    }

    fn add(&self, a: Cycles, b: Cycles) -> Result<Cycles, SimError> {
        a.checked_add(b).ok_or(SimError::ClockOverflow { at: self.now })
    }

    fn set_activity(&mut self, acc: usize, activity: Activity) {
        let st = &mut self.accs[acc];
        let idle = matches!(activity, Activity::Idle);
        match (st.busy_since, idle) {
            (Some(since), true) => {
                st.busy += self.now - since;
                st.busy_since = None;
            }
            (None, false) => st.busy_since = Some(self.now),
            _ => {}
        }
        st.activity = activity;
    }

    fn run(&mut self) -> Result<(), SimError> {
        loop {
            self.settle()?;
            match self.next_time()? {
                Some(t) if t < self.horizon => self.now = t,
                _ => return Ok(()),
            }
        }
    }

    fn next_time(&self) -> Result<Option<Cycles>, SimError> {
        let mut next: Option<Cycles> = None;
        let mut consider = |t: Cycles| next = Some(next.map_or(t, |n: Cycles| n.min(t)));
        for (i, list) in self.releases.per_task.iter().enumerate() {
            if let Some(&t) = list.get(self.next_release[i]) {
                consider(t);
            }
        }
        for st in &self.accs {
            match st.activity {
                Activity::Idle => {}
                Activity::Working {
                    run,
                    started_at,
                    offset,
                    pending,
                    ..
                } => {
                    let done = self.add(started_at, self.work_total(run) - offset)?;
                    consider(pending.map_or(done, |p| p.cut_time.min(done)));
                }
                Activity::Storing { until, .. } | Activity::Reloading { until, .. } => consider(until),
            }
        }
        Ok(next)
    }

    fn settle(&mut self) -> Result<(), SimError> {
        loop {
            let mut changed = self.completions()?;
            changed |= self.releases_and_arrivals()?;
            changed |= self.dispatch()?;
            if !changed {
                return Ok(());
            }
        }
    }

    fn completions(&mut self) -> Result<bool, SimError> {
        let mut changed = false;
        for a in 0..self.accs.len() {
            match self.accs[a].activity {
                Activity::Working {
                    run,
                    started_at,
                    offset,
                    pending,
                    ..
                } => {
                    let done = started_at + (self.work_total(run) - offset);
                    if let Some(p) = pending.filter(|p| p.cut_time == self.now && p.cut_time < done) {
                        self.cut(a, run, p)?;
                        changed = true;
                    } else if done == self.now {
                        self.segment_done(a, run);
                        changed = true;
                    }
                }
                Activity::Storing { run, until, resume } if until == self.now => {
                    if resume >= self.work_total(run) {
                        self.segment_done(a, run);
                    } else {
                        self.suspend(a, run, resume);
                    }
                    changed = true;
                }
                Activity::Reloading {
                    run,
                    deadline,
                    started_at,
                    until,
                    resume,
                } if until == self.now => {
                    let charge = self.job(run).reload_charge.take().expect("reloads carry a charge");
                    self.trace.preemptions[charge].reload += until - started_at;
                    self.set_activity(
                        a,
                        Activity::Working {
                            run,
                            deadline,
                            started_at: self.now,
                            offset: resume,
                            pending: None,
                        },
                    );
                    changed = true;
                }
                _ => {}
            }
        }
        Ok(changed)
    }

    fn cut(&mut self, a: usize, run: Run, p: Pending) -> Result<(), SimError> {
        self.emit(Some(a), run, Some(run.seg), EventKind::Preempt);
        let store = if self.overhead() { self.sys.accs()[a].e_store } else { 0 };
        self.trace.preemptions[p.record].store = store;
        let until = self.add(self.now, store)?;
        self.set_activity(
            a,
            Activity::Storing {
                run,
                until,
                resume: p.resume,
            },
        );
        let job = self.job(run);
        job.saved = Some(Saved {
            offset: p.resume,
            needs_reload: true,
            charge_to: p.record,
        });
        Ok(())
    }

    fn suspend(&mut self, a: usize, run: Run, resume: Cycles) {
        let overhead = self.overhead();
        let job = self.job(run);
        if let Some(s) = job.saved.as_mut() {
            s.offset = resume;
            s.needs_reload = overhead;
        }
        let entry = Entry {
            run,
            arrival: job.arrival,
            deadline: job.deadline,
        };
        self.emit(Some(a), run, Some(run.seg), EventKind::Suspend);
        self.accs[a].pool.push(entry);
        self.sample(a);
        self.set_activity(a, Activity::Idle);
    }

    fn segment_done(&mut self, a: usize, run: Run) {
        self.emit(Some(a), run, Some(run.seg), EventKind::SegmentDone);
        self.set_activity(a, Activity::Idle);
        let n_segs = self.sys.tasks()[run.task].segments.len();
        let now = self.now;
        let job = self.job(run);
        job.completed_segments += 1;
        job.saved = None;
        let deadline = job.deadline;
        let record = job.record;
        if run.seg + 1 < n_segs {
            self.arrivals.push(Entry {
                run: Run {
                    seg: run.seg + 1,
                    ..run
                },
                arrival: now,
                deadline,
            });
        } else {
            self.trace.jobs[record].completion = Some(now);
            self.emit(None, run, None, EventKind::JobDone);
        }
    }

    fn releases_and_arrivals(&mut self) -> Result<bool, SimError> {
        for task in 0..self.sys.num_tasks() {
            while let Some(&t) = self.releases.per_task[task].get(self.next_release[task]) {
                if t != self.now {
                    break;
                }
                self.next_release[task] += 1;
                let job = self.jobs[task].len() as u64;
                let deadline = self.add(t, self.sys.tasks()[task].period)?;
                let record = self.trace.jobs.len();
                self.trace.jobs.push(JobRecord {
                    task,
                    job,
                    release: t,
                    deadline,
                    completion: None,
                });
                self.jobs[task].push(JobState {
                    record,
                    deadline,
                    arrival: t,
                    completed_segments: 0,
                    saved: None,
                    reload_charge: None,
                    initiated: vec![false; self.accs.len()],
                });
                let run = Run { task, job, seg: 0 };
                self.emit(None, run, None, EventKind::Release);
                self.arrivals.push(Entry {
                    run,
                    arrival: t,
                    deadline,
                });
            }
        }
        if self.arrivals.is_empty() {
            return Ok(false);
        }
        let mut arrivals = std::mem::take(&mut self.arrivals);
        arrivals.sort_by_key(|e| e.run);
        for e in arrivals {
            self.arrive(e);
        }
        Ok(true)
    }

    fn arrive(&mut self, e: Entry) {
        let a = self.acc_of(e.run);
        let now = self.now;
        self.job(e.run).arrival = now;
        self.emit(Some(a), e.run, Some(e.run.seg), EventKind::Arrive);
        self.accs[a].pool.push(e);
        self.sample(a);
        if !self.policy.is_edf() || self.job(e.run).initiated[a] {
            return;
        }
        match self.accs[a].activity {
            Activity::Working {
                run,
                deadline,
                started_at,
                offset,
                pending: None,
            } if e.deadline < deadline => {
                let seg = &self.sys.tasks()[run.task].segments[run.seg].work;
                let at = offset + (now - started_at);
                let cp = seg.cut_at(at, self.overhead());
                if cp.cut >= seg.total() {
                    return;
                }
                let cut_time = now + (cp.cut - at);
                let record = self.trace.preemptions.len();
                self.trace.preemptions.push(PreemptionRecord {
                    acc: a,
                    preemptor: (e.run.task, e.run.job),
                    victim: (run.task, run.job),
                    requested_at: now,
                    cut_at: cut_time,
                    store: 0,
                    reload: 0,
                    skipped: cp.resume - cp.cut,
                });
                self.job(e.run).initiated[a] = true;
                if let Activity::Working { pending, .. } = &mut self.accs[a].activity {
                    *pending = Some(Pending {
                        cut_time,
                        resume: cp.resume,
                        record,
                    });
                }
            }
            Activity::Reloading {
                run,
                deadline,
                started_at,
                resume,
                ..
            } if e.deadline < deadline => {
                // Abandon the reload; the time already spent stays with the
                // preemption that caused it.
                let prev = self.job(run).reload_charge.take().expect("reloads carry a charge");
                self.trace.preemptions[prev].reload += now - started_at;
                let record = self.trace.preemptions.len();
                self.trace.preemptions.push(PreemptionRecord {
                    acc: a,
                    preemptor: (e.run.task, e.run.job),
                    victim: (run.task, run.job),
                    requested_at: now,
                    cut_at: now,
                    store: 0,
                    reload: 0,
                    skipped: 0,
                });
                self.job(e.run).initiated[a] = true;
                self.job(run).saved = Some(Saved {
                    offset: resume,
                    needs_reload: true,
                    charge_to: record,
                });
                self.emit(Some(a), run, Some(run.seg), EventKind::Preempt);
                self.suspend(a, run, resume);
            }
            _ => {}
        }
    }

    fn ready(&self, e: &Entry) -> bool {
        if e.run.job == 0 {
            return true;
        }
        let prev = &self.jobs[e.run.task][e.run.job as usize - 1];
        match self.policy {
            SimPolicy::FifoWithPolling => prev.completed_segments > e.run.seg,
            SimPolicy::FifoWithoutPolling => {
                let a = self.acc_of(e.run);
                let last = self
                    .sys
                    .last_segment_on(e.run.task, a)
                    .expect("entry is on this accelerator");
                prev.completed_segments > last
            }
            SimPolicy::FifoPipelined | SimPolicy::Edf { .. } => true,
        }
    }

    fn dispatch(&mut self) -> Result<bool, SimError> {
        let mut changed = false;
        for a in 0..self.accs.len() {
            if !matches!(self.accs[a].activity, Activity::Idle) {
                continue;
            }
            let pick = self.accs[a]
                .pool
                .iter()
                .enumerate()
                .filter(|(_, e)| self.ready(e))
                .min_by_key(|(_, e)| match self.policy {
                    SimPolicy::Edf { .. } => (e.deadline, e.run.task, e.run.job),
                    _ => (e.arrival, e.run.task, e.run.job),
                })
                .map(|(i, _)| i);
            let Some(i) = pick else { continue };
            let e = self.accs[a].pool.remove(i);
            self.sample(a);
            changed = true;
            let reload = self.sys.accs()[a].e_load;
            let now = self.now;
            match self.job(e.run).saved.take() {
                None => {
                    self.emit(Some(a), e.run, Some(e.run.seg), EventKind::SegmentStart);
                    self.set_activity(
                        a,
                        Activity::Working {
                            run: e.run,
                            deadline: e.deadline,
                            started_at: now,
                            offset: 0,
                            pending: None,
                        },
                    );
                }
                Some(s) => {
                    self.emit(Some(a), e.run, Some(e.run.seg), EventKind::Resume);
                    if s.needs_reload && reload > 0 {
                        self.job(e.run).reload_charge = Some(s.charge_to);
                        let until = self.add(now, reload)?;
                        self.set_activity(
                            a,
                            Activity::Reloading {
                                run: e.run,
                                deadline: e.deadline,
                                started_at: now,
                                until,
                                resume: s.offset,
                            },
                        );
                    } else {
                        self.set_activity(
                            a,
                            Activity::Working {
                                run: e.run,
                                deadline: e.deadline,
                                started_at: now,
                                offset: s.offset,
                                pending: None,
                            },
                        );
                    }
                }
            }
        }
        Ok(changed)
    }

    fn finish(mut self) -> SimTrace {
        for (a, st) in self.accs.iter().enumerate() {
            let open = st.busy_since.map_or(0, |s| self.horizon.saturating_sub(s));
            self.trace.busy[a] = st.busy + open;
        }
        // Reloads still running at the horizon are charged up to the horizon.
        for st in &self.accs {
            if let Activity::Reloading { run, started_at, .. } = st.activity {
                if let Some(c) = self.jobs[run.task][run.job as usize].reload_charge {
                    self.trace.preemptions[c].reload += self.horizon - started_at;
                }
            }
        }
        self.trace
    }
}

#[cfg(test)]
mod tests {
    use super::super::{SegmentWork, SimSegment, SimTask};
    use super::*;
    use crate::model::TileCosts;

    fn one_acc(costs: TileCosts, tasks: Vec<(Cycles, SegmentWork)>) -> SimSystem {
        SimSystem::new(
            vec![costs],
            tasks
                .into_iter()
                .map(|(period, work)| SimTask {
                    period,
                    segments: vec![SimSegment { acc: 0, work }],
                })
                .collect(),
        )
        .unwrap()
    }

    fn kinds(t: &SimTrace, kind: EventKind) -> Vec<&TraceEvent> {
        t.events.iter().filter(|e| e.kind == kind).collect()
    }

    #[test]
    fn hand_traced_preemption() {
        let costs = TileCosts {
            e_tile: 100,
            e_store: 20,
            e_load: 30,
        };
        // Task 0 is A (e = 400, p = 1000), task 1 is B (e = 1000, p = 4000).
        let sys = one_acc(
            costs,
            vec![
                (1000, SegmentWork::uniform(4, 100)),
                (4000, SegmentWork::uniform(10, 100)),
            ],
        );
        let rel = ReleaseSchedule::new(vec![vec![50], vec![0]]);
        let t = simulate(&sys, &rel, SimPolicy::Edf { overhead: true }, 4000).unwrap();

        let preempts = kinds(&t, EventKind::Preempt);
        let resumes = kinds(&t, EventKind::Resume);
        assert_eq!(preempts.len(), 1);
        assert_eq!(resumes.len(), 1);
        assert_eq!((preempts[0].time, preempts[0].task), (100, 1));
        let suspend = kinds(&t, EventKind::Suspend);
        assert_eq!(suspend[0].time, 120);
        let a_start = kinds(&t, EventKind::SegmentStart)
            .into_iter()
            .find(|e| e.task == 0)
            .unwrap();
        assert_eq!(a_start.time, 120);
        assert_eq!(resumes[0].time, 520);

        let a = t.jobs.iter().find(|j| j.task == 0).unwrap();
        assert_eq!(a.response(), Some(470));
        // B: 100 before the cut, 900 after reloading at 550.
        let b = t.jobs.iter().find(|j| j.task == 1).unwrap();
        assert_eq!(b.completion, Some(1450));

        let p = t.preemptions[0];
        assert_eq!(
            (p.requested_at, p.cut_at, p.store, p.reload, p.skipped),
            (50, 100, 20, 30, 0)
        );
        assert_eq!(p.overhead(), 100);
        assert!(p.overhead() <= costs.preemption_overhead());
    }

    #[test]
    fn no_overhead_resumes_immediately() {
        let costs = TileCosts {
            e_tile: 100,
            e_store: 20,
            e_load: 30,
        };
        let sys = one_acc(
            costs,
            vec![
                (1000, SegmentWork::uniform(4, 100)),
                (4000, SegmentWork::uniform(10, 100)),
            ],
        );
        let rel = ReleaseSchedule::new(vec![vec![50], vec![0]]);
        let t = simulate(&sys, &rel, SimPolicy::Edf { overhead: false }, 4000).unwrap();
        assert_eq!(t.jobs.iter().find(|j| j.task == 0).unwrap().response(), Some(450));
        assert_eq!(t.jobs.iter().find(|j| j.task == 1).unwrap().completion, Some(1400));
    }

    #[test]
    fn single_task_response_equals_wcet() {
        let costs = TileCosts {
            e_tile: 10,
            e_store: 1,
            e_load: 1,
        };
        let sys = one_acc(costs, vec![(1200, SegmentWork::uniform(60, 10))]);
        let rel = ReleaseSchedule::new(vec![super::super::periodic_release_sequence(1200, 12_000)]);
        for policy in [SimPolicy::FifoPipelined, SimPolicy::Edf { overhead: true }] {
            let t = simulate(&sys, &rel, policy, 12_000).unwrap();
            assert_eq!(t.jobs.len(), 10);
            assert!(t.jobs.iter().all(|j| j.response() == Some(600)));
            assert_eq!(t.busy, vec![6000]);
        }
    }

    #[test]
    fn reload_aborted_by_earlier_deadline() {
        let costs = TileCosts {
            e_tile: 100,
            e_store: 20,
            e_load: 30,
        };
        // B runs from 0, A preempts at 100, B reloads 520..550 but C arrives at 530.
        let sys = one_acc(
            costs,
            vec![
                (1000, SegmentWork::uniform(4, 100)),
                (4000, SegmentWork::uniform(10, 100)),
                (1000, SegmentWork::uniform(1, 100)),
            ],
        );
        let rel = ReleaseSchedule::new(vec![vec![50], vec![0], vec![530]]);
        let t = simulate(&sys, &rel, SimPolicy::Edf { overhead: true }, 4000).unwrap();
        assert_eq!(t.preemptions.len(), 2);
        assert_eq!(t.preemptions[0].reload, 10);
        assert_eq!(t.preemptions[1].reload, 30);
        let c = t.jobs.iter().find(|j| j.task == 2).unwrap();
        assert_eq!(c.response(), Some(100));
        for p in &t.preemptions {
            assert!(p.overhead() <= costs.preemption_overhead());
        }
    }

    #[test]
    fn horizon_must_cover_a_period() {
        let costs = TileCosts {
            e_tile: 1,
            e_store: 1,
            e_load: 1,
        };
        let sys = one_acc(costs, vec![(100, SegmentWork::uniform(1, 1))]);
        let rel = ReleaseSchedule::new(vec![vec![0]]);
        assert!(matches!(
            simulate(&sys, &rel, SimPolicy::FifoPipelined, 50),
            Err(SimError::HorizonTooShort { .. })
        ));
    }
}
