use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Cycles;

use super::SimTrace;

/// Shortest horizon, in multiples of the longest period, at which a verdict is sound.
pub const MIN_HORIZON_PERIODS: u64 = 100;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DivergenceError {
    #[error("horizon {horizon} is below {MIN_HORIZON_PERIODS} x the longest period {max_period}")]
    HorizonTooShort { horizon: Cycles, max_period: Cycles },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Bounded,
    Diverging,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DivergenceReport {
    pub verdict: Verdict,
    /// Per accelerator: largest settled pool occupancy in the final quarter, and its bound.
    pub final_quarter_occupancy: Vec<(usize, usize)>,
    /// Per task: largest response (or age, if unfinished) of jobs released in
    /// the first and in the second half of the horizon.
    pub half_responses: Vec<(Cycles, Cycles)>,
}

impl DivergenceReport {
    pub fn occupancy_exceeded(&self) -> bool {
        self.final_quarter_occupancy.iter().any(|&(max, bound)| max > bound)
    }

    pub fn response_drift(&self, periods: &[Cycles]) -> bool {
        self.half_responses
            .iter()
            .zip(periods)
            .any(|(&(first, second), &p)| second > first.saturating_add(p))
    }
}

/// Flags a run as diverging when a pool holds more than its bound during the
/// final quarter of the horizon, or when some task's worst response over the
/// second half exceeds its worst over the first half by more than a period.
/// Unfinished jobs count with their age at the horizon.
pub fn detect_divergence(trace: &SimTrace) -> Result<DivergenceReport, DivergenceError> {
    let h = trace.horizon;
    let max_period = trace.max_period();
    if h < max_period.saturating_mul(MIN_HORIZON_PERIODS) {
        return Err(DivergenceError::HorizonTooShort { horizon: h, max_period });
    }

    let quarter_start = h - h / 4;
    let n_accs = trace.occupancy_bounds.len();
    // Occupancy after each instant settles: the last sample at each time.
    let mut settled: Vec<BTreeMap<Cycles, usize>> = vec![BTreeMap::new(); n_accs];
    for s in &trace.occupancy {
        settled[s.acc].insert(s.time, s.occupancy);
    }
    let final_quarter_occupancy = settled
        .iter()
        .zip(&trace.occupancy_bounds)
        .map(|(series, &bound)| {
            let carried = series.range(..=quarter_start).next_back().map_or(0, |(_, &o)| o);
            let max = series.range(quarter_start..).map(|(_, &o)| o).fold(carried, usize::max);
            (max, bound)
        })
        .collect();

    let mid = h / 2;
    let mut half_responses = vec![(0, 0); trace.periods.len()];
    for j in &trace.jobs {
        let r = j.completion.map_or(h - j.release, |c| c - j.release);
        let slot = &mut half_responses[j.task];
        if j.release < mid {
            slot.0 = slot.0.max(r);
        } else {
            slot.1 = slot.1.max(r);
        }
    }

    let mut report = DivergenceReport {
        verdict: Verdict::Bounded,
        final_quarter_occupancy,
        half_responses,
    };
    if report.occupancy_exceeded() || report.response_drift(&trace.periods) {
        report.verdict = Verdict::Diverging;
    }
    Ok(report)
}
