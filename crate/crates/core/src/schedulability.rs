//! Segment WCETs with preemption overhead, per-accelerator utilization and
//! the soft real-time utilization test.

use std::ops::Range;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::model::{
    layer_latency, ratio, tile_costs, AcceleratorConfig, Cycles, DesignPoint, LayerShape, Mapping, Policy, TaskSet,
    TaskSpec, Util,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchedError {
    #[error("utilization profile must cover at least one accelerator")]
    EmptyProfile,
}

/// WCET of one task segment on one accelerator: `total = base + overhead`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SegmentWcet {
    pub base: Cycles,
    pub overhead: Cycles,
    pub total: Cycles,
}

pub fn segment_wcet(
    task: &TaskSpec,
    layer_range: Range<usize>,
    acc: &AcceleratorConfig,
    policy: Policy,
) -> SegmentWcet {
    segment_wcet_of_layers(&task.layers[layer_range], acc, policy)
}

/// A preempting job pays one tile, one store and one reload, once per
/// accelerator it visits. Bypassed accelerators and FIFO pay nothing.
pub fn segment_wcet_of_layers(layers: &[LayerShape], acc: &AcceleratorConfig, policy: Policy) -> SegmentWcet {
    let base: Cycles = layers.iter().map(|l| layer_latency(l, acc)).sum();
    let overhead = if policy == Policy::Edf && base > 0 {
        tile_costs(acc).preemption_overhead()
    } else {
        0
    };
    SegmentWcet {
        base,
        overhead,
        total: base + overhead,
    }
}

/// `u^k = sum_i e_i^k / p_i`, exact.
pub fn accelerator_utilization(
    ts: &TaskSet,
    mapping: &Mapping,
    acc_index: usize,
    acc: &AcceleratorConfig,
    policy: Policy,
) -> Util {
    utilization(ts.tasks().iter().map(|t| {
        let e = segment_wcet(t, mapping.segment(t.id, acc_index), acc, policy).total;
        (e, t.period)
    }))
}

/// Sum of `wcet / period` over `(wcet, period)` pairs.
pub fn utilization(demands: impl IntoIterator<Item = (Cycles, Cycles)>) -> Util {
    demands
        .into_iter()
        .map(|(e, p)| ratio(e, p))
        .fold(Util::zero(), |acc, u| acc + u)
}

pub(crate) fn utilization_profile_of(
    accs: &[AcceleratorConfig],
    mapping: &Mapping,
    policy: Policy,
    ts: &TaskSet,
) -> Vec<Util> {
    accs.iter()
        .enumerate()
        .map(|(k, acc)| accelerator_utilization(ts, mapping, k, acc, policy))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtilizationProfile {
    per_acc: Vec<Util>,
    max_util: Util,
}

impl UtilizationProfile {
    pub fn new(per_acc: Vec<Util>) -> Result<Self, SchedError> {
        let max_util = per_acc.iter().max().cloned().ok_or(SchedError::EmptyProfile)?;
        Ok(Self { per_acc, max_util })
    }

    pub fn of_design(design: &DesignPoint) -> Self {
        Self::new(design.utils().to_vec()).expect("designs have at least one accelerator")
    }

    pub fn per_acc(&self) -> &[Util] {
        &self.per_acc
    }

    pub fn max_util(&self) -> &Util {
        &self.max_util
    }
}

/// How much the utilization test can be trusted for a policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Confidence {
    /// Pipelined FIFO: the utilization bound is exact.
    Exact,
    /// EDF with preemption overhead: passed on inflated WCETs, confirm by simulation.
    VerifyBySimulation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SrtVerdict {
    pub schedulable: bool,
    pub confidence: Confidence,
}

/// Every accelerator at utilization at most 1 (boundary inclusive).
pub fn srt_schedulable(profile: &UtilizationProfile, policy: Policy) -> SrtVerdict {
    SrtVerdict {
        schedulable: *profile.max_util() <= Util::one(),
        confidence: match policy {
            Policy::Fifo => Confidence::Exact,
            Policy::Edf => Confidence::VerifyBySimulation,
        },
    }
}

/// DSE objective, recomputed from scratch rather than read from the cache.
pub fn max_utilization(design: &DesignPoint, ts: &TaskSet) -> Util {
    utilization_profile_of(&design.accs, &design.mapping, design.policy, ts)
        .into_iter()
        .max()
        .unwrap_or_default()
}
