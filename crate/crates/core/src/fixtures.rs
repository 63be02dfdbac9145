//! Small shipped workloads used by the test suites, the examples and the
//! default experiment configurations.

use crate::dse::SearchOptions;
use crate::model::{
    AcceleratorConfig, Cycles, DesignPoint, LayerShape, Mapping, Policy, ResourceVector, TaskSet, TaskSpec,
};

fn layer(m: u64, k: u64, n: u64) -> LayerShape {
    LayerShape::new(m, k, n).expect("fixture shapes are positive")
}

/// Tall-skinny GEMMs: large `M`, small `N`.
pub fn tall_app() -> Vec<LayerShape> {
    vec![layer(1024, 32, 4), layer(512, 64, 4), layer(1024, 16, 8)]
}

/// The transposed workload: small `M`, large `N` or `K`.
pub fn wide_app() -> Vec<LayerShape> {
    vec![layer(4, 32, 1024), layer(4, 512, 64), layer(8, 1024, 16)]
}

/// Platform shared by the golden and sweep fixtures.
pub fn platform() -> ResourceVector {
    ResourceVector::new(256, 1 << 16, 192, 64)
}

pub const GOLDEN_MAX_M: usize = 3;
pub const GOLDEN_GRID: u64 = 4;

/// Two heterogeneous tasks where three accelerators beat two, and a beam of
/// width 4 or more is needed to find them.
pub fn golden_taskset() -> TaskSet {
    TaskSet::new(vec![
        TaskSpec::new(0, tall_app(), 3849),
        TaskSpec::new(1, wide_app(), 7698),
    ])
    .expect("golden fixture is valid")
}

/// Template for period sweeps; periods are replaced per cell.
pub fn sweep_template() -> TaskSet {
    TaskSet::new(vec![TaskSpec::new(0, tall_app(), 1), TaskSpec::new(1, wide_app(), 1)])
        .expect("sweep fixture is valid")
}

/// Search settings used for the shipped period sweep.
pub fn sweep_options(policy: Policy) -> SearchOptions {
    SearchOptions::new(3, Some(8), 4, policy)
}

/// One accelerator shared by a long job that nearly fills its period and a
/// light job with a much shorter period.
pub fn long_short() -> (TaskSet, DesignPoint) {
    let acc = AcceleratorConfig::new([4, 4, 4], [16, 16, 16], ResourceVector::new(64, 4096, 48, 16))
        .expect("fixture accelerator is valid");
    // 64 tiles of 64 cycles per 64^3 layer; the long task runs 8 of them.
    let long: Vec<LayerShape> = (0..8).map(|_| layer(64, 64, 64)).collect();
    let short = vec![layer(16, 64, 16)];
    let long_wcet: Cycles = 8 * crate::model::layer_latency(&long[0], &acc);
    let ts = TaskSet::new(vec![
        TaskSpec::new(0, long, long_wcet * 10 / 7),
        TaskSpec::new(1, short, long_wcet / 6),
    ])
    .expect("long/short fixture is valid");
    let mapping = Mapping::from_counts(&ts, vec![vec![8], vec![1]]).expect("one accelerator hosts everything");
    let design = DesignPoint::new(vec![acc], mapping, Policy::Edf, &ts).expect("dimensions match");
    (ts, design)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;

    #[test]
    fn long_short_is_schedulable_under_both_policies() {
        let (ts, d) = long_short();
        assert!(d.max_util() <= crate::model::Util::one());
        assert!(d.with_policy(Policy::Fifo, &ts).max_util() <= crate::model::Util::one());
    }
}
