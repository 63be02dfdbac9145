//! Fixtures and generators shared by the integration suites.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srtaccel::model::{
    AcceleratorConfig, Cycles, DesignPoint, LayerShape, Mapping, Policy, ReleaseModel, ResourceVector, TaskSet,
    TaskSpec,
};
use srtaccel::schedulability::segment_wcet_of_layers;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn layer(m: u64, k: u64, n: u64) -> LayerShape {
    LayerShape::new(m, k, n).unwrap()
}

fn pow2(rng: &mut ChaCha8Rng, max_exp: u32) -> u64 {
    1 << rng.random_range(0..=max_exp)
}

pub fn random_acc(rng: &mut ChaCha8Rng) -> AcceleratorConfig {
    let pe = [pow2(rng, 3), pow2(rng, 3), pow2(rng, 3)];
    let tile = [pe[0] * pow2(rng, 3), pe[1] * pow2(rng, 3), pe[2] * pow2(rng, 3)];
    let ddr = rng.random_range(1..=16);
    let alloc = ResourceVector::new(1 << 12, 1 << 20, 1 << 10, ddr);
    AcceleratorConfig::new(pe, tile, alloc).unwrap()
}

pub fn random_layer(rng: &mut ChaCha8Rng) -> LayerShape {
    layer(
        rng.random_range(1..=96),
        rng.random_range(1..=96),
        rng.random_range(1..=96),
    )
}

/// A random pipelined design whose periods are scaled so that its largest
/// per-accelerator utilization lands at or just below `target` (`round_up`
/// periods) or at or just above it (round down).
pub fn random_design(
    rng: &mut ChaCha8Rng,
    target_num: u64,
    target_den: u64,
    policy: Policy,
    sporadic: bool,
) -> (TaskSet, DesignPoint) {
    let n_accs = rng.random_range(2..=4usize);
    let n_tasks = rng.random_range(2..=4usize);
    let accs: Vec<AcceleratorConfig> = (0..n_accs).map(|_| random_acc(rng)).collect();
    let mut counts = Vec::new();
    let mut layers = Vec::new();
    for _ in 0..n_tasks {
        let row: Vec<usize> = (0..n_accs).map(|_| rng.random_range(0..=2usize)).collect();
        let mut row = row;
        if row.iter().all(|&c| c == 0) {
            row[rng.random_range(0..n_accs)] = 1;
        }
        let total: usize = row.iter().sum();
        layers.push((0..total).map(|_| random_layer(rng)).collect::<Vec<_>>());
        counts.push(row);
    }
    // Per-task WCET on every accelerator.
    let mut wcet = vec![vec![0u64; n_accs]; n_tasks];
    for i in 0..n_tasks {
        let mut start = 0;
        for k in 0..n_accs {
            let end = start + counts[i][k];
            wcet[i][k] = segment_wcet_of_layers(&layers[i][start..end], &accs[k], policy).total;
            start = end;
        }
    }
    let weights: Vec<u64> = (0..n_tasks).map(|_| rng.random_range(1..=4)).collect();
    // With p_i = w_i * s, u^k = sum_i e_i^k / (w_i s); choose s so max_k u^k = target.
    let lcm: u64 = 12;
    let load = (0..n_accs)
        .map(|k| (0..n_tasks).map(|i| wcet[i][k] * (lcm / weights[i])).sum::<u64>())
        .max()
        .unwrap();
    // s = load * den / (lcm * num)
    let feasible = target_num <= target_den;
    let periods: Vec<Cycles> = weights
        .iter()
        .map(|&w| {
            let num = (w as u128) * (load as u128) * (target_den as u128);
            let den = (lcm as u128) * (target_num as u128);
            let p = if feasible { num.div_ceil(den) } else { num / den };
            p.max(1) as u64
        })
        .collect();
    let release = if sporadic {
        ReleaseModel::Sporadic
    } else {
        ReleaseModel::Periodic
    };
    let ts = TaskSet::new(
        layers
            .into_iter()
            .zip(&periods)
            .enumerate()
            .map(|(i, (l, &p))| TaskSpec::new(i, l, p).with_release(release))
            .collect(),
    )
    .unwrap();
    let mapping = Mapping::from_counts(&ts, counts).unwrap();
    let design = DesignPoint::new(accs, mapping, policy, &ts).unwrap();
    (ts, design)
}

/// Two tasks of one to three layers, leaning tall or wide at random so that
/// splitting the platform can pay off. Periods are `scale` percent of each
/// task's latency on the single-accelerator design.
pub fn small_instance(rng: &mut ChaCha8Rng, budget: ResourceVector) -> TaskSet {
    let shape = |rng: &mut ChaCha8Rng, tall: bool| {
        let big = 1u64 << rng.random_range(6..=10);
        let mid = 1u64 << rng.random_range(3..=7);
        let small = 1u64 << rng.random_range(1..=4);
        if tall {
            layer(big, mid, small)
        } else {
            layer(small, mid, big)
        }
    };
    let tasks: Vec<TaskSpec> = (0..2)
        .map(|i| {
            let tall = rng.random_bool(0.5);
            let n = rng.random_range(1..=3);
            TaskSpec::new(i, (0..n).map(|_| shape(rng, tall)).collect(), 1)
        })
        .collect();
    let template = TaskSet::new(tasks).unwrap();
    let reference = srtaccel::analysis::reference_periods(&template, budget).unwrap();
    let periods: Vec<Cycles> = reference
        .iter()
        .map(|&p| (p * rng.random_range(120..=400) / 100).max(1))
        .collect();
    template.with_periods(&periods).unwrap()
}
