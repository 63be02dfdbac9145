//! Property tests over the model, the search primitives and the simulator.

mod common;

use num_traits::{One, Zero};
use proptest::prelude::*;
use srtaccel::dse::{create_acc, ConfigTable, SegmentDemand};
use srtaccel::model::{
    layer_latency, resource_cost, tile_costs, tile_grid, AcceleratorConfig, Cycles, DesignPoint, LayerShape, Mapping,
    Policy, ResourceVector, TaskSet, TaskSpec, Util,
};
use srtaccel::schedulability::segment_wcet_of_layers;
use srtaccel::sim::{audit_trace, simulate_design, SimPolicy, SimSystem};

fn shape() -> impl Strategy<Value = LayerShape> {
    (1u64..300, 1u64..300, 1u64..300).prop_map(|(m, k, n)| LayerShape::new(m, k, n).unwrap())
}

fn pow2(max_exp: u32) -> impl Strategy<Value = u64> {
    (0..=max_exp).prop_map(|e| 1u64 << e)
}

fn accelerator() -> impl Strategy<Value = AcceleratorConfig> {
    (pow2(3), pow2(3), pow2(3), pow2(3), pow2(3), pow2(3), 1u64..32).prop_map(|(a, b, c, x, y, z, ddr)| {
        AcceleratorConfig::new(
            [a, b, c],
            [a * x, b * y, c * z],
            ResourceVector::new(1 << 12, 1 << 22, 1 << 10, ddr),
        )
        .unwrap()
    })
}

fn policy() -> impl Strategy<Value = Policy> {
    prop_oneof![Just(Policy::Fifo), Just(Policy::Edf)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn latency_matches_closed_form(l in shape(), acc in accelerator()) {
        let [x, y, z] = acc.tile();
        let [a, b, c] = acc.pe();
        let ddr = acc.allocated().components()[3];
        let e_tile = (x / a) * (y / b) * (z / c);
        let e_load = (x * y + y * z).div_ceil(ddr);
        let e_store = (x * z).div_ceil(ddr);
        let tiles = l.m().div_ceil(x) * l.k().div_ceil(y) * l.n().div_ceil(z);
        prop_assert_eq!(layer_latency(&l, &acc), tiles * e_tile.max(e_load) + e_load + e_store);
        prop_assert_eq!(tile_grid(&l, &acc).iter().product::<u64>(), tiles);
        let costs = tile_costs(&acc);
        prop_assert_eq!(costs.preemption_overhead(), e_tile + e_load + e_store);
        let cost = resource_cost(&acc);
        prop_assert_eq!(cost.components(), [a * b * c, 2 * (x * y + y * z + x * z), a * b + b * c + a * c, ddr]);
    }

    #[test]
    fn edf_wcet_adds_one_overhead_per_visited_accelerator(
        layers in prop::collection::vec(shape(), 0..4),
        acc in accelerator(),
    ) {
        let fifo = segment_wcet_of_layers(&layers, &acc, Policy::Fifo);
        let edf = segment_wcet_of_layers(&layers, &acc, Policy::Edf);
        prop_assert_eq!(fifo.base, edf.base);
        prop_assert_eq!(fifo.overhead, 0);
        let xi = if layers.is_empty() { 0 } else { tile_costs(&acc).preemption_overhead() };
        prop_assert_eq!(edf.total, edf.base + xi);
    }

    #[test]
    fn config_table_agrees_with_direct_synthesis(
        tasks in prop::collection::vec(prop::collection::vec(shape(), 1..4), 1..3),
        cuts in prop::collection::vec((0usize..4, 0usize..4), 2),
        periods in prop::collection::vec(1u64..100_000, 2),
        scale in 1u64..=4,
        policy in policy(),
    ) {
        let budget = ResourceVector::new(16 * scale, 1024 * scale * scale, 12 * scale, 4 * scale);
        let lists: Vec<&[LayerShape]> = tasks.iter().map(Vec::as_slice).collect();
        let table = ConfigTable::build(&lists, &budget, policy);
        let ranges: Vec<std::ops::Range<usize>> = tasks
            .iter()
            .zip(&cuts)
            .map(|(t, &(a, b))| {
                let (lo, hi) = (a.min(b).min(t.len()), a.max(b).min(t.len()));
                lo..hi
            })
            .collect();
        let demands: Vec<SegmentDemand> = tasks
            .iter()
            .zip(&ranges)
            .zip(&periods)
            .map(|((t, r), &p)| SegmentDemand { layers: &t[r.clone()], period: p })
            .collect();
        prop_assert_eq!(table.best(&ranges, &periods), create_acc(&demands, &budget, policy));
    }

    #[test]
    fn created_accelerator_fits_its_budget(
        layers in prop::collection::vec(shape(), 1..4),
        pe in 1u64..64, mem in 1u64..5000, bw in 1u64..64, ddr in 1u64..16,
    ) {
        let budget = ResourceVector::new(pe, mem, bw, ddr);
        let seg = [SegmentDemand { layers: &layers, period: 1000 }];
        if let Some(acc) = create_acc(&seg, &budget, Policy::Fifo) {
            prop_assert!(resource_cost(&acc).fits_within(&budget));
            prop_assert_eq!(*acc.allocated(), budget);
        }
    }

    #[test]
    fn utilization_scales_inversely_with_periods(seed in any::<u64>(), s in 2u64..50, policy in policy()) {
        let mut rng = common::rng(seed);
        let (ts, d) = common::random_design(&mut rng, 80, 100, policy, false);
        let scaled: Vec<Cycles> = ts.tasks().iter().map(|t| t.period * s).collect();
        let ts2 = ts.with_periods(&scaled).unwrap();
        let d2 = DesignPoint::new(d.accs.clone(), d.mapping.clone(), policy, &ts2).unwrap();
        for (u, u2) in d.utils().iter().zip(d2.utils()) {
            prop_assert_eq!(u2 * Util::from_integer(s.into()), u.clone());
        }
    }

    #[test]
    fn mapping_segments_tile_each_task(counts in prop::collection::vec(prop::collection::vec(0usize..3, 3), 1..4)) {
        let counts: Vec<Vec<usize>> = counts
            .into_iter()
            .map(|mut r| { if r.iter().sum::<usize>() == 0 { r[0] = 1; } r })
            .collect();
        let tasks: Vec<TaskSpec> = counts
            .iter()
            .enumerate()
            .map(|(i, r)| TaskSpec::new(i, vec![LayerShape::new(8, 8, 8).unwrap(); r.iter().sum()], 100))
            .collect();
        let ts = TaskSet::new(tasks).unwrap();
        let m = Mapping::from_counts(&ts, counts.clone()).unwrap();
        for (i, row) in counts.iter().enumerate() {
            let mut next = 0;
            for (k, &c) in row.iter().enumerate() {
                let r = m.segment(i, k);
                prop_assert_eq!(r.start, next);
                prop_assert_eq!(r.len(), c);
                next = r.end;
            }
            prop_assert_eq!(next, ts.task(i).num_layers());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn responses_respect_uncontended_latency_and_audit_clean(
        seed in any::<u64>(),
        load in 30u64..=100,
        which in 0usize..5,
        sporadic in any::<bool>(),
    ) {
        let mut rng = common::rng(seed);
        let (ts, d) = common::random_design(&mut rng, load, 100, Policy::Edf, sporadic);
        let policy = [
            SimPolicy::FifoPipelined,
            SimPolicy::FifoWithoutPolling,
            SimPolicy::FifoWithPolling,
            SimPolicy::Edf { overhead: true },
            SimPolicy::Edf { overhead: false },
        ][which];
        let t = simulate_design(&d, &ts, policy, 20 * ts.max_period(), seed).unwrap();
        let lower = srtaccel::analysis::uncontended_latencies(&d, &ts);
        for j in &t.jobs {
            if let Some(r) = j.response() {
                prop_assert!(r >= lower[j.task]);
            }
        }
        prop_assert!(audit_trace(&t, &SimSystem::from_design(&d, &ts).unwrap()).is_empty());
        let xi: Vec<Cycles> = d.accs.iter().map(|a| tile_costs(a).preemption_overhead()).collect();
        for p in &t.preemptions {
            prop_assert!(p.overhead() <= xi[p.acc]);
        }
        if !policy.is_edf() {
            prop_assert!(t.preemptions.is_empty());
        }
        prop_assert!(d.max_util() > Util::zero() && d.max_util() <= Util::one());
    }
}
