//! CSV layouts and edge cases of the experiment harnesses.

use srtaccel::analysis::{beam_quality_study, compare_policies, period_sweep, reference_periods, Method, SweepSpec};
use srtaccel::fixtures;
use srtaccel::model::Policy;
use srtaccel::sim::SimPolicy;

fn csv_lines(bytes: Vec<u8>) -> Vec<String> {
    String::from_utf8(bytes).unwrap().lines().map(String::from).collect()
}

#[test]
fn sweep_csv_has_one_row_per_cell_and_method() {
    let template = fixtures::sweep_template();
    let reference = reference_periods(&template, fixtures::platform()).unwrap();
    let spec = SweepSpec {
        axes: vec![vec![0.5, 1.0], vec![0.5, 1.0, 2.0]],
        methods: vec![Method::Schedulability, Method::SingleAccelerator],
        budget: fixtures::platform(),
        options: fixtures::sweep_options(Policy::Fifo),
        horizon_mult: 100,
        seed: 0,
    };
    let grid = period_sweep(&template, &reference, &spec).unwrap();
    let mut out = Vec::new();
    grid.write_csv(&mut out).unwrap();
    let lines = csv_lines(out);
    assert_eq!(
        lines[0],
        "cell,ratio_0,ratio_1,period_0,period_1,method,feasible,max_util,max_util_exact,num_accs,verdict,error"
    );
    assert_eq!(lines.len(), 1 + 2 * 3 * 2);
    assert!(lines[1].starts_with("0:0,0.500000000,0.500000000,"));
    // FIFO cells are judged analytically: no verdict column.
    assert!(grid.cells.iter().all(|c| c.verdict.is_none()));
}

#[test]
fn sweep_rejects_mismatched_axes() {
    let template = fixtures::sweep_template();
    let spec = SweepSpec {
        axes: vec![vec![1.0]],
        methods: Method::ALL.to_vec(),
        budget: fixtures::platform(),
        options: fixtures::sweep_options(Policy::Fifo),
        horizon_mult: 100,
        seed: 0,
    };
    assert!(period_sweep(&template, &[1, 1], &spec).is_err());
}

#[test]
fn edf_sweep_cells_carry_simulation_verdicts() {
    let template = fixtures::sweep_template();
    let reference = reference_periods(&template, fixtures::platform()).unwrap();
    let spec = SweepSpec {
        axes: vec![vec![0.25], vec![0.25]],
        methods: vec![Method::Schedulability],
        budget: fixtures::platform(),
        options: fixtures::sweep_options(Policy::Edf),
        horizon_mult: 100,
        seed: 3,
    };
    let grid = period_sweep(&template, &reference, &spec).unwrap();
    let c = &grid.cells[0];
    assert!(c.feasible);
    assert_eq!(c.verdict, Some(srtaccel::sim::Verdict::Bounded));
}

#[test]
fn comparison_csv_rows_per_task_policy_seed() {
    let (ts, d) = fixtures::long_short();
    let cmp = compare_policies(
        &d,
        &ts,
        &[SimPolicy::FifoPipelined, SimPolicy::Edf { overhead: true }],
        100 * ts.max_period(),
        &[1, 2],
    )
    .unwrap();
    let mut out = Vec::new();
    cmp.write_csv(&mut out).unwrap();
    let lines = csv_lines(out);
    assert_eq!(
        lines[0],
        "task,policy,seed,jobs,max,mean,p99,lower_bound,preemptions,reliable"
    );
    assert_eq!(lines.len(), 1 + 2 * 2 * 2);
    assert_eq!(cmp.winner(1), Some(SimPolicy::Edf { overhead: true }));
    for r in &cmp.runs {
        for t in &r.tasks {
            assert!(t.jobs > 0 && t.p99 <= t.max && t.lower_bound <= t.max);
        }
    }
}

#[test]
fn beam_study_reports_oracle_when_affordable() {
    let ts = fixtures::golden_taskset();
    let widths = [Some(1), Some(4), None];
    let study = beam_quality_study(&ts, fixtures::platform(), &widths, 3, 4, Policy::Fifo, u64::MAX).unwrap();
    assert!(study.monotone());
    assert_eq!(study.matches_oracle(), Some(true));
    let mut out = Vec::new();
    study.write_csv(&mut out).unwrap();
    let lines = csv_lines(out);
    assert_eq!(lines.len(), 5);
    assert!(lines[3].starts_with("inf,"));
    assert!(lines[4].starts_with("brute_force,"));

    let capped = beam_quality_study(&ts, fixtures::platform(), &widths, 3, 4, Policy::Fifo, 10).unwrap();
    assert!(capped.brute_force.is_none());
    assert_eq!(capped.matches_oracle(), None);
}
