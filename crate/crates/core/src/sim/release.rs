use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{Cycles, ReleaseModel, TaskSet};

/// Release instants per task, each list strictly increasing and below the horizon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReleaseSchedule {
    pub per_task: Vec<Vec<Cycles>>,
}

impl ReleaseSchedule {
    pub fn new(per_task: Vec<Vec<Cycles>>) -> Self {
        Self { per_task }
    }
}

/// `0, p, 2p, ...` strictly below `horizon`.
pub fn periodic_release_sequence(period: Cycles, horizon: Cycles) -> Vec<Cycles> {
    (0..)
        .map_while(|k: u64| k.checked_mul(period))
        .take_while(|&t| t < horizon)
        .collect()
}

/// Inter-arrival times uniform in `[p, p + p/2]`, first release at 0. Each
/// task draws from its own stream so adding a task leaves the others intact.
pub fn sporadic_release_sequence(period: Cycles, horizon: Cycles, seed: u64, stream: u64) -> Vec<Cycles> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut out = Vec::new();
    let mut t: Cycles = 0;
    while t < horizon {
        out.push(t);
        let gap = rng.random_range(period..=period + period / 2);
        match t.checked_add(gap) {
            Some(next) => t = next,
            None => break,
        }
    }
    out
}

/// Releases for every task according to its own release model.
pub fn release_schedule(ts: &TaskSet, horizon: Cycles, seed: u64) -> ReleaseSchedule {
    ReleaseSchedule::new(
        ts.tasks()
            .iter()
            .map(|t| match t.release {
                ReleaseModel::Periodic => periodic_release_sequence(t.period, horizon),
                ReleaseModel::Sporadic => sporadic_release_sequence(t.period, horizon, seed, t.id as u64),
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn periodic_stops_before_horizon() {
        assert_eq!(periodic_release_sequence(100, 350), vec![0, 100, 200, 300]);
        assert_eq!(periodic_release_sequence(100, 300), vec![0, 100, 200]);
    }

    #[test]
    fn sporadic_is_seeded() {
        let a = sporadic_release_sequence(1000, 100_000, 7, 0);
        assert_eq!(a, sporadic_release_sequence(1000, 100_000, 7, 0));
        assert_ne!(a, sporadic_release_sequence(1000, 100_000, 8, 0));
        assert_ne!(a, sporadic_release_sequence(1000, 100_000, 7, 1));
    }

    proptest! {
        #[test]
        fn sporadic_gaps_stay_in_band(p in 1u64..10_000, seed: u64) {
            let r = sporadic_release_sequence(p, 60 * p, seed, 3);
            prop_assert_eq!(r[0], 0);
            for w in r.windows(2) {
                let gap = w[1] - w[0];
                prop_assert!(gap >= p && gap <= p + p / 2);
            }
            prop_assert!(*r.last().unwrap() < 60 * p);
        }
    }
}
