//! Schedulability-guided design space exploration.
//!
//! The search grows a pipeline one accelerator at a time. A partial design
//! owns the accelerators created so far; everything not yet assigned (the
//! remaining layers of every task and the remaining resources) is folded into
//! a synthetic `remain_acc` whose utilization scores the partial design. Each
//! expansion step carves a proportional resource slice and a per-task layer
//! prefix off the remainder, synthesizes a new accelerator for it, and keeps
//! the best `B` children by maximum utilization.
//!
//! [`brute_force_dse`] enumerates the same design space directly (complete
//! designs, no scoring, no pruning) and is the optimality oracle for the beam.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::ops::Range;
use std::sync::{Arc, Mutex};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::model::{
    layer_latency, resource_cost, tile_costs, unit_cost, AcceleratorConfig, Cycles, DesignPoint, LayerShape, Mapping,
    Policy, ResourceVector, TaskSet, Util,
};
use crate::schedulability::{segment_wcet_of_layers, utilization};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DseError {
    #[error("max_m must be at least 1")]
    ZeroMaxM,
    #[error("beam width must be at least 1")]
    ZeroBeamWidth,
    #[error("split granularity must be at least 2, got {0}")]
    GridTooSmall(u64),
    #[error("brute-force search exceeded its budget of {budget} design evaluations")]
    NodeBudgetExceeded { budget: u64 },
}

/// Layers of one task assigned to an accelerator, with the weight used to
/// turn its WCET into utilization.
#[derive(Debug, Clone, Copy)]
pub struct SegmentDemand<'a> {
    pub layers: &'a [LayerShape],
    pub period: Cycles,
}

/// Exact `sum_i e_i / p_i`, kept as an integer over a common denominator when
/// it fits in 128 bits.
#[derive(Debug, Clone, PartialEq, Eq)]
enum WeightedSum {
    Scaled(u128),
    Exact(BigRational),
}

struct Weights {
    common: Option<(u128, Vec<u128>)>,
    periods: Vec<Cycles>,
}

impl Weights {
    fn new(periods: Vec<Cycles>) -> Self {
        let common = periods
            .iter()
            .try_fold(1u128, |l, &p| {
                let g = l.gcd(&(p as u128));
                (l / g).checked_mul(p as u128)
            })
            .map(|l| {
                let w = periods.iter().map(|&p| l / p as u128).collect();
                (l, w)
            });
        Self { common, periods }
    }

    fn sum(&self, wcets: &[Cycles]) -> WeightedSum {
        if let Some((_, w)) = &self.common {
            let scaled = wcets
                .iter()
                .zip(w)
                .try_fold(0u128, |acc, (&e, &wi)| acc.checked_add((e as u128).checked_mul(wi)?));
            if let Some(s) = scaled {
                return WeightedSum::Scaled(s);
            }
        }
        WeightedSum::Exact(utilization(wcets.iter().copied().zip(self.periods.iter().copied())))
    }

    fn to_rational(&self, s: &WeightedSum) -> BigRational {
        match s {
            WeightedSum::Scaled(v) => {
                let (l, _) = self.common.as_ref().expect("scaled sums need a denominator");
                BigRational::new(BigInt::from(*v), BigInt::from(*l))
            }
            WeightedSum::Exact(r) => r.clone(),
        }
    }

    fn cmp(&self, a: &WeightedSum, b: &WeightedSum) -> Ordering {
        match (a, b) {
            (WeightedSum::Scaled(x), WeightedSum::Scaled(y)) => x.cmp(y),
            _ => self.to_rational(a).cmp(&self.to_rational(b)),
        }
    }
}

fn pow2_upto(limit: u64) -> impl Iterator<Item = u64> {
    std::iter::successors(Some(1u64), |&v| v.checked_mul(2)).take_while(move |&v| v <= limit)
}

/// Smallest `base * 2^t` that is at least `dim`.
fn tile_cap(base: u64, dim: u64) -> u64 {
    let mut t = base;
    while t < dim {
        t *= 2;
    }
    t
}

/// Searches `A, B, C` over powers of two and `X, Y, Z` over power-of-two
/// multiples of them, keeping configurations whose cost fits `budget`, and
/// returns the one with the smallest `sum_i e_i / p_i` over `segments`.
///
/// Tiles are capped at the first aligned size covering the largest layer
/// dimension; larger tiles only add cost. Ties go to the smaller resource
/// footprint, then to the lexicographically smaller `(A, B, C, X, Y, Z)`.
/// The returned configuration is allocated the whole `budget`. Returns `None`
/// only when nothing fits.
pub fn create_acc(
    segments: &[SegmentDemand<'_>],
    budget: &ResourceVector,
    policy: Policy,
) -> Option<AcceleratorConfig> {
    let segments: Vec<SegmentDemand<'_>> = segments.iter().copied().filter(|s| !s.layers.is_empty()).collect();
    let weights = Weights::new(segments.iter().map(|s| s.period).collect());
    let caps = dim_caps(segments.iter().flat_map(|s| s.layers.iter()));

    let mut best: Option<(WeightedSum, ResourceVector, [u64; 6])> = None;
    let mut wcets = vec![0; segments.len()];
    for_each_config(budget, caps, |acc| {
        for (w, s) in wcets.iter_mut().zip(&segments) {
            *w = segment_wcet_of_layers(s.layers, &acc, policy).total;
        }
        let score = weights.sum(&wcets);
        let cost = resource_cost(&acc);
        let params = acc.params();
        let better = match &best {
            None => true,
            Some((bs, bc, bp)) => {
                weights
                    .cmp(&score, bs)
                    .then_with(|| cost.cmp(bc))
                    .then_with(|| params.cmp(bp))
                    == Ordering::Less
            }
        };
        if better {
            best = Some((score, cost, params));
        }
    });
    best.map(|(_, _, p)| config_of(p, budget))
}

fn config_of(p: [u64; 6], budget: &ResourceVector) -> AcceleratorConfig {
    AcceleratorConfig::new([p[0], p[1], p[2]], [p[3], p[4], p[5]], *budget)
        .expect("enumerated configs are aligned and fit the budget")
}

/// Largest `(M, K, N)` over the layers, at least 1 each.
fn dim_caps<'a>(layers: impl Iterator<Item = &'a LayerShape>) -> [u64; 3] {
    layers.fold([1, 1, 1], |[m, k, n], l| [m.max(l.m()), k.max(l.k()), n.max(l.n())])
}

/// Calls `f` on every power-of-two configuration that fits `budget`, with
/// tiles no larger than needed to cover `caps`.
fn for_each_config(budget: &ResourceVector, caps: [u64; 3], mut f: impl FnMut(AcceleratorConfig)) {
    let ddr = budget.ddr_bw_words_per_cycle;
    if ddr == 0 || !unit_cost(ddr).fits_within(budget) {
        return;
    }
    let pe_budget = budget.pe_count;
    let bw_budget = budget.onchip_bw_words_per_cycle;
    let mem_budget = budget.onchip_mem_words;
    let mem = |x: u64, y: u64, z: u64| 2 * (x * y + y * z + x * z);
    for a in pow2_upto(pe_budget) {
        for b in pow2_upto(pe_budget / a) {
            for c in pow2_upto(pe_budget / (a * b)) {
                if a * b + b * c + a * c > bw_budget {
                    continue;
                }
                let (x_cap, y_cap, z_cap) = (tile_cap(a, caps[0]), tile_cap(b, caps[1]), tile_cap(c, caps[2]));
                let mut x = a;
                while x <= x_cap && mem(x, b, c) <= mem_budget {
                    let mut y = b;
                    while y <= y_cap && mem(x, y, c) <= mem_budget {
                        let mut z = c;
                        while z <= z_cap && mem(x, y, z) <= mem_budget {
                            f(config_of([a, b, c, x, y, z], budget));
                            z *= 2;
                        }
                        y *= 2;
                    }
                    x *= 2;
                }
            }
        }
    }
}

/// Every configuration that fits one budget, reduced to those that can still
/// be chosen by [`create_acc`] for some layer selection and weighting, with
/// per-task latency prefix sums for fast scoring.
///
/// A configuration is dropped when a cheaper one (in tie-break order) is no
/// slower on every layer and has no larger preemption overhead. Such a
/// configuration never wins, so the argmin equals [`create_acc`]'s.
#[derive(Debug, Clone)]
pub struct ConfigTable {
    configs: Vec<AcceleratorConfig>,
    /// `e_tile + e_store + e_load` per configuration.
    overhead: Vec<Cycles>,
    /// Row `c`: for each task, `L_i + 1` cumulative layer latencies.
    prefix: Vec<Cycles>,
    offsets: Vec<usize>,
    stride: usize,
    policy: Policy,
}

impl ConfigTable {
    pub fn build(tasks: &[&[LayerShape]], budget: &ResourceVector, policy: Policy) -> Self {
        let caps = dim_caps(tasks.iter().flat_map(|t| t.iter()));
        let mut offsets = Vec::with_capacity(tasks.len());
        let mut stride = 0;
        for t in tasks {
            offsets.push(stride);
            stride += t.len() + 1;
        }
        let edf = policy == Policy::Edf;

        let mut all: Vec<(ResourceVector, [u64; 6], AcceleratorConfig)> = Vec::new();
        for_each_config(budget, caps, |acc| all.push((resource_cost(&acc), acc.params(), acc)));
        all.sort_unstable_by_key(|a| (a.0, a.1));

        let mut table = Self {
            configs: Vec::new(),
            overhead: Vec::new(),
            prefix: Vec::new(),
            offsets,
            stride,
            policy,
        };
        let mut front: Vec<Vec<Cycles>> = Vec::new();
        for (_, _, acc) in all {
            let mut v: Vec<Cycles> = tasks
                .iter()
                .flat_map(|t| t.iter().map(|l| layer_latency(l, &acc)))
                .collect();
            let xi = tile_costs(&acc).preemption_overhead();
            if edf {
                v.push(xi);
            }
            if front.iter().any(|f| f.iter().zip(&v).all(|(a, b)| a <= b)) {
                continue;
            }
            for t in tasks {
                let mut sum = 0;
                table.prefix.push(0);
                for l in t.iter() {
                    sum += layer_latency(l, &acc);
                    table.prefix.push(sum);
                }
            }
            table.configs.push(acc);
            table.overhead.push(xi);
            front.push(v);
        }
        table
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    fn wcet(&self, c: usize, task: usize, r: &Range<usize>) -> Cycles {
        if r.is_empty() {
            return 0;
        }
        let row = &self.prefix[c * self.stride + self.offsets[task]..];
        let base = row[r.end] - row[r.start];
        if self.policy == Policy::Edf {
            base + self.overhead[c]
        } else {
            base
        }
    }

    /// Same choice as [`create_acc`] for layer ranges `ranges[i]` of task `i`
    /// weighted by `1 / periods[i]`.
    pub fn best(&self, ranges: &[Range<usize>], periods: &[Cycles]) -> Option<AcceleratorConfig> {
        let active: Vec<usize> = (0..ranges.len()).filter(|&i| !ranges[i].is_empty()).collect();
        let weights = Weights::new(active.iter().map(|&i| periods[i]).collect());
        let mut wcets = vec![0; active.len()];
        let mut best: Option<(usize, WeightedSum)> = None;
        for c in 0..self.configs.len() {
            for (w, &i) in wcets.iter_mut().zip(&active) {
                *w = self.wcet(c, i, &ranges[i]);
            }
            let score = weights.sum(&wcets);
            if best
                .as_ref()
                .is_none_or(|(_, b)| weights.cmp(&score, b) == Ordering::Less)
            {
                best = Some((c, score));
            }
        }
        best.map(|(c, _)| self.configs[c])
    }
}

/// What the search minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Objective {
    /// Maximum per-accelerator utilization, `max_k sum_i e_i^k / p_i`.
    Schedulability,
    /// Period-unaware bottleneck latency, `max_k sum_i e_i^k`.
    Throughput,
}

/// Score of a partial design. Unsynthesizable remainders score infinity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Score {
    Finite(Util),
    Infinite,
}

/// An accelerator fixed by the search and the number of layers of each task it hosts.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CreatedAcc {
    pub config: AcceleratorConfig,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialDesign {
    pub created: Vec<CreatedAcc>,
    pub created_utils: Vec<Util>,
    pub remaining_resources: ResourceVector,
    /// Per task, how many leading layers are already assigned.
    pub assigned: Vec<usize>,
    pub remain_acc: Option<AcceleratorConfig>,
    pub remain_util: Option<Util>,
    pub score: Score,
}

impl PartialDesign {
    fn rank_cmp(&self, other: &Self) -> Ordering {
        self.score
            .cmp(&other.score)
            .then_with(|| self.created.len().cmp(&other.created.len()))
            .then_with(|| cmp_accs(&self.created, &other.created))
            .then_with(|| {
                let key = |p: &Self| p.remain_acc.map(|a| (a.params(), *a.allocated()));
                key(self).cmp(&key(other))
            })
    }

    /// Created accelerators plus `remain_acc` turned into a real accelerator.
    pub fn completion(&self) -> Option<Vec<CreatedAcc>> {
        let remain = self.remain_acc?;
        let mut accs = self.created.clone();
        accs.push(CreatedAcc {
            config: remain,
            counts: Vec::new(),
        });
        Some(accs)
    }
}

fn cmp_accs(a: &[CreatedAcc], b: &[CreatedAcc]) -> Ordering {
    let key = |c: &CreatedAcc| (c.config.params(), *c.config.allocated());
    a.iter()
        .map(key)
        .cmp(b.iter().map(key))
        .then_with(|| a.iter().map(|c| &c.counts).cmp(b.iter().map(|c| &c.counts)))
}

/// Total order on finished designs: objective, then fewer accelerators, then
/// lexicographic accelerator parameters, then mapping.
fn design_cmp(a: &(Util, DesignPoint), b: &(Util, DesignPoint)) -> Ordering {
    a.0.cmp(&b.0)
        .then_with(|| a.1.num_accs().cmp(&b.1.num_accs()))
        .then_with(|| {
            let key = |d: &DesignPoint| -> Vec<([u64; 6], ResourceVector)> {
                d.accs.iter().map(|a| (a.params(), *a.allocated())).collect()
            };
            key(&a.1).cmp(&key(&b.1))
        })
        .then_with(|| a.1.mapping.cmp(&b.1.mapping))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DseStats {
    pub parents_expanded: u64,
    pub children_generated: u64,
    pub children_pruned: u64,
    /// Logical `create_acc` invocations, cache hits included.
    pub create_acc_calls: u64,
    pub kept_per_iteration: Vec<usize>,
    /// `create_acc_calls` at the moment the first feasible design appeared.
    pub evals_to_first_feasible: Option<u64>,
    /// Complete designs evaluated (brute force only).
    pub designs_evaluated: u64,
}

#[derive(Debug, Clone)]
pub struct DseResult {
    pub feasible: Vec<DesignPoint>,
    pub best: Option<DesignPoint>,
    pub stats: DseStats,
}

impl DseResult {
    pub fn best_max_util(&self) -> Option<Util> {
        self.best.as_ref().map(DesignPoint::max_util)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOptions {
    pub max_m: usize,
    /// `None` keeps every child (unbounded beam).
    pub beam_width: Option<usize>,
    pub grid: u64,
    pub policy: Policy,
}

impl SearchOptions {
    pub fn new(max_m: usize, beam_width: Option<usize>, grid: u64, policy: Policy) -> Self {
        Self {
            max_m,
            beam_width,
            grid,
            policy,
        }
    }

    fn validate(&self) -> Result<(), DseError> {
        if self.max_m == 0 {
            return Err(DseError::ZeroMaxM);
        }
        if self.beam_width == Some(0) {
            return Err(DseError::ZeroBeamWidth);
        }
        if self.grid < 2 {
            return Err(DseError::GridTooSmall(self.grid));
        }
        Ok(())
    }

    /// Closed-form cap on `create_acc` calls made by expansions:
    /// `((max_m - 2) * B + 1) * (G - 1) * prod_i (L_i + 1) * 2`.
    pub fn evaluation_bound(&self, ts: &TaskSet) -> Option<u128> {
        let b = self.beam_width? as u128;
        let parents = (self.max_m.saturating_sub(2) as u128) * b + 1;
        let product: u128 = ts.layer_counts().iter().map(|&l| l as u128 + 1).product();
        Some(parents * (self.grid as u128 - 1) * product * 2)
    }

    /// `(max_m - 2) * B + 1`.
    pub fn parent_bound(&self) -> Option<u128> {
        let b = self.beam_width? as u128;
        Some(self.max_m.saturating_sub(2) as u128 * b + 1)
    }
}

type AccKey = (Vec<(usize, usize, usize)>, ResourceVector);

/// Per-budget [`ConfigTable`]s for one set of task layer lists, shareable
/// across searches that differ only in periods.
#[derive(Debug)]
pub struct TableCache {
    layers: Vec<Vec<LayerShape>>,
    tables: Mutex<HashMap<(ResourceVector, Policy), Arc<ConfigTable>>>,
}

impl TableCache {
    pub fn new(ts: &TaskSet) -> Self {
        Self {
            layers: ts.tasks().iter().map(|t| t.layers.clone()).collect(),
            tables: Mutex::new(HashMap::new()),
        }
    }

    /// Whether `ts` has exactly the layers this cache was built for.
    pub fn serves(&self, ts: &TaskSet) -> bool {
        self.layers.len() == ts.len() && ts.tasks().iter().zip(&self.layers).all(|(t, l)| t.layers == *l)
    }

    pub fn table(&self, budget: &ResourceVector, policy: Policy) -> Arc<ConfigTable> {
        if let Some(t) = self
            .tables
            .lock()
            .expect("table cache poisoned")
            .get(&(*budget, policy))
        {
            return Arc::clone(t);
        }
        let refs: Vec<&[LayerShape]> = self.layers.iter().map(Vec::as_slice).collect();
        let built = Arc::new(ConfigTable::build(&refs, budget, policy));
        let mut tables = self.tables.lock().expect("table cache poisoned");
        Arc::clone(tables.entry((*budget, policy)).or_insert(built))
    }
}

enum Backend {
    Tables(Arc<TableCache>),
    /// Plain [`create_acc`] on every miss; used by the exhaustive oracle.
    Direct,
}

/// Memoized accelerator synthesis for one task set, policy and objective.
struct AccSynth<'a> {
    ts: &'a TaskSet,
    policy: Policy,
    backend: Backend,
    weights: Vec<Cycles>,
    cache: HashMap<AccKey, Option<AcceleratorConfig>>,
    calls: u64,
}

impl<'a> AccSynth<'a> {
    fn new(ts: &'a TaskSet, policy: Policy, objective: Objective, backend: Backend) -> Self {
        let weights = ts
            .tasks()
            .iter()
            .map(|t| match objective {
                Objective::Schedulability => t.period,
                Objective::Throughput => 1,
            })
            .collect();
        Self {
            ts,
            policy,
            backend,
            weights,
            cache: HashMap::new(),
            calls: 0,
        }
    }

    fn weight(&self, task: usize) -> Cycles {
        self.weights[task]
    }

    fn synth(&mut self, ranges: &[Range<usize>], budget: &ResourceVector) -> Option<AcceleratorConfig> {
        self.calls += 1;
        let key: AccKey = (
            ranges
                .iter()
                .enumerate()
                .filter(|(_, r)| !r.is_empty())
                .map(|(i, r)| (i, r.start, r.end))
                .collect(),
            *budget,
        );
        if let Some(hit) = self.cache.get(&key) {
            return *hit;
        }
        let acc = match &self.backend {
            Backend::Tables(cache) => cache.table(budget, self.policy).best(ranges, &self.weights),
            Backend::Direct => {
                let demands: Vec<SegmentDemand<'_>> = ranges
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| !r.is_empty())
                    .map(|(i, r)| SegmentDemand {
                        layers: &self.ts.task(i).layers[r.clone()],
                        period: self.weight(i),
                    })
                    .collect();
                create_acc(&demands, budget, self.policy)
            }
        };
        self.cache.insert(key, acc);
        acc
    }

    /// Objective-weighted utilization of `acc` hosting `ranges`.
    fn util(&self, acc: &AcceleratorConfig, ranges: &[Range<usize>]) -> Util {
        utilization(ranges.iter().enumerate().map(|(i, r)| {
            let e = segment_wcet_of_layers(&self.ts.task(i).layers[r.clone()], acc, self.policy).total;
            (e, self.weight(i))
        }))
    }
}

fn ranges_from(start: &[usize], counts: &[usize]) -> Vec<Range<usize>> {
    start.iter().zip(counts).map(|(&s, &c)| s..s + c).collect()
}

/// Children and finished designs produced by expanding one parent.
#[derive(Debug, Clone, Default)]
pub struct Expansion {
    pub children: Vec<PartialDesign>,
    pub completed: Vec<Vec<CreatedAcc>>,
}

/// Runs a guided search. Owns the synthesis cache and the counters.
pub struct Explorer<'a> {
    ts: &'a TaskSet,
    budget: ResourceVector,
    options: SearchOptions,
    objective: Objective,
    synth: AccSynth<'a>,
    stats: DseStats,
}

impl<'a> Explorer<'a> {
    pub fn new(
        ts: &'a TaskSet,
        budget: ResourceVector,
        options: SearchOptions,
        objective: Objective,
    ) -> Result<Self, DseError> {
        Self::with_tables(ts, budget, options, objective, Arc::new(TableCache::new(ts)))
    }

    /// Reuses configuration tables built by earlier searches over the same layers.
    pub fn with_tables(
        ts: &'a TaskSet,
        budget: ResourceVector,
        options: SearchOptions,
        objective: Objective,
        tables: Arc<TableCache>,
    ) -> Result<Self, DseError> {
        options.validate()?;
        let tables = if tables.serves(ts) {
            tables
        } else {
            Arc::new(TableCache::new(ts))
        };
        Ok(Self {
            ts,
            budget,
            options,
            objective,
            synth: AccSynth::new(ts, options.policy, objective, Backend::Tables(tables)),
            stats: DseStats::default(),
        })
    }

    fn prunes(&self, u: &Util) -> bool {
        self.objective == Objective::Schedulability && *u > Util::one()
    }

    /// Nothing assigned; `remain_acc` is the single-accelerator design.
    pub fn root(&mut self) -> PartialDesign {
        let n = self.ts.len();
        let zero = vec![0; n];
        let all = ranges_from(&zero, &self.ts.layer_counts());
        let remain_acc = self.synth.synth(&all, &self.budget);
        let remain_util = remain_acc.map(|a| self.synth.util(&a, &all));
        PartialDesign {
            created: Vec::new(),
            created_utils: Vec::new(),
            remaining_resources: self.budget,
            assigned: zero,
            remain_acc,
            score: remain_util.clone().map_or(Score::Infinite, Score::Finite),
            remain_util,
        }
    }

    fn remaining_counts(&self, p: &PartialDesign) -> Vec<usize> {
        self.ts
            .layer_counts()
            .iter()
            .zip(&p.assigned)
            .map(|(l, a)| l - a)
            .collect()
    }

    /// Whether the parent's `remain_acc` already closes a finished design.
    pub fn completes(&self, p: &PartialDesign) -> bool {
        match (&p.remain_util, self.objective) {
            (None, _) => false,
            (Some(_), Objective::Throughput) => true,
            (Some(u), Objective::Schedulability) => *u <= Util::one(),
        }
    }

    pub fn expand(&mut self, parent: &PartialDesign) -> Expansion {
        self.stats.parents_expanded += 1;
        let grid = self.options.grid;
        let remaining = self.remaining_counts(parent);
        let mut out = Expansion::default();

        for rho in 1..grid {
            let slice = parent.remaining_resources.scale_floor(rho, grid);
            let rest = parent
                .remaining_resources
                .checked_sub(&slice)
                .expect("floor slice never exceeds the remainder");
            for delta in prefix_choices(&remaining) {
                self.stats.children_generated += 1;
                let new_ranges = ranges_from(&parent.assigned, &delta);
                let Some(new_acc) = self.synth.synth(&new_ranges, &slice) else {
                    self.stats.children_pruned += 1;
                    continue;
                };
                let new_util = self.synth.util(&new_acc, &new_ranges);
                if self.prunes(&new_util) {
                    self.stats.children_pruned += 1;
                    continue;
                }

                let assigned: Vec<usize> = parent.assigned.iter().zip(&delta).map(|(a, d)| a + d).collect();
                let mut created = parent.created.clone();
                created.push(CreatedAcc {
                    config: new_acc,
                    counts: delta.clone(),
                });
                let mut created_utils = parent.created_utils.clone();
                created_utils.push(new_util);

                let left: Vec<usize> = remaining.iter().zip(&delta).map(|(r, d)| r - d).collect();
                if left.iter().all(|&l| l == 0) {
                    // Everything assigned: the new accelerator closes the pipeline.
                    out.completed.push(created);
                    continue;
                }

                let remain_ranges = ranges_from(&assigned, &left);
                let Some(remain_acc) = self.synth.synth(&remain_ranges, &rest) else {
                    self.stats.children_pruned += 1;
                    continue;
                };
                let remain_util = self.synth.util(&remain_acc, &remain_ranges);
                let score = created_utils
                    .iter()
                    .chain(std::iter::once(&remain_util))
                    .max()
                    .cloned()
                    .expect("at least one utilization");
                let child = PartialDesign {
                    created,
                    created_utils,
                    remaining_resources: rest,
                    assigned,
                    remain_acc: Some(remain_acc),
                    remain_util: Some(remain_util),
                    score: Score::Finite(score),
                };
                if self.completes(&child) {
                    out.completed.push(self.finish(&child));
                }
                out.children.push(child);
            }
        }
        out
    }

    /// Created accelerators plus the remainder accelerator with its layer counts.
    fn finish(&self, p: &PartialDesign) -> Vec<CreatedAcc> {
        let mut accs = p.created.clone();
        accs.push(CreatedAcc {
            config: p.remain_acc.expect("finished designs have a remainder accelerator"),
            counts: self.remaining_counts(p),
        });
        accs
    }

    fn to_design(&self, accs: &[CreatedAcc]) -> DesignPoint {
        let counts: Vec<Vec<usize>> = (0..self.ts.len())
            .map(|i| accs.iter().map(|a| a.counts[i]).collect())
            .collect();
        let mapping = Mapping::from_counts(self.ts, counts).expect("search only emits complete mappings");
        DesignPoint::new(
            accs.iter().map(|a| a.config).collect(),
            mapping,
            self.options.policy,
            self.ts,
        )
        .expect("dimensions match by construction")
    }

    /// Objective value of a finished design (period-free for throughput).
    fn objective_value(&self, accs: &[CreatedAcc]) -> Util {
        let zero = vec![0; self.ts.len()];
        let mut start = zero;
        let mut worst = Util::zero();
        for a in accs {
            let ranges = ranges_from(&start, &a.counts);
            let u = self.synth.util(&a.config, &ranges);
            if u > worst {
                worst = u;
            }
            start = start.iter().zip(&a.counts).map(|(s, c)| s + c).collect();
        }
        worst
    }

    fn record_completed(&mut self, found: &mut Vec<(Util, DesignPoint)>, accs: Vec<Vec<CreatedAcc>>) {
        for a in accs {
            if self.stats.evals_to_first_feasible.is_none() && self.objective == Objective::Schedulability {
                self.stats.evals_to_first_feasible = Some(self.synth.calls);
            }
            let value = self.objective_value(&a);
            found.push((value, self.to_design(&a)));
        }
    }

    pub fn run(mut self) -> DseResult {
        let mut found: Vec<(Util, DesignPoint)> = Vec::new();
        let root = self.root();
        if self.completes(&root) {
            let done = self.finish(&root);
            self.record_completed(&mut found, vec![done]);
        }
        let mut beam = if root.remain_acc.is_some() {
            vec![root]
        } else {
            Vec::new()
        };

        while let Some(first) = beam.first() {
            // Children of a parent with c created accelerators close designs of c + 2.
            if first.created.len() + 2 > self.options.max_m {
                break;
            }
            let mut children = Vec::new();
            for parent in &beam {
                let exp = self.expand(parent);
                self.record_completed(&mut found, exp.completed);
                children.extend(exp.children);
            }
            children.sort_by(PartialDesign::rank_cmp);
            if let Some(b) = self.options.beam_width {
                children.truncate(b);
            }
            self.stats.kept_per_iteration.push(children.len());
            beam = children;
        }
        self.stats.create_acc_calls = self.synth.calls;

        found.sort_by(design_cmp);
        match self.objective {
            Objective::Schedulability => {
                let best = found.first().map(|(_, d)| d.clone());
                DseResult {
                    feasible: found.into_iter().map(|(_, d)| d).collect(),
                    best,
                    stats: self.stats,
                }
            }
            Objective::Throughput => {
                // The period-unaware pick stands or falls on its true utilization.
                let best = found.into_iter().next().map(|(_, d)| d);
                let feasible = best.iter().filter(|d| d.max_util() <= Util::one()).cloned().collect();
                DseResult {
                    feasible,
                    best,
                    stats: self.stats,
                }
            }
        }
    }
}

/// Every per-task prefix extension `delta` with `0 <= delta_i <= remaining_i`,
/// excluding all-zero, in lexicographic order.
fn prefix_choices(remaining: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0; remaining.len()];
    loop {
        if cur.iter().any(|&d| d > 0) {
            out.push(cur.clone());
        }
        let mut i = remaining.len();
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < remaining[i] {
                cur[i] += 1;
                break;
            }
            cur[i] = 0;
        }
    }
}

pub fn beam_search(ts: &TaskSet, budget: ResourceVector, options: SearchOptions) -> Result<DseResult, DseError> {
    Ok(Explorer::new(ts, budget, options, Objective::Schedulability)?.run())
}

/// Same search skeleton with periods replaced by 1 and no utilization pruning.
/// The chosen design is the lowest bottleneck latency; `feasible` holds it
/// only if its true utilizations pass the test.
pub fn throughput_guided_dse(
    ts: &TaskSet,
    budget: ResourceVector,
    options: SearchOptions,
) -> Result<DseResult, DseError> {
    Ok(Explorer::new(ts, budget, options, Objective::Throughput)?.run())
}

/// One accelerator sized for bottleneck latency over the whole budget,
/// independent of the periods.
pub fn single_accelerator_design(ts: &TaskSet, budget: ResourceVector, policy: Policy) -> Option<DesignPoint> {
    let options = SearchOptions::new(1, Some(1), 2, policy);
    throughput_guided_dse(ts, budget, options).ok()?.best
}

/// Enumerates every complete design reachable by the proportional split
/// scheme: `M` accelerators, resource fractions `rho_1..rho_{M-1}` of what is
/// left (the last accelerator takes the remainder), and every contiguous
/// mapping in which each accelerator hosts at least one layer. Designs whose
/// last accelerator only takes a slice `rho_M` are enumerated too for
/// `M < max_m`, matching what expansion can produce.
pub fn brute_force_dse(
    ts: &TaskSet,
    budget: ResourceVector,
    max_m: usize,
    grid: u64,
    policy: Policy,
    node_budget: u64,
) -> Result<DseResult, DseError> {
    SearchOptions::new(max_m, None, grid, policy).validate()?;
    let mut synth = AccSynth::new(ts, policy, Objective::Schedulability, Backend::Direct);
    let mut stats = DseStats::default();
    let mut found: Vec<(Util, DesignPoint)> = Vec::new();
    let lens = ts.layer_counts();

    for m in 1..=max_m {
        let mappings = column_mappings(&lens, m);
        let tail_options: &[bool] = if m < max_m { &[false, true] } else { &[false] };
        for &slice_last in tail_options {
            let n_fracs = if slice_last { m } else { m - 1 };
            for fracs in fraction_sequences(grid, n_fracs) {
                let allocs = split_allocations(&budget, &fracs, grid, m);
                for counts in &mappings {
                    stats.designs_evaluated += 1;
                    if stats.designs_evaluated > node_budget {
                        return Err(DseError::NodeBudgetExceeded { budget: node_budget });
                    }
                    if let Some(d) = evaluate_full(ts, &mut synth, &allocs, counts, policy) {
                        if stats.evals_to_first_feasible.is_none() {
                            stats.evals_to_first_feasible = Some(synth.calls);
                        }
                        found.push(d);
                    }
                }
            }
        }
    }
    stats.create_acc_calls = synth.calls;
    found.sort_by(design_cmp);
    let best = found.first().map(|(_, d)| d.clone());
    Ok(DseResult {
        feasible: found.into_iter().map(|(_, d)| d).collect(),
        best,
        stats,
    })
}

fn split_allocations(budget: &ResourceVector, fracs: &[u64], grid: u64, m: usize) -> Vec<ResourceVector> {
    let mut left = *budget;
    let mut out = Vec::with_capacity(m);
    for &f in fracs {
        let s = left.scale_floor(f, grid);
        left = left.checked_sub(&s).expect("floor slice fits");
        out.push(s);
    }
    if out.len() < m {
        out.push(left);
    }
    out
}

fn fraction_sequences(grid: u64, len: usize) -> Vec<Vec<u64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|s| {
                (1..grid).map(move |f| {
                    let mut v = s.clone();
                    v.push(f);
                    v
                })
            })
            .collect();
    }
    out
}

/// All `n x m` count matrices with row sums `lens` and no all-zero column.
fn column_mappings(lens: &[usize], m: usize) -> Vec<Vec<Vec<usize>>> {
    let per_task: Vec<Vec<Vec<usize>>> = lens.iter().map(|&l| compositions(l, m)).collect();
    let mut out: Vec<Vec<Vec<usize>>> = vec![Vec::new()];
    for rows in &per_task {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                rows.iter().map(move |r| {
                    let mut p = prefix.clone();
                    p.push(r.clone());
                    p
                })
            })
            .collect();
    }
    out.retain(|mat| (0..m).all(|k| mat.iter().any(|row| row[k] > 0)));
    out
}

/// Ordered ways to write `total` as `parts` non-negative integers.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    (0..=total)
        .flat_map(|first| {
            compositions(total - first, parts - 1).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

fn evaluate_full(
    ts: &TaskSet,
    synth: &mut AccSynth<'_>,
    allocs: &[ResourceVector],
    counts: &[Vec<usize>],
    policy: Policy,
) -> Option<(Util, DesignPoint)> {
    let mut accs = Vec::with_capacity(allocs.len());
    let mut start = vec![0usize; ts.len()];
    for (k, alloc) in allocs.iter().enumerate() {
        let ranges: Vec<Range<usize>> = counts.iter().zip(&start).map(|(row, &s)| s..s + row[k]).collect();
        let acc = synth.synth(&ranges, alloc)?;
        accs.push(acc);
        for (s, row) in start.iter_mut().zip(counts) {
            *s += row[k];
        }
    }
    let mapping = Mapping::from_counts(ts, counts.to_vec()).ok()?;
    let design = DesignPoint::new(accs, mapping, policy, ts).ok()?;
    let max = design.max_util();
    (max <= Util::one()).then_some((max, design))
}

/// Uncontended latency of every layer of a task on an accelerator.
pub fn layer_latencies(layers: &[LayerShape], acc: &AcceleratorConfig) -> Vec<Cycles> {
    layers.iter().map(|l| layer_latency(l, acc)).collect()
}

/// `e_tile + e_store + e_load` of a design's accelerators.
pub fn preemption_overheads(design: &DesignPoint) -> Vec<Cycles> {
    design
        .accs
        .iter()
        .map(|a| tile_costs(a).preemption_overhead())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ratio, TaskSpec};

    fn layer(m: u64, k: u64, n: u64) -> LayerShape {
        LayerShape::new(m, k, n).unwrap()
    }

    #[test]
    fn prefix_choices_skip_all_zero() {
        let c = prefix_choices(&[1, 2]);
        assert_eq!(c.len(), 2 * 3 - 1);
        assert!(c.iter().all(|d| d.iter().any(|&x| x > 0)));
        assert_eq!(c[0], vec![0, 1]);
    }

    #[test]
    fn compositions_count() {
        // C(n + m - 1, m - 1)
        assert_eq!(compositions(3, 3).len(), 10);
        assert_eq!(compositions(0, 2), vec![vec![0, 0]]);
    }

    #[test]
    fn create_acc_tiny_budget_is_absent() {
        let l = [layer(8, 8, 8)];
        let seg = [SegmentDemand {
            layers: &l,
            period: 100,
        }];
        assert!(create_acc(&seg, &ResourceVector::new(0, 100, 100, 4), Policy::Fifo).is_none());
        assert!(create_acc(&seg, &ResourceVector::new(4, 5, 100, 4), Policy::Fifo).is_none());
        assert!(create_acc(&seg, &ResourceVector::new(4, 100, 100, 0), Policy::Fifo).is_none());
    }

    #[test]
    fn create_acc_empty_segments_gives_unit_config() {
        let acc = create_acc(&[], &ResourceVector::new(16, 1000, 100, 4), Policy::Edf).unwrap();
        assert_eq!(acc.params(), [1, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn create_acc_matches_exhaustive_enumeration() {
        let l = [layer(32, 16, 48), layer(8, 64, 8)];
        let seg = [SegmentDemand {
            layers: &l,
            period: 5000,
        }];
        let budget = ResourceVector::new(16, 4096, 64, 8);
        for policy in [Policy::Fifo, Policy::Edf] {
            let best = create_acc(&seg, &budget, policy).unwrap();
            let best_e = segment_wcet_of_layers(&l, &best, policy).total;
            // Independent enumeration over a wider grid (all divisors, no caps).
            for a in 1..=16u64 {
                for b in 1..=16u64 {
                    for c in 1..=16u64 {
                        if !(a.is_power_of_two() && b.is_power_of_two() && c.is_power_of_two()) {
                            continue;
                        }
                        for xs in 0..8 {
                            for ys in 0..8 {
                                for zs in 0..8 {
                                    let tile = [a << xs, b << ys, c << zs];
                                    let Ok(acc) = AcceleratorConfig::new([a, b, c], tile, budget) else {
                                        continue;
                                    };
                                    let e = segment_wcet_of_layers(&l, &acc, policy).total;
                                    assert!(best_e <= e, "{:?} beats {:?}", acc.params(), best.params());
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    fn two_by_two() -> TaskSet {
        let l = layer(32, 32, 32);
        TaskSet::new(vec![
            TaskSpec::new(0, vec![l, l], 20_000),
            TaskSpec::new(1, vec![l, l], 30_000),
        ])
        .unwrap()
    }

    #[test]
    fn all_remaining_layers_on_tight_slice_is_pruned() {
        let ts = two_by_two();
        let budget = ResourceVector::new(8, 2048, 32, 4);
        let options = SearchOptions::new(3, None, 4, Policy::Fifo);
        let mut ex = Explorer::new(&ts, budget, options, Objective::Schedulability).unwrap();
        let root = ex.root();
        let exp = ex.expand(&root);
        // Children never host all layers on the smallest slice when that overloads it.
        let slice = budget.scale_floor(1, 4);
        let all = [0..2, 0..2];
        if let Some(acc) = ex.synth.synth(&all, &slice) {
            assert!(ex.synth.util(&acc, &all) > Util::one());
        }
        assert!(exp
            .children
            .iter()
            .all(|c| !(c.assigned == vec![2, 2] && *c.created[0].config.allocated() == slice)));
        assert!(exp
            .completed
            .iter()
            .all(|accs| !(accs.len() == 1 && *accs[0].config.allocated() == slice)));
    }

    #[test]
    fn child_set_matches_direct_enumeration() {
        let ts = two_by_two();
        let budget = ResourceVector::new(16, 4096, 64, 8);
        let options = SearchOptions::new(3, None, 3, Policy::Fifo);
        let mut ex = Explorer::new(&ts, budget, options, Objective::Schedulability).unwrap();
        let root = ex.root();
        let exp = ex.expand(&root);

        // Direct enumeration of (rho, delta), applying the pruning rules by hand.
        let mut expected = Vec::new();
        for rho in 1..3u64 {
            let slice = budget.scale_floor(rho, 3);
            let rest = budget.checked_sub(&slice).unwrap();
            for d0 in 0..=2usize {
                for d1 in 0..=2usize {
                    if d0 + d1 == 0 || (d0 == 2 && d1 == 2) {
                        continue;
                    }
                    let l0 = &ts.task(0).layers;
                    let l1 = &ts.task(1).layers;
                    let new = create_acc(
                        &[
                            SegmentDemand {
                                layers: &l0[..d0],
                                period: 20_000,
                            },
                            SegmentDemand {
                                layers: &l1[..d1],
                                period: 30_000,
                            },
                        ],
                        &slice,
                        Policy::Fifo,
                    );
                    let Some(new) = new else { continue };
                    let u = utilization([
                        (segment_wcet_of_layers(&l0[..d0], &new, Policy::Fifo).total, 20_000),
                        (segment_wcet_of_layers(&l1[..d1], &new, Policy::Fifo).total, 30_000),
                    ]);
                    if u > Util::one() {
                        continue;
                    }
                    let rem = create_acc(
                        &[
                            SegmentDemand {
                                layers: &l0[d0..],
                                period: 20_000,
                            },
                            SegmentDemand {
                                layers: &l1[d1..],
                                period: 30_000,
                            },
                        ],
                        &rest,
                        Policy::Fifo,
                    );
                    if rem.is_some() {
                        expected.push((rho, vec![d0, d1]));
                    }
                }
            }
        }
        let got: Vec<(u64, Vec<usize>)> = exp
            .children
            .iter()
            .map(|c| {
                let rho = (1..3u64)
                    .find(|&r| budget.scale_floor(r, 3) == *c.created[0].config.allocated())
                    .unwrap();
                (rho, c.created[0].counts.clone())
            })
            .collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn feasible_remainder_closes_parent() {
        let ts = two_by_two();
        let budget = ResourceVector::new(64, 1 << 16, 256, 32);
        let options = SearchOptions::new(3, Some(8), 4, Policy::Fifo);
        let mut ex = Explorer::new(&ts, budget, options, Objective::Schedulability).unwrap();
        let root = ex.root();
        assert!(ex.completes(&root));
        let done = ex.finish(&root);
        assert_eq!(done.len(), 1);
        assert_eq!(done[0].config, root.remain_acc.unwrap());
        assert_eq!(done[0].counts, vec![2, 2]);
        let exp = ex.expand(&root);
        assert!(!exp.completed.is_empty());
    }

    #[test]
    fn single_task_under_full_budget_is_found_at_root() {
        let ts = TaskSet::new(vec![TaskSpec::new(0, vec![layer(32, 32, 32)], 1_000_000)]).unwrap();
        let budget = ResourceVector::new(16, 4096, 64, 8);
        let res = beam_search(&ts, budget, SearchOptions::new(3, Some(4), 4, Policy::Fifo)).unwrap();
        let best = res.best.unwrap();
        let single = create_acc(
            &[SegmentDemand {
                layers: &ts.task(0).layers,
                period: 1_000_000,
            }],
            &budget,
            Policy::Fifo,
        )
        .unwrap();
        let e = segment_wcet_of_layers(&ts.task(0).layers, &single, Policy::Fifo).total;
        assert_eq!(best.max_util(), ratio(e, 1_000_000));
    }

    #[test]
    fn infeasible_taskset_has_empty_result() {
        let l = layer(16, 16, 16);
        let ts = TaskSet::new(vec![TaskSpec::new(0, vec![l, l], 1), TaskSpec::new(1, vec![l], 1)]).unwrap();
        let budget = ResourceVector::new(16, 4096, 64, 8);
        let bf = brute_force_dse(&ts, budget, 3, 3, Policy::Fifo, 1_000_000).unwrap();
        assert!(bf.feasible.is_empty() && bf.best.is_none());
        let bs = beam_search(&ts, budget, SearchOptions::new(3, Some(8), 3, Policy::Fifo)).unwrap();
        assert!(bs.feasible.is_empty() && bs.best.is_none());
    }

    #[test]
    fn brute_force_budget_is_explicit() {
        let ts = two_by_two();
        let budget = ResourceVector::new(16, 4096, 64, 8);
        let err = brute_force_dse(&ts, budget, 3, 4, Policy::Fifo, 10).unwrap_err();
        assert_eq!(err, DseError::NodeBudgetExceeded { budget: 10 });
    }

    #[test]
    fn options_are_validated() {
        let ts = two_by_two();
        let budget = ResourceVector::new(16, 4096, 64, 8);
        assert_eq!(
            beam_search(&ts, budget, SearchOptions::new(3, Some(0), 4, Policy::Fifo)).unwrap_err(),
            DseError::ZeroBeamWidth
        );
        assert_eq!(
            beam_search(&ts, budget, SearchOptions::new(3, Some(2), 1, Policy::Fifo)).unwrap_err(),
            DseError::GridTooSmall(1)
        );
    }
}
