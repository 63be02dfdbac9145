//! Domain types and the analytic accelerator cost model.
//!
//! Every latency in the crate is an integer number of accelerator clock
//! cycles. The cost model is an output-stationary, double-buffered tiling
//! surrogate: a layer is split into `ceil(M/X) * ceil(K/Y) * ceil(N/Z)` tiles,
//! each tile costs `max(e_tile, e_load)` in steady state, and the pipeline
//! pays one extra load to fill and one extra store to drain.

use std::fmt;
use std::ops::Range;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Time in accelerator clock cycles.
pub type Cycles = u64;

/// Exact utilization value.
pub type Util = BigRational;

/// Builds the exact ratio `num / den`.
pub fn ratio(num: u64, den: u64) -> Util {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Lossy conversion for reporting.
pub fn util_to_f64(u: &Util) -> f64 {
    u.to_f64().unwrap_or(f64::INFINITY)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("layer dimension {dim} must be at least 1")]
    ZeroDimension { dim: &'static str },
    #[error("task {task}: period must be positive")]
    ZeroPeriod { task: usize },
    #[error("task {task} has no layers")]
    EmptyTask { task: usize },
    #[error("task set must contain at least one task")]
    EmptyTaskSet,
    #[error("task ids must be dense: position {position} holds id {id}")]
    NonDenseIds { position: usize, id: usize },
    #[error("PE array dimension {axis} must be positive")]
    ZeroPeDimension { axis: char },
    #[error("tile {axis}={tile} is not a positive multiple of PE dimension {pe}")]
    MisalignedTile { axis: char, tile: u64, pe: u64 },
    #[error("accelerator needs {cost} but is allocated {allocated}")]
    OverAllocated {
        cost: ResourceVector,
        allocated: ResourceVector,
    },
    #[error("accelerator has zero DDR bandwidth allocation")]
    ZeroDdrBandwidth,
}

/// One matrix-multiplication workload `(M x K) * (K x N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[u64; 3]", into = "[u64; 3]")]
pub struct LayerShape {
    m_dim: u64,
    k_dim: u64,
    n_dim: u64,
}

impl LayerShape {
    pub fn new(m_dim: u64, k_dim: u64, n_dim: u64) -> Result<Self, ModelError> {
        for (dim, v) in [("M", m_dim), ("K", k_dim), ("N", n_dim)] {
            if v == 0 {
                return Err(ModelError::ZeroDimension { dim });
            }
        }
        Ok(Self { m_dim, k_dim, n_dim })
    }

    pub fn m(&self) -> u64 {
        self.m_dim
    }

    pub fn k(&self) -> u64 {
        self.k_dim
    }

    pub fn n(&self) -> u64 {
        self.n_dim
    }
}

impl TryFrom<[u64; 3]> for LayerShape {
    type Error = ModelError;

    fn try_from([m, k, n]: [u64; 3]) -> Result<Self, Self::Error> {
        LayerShape::new(m, k, n)
    }
}

impl From<LayerShape> for [u64; 3] {
    fn from(l: LayerShape) -> Self {
        [l.m_dim, l.k_dim, l.n_dim]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReleaseModel {
    #[default]
    Periodic,
    Sporadic,
}

/// A periodic or sporadic task with implicit deadline equal to its period.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: usize,
    pub layers: Vec<LayerShape>,
    pub period: Cycles,
    #[serde(default)]
    pub release: ReleaseModel,
}

impl TaskSpec {
    pub fn new(id: usize, layers: Vec<LayerShape>, period: Cycles) -> Self {
        Self {
            id,
            layers,
            period,
            release: ReleaseModel::Periodic,
        }
    }

    pub fn with_release(mut self, release: ReleaseModel) -> Self {
        self.release = release;
        self
    }

    /// Relative deadline; always the period.
    pub fn deadline(&self) -> Cycles {
        self.period
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<TaskSpec>", into = "Vec<TaskSpec>")]
pub struct TaskSet {
    tasks: Vec<TaskSpec>,
}

impl TaskSet {
    pub fn new(tasks: Vec<TaskSpec>) -> Result<Self, ModelError> {
        if tasks.is_empty() {
            return Err(ModelError::EmptyTaskSet);
        }
        for (position, t) in tasks.iter().enumerate() {
            if t.id != position {
                return Err(ModelError::NonDenseIds { position, id: t.id });
            }
            if t.period == 0 {
                return Err(ModelError::ZeroPeriod { task: t.id });
            }
            if t.layers.is_empty() {
                return Err(ModelError::EmptyTask { task: t.id });
            }
        }
        Ok(Self { tasks })
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn task(&self, id: usize) -> &TaskSpec {
        &self.tasks[id]
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn max_period(&self) -> Cycles {
        self.tasks.iter().map(|t| t.period).max().unwrap_or(0)
    }

    pub fn layer_counts(&self) -> Vec<usize> {
        self.tasks.iter().map(|t| t.layers.len()).collect()
    }

    /// Same layers, new periods (one per task).
    pub fn with_periods(&self, periods: &[Cycles]) -> Result<Self, ModelError> {
        assert_eq!(periods.len(), self.tasks.len(), "one period per task");
        let tasks = self
            .tasks
            .iter()
            .zip(periods)
            .map(|(t, &p)| TaskSpec { period: p, ..t.clone() })
            .collect();
        TaskSet::new(tasks)
    }
}

impl TryFrom<Vec<TaskSpec>> for TaskSet {
    type Error = ModelError;

    fn try_from(tasks: Vec<TaskSpec>) -> Result<Self, Self::Error> {
        TaskSet::new(tasks)
    }
}

impl From<TaskSet> for Vec<TaskSpec> {
    fn from(ts: TaskSet) -> Self {
        ts.tasks
    }
}

/// Platform budget or per-accelerator allocation of the four critical resources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct ResourceVector {
    pub pe_count: u64,
    pub onchip_mem_words: u64,
    pub onchip_bw_words_per_cycle: u64,
    pub ddr_bw_words_per_cycle: u64,
}

impl ResourceVector {
    pub const fn new(pe: u64, mem: u64, onchip_bw: u64, ddr_bw: u64) -> Self {
        Self {
            pe_count: pe,
            onchip_mem_words: mem,
            onchip_bw_words_per_cycle: onchip_bw,
            ddr_bw_words_per_cycle: ddr_bw,
        }
    }

    pub fn components(&self) -> [u64; 4] {
        [
            self.pe_count,
            self.onchip_mem_words,
            self.onchip_bw_words_per_cycle,
            self.ddr_bw_words_per_cycle,
        ]
    }

    fn from_components(c: [u64; 4]) -> Self {
        Self::new(c[0], c[1], c[2], c[3])
    }

    /// Component-wise `self <= other`.
    pub fn fits_within(&self, other: &ResourceVector) -> bool {
        self.components().iter().zip(other.components()).all(|(a, b)| *a <= b)
    }

    /// A usable platform budget has every component at least 1.
    pub fn is_budget(&self) -> bool {
        self.components().iter().all(|&c| c >= 1)
    }

    pub fn checked_sub(&self, other: &ResourceVector) -> Option<ResourceVector> {
        let a = self.components();
        let b = other.components();
        let mut out = [0; 4];
        for i in 0..4 {
            out[i] = a[i].checked_sub(b[i])?;
        }
        Some(Self::from_components(out))
    }

    pub fn saturating_add(&self, other: &ResourceVector) -> ResourceVector {
        let a = self.components();
        let b = other.components();
        Self::from_components([
            a[0].saturating_add(b[0]),
            a[1].saturating_add(b[1]),
            a[2].saturating_add(b[2]),
            a[3].saturating_add(b[3]),
        ])
    }

    /// `floor(self * num / den)` on every component; the remainder is left out.
    pub fn scale_floor(&self, num: u64, den: u64) -> ResourceVector {
        let s = |c: u64| ((c as u128 * num as u128) / den as u128) as u64;
        let c = self.components();
        Self::from_components([s(c[0]), s(c[1]), s(c[2]), s(c[3])])
    }
}

impl fmt::Display for ResourceVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(pe={}, mem={}, bw={}, ddr={})",
            self.pe_count, self.onchip_mem_words, self.onchip_bw_words_per_cycle, self.ddr_bw_words_per_cycle
        )
    }
}

/// PE-array and tile parameters of one accelerator, plus its resource share.
///
/// Tiles are aligned to the PE array (`X` a multiple of `A`, and so on) so a
/// tile never needs padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawAcceleratorConfig", into = "RawAcceleratorConfig")]
pub struct AcceleratorConfig {
    pe: [u64; 3],
    tile: [u64; 3],
    allocated: ResourceVector,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAcceleratorConfig {
    pe: [u64; 3],
    tile: [u64; 3],
    allocated: ResourceVector,
}

impl AcceleratorConfig {
    pub fn new(pe: [u64; 3], tile: [u64; 3], allocated: ResourceVector) -> Result<Self, ModelError> {
        const AXES: [char; 3] = ['A', 'B', 'C'];
        const TILE_AXES: [char; 3] = ['X', 'Y', 'Z'];
        for i in 0..3 {
            if pe[i] == 0 {
                return Err(ModelError::ZeroPeDimension { axis: AXES[i] });
            }
            if tile[i] == 0 || !tile[i].is_multiple_of(pe[i]) {
                return Err(ModelError::MisalignedTile {
                    axis: TILE_AXES[i],
                    tile: tile[i],
                    pe: pe[i],
                });
            }
        }
        if allocated.ddr_bw_words_per_cycle == 0 {
            return Err(ModelError::ZeroDdrBandwidth);
        }
        let acc = Self { pe, tile, allocated };
        let cost = resource_cost(&acc);
        if !cost.fits_within(&allocated) {
            return Err(ModelError::OverAllocated { cost, allocated });
        }
        Ok(acc)
    }

    /// PE array dimensions `(A, B, C)` along `(M, K, N)`.
    pub fn pe(&self) -> [u64; 3] {
        self.pe
    }

    /// On-chip tile `(X, Y, Z)`.
    pub fn tile(&self) -> [u64; 3] {
        self.tile
    }

    pub fn allocated(&self) -> &ResourceVector {
        &self.allocated
    }

    /// `(A, B, C, X, Y, Z)`, the order used for deterministic tie-breaks.
    pub fn params(&self) -> [u64; 6] {
        [
            self.pe[0],
            self.pe[1],
            self.pe[2],
            self.tile[0],
            self.tile[1],
            self.tile[2],
        ]
    }
}

impl TryFrom<RawAcceleratorConfig> for AcceleratorConfig {
    type Error = ModelError;

    fn try_from(raw: RawAcceleratorConfig) -> Result<Self, Self::Error> {
        AcceleratorConfig::new(raw.pe, raw.tile, raw.allocated)
    }
}

impl From<AcceleratorConfig> for RawAcceleratorConfig {
    fn from(acc: AcceleratorConfig) -> Self {
        Self {
            pe: acc.pe,
            tile: acc.tile,
            allocated: acc.allocated,
        }
    }
}

/// Per-tile timing of an accelerator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TileCosts {
    /// Cycles to compute one tile on the PE array.
    pub e_tile: Cycles,
    /// Cycles to fill the input and weight buffers for one tile.
    pub e_load: Cycles,
    /// Cycles to drain one output tile.
    pub e_store: Cycles,
}

impl TileCosts {
    /// Steady-state cost of one double-buffered tile.
    pub fn steady_tile(&self) -> Cycles {
        self.e_tile.max(self.e_load)
    }

    /// Worst-case cost of one preemption: finish a tile, save, reload.
    pub fn preemption_overhead(&self) -> Cycles {
        self.e_tile + self.e_store + self.e_load
    }
}

pub fn tile_costs(acc: &AcceleratorConfig) -> TileCosts {
    let [a, b, c] = acc.pe;
    let [x, y, z] = acc.tile;
    let ddr = acc.allocated.ddr_bw_words_per_cycle;
    TileCosts {
        e_tile: (x / a) * (y / b) * (z / c),
        e_load: (x * y + y * z).div_ceil(ddr),
        e_store: (x * z).div_ceil(ddr),
    }
}

/// Tile counts `(ceil(M/X), ceil(K/Y), ceil(N/Z))` of a layer on an accelerator.
pub fn tile_grid(layer: &LayerShape, acc: &AcceleratorConfig) -> [u64; 3] {
    let [x, y, z] = acc.tile;
    [
        layer.m_dim.div_ceil(x),
        layer.k_dim.div_ceil(y),
        layer.n_dim.div_ceil(z),
    ]
}

pub fn layer_latency(layer: &LayerShape, acc: &AcceleratorConfig) -> Cycles {
    let costs = tile_costs(acc);
    let [tm, tk, tn] = tile_grid(layer, acc);
    tm * tn * tk * costs.steady_tile() + costs.e_load + costs.e_store
}

pub fn resource_cost(acc: &AcceleratorConfig) -> ResourceVector {
    let [a, b, c] = acc.pe;
    let [x, y, z] = acc.tile;
    ResourceVector {
        pe_count: a * b * c,
        onchip_mem_words: 2 * (x * y + y * z + x * z),
        onchip_bw_words_per_cycle: a * b + b * c + a * c,
        ddr_bw_words_per_cycle: acc.allocated.ddr_bw_words_per_cycle,
    }
}

/// Smallest resource footprint any accelerator can have.
pub fn unit_cost(ddr_bw: u64) -> ResourceVector {
    ResourceVector::new(1, 6, 3, ddr_bw.max(1))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MappingViolation {
    #[error("mapping has {found} rows but the task set has {expected} tasks")]
    TaskCount { expected: usize, found: usize },
    #[error("task {task}: mapping row has {found} entries, expected {expected} accelerators")]
    AccCount { task: usize, expected: usize, found: usize },
    #[error("task {task}: negative layer count {value} on accelerator {acc}")]
    Negative { task: usize, acc: usize, value: i64 },
    #[error("task {task}: layer counts sum to {found}, expected {expected}")]
    RowSum { task: usize, expected: usize, found: i64 },
}

/// Every violation found while checking a candidate mapping.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid mapping: {}", .violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct MappingReport {
    pub violations: Vec<MappingViolation>,
}

/// Contiguous layer-to-accelerator assignment: `counts[i][k]` consecutive
/// layers of task `i` run on accelerator `k`. Accelerator `k` hosts layers
/// `sum(counts[i][..k]) .. sum(counts[i][..=k])`; a zero entry is a bypass.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Mapping {
    counts: Vec<Vec<usize>>,
}

impl Mapping {
    pub fn from_counts(ts: &TaskSet, counts: Vec<Vec<usize>>) -> Result<Self, MappingReport> {
        let m_accs = counts.first().map(Vec::len).unwrap_or(0);
        let signed: Vec<Vec<i64>> = counts
            .iter()
            .map(|row| row.iter().map(|&c| c as i64).collect())
            .collect();
        validate_mapping(ts, &signed, m_accs)
    }

    pub fn counts(&self) -> &[Vec<usize>] {
        &self.counts
    }

    pub fn num_accs(&self) -> usize {
        self.counts.first().map(Vec::len).unwrap_or(0)
    }

    pub fn num_tasks(&self) -> usize {
        self.counts.len()
    }

    /// Layer index range of `task` hosted on accelerator `acc`.
    pub fn segment(&self, task: usize, acc: usize) -> Range<usize> {
        let row = &self.counts[task];
        let start: usize = row[..acc].iter().sum();
        start..start + row[acc]
    }
}

pub fn validate_mapping(ts: &TaskSet, counts: &[Vec<i64>], m_accs: usize) -> Result<Mapping, MappingReport> {
    let mut violations = Vec::new();
    if counts.len() != ts.len() {
        violations.push(MappingViolation::TaskCount {
            expected: ts.len(),
            found: counts.len(),
        });
        return Err(MappingReport { violations });
    }
    for (task, row) in counts.iter().enumerate() {
        if row.len() != m_accs || m_accs == 0 {
            violations.push(MappingViolation::AccCount {
                task,
                expected: m_accs,
                found: row.len(),
            });
            continue;
        }
        for (acc, &value) in row.iter().enumerate() {
            if value < 0 {
                violations.push(MappingViolation::Negative { task, acc, value });
            }
        }
        let found: i64 = row.iter().sum();
        let expected = ts.task(task).num_layers();
        if found != expected as i64 {
            violations.push(MappingViolation::RowSum { task, expected, found });
        }
    }
    if !violations.is_empty() {
        return Err(MappingReport { violations });
    }
    Ok(Mapping {
        counts: counts
            .iter()
            .map(|row| row.iter().map(|&c| c as usize).collect())
            .collect(),
    })
}

/// Scheduling policy used on every accelerator of a design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// Non-preemptive, arrival order, pipelined forwarding.
    #[default]
    Fifo,
    /// Preemptive earliest-deadline-first with tile-granular preemption.
    Edf,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Fifo => f.write_str("fifo"),
            Policy::Edf => f.write_str("edf"),
        }
    }
}

/// A complete system: accelerators, layer mapping, policy and the
/// per-accelerator utilizations derived from them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignPoint {
    pub accs: Vec<AcceleratorConfig>,
    pub mapping: Mapping,
    pub policy: Policy,
    utils: Vec<Util>,
}

impl DesignPoint {
    pub fn new(
        accs: Vec<AcceleratorConfig>,
        mapping: Mapping,
        policy: Policy,
        ts: &TaskSet,
    ) -> Result<Self, MappingReport> {
        if mapping.num_tasks() != ts.len() || mapping.num_accs() != accs.len() {
            return Err(MappingReport {
                violations: vec![MappingViolation::AccCount {
                    task: 0,
                    expected: accs.len(),
                    found: mapping.num_accs(),
                }],
            });
        }
        let utils = crate::schedulability::utilization_profile_of(&accs, &mapping, policy, ts);
        Ok(Self {
            accs,
            mapping,
            policy,
            utils,
        })
    }

    /// Cached per-accelerator utilizations `u^1..u^M`.
    pub fn utils(&self) -> &[Util] {
        &self.utils
    }

    pub fn max_util(&self) -> Util {
        self.utils.iter().max().cloned().unwrap_or_default()
    }

    pub fn num_accs(&self) -> usize {
        self.accs.len()
    }

    pub fn total_allocated(&self) -> ResourceVector {
        self.accs
            .iter()
            .fold(ResourceVector::default(), |acc, a| acc.saturating_add(a.allocated()))
    }

    /// True when the cached utilizations match a from-scratch recomputation.
    pub fn is_coherent(&self, ts: &TaskSet) -> bool {
        crate::schedulability::utilization_profile_of(&self.accs, &self.mapping, self.policy, ts) == self.utils
    }

    /// Same hardware and mapping under another policy.
    pub fn with_policy(&self, policy: Policy, ts: &TaskSet) -> DesignPoint {
        DesignPoint::new(self.accs.clone(), self.mapping.clone(), policy, ts).expect("mapping already validated")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acc(pe: [u64; 3], tile: [u64; 3], ddr: u64) -> AcceleratorConfig {
        AcceleratorConfig::new(pe, tile, ResourceVector::new(1 << 20, 1 << 30, 1 << 20, ddr)).unwrap()
    }

    #[test]
    fn tile_costs_examples() {
        let c = tile_costs(&acc([2, 2, 2], [16, 16, 16], 8));
        assert_eq!((c.e_tile, c.e_load, c.e_store), (512, 64, 32));
        let c = tile_costs(&acc([1, 1, 1], [1, 1, 1], 1));
        assert_eq!((c.e_tile, c.e_load, c.e_store), (1, 2, 1));
        let c = tile_costs(&acc([4, 4, 4], [4, 4, 4], 16));
        assert_eq!((c.e_tile, c.e_load, c.e_store), (1, 2, 1));
    }

    #[test]
    fn zero_ddr_is_rejected() {
        let err = AcceleratorConfig::new([1, 1, 1], [1, 1, 1], ResourceVector::new(1, 6, 3, 0));
        assert_eq!(err, Err(ModelError::ZeroDdrBandwidth));
    }

    #[test]
    fn misaligned_tile_is_rejected() {
        let err = AcceleratorConfig::new([2, 1, 1], [3, 1, 1], ResourceVector::new(8, 100, 100, 1));
        assert!(matches!(err, Err(ModelError::MisalignedTile { axis: 'X', .. })));
    }

    #[test]
    fn over_allocation_is_rejected() {
        let err = AcceleratorConfig::new([2, 2, 2], [2, 2, 2], ResourceVector::new(4, 100, 100, 1));
        assert!(matches!(err, Err(ModelError::OverAllocated { .. })));
    }

    #[test]
    fn layer_latency_examples() {
        let a = acc([2, 2, 2], [16, 16, 16], 8);
        assert_eq!(layer_latency(&LayerShape::new(64, 64, 64).unwrap(), &a), 32864);
        assert_eq!(layer_latency(&LayerShape::new(16, 16, 16).unwrap(), &a), 608);
        let u = acc([1, 1, 1], [1, 1, 1], 1);
        assert_eq!(layer_latency(&LayerShape::new(1, 1, 1).unwrap(), &u), 5);
    }

    #[test]
    fn resource_cost_examples() {
        let c = resource_cost(&acc([2, 2, 2], [16, 16, 16], 8));
        assert_eq!(
            (c.pe_count, c.onchip_mem_words, c.onchip_bw_words_per_cycle),
            (8, 1536, 12)
        );
        let c = resource_cost(&acc([1, 1, 1], [1, 1, 1], 3));
        assert_eq!((c.pe_count, c.onchip_mem_words, c.onchip_bw_words_per_cycle), (1, 6, 3));
        assert_eq!(c.ddr_bw_words_per_cycle, 3);
        let c = resource_cost(&acc([4, 2, 1], [8, 4, 2], 8));
        assert_eq!(
            (c.pe_count, c.onchip_mem_words, c.onchip_bw_words_per_cycle),
            (8, 112, 14)
        );
    }

    #[test]
    fn zero_dimension_layer_is_rejected() {
        assert_eq!(LayerShape::new(4, 0, 4), Err(ModelError::ZeroDimension { dim: "K" }));
    }

    fn three_layer_task() -> TaskSet {
        let l = LayerShape::new(8, 8, 8).unwrap();
        TaskSet::new(vec![TaskSpec::new(0, vec![l; 3], 1000)]).unwrap()
    }

    #[test]
    fn mapping_with_bypass_is_valid() {
        let ts = three_layer_task();
        let m = validate_mapping(&ts, &[vec![2, 0, 1]], 3).unwrap();
        assert_eq!(m.segment(0, 0), 0..2);
        assert_eq!(m.segment(0, 1), 2..2);
        assert_eq!(m.segment(0, 2), 2..3);
    }

    #[test]
    fn mapping_row_sum_mismatch_is_reported() {
        let ts = three_layer_task();
        let err = validate_mapping(&ts, &[vec![2, 2, 0]], 3).unwrap_err();
        assert_eq!(
            err.violations,
            vec![MappingViolation::RowSum {
                task: 0,
                expected: 3,
                found: 4
            }]
        );
    }

    #[test]
    fn mapping_negative_entry_is_reported() {
        let ts = three_layer_task();
        let err = validate_mapping(&ts, &[vec![-1, 4, 0]], 3).unwrap_err();
        assert_eq!(
            err.violations,
            vec![MappingViolation::Negative {
                task: 0,
                acc: 0,
                value: -1
            }]
        );
    }

    #[test]
    fn task_ids_must_be_dense() {
        let l = LayerShape::new(1, 1, 1).unwrap();
        let err = TaskSet::new(vec![TaskSpec::new(1, vec![l], 10)]).unwrap_err();
        assert_eq!(err, ModelError::NonDenseIds { position: 0, id: 1 });
    }

    #[test]
    fn scale_floor_never_over_allocates() {
        let r = ResourceVector::new(7, 10, 5, 3);
        let s = r.scale_floor(1, 3);
        assert_eq!(s, ResourceVector::new(2, 3, 1, 1));
        assert!(s.saturating_add(&r.checked_sub(&s).unwrap()) == r);
    }
}
