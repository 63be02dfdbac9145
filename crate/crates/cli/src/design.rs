//! Text form of a synthesized design, readable back by `simulate --design`.

use serde::{Deserialize, Serialize};
use srtaccel::model::{
    resource_cost, util_to_f64, AcceleratorConfig, DesignPoint, Mapping, Policy, ResourceVector, TaskSet,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceleratorDoc {
    /// PE array `(A, B, C)`.
    pub pe: [u64; 3],
    /// Tile `(X, Y, Z)`.
    pub tile: [u64; 3],
    pub allocation: ResourceVector,
    /// Informational; recomputed on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<ResourceVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utilization: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utilization_exact: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignDoc {
    pub policy: Policy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_util: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_util_exact: Option<String>,
    /// Row `i`, column `k`: number of consecutive layers of task `i` on
    /// accelerator `k`.
    pub mapping: Vec<Vec<usize>>,
    pub accelerators: Vec<AcceleratorDoc>,
}

impl DesignDoc {
    pub fn of(d: &DesignPoint) -> Self {
        let exact = |u: &srtaccel::model::Util| format!("{}/{}", u.numer(), u.denom());
        Self {
            policy: d.policy,
            max_util: Some(util_to_f64(&d.max_util())),
            max_util_exact: Some(exact(&d.max_util())),
            mapping: d.mapping.counts().to_vec(),
            accelerators: d
                .accs
                .iter()
                .zip(d.utils())
                .map(|(a, u)| AcceleratorDoc {
                    pe: a.pe(),
                    tile: a.tile(),
                    allocation: *a.allocated(),
                    cost: Some(resource_cost(a)),
                    utilization: Some(util_to_f64(u)),
                    utilization_exact: Some(exact(u)),
                })
                .collect(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("design is representable as TOML")
    }

    /// Rebuilds the design against `ts`; utilizations follow `ts`'s periods.
    pub fn to_design(&self, ts: &TaskSet, policy: Option<Policy>) -> Result<DesignPoint, String> {
        let accs = self
            .accelerators
            .iter()
            .enumerate()
            .map(|(k, a)| {
                AcceleratorConfig::new(a.pe, a.tile, a.allocation).map_err(|e| format!("accelerators[{k}]: {e}"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mapping = Mapping::from_counts(ts, self.mapping.clone()).map_err(|e| format!("mapping: {e}"))?;
        DesignPoint::new(accs, mapping, policy.unwrap_or(self.policy), ts).map_err(|e| format!("design: {e}"))
    }
}
