//! Scenario files: every input of one optimisation run.
//!
//! Relative paths inside a scenario resolve against the scenario file's
//! directory. Example:
//!
//! ```json
//! {
//!   "name": "tiny",
//!   "interposer": { "material": "glass", "area_mm2": 16.0 },
//!   "chiplet_types": ["Shared", "Adder"],
//!   "workloads": ["workloads/wl_synthetic_small.json"],
//!   "topology": "floret",
//!   "constraints": { "t_max_c": 75.0, "warpage_max_um": 150.0 },
//!   "optimizer": { "outer_budget": 6, "inner_budget": 200, "seed": 7 },
//!   "output_dir": "out"
//! }
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, InterposerSpec, Material};
use crate::design::{Constraints, EvalContext};
use crate::error::{DseError, Result};
use crate::mapper::MappingFlags;
use crate::optimizer::OuterConfig;
use crate::package::{CostParams, WarpageConfig};
use crate::perf::{LinkParams, RouterDelayMode};
use crate::thermal::ThermalConfig;
use crate::topology::{TopologyKind, TopologyParams};
use crate::workload::WorkloadSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterposerRef {
    pub material: Material,
    pub area_mm2: f64,
    #[serde(default)]
    pub thickness_um: Option<f64>,
    #[serde(default)]
    pub comm_freq_ghz: Option<f64>,
}

impl InterposerRef {
    pub fn resolve(&self) -> Result<InterposerSpec> {
        let mut ip = InterposerSpec::of_material(self.material, self.area_mm2);
        if let Some(t) = self.thickness_um {
            ip.thickness_um = t;
        }
        if let Some(f) = self.comm_freq_ghz {
            ip.comm_freq_ghz = f;
        }
        ip.validate()?;
        Ok(ip)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    #[serde(flatten)]
    pub search: OuterConfig,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub interposer: InterposerRef,
    /// Catalog file; the built-in table when absent.
    #[serde(default)]
    pub catalog: Option<PathBuf>,
    /// Restricts the catalog to these chiplet names, in this order.
    #[serde(default)]
    pub chiplet_types: Option<Vec<String>>,
    pub workloads: Vec<PathBuf>,
    pub topology: TopologyKind,
    #[serde(default)]
    pub topology_params: Option<TopologyParams>,
    #[serde(default)]
    pub grid: Option<[usize; 2]>,
    #[serde(default)]
    pub constraints: Constraints,
    /// Partial override of the link parameters derived from the interposer.
    #[serde(default)]
    pub link: Option<serde_json::Map<String, serde_json::Value>>,
    #[serde(default)]
    pub router_delay_mode: Option<RouterDelayMode>,
    #[serde(default)]
    pub thermal: Option<ThermalConfig>,
    #[serde(default)]
    pub warpage: Option<WarpageConfig>,
    #[serde(default)]
    pub cost: Option<CostParams>,
    #[serde(default)]
    pub mapping: MappingFlags,
    #[serde(default)]
    pub embed_capacity_fraction: Option<f64>,
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,

    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| DseError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut s: Scenario = serde_json::from_str(&text).map_err(|source| DseError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        s.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        s.validate()
            .map_err(|e| DseError::validation(path.display().to_string(), e.to_string()))?;
        Ok(s)
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.constraints;
        if !(c.t_max_c >= 0.0 && c.t_max_c.is_finite()) || !(c.warpage_max_um > 0.0) {
            return Err(DseError::validation(
                "constraints",
                "limits must be non-negative and finite",
            ));
        }
        if self.workloads.is_empty() {
            return Err(DseError::validation(
                "workloads",
                "at least one workload is required",
            ));
        }
        if let Some([r, c]) = self.grid {
            if r == 0 || c == 0 {
                return Err(DseError::validation("grid", "dimensions must be positive"));
            }
        }
        if self.optimizer.search.outer_budget == 0 || self.optimizer.search.inner_budget == 0 {
            return Err(DseError::validation(
                "optimizer",
                "budgets must be positive",
            ));
        }
        if let Some(f) = self.embed_capacity_fraction {
            if !(0.0..=1.0).contains(&f) {
                return Err(DseError::validation(
                    "embed_capacity_fraction",
                    "must lie in [0, 1]",
                ));
            }
        }
        Ok(())
    }

    pub fn catalog(&self) -> Result<Catalog> {
        let cat = match &self.catalog {
            Some(p) => Catalog::load(self.resolve_path(p))?,
            None => Catalog::builtin(),
        };
        match &self.chiplet_types {
            Some(names) => {
                let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                cat.subset(&refs)
            }
            None => Ok(cat),
        }
    }

    pub fn workload(&self) -> Result<WorkloadSpec> {
        let parts = self
            .workloads
            .iter()
            .map(|p| WorkloadSpec::load(self.resolve_path(p)))
            .collect::<Result<Vec<_>>>()?;
        if parts.len() == 1 {
            return Ok(parts.into_iter().next().unwrap());
        }
        WorkloadSpec::concat(&self.name, &parts)
    }

    pub fn context(&self) -> Result<EvalContext> {
        let ip = self.interposer.resolve()?;
        let mut ctx = EvalContext::new(self.catalog()?, ip, self.workload()?, self.topology);
        if let Some([r, c]) = self.grid {
            ctx.rows = r;
            ctx.cols = c;
        }
        if let Some(p) = self.topology_params {
            ctx.topology_params = p;
        }
        if let Some(over) = &self.link {
            ctx.link = merge_link(&ctx.link, over)?;
        }
        if let Some(m) = self.router_delay_mode {
            ctx.link.router_delay_mode = m;
        }
        if let Some(t) = self.thermal {
            ctx.thermal = t;
        }
        if let Some(w) = self.warpage {
            ctx.warpage = w;
        }
        ctx.warpage.limit_um = self.constraints.warpage_max_um;
        if let Some(c) = self.cost {
            ctx.cost = c;
        }
        if let Some(f) = self.embed_capacity_fraction {
            ctx.embed_capacity_fraction = f;
        }
        ctx.flags = self.mapping;
        ctx.constraints = self.constraints;
        Ok(ctx)
    }
}

fn merge_link(
    base: &LinkParams,
    over: &serde_json::Map<String, serde_json::Value>,
) -> Result<LinkParams> {
    let mut v = serde_json::to_value(base).map_err(|e| DseError::Internal(e.to_string()))?;
    let obj = v
        .as_object_mut()
        .expect("link params serialize to an object");
    for (k, val) in over {
        if !obj.contains_key(k) {
            return Err(DseError::validation("link", format!("unknown field `{k}`")));
        }
        obj.insert(k.clone(), val.clone());
    }
    let merged: LinkParams =
        serde_json::from_value(v).map_err(|e| DseError::validation("link", e.to_string()))?;
    merged.validate()?;
    Ok(merged)
}
