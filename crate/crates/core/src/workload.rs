//! DNN workloads as ordered layer graphs.
//!
//! File schema (JSON):
//!
//! ```json
//! {
//!   "name": "WL1",
//!   "total_params_m": 177.0,
//!   "dnns": [
//!     { "name": "resnet18",
//!       "layers": [
//!         { "id": "r18.conv1", "weight_kb": 9.4, "macs": 1.18e8,
//!           "activations_out_bits": 6422528, "sparsity": 1.0,
//!           "successors": ["r18.l1"], "dynamic": false }
//!       ] }
//!   ]
//! }
//! ```
//!
//! `successors` may be omitted, in which case the layer feeds the next layer
//! of its DNN (the last layer feeds nothing). `sparsity` defaults to 1 and
//! `dynamic` to false. Successor ids must resolve within the workload and the
//! resulting graph must be acyclic.

use std::collections::{HashMap, VecDeque};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DseError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub id: String,
    #[serde(skip)]
    pub dnn_id: String,
    pub weight_kb: f64,
    pub macs: f64,
    pub activations_out_bits: f64,
    #[serde(default = "one")]
    pub sparsity: f64,
    #[serde(default)]
    pub successors: Option<Vec<String>>,
    #[serde(default)]
    pub dynamic: bool,
}

fn one() -> f64 {
    1.0
}

impl LayerSpec {
    pub fn new(id: &str, weight_kb: f64, macs: f64, activations_out_bits: f64) -> Self {
        LayerSpec {
            id: id.to_string(),
            dnn_id: String::new(),
            weight_kb,
            macs,
            activations_out_bits,
            sparsity: 1.0,
            successors: None,
            dynamic: false,
        }
    }

    pub fn successor_ids(&self) -> &[String] {
        self.successors.as_deref().unwrap_or(&[])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DnnSpec {
    pub name: String,
    pub layers: Vec<LayerSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_params_m: Option<f64>,
    pub dnns: Vec<DnnSpec>,
}

/// Stable handle for a layer: (dnn index, layer index within the DNN).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LayerRef {
    pub dnn: usize,
    pub layer: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Requirements {
    pub total_weight_kb: f64,
    pub total_macs: f64,
}

impl WorkloadSpec {
    pub fn empty(name: &str) -> Self {
        WorkloadSpec {
            name: name.to_string(),
            total_params_m: None,
            dnns: Vec::new(),
        }
    }

    /// Single-DNN workload with an implicit chain.
    pub fn chain(name: &str, layers: Vec<LayerSpec>) -> Result<Self> {
        let mut w = WorkloadSpec {
            name: name.to_string(),
            total_params_m: None,
            dnns: vec![DnnSpec {
                name: name.to_string(),
                layers,
            }],
        };
        w.normalize()?;
        Ok(w)
    }

    pub fn from_json_str(text: &str, origin: &str) -> Result<Self> {
        let mut w: WorkloadSpec = serde_json::from_str(text).map_err(|source| DseError::Parse {
            path: origin.into(),
            source,
        })?;
        w.normalize()
            .map_err(|e| DseError::validation(format!("workload {origin}"), e.to_string()))?;
        Ok(w)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| DseError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut w: WorkloadSpec =
            serde_json::from_str(&text).map_err(|source| DseError::Parse {
                path: path.to_path_buf(),
                source,
            })?;
        w.normalize().map_err(|e| {
            DseError::validation(format!("workload {}", path.display()), e.to_string())
        })?;
        Ok(w)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("workload serializes")
    }

    /// Fills implicit successors and DNN ids, then validates.
    fn normalize(&mut self) -> Result<()> {
        for dnn in &mut self.dnns {
            let n = dnn.layers.len();
            let next_ids: Vec<Option<String>> = (0..n)
                .map(|i| dnn.layers.get(i + 1).map(|l| l.id.clone()))
                .collect();
            for (layer, next) in dnn.layers.iter_mut().zip(next_ids) {
                layer.dnn_id = dnn.name.clone();
                if layer.successors.is_none() {
                    layer.successors = Some(next.into_iter().collect());
                }
            }
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let index = self.id_index()?;
        for (r, layer) in self.layers() {
            let ctx = || format!("layer `{}`", layer.id);
            if !(layer.macs.is_finite() && layer.macs >= 1.0) {
                return Err(DseError::validation(
                    ctx(),
                    format!("macs must be >= 1, got {}", layer.macs),
                ));
            }
            if !(layer.weight_kb.is_finite() && layer.weight_kb > 0.0) {
                return Err(DseError::validation(
                    ctx(),
                    format!("weight_kb must be > 0, got {}", layer.weight_kb),
                ));
            }
            if !(layer.activations_out_bits.is_finite() && layer.activations_out_bits >= 0.0) {
                return Err(DseError::validation(
                    ctx(),
                    "activations_out_bits must be >= 0",
                ));
            }
            if !(layer.sparsity > 0.0 && layer.sparsity <= 1.0) {
                return Err(DseError::validation(
                    ctx(),
                    format!("sparsity must be in (0, 1], got {}", layer.sparsity),
                ));
            }
            for s in layer.successor_ids() {
                match index.get(s.as_str()) {
                    None => {
                        return Err(DseError::validation(
                            ctx(),
                            format!("unknown successor `{s}`"),
                        ))
                    }
                    Some(&t) if t == r => {
                        return Err(DseError::validation(
                            ctx(),
                            "layer lists itself as successor",
                        ))
                    }
                    _ => {}
                }
            }
        }
        self.check_acyclic(&index)
    }

    fn id_index(&self) -> Result<HashMap<&str, LayerRef>> {
        let mut index = HashMap::new();
        for (r, layer) in self.layers() {
            if index.insert(layer.id.as_str(), r).is_some() {
                return Err(DseError::validation(
                    format!("layer `{}`", layer.id),
                    "duplicate layer id",
                ));
            }
        }
        Ok(index)
    }

    fn check_acyclic(&self, index: &HashMap<&str, LayerRef>) -> Result<()> {
        let flat: Vec<LayerRef> = self.layers().map(|(r, _)| r).collect();
        let pos: HashMap<LayerRef, usize> = flat.iter().enumerate().map(|(i, r)| (*r, i)).collect();
        let mut indeg = vec![0usize; flat.len()];
        let mut adj = vec![Vec::new(); flat.len()];
        for (r, layer) in self.layers() {
            for s in layer.successor_ids() {
                let t = pos[&index[s.as_str()]];
                adj[pos[&r]].push(t);
                indeg[t] += 1;
            }
        }
        let mut queue: VecDeque<usize> = (0..flat.len()).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(u) = queue.pop_front() {
            seen += 1;
            for &v in &adj[u] {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    queue.push_back(v);
                }
            }
        }
        if seen != flat.len() {
            let culprit = (0..flat.len()).find(|&i| indeg[i] > 0).unwrap();
            return Err(DseError::validation(
                format!("layer `{}`", self.layer(flat[culprit]).id),
                "successor graph contains a cycle",
            ));
        }
        Ok(())
    }

    /// All layers in DNN order, then execution order.
    pub fn layers(&self) -> impl Iterator<Item = (LayerRef, &LayerSpec)> {
        self.dnns.iter().enumerate().flat_map(|(d, dnn)| {
            dnn.layers
                .iter()
                .enumerate()
                .map(move |(l, layer)| (LayerRef { dnn: d, layer: l }, layer))
        })
    }

    pub fn layer(&self, r: LayerRef) -> &LayerSpec {
        &self.dnns[r.dnn].layers[r.layer]
    }

    pub fn n_layers(&self) -> usize {
        self.dnns.iter().map(|d| d.layers.len()).sum()
    }

    /// Resolved (layer → successor) edges.
    pub fn edges(&self) -> Vec<(LayerRef, LayerRef)> {
        let index = self.id_index().expect("validated workload");
        let mut out = Vec::new();
        for (r, layer) in self.layers() {
            for s in layer.successor_ids() {
                out.push((r, index[s.as_str()]));
            }
        }
        out
    }

    pub fn total_requirements(&self) -> Requirements {
        self.layers()
            .fold(Requirements::default(), |acc, (_, l)| Requirements {
                total_weight_kb: acc.total_weight_kb + l.weight_kb,
                total_macs: acc.total_macs + l.macs,
            })
    }

    /// Runs the DNNs of several workloads side by side.
    pub fn concat(name: &str, parts: &[WorkloadSpec]) -> Result<Self> {
        let mut w = WorkloadSpec::empty(name);
        let mut params = Some(0.0);
        for p in parts {
            w.dnns.extend(p.dnns.iter().cloned());
            params = match (params, p.total_params_m) {
                (Some(a), Some(b)) => Some(a + b),
                _ => None,
            };
        }
        w.total_params_m = params.filter(|_| !parts.is_empty());
        w.validate()?;
        Ok(w)
    }
}
