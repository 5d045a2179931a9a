//! Layer-to-chiplet mapping and inter-chiplet traffic.
//!
//! The baseline mapping walks chiplet instances in the topology's canonical
//! order and fills them greedily, layer after layer, so communicating layers
//! sit on neighbouring chiplets. A [`MappingPlan`] lets the optimizer rotate
//! the starting point and force selected layers onto a fresh chiplet.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, MemTech};
use crate::error::{DseError, Result};
use crate::topology::NoiGraph;
use crate::workload::{LayerRef, WorkloadSpec};

const CAPACITY_EPS_KB: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MappingFlags {
    #[serde(default)]
    pub forbid_reram_for_dynamic: bool,
    #[serde(default)]
    pub forbid_reram_entirely: bool,
}

/// Perturbations of the greedy fill explored by the inner search.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MappingPlan {
    /// Rotation of the instance order; the fill wraps around.
    pub start_offset: usize,
    /// Flat layer indices that must begin on an untouched chiplet.
    pub fresh_start: BTreeSet<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub node: usize,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Mapping {
    pub flags: MappingFlags,
    pub layer_refs: Vec<LayerRef>,
    pub layer_ids: Vec<String>,
    /// Indexed by flat layer position (DNN order, then layer order).
    pub assignments: Vec<Vec<Assignment>>,
}

impl Mapping {
    pub fn flat_index(&self, r: LayerRef) -> Option<usize> {
        self.layer_refs.iter().position(|x| *x == r)
    }

    /// Weight (KB) held by each graph node.
    pub fn node_loads_kb(&self, workload: &WorkloadSpec, n_nodes: usize) -> Vec<f64> {
        let mut load = vec![0.0; n_nodes];
        for (k, asg) in self.assignments.iter().enumerate() {
            let w = workload.layer(self.layer_refs[k]).weight_kb;
            for a in asg {
                load[a.node] += a.fraction * w;
            }
        }
        load
    }

    pub fn validate(
        &self,
        workload: &WorkloadSpec,
        graph: &NoiGraph,
        catalog: &Catalog,
    ) -> Result<()> {
        for (k, asg) in self.assignments.iter().enumerate() {
            let id = &self.layer_ids[k];
            if asg.is_empty() {
                return Err(DseError::validation(
                    "mapping",
                    format!("layer `{id}` is unmapped"),
                ));
            }
            let sum: f64 = asg.iter().map(|a| a.fraction).sum();
            if (sum - 1.0).abs() > 1e-9 || asg.iter().any(|a| a.fraction <= 0.0) {
                return Err(DseError::validation(
                    "mapping",
                    format!("fractions of layer `{id}` are not a partition"),
                ));
            }
            let layer = workload.layer(self.layer_refs[k]);
            for a in asg {
                let t = graph.nodes[a.node].chiplet.ok_or_else(|| {
                    DseError::validation("mapping", format!("layer `{id}` mapped to an empty site"))
                })?;
                if !eligible(catalog.get(t).mem_tech, layer.dynamic, self.flags) {
                    return Err(DseError::validation(
                        "mapping",
                        format!("layer `{id}` violates the memory policy"),
                    ));
                }
            }
        }
        for (node, load) in self
            .node_loads_kb(workload, graph.n_nodes())
            .into_iter()
            .enumerate()
        {
            if let Some(t) = graph.nodes[node].chiplet {
                if load > catalog.get(t).storage_kb * (1.0 + 1e-9) + CAPACITY_EPS_KB {
                    return Err(DseError::validation(
                        "mapping",
                        format!("node {node} holds {load:.3} KB over capacity"),
                    ));
                }
            } else if load > 0.0 {
                return Err(DseError::validation(
                    "mapping",
                    format!("empty site {node} holds weights"),
                ));
            }
        }
        Ok(())
    }
}

fn eligible(tech: MemTech, dynamic: bool, flags: MappingFlags) -> bool {
    match tech {
        MemTech::Sram => true,
        MemTech::Reram => {
            !(flags.forbid_reram_entirely || (dynamic && flags.forbid_reram_for_dynamic))
        }
    }
}

/// Occupied nodes in canonical order; each cell yields its surface chiplet,
/// then the embedded one beneath it.
pub fn instance_order(graph: &NoiGraph, cell_order: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    for &cell in cell_order {
        if graph.nodes[cell].chiplet.is_some() {
            out.push(cell);
        }
        if let Some(e) = graph.embedded_node_at(cell) {
            out.push(e);
        }
    }
    out
}

pub fn map_layers(
    workload: &WorkloadSpec,
    graph: &NoiGraph,
    catalog: &Catalog,
    flags: MappingFlags,
    plan: &MappingPlan,
) -> Result<Mapping> {
    let base = instance_order(graph, &graph.kind.canonical_order(graph.rows, graph.cols));
    let n = base.len();
    let order: Vec<usize> = if n == 0 {
        base
    } else {
        (0..n).map(|k| base[(k + plan.start_offset) % n]).collect()
    };
    let spec_of = |node: usize| catalog.get(graph.nodes[node].chiplet.expect("occupied node"));
    let mut capacity: Vec<f64> = order.iter().map(|&nd| spec_of(nd).storage_kb).collect();
    let mut cursor = 0usize;

    let mut layer_refs = Vec::new();
    let mut layer_ids = Vec::new();
    let mut assignments = Vec::new();
    for (flat, (r, layer)) in workload.layers().enumerate() {
        if plan.fresh_start.contains(&flat) {
            while cursor < n
                && capacity[cursor] < spec_of(order[cursor]).storage_kb - CAPACITY_EPS_KB
            {
                cursor += 1;
            }
        }
        let mut asg = Vec::new();
        let w = layer.weight_kb;
        let mut need = w;
        let mut k = cursor;
        loop {
            if k >= n {
                return Err(DseError::InsufficientStorage {
                    layer: layer.id.clone(),
                    needed_kb: need,
                });
            }
            let spec = spec_of(order[k]);
            if eligible(spec.mem_tech, layer.dynamic, flags) && capacity[k] > CAPACITY_EPS_KB {
                if w <= 0.0 {
                    asg.push(Assignment {
                        node: order[k],
                        fraction: 1.0,
                    });
                    break;
                }
                let take = capacity[k].min(need);
                capacity[k] -= take;
                need -= take;
                asg.push(Assignment {
                    node: order[k],
                    fraction: take / w,
                });
                if need <= CAPACITY_EPS_KB {
                    break;
                }
            }
            k += 1;
        }
        // Absorb rounding so fractions partition the layer exactly.
        let sum: f64 = asg.iter().map(|a| a.fraction).sum();
        if let Some(last) = asg.last_mut() {
            last.fraction += 1.0 - sum;
        }
        while cursor < n && capacity[cursor] <= CAPACITY_EPS_KB {
            cursor += 1;
        }
        layer_refs.push(r);
        layer_ids.push(layer.id.clone());
        assignments.push(asg);
    }
    Ok(Mapping {
        flags,
        layer_refs,
        layer_ids,
        assignments,
    })
}

/// Dense activation-bit matrix over graph nodes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrafficMatrix {
    pub n: usize,
    pub act_bits: Vec<f64>,
}

impl TrafficMatrix {
    pub fn zeros(n: usize) -> Self {
        TrafficMatrix {
            n,
            act_bits: vec![0.0; n * n],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.act_bits[i * self.n + j]
    }

    pub fn add(&mut self, i: usize, j: usize, bits: f64) {
        if i != j {
            self.act_bits[i * self.n + j] += bits;
        }
    }

    pub fn total_bits(&self) -> f64 {
        self.act_bits.iter().sum()
    }

    pub fn scaled(&self, k: f64) -> Self {
        TrafficMatrix {
            n: self.n,
            act_bits: self.act_bits.iter().map(|x| x * k).collect(),
        }
    }

    /// Non-zero ordered flows (src, dst, bits).
    pub fn flows(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.act_bits
            .iter()
            .enumerate()
            .filter(|(_, &f)| f != 0.0)
            .map(move |(k, &f)| (k / self.n, k % self.n, f))
    }
}

/// Activations of each layer edge spread over (source, destination) hosts
/// in proportion to both fractions; same-chiplet shares are dropped.
pub fn build_traffic(workload: &WorkloadSpec, mapping: &Mapping, n_nodes: usize) -> TrafficMatrix {
    let mut t = TrafficMatrix::zeros(n_nodes);
    let index_of = |r: LayerRef| mapping.flat_index(r).expect("mapping covers workload");
    for (src, dst) in workload.edges() {
        let bits = workload.layer(src).activations_out_bits;
        for a in &mapping.assignments[index_of(src)] {
            for b in &mapping.assignments[index_of(dst)] {
                t.add(a.node, b.node, bits * a.fraction * b.fraction);
            }
        }
    }
    t
}
