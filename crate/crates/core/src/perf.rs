//! Latency, energy and energy-delay product.

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, InterposerSpec, Material};
use crate::error::{DseError, Result};
use crate::mapper::{Mapping, TrafficMatrix};
use crate::topology::NoiGraph;
use crate::workload::WorkloadSpec;

/// How the router delay enters the communication latency.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouterDelayMode {
    /// One router delay per flow: units × (h + δ).
    #[default]
    PerFlow,
    /// One router delay per hop: units × h × (1 + δ).
    PerHop,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub cycle_time_s: f64,
    pub router_delay_cycles: f64,
    pub transfer_unit_bits: f64,
    pub e_link_lateral_j_per_bit: f64,
    pub e_link_vertical_j_per_bit: f64,
    pub e_router_j_per_bit: f64,
    #[serde(default)]
    pub router_delay_mode: RouterDelayMode,
}

impl LinkParams {
    pub fn for_interposer(ip: &InterposerSpec) -> Self {
        let e_lat = match ip.material {
            Material::Silicon => 0.5e-12,
            Material::Glass => 0.35e-12,
        };
        LinkParams {
            cycle_time_s: 1.0 / (ip.comm_freq_ghz * 1e9),
            router_delay_cycles: 1.0,
            transfer_unit_bits: 32.0,
            e_link_lateral_j_per_bit: e_lat,
            e_link_vertical_j_per_bit: 0.1e-12,
            e_router_j_per_bit: 0.25e-12,
            router_delay_mode: RouterDelayMode::PerFlow,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.cycle_time_s,
            self.router_delay_cycles,
            self.transfer_unit_bits,
            self.e_link_lateral_j_per_bit,
            self.e_link_vertical_j_per_bit,
            self.e_router_j_per_bit,
        ];
        if vals.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(DseError::validation(
                "link parameters",
                "all values must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PerfResult {
    pub compute_latency_s: f64,
    pub comm_latency_s: f64,
    pub latency_s: f64,
    pub compute_energy_j: f64,
    pub comm_energy_j: f64,
    pub energy_j: f64,
    pub edp_js: f64,
}

impl PerfResult {
    pub fn combine(
        compute_latency_s: f64,
        comm_latency_s: f64,
        compute_energy_j: f64,
        comm_energy_j: f64,
    ) -> Self {
        let latency_s = compute_latency_s.max(comm_latency_s);
        let energy_j = compute_energy_j + comm_energy_j;
        PerfResult {
            compute_latency_s,
            comm_latency_s,
            latency_s,
            compute_energy_j,
            comm_energy_j,
            energy_j,
            edp_js: latency_s * energy_j,
        }
    }
}

fn chiplet_of(graph: &NoiGraph, node: usize) -> usize {
    graph.nodes[node]
        .chiplet
        .expect("mapped node carries a chiplet")
}

/// Layers run back to back; a split layer adds each share's time.
pub fn compute_latency(
    workload: &WorkloadSpec,
    mapping: &Mapping,
    graph: &NoiGraph,
    catalog: &Catalog,
) -> f64 {
    let mut total = 0.0;
    for (k, asg) in mapping.assignments.iter().enumerate() {
        let ops = workload.layer(mapping.layer_refs[k]).macs;
        for a in asg {
            total += ops * a.fraction / catalog.get(chiplet_of(graph, a.node)).ops_per_second();
        }
    }
    total
}

pub fn compute_energy(
    workload: &WorkloadSpec,
    mapping: &Mapping,
    graph: &NoiGraph,
    catalog: &Catalog,
) -> f64 {
    let mut total = 0.0;
    for (k, asg) in mapping.assignments.iter().enumerate() {
        let layer = workload.layer(mapping.layer_refs[k]);
        for a in asg {
            let gamma = catalog.get(chiplet_of(graph, a.node)).energy_per_mac_j;
            total += layer.sparsity * layer.macs * a.fraction * gamma;
        }
    }
    total
}

pub fn comm_latency(traffic: &TrafficMatrix, graph: &NoiGraph, link: &LinkParams) -> Result<f64> {
    let mut cycles = 0.0;
    for (i, j, bits) in traffic.flows() {
        let h = graph.shortest_hops(i, j)? as f64;
        let units = bits / link.transfer_unit_bits;
        cycles += match link.router_delay_mode {
            RouterDelayMode::PerFlow => units * (h + link.router_delay_cycles),
            RouterDelayMode::PerHop => units * h * (1.0 + link.router_delay_cycles),
        };
    }
    Ok(cycles * link.cycle_time_s)
}

/// Every hop pays the router energy plus the link energy of its kind.
pub fn comm_energy(traffic: &TrafficMatrix, graph: &NoiGraph, link: &LinkParams) -> Result<f64> {
    let mut total = 0.0;
    for (i, j, bits) in traffic.flows() {
        let h = graph.shortest_hops(i, j)?;
        let vertical = graph.vertical_hops(i, j).min(h);
        let lateral = h - vertical;
        total += bits
            * (lateral as f64 * link.e_link_lateral_j_per_bit
                + vertical as f64 * link.e_link_vertical_j_per_bit
                + h as f64 * link.e_router_j_per_bit);
    }
    Ok(total)
}

pub fn evaluate_perf(
    workload: &WorkloadSpec,
    mapping: &Mapping,
    traffic: &TrafficMatrix,
    graph: &NoiGraph,
    catalog: &Catalog,
    link: &LinkParams,
) -> Result<PerfResult> {
    Ok(PerfResult::combine(
        compute_latency(workload, mapping, graph, catalog),
        comm_latency(traffic, graph, link)?,
        compute_energy(workload, mapping, graph, catalog),
        comm_energy(traffic, graph, link)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Composition;
    use crate::mapper::{build_traffic, map_layers, MappingFlags, MappingPlan};
    use crate::topology::{build_topology, Placement, TopologyKind, TopologyParams};
    use crate::workload::LayerSpec;

    fn line(n: usize, comp: Vec<u32>) -> NoiGraph {
        let comp = Composition::surface_only(comp);
        let p = Placement::canonical(&comp, 1, n, 2.0, &(0..n).collect::<Vec<_>>()).unwrap();
        build_topology(TopologyKind::Mesh, &p, &TopologyParams::default(), 0.1).unwrap()
    }

    fn link(cycle: f64) -> LinkParams {
        LinkParams {
            cycle_time_s: cycle,
            router_delay_cycles: 1.0,
            transfer_unit_bits: 32.0,
            e_link_lateral_j_per_bit: 1e-12,
            e_link_vertical_j_per_bit: 0.5e-12,
            e_router_j_per_bit: 1e-12,
            router_delay_mode: RouterDelayMode::PerFlow,
        }
    }

    #[test]
    fn compute_side() {
        let cat = Catalog::builtin();
        let g = line(2, vec![2, 0, 0, 0, 0]);
        let wl = WorkloadSpec::chain("w", vec![LayerSpec::new("a", 10.0, 30e12, 1.0)]).unwrap();
        let m = map_layers(
            &wl,
            &g,
            &cat,
            MappingFlags::default(),
            &MappingPlan::default(),
        )
        .unwrap();
        assert!((compute_latency(&wl, &m, &g, &cat) - 1.0).abs() < 1e-12);

        let mut wl = WorkloadSpec::chain("w", vec![LayerSpec::new("a", 10.0, 1e6, 1.0)]).unwrap();
        let m = map_layers(
            &wl,
            &g,
            &cat,
            MappingFlags::default(),
            &MappingPlan::default(),
        )
        .unwrap();
        let e1 = compute_energy(&wl, &m, &g, &cat);
        assert!((e1 - 8.7e-7).abs() < 1e-18);
        wl.dnns[0].layers[0].sparsity = 0.5;
        assert!((compute_energy(&wl, &m, &g, &cat) - e1 / 2.0).abs() < 1e-18);

        let empty = WorkloadSpec::empty("e");
        let m = map_layers(
            &empty,
            &g,
            &cat,
            MappingFlags::default(),
            &MappingPlan::default(),
        )
        .unwrap();
        assert_eq!(compute_latency(&empty, &m, &g, &cat), 0.0);
    }

    #[test]
    fn comm_side() {
        let g = line(3, vec![3, 0, 0, 0, 0]);
        let mut t = TrafficMatrix::zeros(3);
        assert_eq!(comm_latency(&t, &g, &link(0.5e-9)).unwrap(), 0.0);
        assert_eq!(comm_energy(&t, &g, &link(0.5e-9)).unwrap(), 0.0);
        t.add(0, 2, 64.0 * 32.0);
        let lat = comm_latency(&t, &g, &link(0.5e-9)).unwrap();
        assert!((lat - 96e-9).abs() < 1e-18, "{lat}");

        let g4 = line(4, vec![4, 0, 0, 0, 0]);
        let mut t = TrafficMatrix::zeros(4);
        t.add(0, 3, 1000.0);
        let e = comm_energy(&t, &g4, &link(1e-9)).unwrap();
        assert!((e - 6e-9).abs() < 1e-20, "{e}");
    }

    #[test]
    fn glass_faster_than_silicon() {
        let g = line(3, vec![3, 0, 0, 0, 0]);
        let mut t = TrafficMatrix::zeros(3);
        t.add(0, 2, 4096.0);
        let si = LinkParams::for_interposer(&InterposerSpec::silicon(400.0));
        let gl = LinkParams::for_interposer(&InterposerSpec::glass(400.0));
        let (ls, lg) = (
            comm_latency(&t, &g, &si).unwrap(),
            comm_latency(&t, &g, &gl).unwrap(),
        );
        assert!((lg - ls * 1.15 / 2.0).abs() < 1e-15 * ls.max(1.0));
        assert!(gl.e_link_lateral_j_per_bit <= si.e_link_lateral_j_per_bit);
    }

    #[test]
    fn end_to_end_combines() {
        let cat = Catalog::builtin();
        let g = line(3, vec![0, 0, 3, 0, 0]);
        let wl = WorkloadSpec::chain(
            "w",
            vec![
                LayerSpec::new("a", 216.0, 1e9, 4096.0),
                LayerSpec::new("b", 50.0, 1e9, 10.0),
            ],
        )
        .unwrap();
        let m = map_layers(
            &wl,
            &g,
            &cat,
            MappingFlags::default(),
            &MappingPlan::default(),
        )
        .unwrap();
        let t = build_traffic(&wl, &m, g.n_nodes());
        let r = evaluate_perf(
            &wl,
            &m,
            &t,
            &g,
            &cat,
            &LinkParams::for_interposer(&InterposerSpec::silicon(36.0)),
        )
        .unwrap();
        assert_eq!(r.latency_s, r.compute_latency_s.max(r.comm_latency_s));
        assert_eq!(r.energy_j, r.compute_energy_j + r.comm_energy_j);
        assert_eq!(r.edp_js, r.latency_s * r.energy_j);
    }
}
