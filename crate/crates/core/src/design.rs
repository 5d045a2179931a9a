//! Design points and their evaluation.

use serde::{Deserialize, Serialize};

use crate::catalog::{aggregate_metrics, Catalog, Composition, InterposerSpec};
use crate::error::{DseError, Result};
use crate::mapper::{build_traffic, map_layers, Mapping, MappingFlags, MappingPlan, TrafficMatrix};
use crate::package::{check_area, check_warpage, fabrication_cost, CostParams, WarpageConfig};
use crate::perf::{evaluate_perf, LinkParams, PerfResult};
use crate::thermal::{peak_temperature, ThermalConfig};
use crate::topology::{
    average_hop_count, build_topology, NoiGraph, Placement, TopologyKind, TopologyParams,
};
use crate::workload::WorkloadSpec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Constraints {
    pub t_max_c: f64,
    pub warpage_max_um: f64,
}

impl Default for Constraints {
    fn default() -> Self {
        Constraints {
            t_max_c: 75.0,
            warpage_max_um: 150.0,
        }
    }
}

/// Everything needed to evaluate a design, fixed for one scenario.
#[derive(Clone, Debug)]
pub struct EvalContext {
    pub catalog: Catalog,
    pub interposer: InterposerSpec,
    pub workload: WorkloadSpec,
    pub topology: TopologyKind,
    pub topology_params: TopologyParams,
    pub rows: usize,
    pub cols: usize,
    pub link: LinkParams,
    pub thermal: ThermalConfig,
    pub warpage: WarpageConfig,
    pub cost: CostParams,
    pub flags: MappingFlags,
    pub constraints: Constraints,
    pub embed_capacity_fraction: f64,
}

impl EvalContext {
    /// Defaults for the given inputs; the grid is sized so the smallest
    /// catalog die tiles the interposer.
    pub fn new(
        catalog: Catalog,
        interposer: InterposerSpec,
        workload: WorkloadSpec,
        topology: TopologyKind,
    ) -> Self {
        let min_die = catalog
            .chiplets
            .iter()
            .map(|c| c.area_mm2)
            .fold(f64::INFINITY, f64::min);
        let side = ((interposer.area_mm2() / min_die).sqrt().round() as usize).max(1);
        let mut warpage = WarpageConfig::default();
        let constraints = Constraints::default();
        warpage.limit_um = constraints.warpage_max_um;
        EvalContext {
            link: LinkParams::for_interposer(&interposer),
            catalog,
            interposer,
            workload,
            topology,
            topology_params: TopologyParams::default(),
            rows: side,
            cols: side,
            thermal: ThermalConfig::default(),
            warpage,
            cost: CostParams::default(),
            flags: MappingFlags::default(),
            constraints,
            embed_capacity_fraction: 1.0,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn pitch_mm(&self) -> f64 {
        (self.interposer.area_mm2() / self.n_cells() as f64).sqrt()
    }

    pub fn canonical_order(&self) -> Vec<usize> {
        self.topology.canonical_order(self.rows, self.cols)
    }

    pub fn canonical_placement(&self, comp: &Composition) -> Result<Placement> {
        Placement::canonical(
            comp,
            self.rows,
            self.cols,
            self.pitch_mm(),
            &self.canonical_order(),
        )
    }

    pub fn graph(&self, placement: &Placement) -> Result<NoiGraph> {
        build_topology(
            self.topology,
            placement,
            &self.topology_params,
            self.interposer.thickness_um / 1000.0,
        )
    }

    /// Area and warpage checks; both depend on the composition only.
    pub fn package_feasibility(&self, comp: &Composition) -> Result<PackageCheck> {
        let area = check_area(
            comp,
            &self.catalog,
            &self.interposer,
            self.embed_capacity_fraction,
        )?;
        let warp = check_warpage(comp, &self.catalog, &self.interposer, &self.warpage)?;
        let cells_ok = comp.n_surface() as usize <= self.n_cells();
        Ok(PackageCheck {
            feasible_area: area.feasible && cells_ok,
            feasible_warpage: warp.feasible,
            max_warpage_um: warp.max_warpage_um,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PackageCheck {
    pub feasible_area: bool,
    pub feasible_warpage: bool,
    pub max_warpage_um: f64,
}

impl PackageCheck {
    pub fn feasible(&self) -> bool {
        self.feasible_area && self.feasible_warpage
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DesignPoint {
    pub placement: Placement,
    pub plan: MappingPlan,
}

impl DesignPoint {
    pub fn composition(&self, catalog: &Catalog) -> Composition {
        self.placement.composition(catalog.len())
    }

    /// Composition text plus an FNV-1a hash of placement and plan.
    pub fn id(&self, catalog: &Catalog) -> String {
        let mut h = Fnv1a::new();
        h.write_usize(self.placement.rows);
        h.write_usize(self.placement.cols);
        for cell in self
            .placement
            .surface
            .iter()
            .chain(&self.placement.embedded)
        {
            h.write_usize(cell.map_or(usize::MAX, |t| t));
        }
        h.write_usize(self.plan.start_offset);
        for f in &self.plan.fresh_start {
            h.write_usize(*f);
        }
        format!("{}#{:016x}", self.composition(catalog), h.finish())
    }
}

struct Fnv1a(u64);

impl Fnv1a {
    fn new() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }

    fn write_usize(&mut self, v: usize) {
        for b in (v as u64).to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

/// Performance-only evaluation used inside the search loop.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerfEval {
    pub perf: PerfResult,
    pub avg_hops: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub design_id: String,
    pub composition: String,
    pub latency_s: f64,
    pub energy_j: f64,
    pub edp: f64,
    pub compute_latency_s: f64,
    pub comm_latency_s: f64,
    pub compute_energy_j: f64,
    pub comm_energy_j: f64,
    pub avg_hops: Option<f64>,
    pub t_peak_c: f64,
    pub max_warpage_um: f64,
    pub cost_norm: f64,
    pub total_tops: f64,
    pub total_storage_mb: f64,
    pub feasible_thermal: bool,
    pub feasible_warpage: bool,
    pub feasible_area: bool,
}

/// Intermediate products of one evaluation, for dumps.
pub struct Artifacts {
    pub graph: NoiGraph,
    pub mapping: Mapping,
    pub traffic: TrafficMatrix,
}

pub fn build_artifacts(ctx: &EvalContext, design: &DesignPoint) -> Result<Artifacts> {
    let graph = ctx.graph(&design.placement)?;
    let mapping = map_layers(&ctx.workload, &graph, &ctx.catalog, ctx.flags, &design.plan)?;
    let traffic = build_traffic(&ctx.workload, &mapping, graph.n_nodes());
    Ok(Artifacts {
        graph,
        mapping,
        traffic,
    })
}

/// Latency and energy of a design that already passed the package checks.
/// Callers must prune first; reaching here with a violating design is a bug.
pub fn evaluate_perf_only(ctx: &EvalContext, design: &DesignPoint) -> Result<PerfEval> {
    let comp = design.composition(&ctx.catalog);
    let pkg = ctx.package_feasibility(&comp)?;
    assert!(
        pkg.feasible(),
        "evaluator reached with a package-infeasible design {}",
        design.id(&ctx.catalog)
    );
    let a = build_artifacts(ctx, design)?;
    let perf = evaluate_perf(
        &ctx.workload,
        &a.mapping,
        &a.traffic,
        &a.graph,
        &ctx.catalog,
        &ctx.link,
    )?;
    let avg_hops = average_hop_count(&a.graph, &a.traffic).ok();
    Ok(PerfEval { perf, avg_hops })
}

pub fn design_peak_temperature(ctx: &EvalContext, design: &DesignPoint) -> Result<f64> {
    let graph = ctx.graph(&design.placement)?;
    peak_temperature(
        &design.placement,
        &graph,
        &ctx.catalog,
        &ctx.interposer,
        &ctx.thermal,
    )
}

/// Full evaluation. Package-infeasible designs are reported with their
/// flags cleared and no performance numbers.
pub fn evaluate_design(ctx: &EvalContext, design: &DesignPoint) -> Result<Evaluation> {
    let comp = design.composition(&ctx.catalog);
    design.placement.validate(&comp, &ctx.catalog)?;
    let pkg = ctx.package_feasibility(&comp)?;
    let agg = aggregate_metrics(&comp, &ctx.catalog)?;
    let cost = fabrication_cost(&comp, &ctx.catalog, &ctx.interposer, &ctx.cost)?;
    let t_peak = design_peak_temperature(ctx, design)?;
    let (perf, avg_hops) = if pkg.feasible() {
        let p = evaluate_perf_only(ctx, design)?;
        (p.perf, p.avg_hops)
    } else {
        let nan = f64::NAN;
        (PerfResult::combine(nan, nan, nan, nan), None)
    };
    Ok(Evaluation {
        design_id: design.id(&ctx.catalog),
        composition: comp.to_string(),
        latency_s: perf.latency_s,
        energy_j: perf.energy_j,
        edp: perf.edp_js,
        compute_latency_s: perf.compute_latency_s,
        comm_latency_s: perf.comm_latency_s,
        compute_energy_j: perf.compute_energy_j,
        comm_energy_j: perf.comm_energy_j,
        avg_hops,
        t_peak_c: t_peak,
        max_warpage_um: pkg.max_warpage_um,
        cost_norm: cost.c_system_norm,
        total_tops: agg.total_tops,
        total_storage_mb: agg.total_storage_mb(),
        feasible_thermal: t_peak <= ctx.constraints.t_max_c,
        feasible_warpage: pkg.feasible_warpage,
        feasible_area: pkg.feasible_area,
    })
}

/// Canonical design for a composition with the greedy mapping.
pub fn baseline_design(ctx: &EvalContext, comp: &Composition) -> Result<DesignPoint> {
    if comp.len() != ctx.catalog.len() {
        return Err(DseError::Config(
            "composition length does not match the catalog".into(),
        ));
    }
    Ok(DesignPoint {
        placement: ctx.canonical_placement(comp)?,
        plan: MappingPlan::default(),
    })
}
