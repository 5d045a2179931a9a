//! Subcommand bodies shared by the binary and the integration tests.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::{format_counts, Catalog, Composition, InterposerSpec};
use crate::design::{baseline_design, evaluate_design, DesignPoint, EvalContext, Evaluation};
use crate::error::{DseError, Result};
use crate::mapper::MappingPlan;
use crate::optimizer::co_optimize;
use crate::package::check_warpage;
use crate::report::{
    mapping_csv, pareto_csv, pareto_rows, thermal_csv, trace_csv, warpage_csv, OutputSet, Summary,
};
use crate::scenario::Scenario;
use crate::thermal::{
    calibrate_utilization, reference_composition, reference_peak, ThermalConfig,
    CALIBRATION_TARGET_C,
};
use crate::topology::{build_topology, Placement, TopologyKind, TopologyParams};
use crate::CODE_VERSION;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub dump_mapping: bool,
    pub dump_warpage: bool,
    pub dump_thermal: bool,
}

pub struct RunOutcome {
    pub outputs: OutputSet,
    pub summary: Summary,
}

/// Runs the co-optimisation and stages every requested artifact in memory.
pub fn run_scenario(scn: &Scenario, opts: &RunOptions) -> Result<RunOutcome> {
    let ctx = scn.context()?;
    let seed = opts.seed.unwrap_or(scn.optimizer.seed);
    let mut warnings = Vec::new();
    if ctx.constraints.t_max_c <= ctx.thermal.ambient_c {
        warnings.push(format!(
            "temperature limit {} °C is not above ambient {} °C; the feasible set is empty",
            ctx.constraints.t_max_c, ctx.thermal.ambient_c
        ));
    }
    log::info!(
        "running scenario {} on a {}x{} {} grid, seed {seed}",
        scn.name,
        ctx.rows,
        ctx.cols,
        ctx.topology
    );
    let res = co_optimize(&ctx, &scn.optimizer.search, seed)?;
    let rows = pareto_rows(&ctx, &res.archive)?;
    if rows.is_empty() && warnings.is_empty() {
        warnings.push("no design satisfied every constraint".into());
    }

    let mut outputs = OutputSet::default();
    outputs.add("pareto.csv", pareto_csv(&rows));
    outputs.add("trace.csv", trace_csv(&res.search.trace));

    let incumbent = match &res.best {
        Some(b) => Some(evaluate_design(&ctx, &b.design)?),
        None => None,
    };
    let dumps = opts.dump_mapping || opts.dump_warpage || opts.dump_thermal;
    match &res.best {
        Some(b) => {
            if opts.dump_mapping {
                outputs.add("mapping.csv", mapping_csv(&ctx, &b.design)?);
            }
            if opts.dump_warpage {
                outputs.add("warpage.csv", warpage_csv(&ctx, &b.design)?);
            }
            if opts.dump_thermal {
                outputs.add("thermal.csv", thermal_csv(&ctx, &b.design)?);
            }
        }
        None if dumps => warnings.push("no incumbent design; dumps skipped".into()),
        None => {}
    }

    let summary = Summary {
        code_version: CODE_VERSION.to_string(),
        seed,
        scenario: scn.clone(),
        incumbent_alpha: res.search.incumbent.as_deref().map(format_counts),
        incumbent_edp: res.best.as_ref().map(|b| b.objectives.edp()),
        incumbent,
        outer_evaluations: res.search.trace.len(),
        pareto_size: rows.len(),
        warnings,
    };
    let json =
        serde_json::to_string_pretty(&summary).map_err(|e| DseError::Internal(e.to_string()))?;
    outputs.add("summary.json", json + "\n");
    Ok(RunOutcome { outputs, summary })
}

/// Explicit design for single-shot evaluation.
///
/// Only `surface` is required. Without a placement the canonical one is
/// used; without a plan the greedy mapping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignFile {
    pub surface: Vec<u32>,
    #[serde(default)]
    pub embedded: Option<Vec<u32>>,
    #[serde(default)]
    pub placement: Option<PlacementSpec>,
    #[serde(default)]
    pub plan: MappingPlan,
    /// Overrides the thermal utilization.
    #[serde(default)]
    pub utilization: Option<f64>,
}

/// Per-cell chiplet type names (or null), row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementSpec {
    pub surface: Vec<Option<String>>,
    #[serde(default)]
    pub embedded: Option<Vec<Option<String>>>,
}

impl DesignFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| DseError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| DseError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn composition(&self) -> Result<Composition> {
        let embedded = self
            .embedded
            .clone()
            .unwrap_or_else(|| vec![0; self.surface.len()]);
        Composition::new(self.surface.clone(), embedded)
    }

    pub fn design(&self, ctx: &EvalContext) -> Result<DesignPoint> {
        let comp = self.composition()?;
        let mut d = baseline_design(ctx, &comp)?;
        if let Some(spec) = &self.placement {
            let lookup = |cells: &[Option<String>], what: &str| -> Result<Vec<Option<usize>>> {
                if cells.len() != ctx.n_cells() {
                    return Err(DseError::validation(
                        format!("placement.{what}"),
                        format!("expected {} cells, found {}", ctx.n_cells(), cells.len()),
                    ));
                }
                cells
                    .iter()
                    .map(|c| match c {
                        None => Ok(None),
                        Some(n) => ctx.catalog.index_of(n).map(Some).ok_or_else(|| {
                            DseError::validation(
                                format!("placement.{what}"),
                                format!("unknown chiplet `{n}`"),
                            )
                        }),
                    })
                    .collect()
            };
            let mut p = Placement::empty(ctx.rows, ctx.cols, ctx.pitch_mm());
            p.surface = lookup(&spec.surface, "surface")?;
            if let Some(e) = &spec.embedded {
                p.embedded = lookup(e, "embedded")?;
            }
            p.validate(&comp, &ctx.catalog)?;
            d.placement = p;
        }
        d.plan = self.plan.clone();
        Ok(d)
    }
}

pub fn evaluate_design_file(scn: &Scenario, design: &DesignFile) -> Result<Evaluation> {
    let mut ctx = scn.context()?;
    if let Some(u) = design.utilization {
        if !(u >= 0.0 && u.is_finite()) {
            return Err(DseError::validation("utilization", "must be non-negative"));
        }
        ctx.thermal.utilization = u;
    }
    let d = design.design(&ctx)?;
    evaluate_design(&ctx, &d)
}

/// Node and link lists plus port statistics of an all-empty grid, as CSV.
pub fn topology_csv(kind: TopologyKind, rows: usize, cols: usize) -> Result<String> {
    if rows == 0 || cols == 0 {
        return Err(DseError::validation("grid", "dimensions must be positive"));
    }
    let p = Placement::empty(rows, cols, 1.0);
    let g = build_topology(kind, &p, &TopologyParams::default(), 0.1)?;
    let s = g.port_stats();
    let mut out = String::new();
    let _ = writeln!(out, "# kind={kind} rows={rows} cols={cols}");
    let _ = writeln!(
        out,
        "# routers={} lateral_links={} avg_lateral_ports={:.4} max_lateral_ports={}",
        s.routers, s.lateral_links, s.avg_lateral_ports, s.max_lateral_ports
    );
    out.push_str("record,id,a,b,row,col,ports,length_mm\n");
    for n in 0..g.n_nodes() {
        let (r, c) = p.cell_rc(g.nodes[n].cell);
        let _ = writeln!(out, "node,{n},,,{r},{c},{},", g.lateral_ports(n));
    }
    for (i, l) in g.links.iter().enumerate() {
        let _ = writeln!(out, "edge,{i},{},{},,,,{:.6e}", l.a, l.b, l.length_mm);
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct CalibrationReport {
    pub target_c: f64,
    pub utilization: f64,
    /// Reference composition peaks with the calibrated utilization.
    pub peaks_c: Vec<(String, String, f64)>,
    /// Maximum warpage without embedding (material, area mm², μm, feasible).
    pub warpage: Vec<(String, f64, f64, bool)>,
}

pub fn calibrate(
    catalog: &Catalog,
    base: &ThermalConfig,
    target_c: Option<f64>,
) -> Result<CalibrationReport> {
    let target = target_c.unwrap_or(CALIBRATION_TARGET_C);
    let utilization = calibrate_utilization(catalog, base, target)?;
    let cfg = ThermalConfig {
        utilization,
        ..*base
    };
    let comp = reference_composition();
    let mut peaks_c = Vec::new();
    for ip in [InterposerSpec::silicon(400.0), InterposerSpec::glass(400.0)] {
        for kind in TopologyKind::ALL {
            let t = reference_peak(kind, &comp, &ip, catalog, &cfg)?;
            peaks_c.push((ip.material.to_string(), kind.to_string(), t));
        }
    }
    let wcfg = crate::package::WarpageConfig::default();
    let mut warpage = Vec::new();
    for area in [400.0, 864.0] {
        for ip in [InterposerSpec::silicon(area), InterposerSpec::glass(area)] {
            let r = check_warpage(&comp, catalog, &ip, &wcfg)?;
            warpage.push((ip.material.to_string(), area, r.max_warpage_um, r.feasible));
        }
    }
    Ok(CalibrationReport {
        target_c: target,
        utilization,
        peaks_c,
        warpage,
    })
}
