//! Run artifacts: CSV tables and the JSON summary.
//!
//! Column reference:
//!
//! | file          | columns                                                                      |
//! |---------------|------------------------------------------------------------------------------|
//! | `pareto.csv`  | design_id, alpha, latency_s, energy_j, edp, t_peak_c, max_warpage_um, cost_norm |
//! | `trace.csv`   | step, alpha, best_edp, incumbent_edp                                         |
//! | `mapping.csv` | layer, node, chiplet, fraction                                               |
//! | `warpage.csv` | x_mm, warpage_um                                                             |
//! | `thermal.csv` | x_mm, y_mm, layer, temp_c                                                    |
//!
//! `alpha` is the per-type chiplet count written as `[a;b;...]`. Reals use
//! six-digit scientific notation so output is byte-stable across runs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::catalog::format_counts;
use crate::design::{build_artifacts, DesignPoint, EvalContext, Evaluation};
use crate::error::{DseError, Result};
use crate::optimizer::{ScoredDesign, TraceRow};
use crate::package::{fabrication_cost, warpage_profile};
use crate::scenario::Scenario;
use crate::thermal::{solve_steady_state, SolverConfig, ThermalGrid};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParetoRow {
    pub design_id: String,
    pub alpha: String,
    pub latency_s: f64,
    pub energy_j: f64,
    pub edp: f64,
    pub t_peak_c: f64,
    pub max_warpage_um: f64,
    pub cost_norm: f64,
}

pub fn pareto_rows(ctx: &EvalContext, archive: &[ScoredDesign]) -> Result<Vec<ParetoRow>> {
    archive
        .iter()
        .map(|s| {
            let comp = s.design.composition(&ctx.catalog);
            let pkg = ctx.package_feasibility(&comp)?;
            let cost = fabrication_cost(&comp, &ctx.catalog, &ctx.interposer, &ctx.cost)?;
            Ok(ParetoRow {
                design_id: s.id.clone(),
                alpha: format_counts(&comp.total()),
                latency_s: s.objectives.latency_s,
                energy_j: s.objectives.energy_j,
                edp: s.objectives.edp(),
                t_peak_c: s.t_peak_c,
                max_warpage_um: pkg.max_warpage_um,
                cost_norm: cost.c_system_norm,
            })
        })
        .collect()
}

pub fn pareto_csv(rows: &[ParetoRow]) -> String {
    let mut out =
        String::from("design_id,alpha,latency_s,energy_j,edp,t_peak_c,max_warpage_um,cost_norm\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}",
            r.design_id,
            r.alpha,
            r.latency_s,
            r.energy_j,
            r.edp,
            r.t_peak_c,
            r.max_warpage_um,
            r.cost_norm
        );
    }
    out
}

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("step,alpha,best_edp,incumbent_edp\n");
    for r in trace {
        let _ = writeln!(
            out,
            "{},{},{:.6e},{:.6e}",
            r.step,
            format_counts(&r.alpha),
            r.best_edp,
            r.incumbent_edp
        );
    }
    out
}

pub fn mapping_csv(ctx: &EvalContext, design: &DesignPoint) -> Result<String> {
    let art = build_artifacts(ctx, design)?;
    let mut out = String::from("layer,node,chiplet,fraction\n");
    for (id, row) in art.mapping.layer_ids.iter().zip(&art.mapping.assignments) {
        for a in row {
            let name = art.graph.nodes[a.node]
                .chiplet
                .map_or("-", |t| ctx.catalog.get(t).name.as_str());
            let _ = writeln!(out, "{id},{},{name},{:.6e}", a.node, a.fraction);
        }
    }
    Ok(out)
}

pub fn warpage_csv(ctx: &EvalContext, design: &DesignPoint) -> Result<String> {
    let comp = design.composition(&ctx.catalog);
    let (p, _) = ctx.warpage.params(&ctx.interposer, &ctx.catalog, &comp)?;
    let mut out = String::from("x_mm,warpage_um\n");
    for (x, w) in warpage_profile(&p, ctx.warpage.samples)? {
        let _ = writeln!(out, "{x:.6e},{w:.6e}");
    }
    Ok(out)
}

pub fn thermal_csv(ctx: &EvalContext, design: &DesignPoint) -> Result<String> {
    let graph = ctx.graph(&design.placement)?;
    let grid = ThermalGrid::for_design(
        &design.placement,
        &graph,
        &ctx.catalog,
        &ctx.interposer,
        &ctx.thermal,
    )?;
    let field = solve_steady_state(&grid, &SolverConfig::default())?;
    let s = grid.cell_size_mm;
    let mut out = String::from("x_mm,y_mm,layer,temp_c\n");
    for (i, t) in field.temps_c.iter().enumerate() {
        let (x, y) = match grid.cell[i] {
            Some(c) => (
                (c % grid.cols) as f64 * s + s / 2.0,
                (c / grid.cols) as f64 * s + s / 2.0,
            ),
            None => (grid.cols as f64 * s / 2.0, grid.rows as f64 * s / 2.0),
        };
        let _ = writeln!(out, "{x:.6e},{y:.6e},{},{t:.6e}", grid.layer[i]);
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub code_version: String,
    pub seed: u64,
    pub scenario: Scenario,
    pub incumbent_alpha: Option<String>,
    pub incumbent_edp: Option<f64>,
    pub incumbent: Option<Evaluation>,
    pub outer_evaluations: usize,
    pub pareto_size: usize,
    pub warnings: Vec<String>,
}

/// Files staged in memory and written together once everything succeeded.
#[derive(Clone, Debug, Default)]
pub struct OutputSet {
    files: Vec<(String, String)>,
}

impl OutputSet {
    pub fn add(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c.as_str())
    }

    /// Writes every file under a temporary name first, then renames them into
    /// place, so a failure never leaves a partial set of outputs behind.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| DseError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let mut staged = Vec::new();
        for (name, contents) in &self.files {
            let tmp = dir.join(format!(".{name}.partial"));
            if let Err(e) = fs::write(&tmp, contents).map_err(io(&tmp)) {
                for (t, _) in &staged {
                    let _ = fs::remove_file(t);
                }
                let _ = fs::remove_file(&tmp);
                return Err(e);
            }
            staged.push((tmp, dir.join(name)));
        }
        let mut out = Vec::new();
        for (tmp, dst) in staged {
            fs::rename(&tmp, &dst).map_err(io(&dst))?;
            out.push(dst);
        }
        Ok(out)
    }
}

/// Human-readable rendering of a `summary.json` document.
pub fn render_summary(v: &serde_json::Value) -> String {
    let mut out = String::new();
    let field = |k: &str| v.get(k).cloned().unwrap_or(serde_json::Value::Null);
    let name = v
        .pointer("/scenario/name")
        .and_then(|n| n.as_str())
        .unwrap_or("?");
    let _ = writeln!(out, "scenario       {name}");
    let _ = writeln!(out, "code version   {}", field("code_version"));
    let _ = writeln!(out, "seed           {}", field("seed"));
    let _ = writeln!(out, "evaluations    {}", field("outer_evaluations"));
    let _ = writeln!(out, "pareto size    {}", field("pareto_size"));
    match v.get("incumbent").filter(|i| !i.is_null()) {
        Some(inc) => {
            let _ = writeln!(
                out,
                "incumbent      {}",
                inc.get("design_id").and_then(|s| s.as_str()).unwrap_or("?")
            );
            for k in [
                "composition",
                "latency_s",
                "energy_j",
                "edp",
                "t_peak_c",
                "max_warpage_um",
                "cost_norm",
                "total_tops",
            ] {
                if let Some(x) = inc.get(k) {
                    let _ = writeln!(out, "  {k:<14} {x}");
                }
            }
        }
        None => {
            let _ = writeln!(out, "incumbent      none (no feasible design)");
        }
    }
    if let Some(ws) = v.get("warnings").and_then(|w| w.as_array()) {
        for w in ws {
            let _ = writeln!(out, "warning        {}", w.as_str().unwrap_or(""));
        }
    }
    out
}
