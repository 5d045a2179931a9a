//! Compact steady-state thermal model and the conductance-drift model.
//!
//! Each grid cell has a chiplet-layer node and an interposer-layer node.
//! Chiplet nodes drain upward into one lumped spreader node that reaches
//! ambient through the sink resistance; interposer nodes drain downward
//! through the interposer body into the board. Embedded chiplets heat the
//! interposer node of their cell and short the bump layer above it.

use serde::{Deserialize, Serialize};

use crate::catalog::{derive_peak_power, Catalog, Composition, InterposerSpec};
use crate::error::{DseError, Result};
use crate::topology::{build_topology, NoiGraph, Placement, TopologyKind, TopologyParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThermalLayer {
    Chiplet,
    Interposer,
    Spreader,
}

impl std::fmt::Display for ThermalLayer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ThermalLayer::Chiplet => "chiplet",
            ThermalLayer::Interposer => "interposer",
            ThermalLayer::Spreader => "spreader",
        })
    }
}

/// Linear heat network: G·(T − T_amb) = P, with G = Laplacian + grounding.
#[derive(Clone, Debug, PartialEq)]
pub struct ThermalGrid {
    pub ambient_c: f64,
    pub rows: usize,
    pub cols: usize,
    pub cell_size_mm: f64,
    /// (a, b, conductance W/K)
    pub edges: Vec<(usize, usize, f64)>,
    /// Conductance from each node to the ambient boundary (W/K).
    pub ground: Vec<f64>,
    pub power: Vec<f64>,
    pub layer: Vec<ThermalLayer>,
    pub cell: Vec<Option<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThermalConfig {
    pub ambient_c: f64,
    /// Chiplet to spreader, K·mm²/W.
    pub r_top_kmm2_w: f64,
    /// Chiplet to interposer through the bumps, K·mm²/W.
    pub r_bump_kmm2_w: f64,
    /// Bump conductance multiplier at cells with an embedded chiplet.
    pub embed_bump_factor: f64,
    /// Interposer underside to ambient, K·mm²/W, added to τ/λ.
    pub r_board_kmm2_w: f64,
    pub sink_resistance_k_per_w: f64,
    pub router_port_power_w: f64,
    pub utilization: f64,
}

/// Utilization that puts the silicon Floret reference design at 75 °C.
pub const CALIBRATED_UTILIZATION: f64 = 0.501_475_259;
pub const CALIBRATION_TARGET_C: f64 = 75.0;

impl Default for ThermalConfig {
    fn default() -> Self {
        ThermalConfig {
            ambient_c: 25.0,
            r_top_kmm2_w: 10.0,
            r_bump_kmm2_w: 60.0,
            embed_bump_factor: 4.0,
            r_board_kmm2_w: 20.0,
            sink_resistance_k_per_w: 0.15,
            router_port_power_w: 0.3,
            utilization: CALIBRATED_UTILIZATION,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rel_tol: 1e-10,
            max_iterations: 20_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThermalField {
    pub temps_c: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
    /// |heat into boundary − injected| / injected
    pub energy_balance_error: f64,
}

impl ThermalField {
    pub fn peak_c(&self) -> f64 {
        self.temps_c
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

impl ThermalGrid {
    pub fn from_network(
        ambient_c: f64,
        n: usize,
        edges: Vec<(usize, usize, f64)>,
        ground: Vec<f64>,
        power: Vec<f64>,
    ) -> Result<Self> {
        let g = ThermalGrid {
            ambient_c,
            rows: 0,
            cols: 0,
            cell_size_mm: 0.0,
            edges,
            ground,
            power,
            layer: vec![ThermalLayer::Chiplet; n],
            cell: vec![None; n],
        };
        g.validate()?;
        Ok(g)
    }

    pub fn n_nodes(&self) -> usize {
        self.power.len()
    }

    pub fn total_power(&self) -> f64 {
        self.power.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.power.len();
        if n == 0 || self.ground.len() != n {
            return Err(DseError::validation(
                "thermal grid",
                "node vectors are empty or inconsistent",
            ));
        }
        if !self.ground.iter().any(|&g| g > 0.0) {
            return Err(DseError::validation(
                "thermal grid",
                "no boundary conductance",
            ));
        }
        if self
            .edges
            .iter()
            .any(|&(a, b, g)| a >= n || b >= n || a == b || !(g >= 0.0))
        {
            return Err(DseError::validation(
                "thermal grid",
                "malformed conductance edge",
            ));
        }
        if self
            .ground
            .iter()
            .chain(&self.power)
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(DseError::validation(
                "thermal grid",
                "negative or non-finite value",
            ));
        }
        Ok(())
    }

    /// Dense conductance matrix, row-major; used by tests and small dumps.
    pub fn dense_matrix(&self) -> Vec<f64> {
        let n = self.n_nodes();
        let mut m = vec![0.0; n * n];
        for (i, &g) in self.ground.iter().enumerate() {
            m[i * n + i] += g;
        }
        for &(a, b, g) in &self.edges {
            m[a * n + a] += g;
            m[b * n + b] += g;
            m[a * n + b] -= g;
            m[b * n + a] -= g;
        }
        m
    }

    /// Builds the network for a placed design. `graph` supplies the router
    /// port counts that set per-site router power.
    pub fn for_design(
        placement: &Placement,
        graph: &NoiGraph,
        catalog: &Catalog,
        ip: &InterposerSpec,
        cfg: &ThermalConfig,
    ) -> Result<Self> {
        let (rows, cols) = (placement.rows, placement.cols);
        let cells = rows * cols;
        if cells == 0 {
            return Err(DseError::Config("empty placement grid".into()));
        }
        let pitch = (ip.area_mm2() / cells as f64).sqrt();
        let a_cell = pitch * pitch;
        let chip = |c: usize| c;
        let inter = |c: usize| cells + c;
        let spreader = 2 * cells;
        let n = 2 * cells + 1;

        let mut power = vec![0.0; n];
        let mut ground = vec![0.0; n];
        let mut edges = Vec::with_capacity(6 * cells);
        let g_top = a_cell / cfg.r_top_kmm2_w;
        let g_bump = a_cell / cfg.r_bump_kmm2_w;
        let r_body = ip.thickness_um / ip.thermal_conductivity_w_mk;
        let g_board = a_cell / (r_body + cfg.r_board_kmm2_w);
        // square cells: λ·τ, λ in W/mK and τ in m
        let g_lateral = ip.thermal_conductivity_w_mk * ip.thickness_um * 1e-6;

        for c in 0..cells {
            if let Some(t) = placement.surface[c] {
                power[chip(c)] += derive_peak_power(catalog.get(t), cfg.utilization);
            }
            if let Some(t) = placement.embedded[c] {
                power[inter(c)] += derive_peak_power(catalog.get(t), cfg.utilization);
            }
            power[chip(c)] += cfg.utilization * cfg.router_port_power_w * graph.degree(c) as f64;

            edges.push((chip(c), spreader, g_top));
            let bump = if placement.embedded[c].is_some() {
                g_bump * cfg.embed_bump_factor
            } else {
                g_bump
            };
            edges.push((chip(c), inter(c), bump));
            ground[inter(c)] = g_board;
            let (r, col) = (c / cols, c % cols);
            if col + 1 < cols {
                edges.push((inter(c), inter(c + 1), g_lateral));
            }
            if r + 1 < rows {
                edges.push((inter(c), inter(c + cols), g_lateral));
            }
        }
        ground[spreader] = 1.0 / cfg.sink_resistance_k_per_w;

        let mut layer = vec![ThermalLayer::Chiplet; cells];
        layer.extend(std::iter::repeat_n(ThermalLayer::Interposer, cells));
        layer.push(ThermalLayer::Spreader);
        let mut cell: Vec<Option<usize>> = (0..cells).map(Some).collect();
        cell.extend((0..cells).map(Some));
        cell.push(None);
        let g = ThermalGrid {
            ambient_c: cfg.ambient_c,
            rows,
            cols,
            cell_size_mm: pitch,
            edges,
            ground,
            power,
            layer,
            cell,
        };
        g.validate()?;
        Ok(g)
    }
}

/// Compressed-row conductance matrix.
struct Csr {
    row_start: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl Csr {
    fn from_grid(g: &ThermalGrid) -> Self {
        let n = g.n_nodes();
        let mut rows: Vec<Vec<(usize, f64)>> = (0..n).map(|i| vec![(i, g.ground[i])]).collect();
        for &(a, b, c) in &g.edges {
            rows[a][0].1 += c;
            rows[b][0].1 += c;
            rows[a].push((b, -c));
            rows[b].push((a, -c));
        }
        let mut row_start = Vec::with_capacity(n + 1);
        let mut col = Vec::new();
        let mut val = Vec::new();
        row_start.push(0);
        for mut r in rows {
            r.sort_by_key(|e| e.0);
            for (j, v) in r {
                if col.len() > *row_start.last().unwrap() && *col.last().unwrap() == j {
                    *val.last_mut().unwrap() += v;
                } else {
                    col.push(j);
                    val.push(v);
                }
            }
            row_start.push(col.len());
        }
        Csr {
            row_start,
            col,
            val,
        }
    }

    fn mul(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_start[i]..self.row_start[i + 1] {
                s += self.val[k] * x[self.col[k]];
            }
            *o = s;
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.row_start.len() - 1)
            .map(|i| {
                (self.row_start[i]..self.row_start[i + 1])
                    .find(|&k| self.col[k] == i)
                    .map(|k| self.val[k])
                    .unwrap_or(0.0)
            })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradient on the temperature rise.
pub fn solve_steady_state(grid: &ThermalGrid, solver: &SolverConfig) -> Result<ThermalField> {
    grid.validate()?;
    let n = grid.n_nodes();
    let a = Csr::from_grid(grid);
    let diag = a.diagonal();
    if diag.iter().any(|&d| d <= 0.0) {
        return Err(DseError::validation(
            "thermal grid",
            "isolated node without conductance",
        ));
    }
    let b = &grid.power;
    let b_norm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    let mut iterations = 0;
    let mut rel_residual = 0.0;
    if b_norm > 0.0 {
        let mut r = b.clone();
        let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz = dot(&r, &z);
        rel_residual = 1.0;
        while rel_residual > solver.rel_tol {
            if iterations >= solver.max_iterations {
                return Err(DseError::Solver {
                    iterations,
                    residual: rel_residual,
                });
            }
            a.mul(&p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            rel_residual = dot(&r, &r).sqrt() / b_norm;
            for i in 0..n {
                z[i] = r[i] / diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
            iterations += 1;
        }
    }
    let injected = grid.total_power();
    let outflow: f64 = grid.ground.iter().zip(&x).map(|(g, t)| g * t).sum();
    let energy_balance_error = if injected > 0.0 {
        (outflow - injected).abs() / injected
    } else {
        outflow.abs()
    };
    Ok(ThermalField {
        temps_c: x.iter().map(|t| t + grid.ambient_c).collect(),
        iterations,
        rel_residual,
        energy_balance_error,
    })
}

pub fn peak_temperature(
    placement: &Placement,
    graph: &NoiGraph,
    catalog: &Catalog,
    ip: &InterposerSpec,
    cfg: &ThermalConfig,
) -> Result<f64> {
    let grid = ThermalGrid::for_design(placement, graph, catalog, ip, cfg)?;
    Ok(solve_steady_state(&grid, &SolverConfig::default())?.peak_c())
}

/// Composition used to pin the utilization: 400 mm² on a 10×10 grid.
pub fn reference_composition() -> Composition {
    Composition::surface_only(vec![2, 27, 2, 27, 15])
}

/// Peak temperature of `comp` placed canonically on a 10×10 grid of `ip`.
pub fn reference_peak(
    kind: TopologyKind,
    comp: &Composition,
    ip: &InterposerSpec,
    catalog: &Catalog,
    cfg: &ThermalConfig,
) -> Result<f64> {
    let (rows, cols) = (10, 10);
    let pitch = (ip.area_mm2() / (rows * cols) as f64).sqrt();
    let placement =
        Placement::canonical(comp, rows, cols, pitch, &kind.canonical_order(rows, cols))?;
    let graph = build_topology(
        kind,
        &placement,
        &TopologyParams::default(),
        ip.thickness_um / 1000.0,
    )?;
    peak_temperature(&placement, &graph, catalog, ip, cfg)
}

/// Bisects the utilization so the silicon Floret reference peaks at `target_c`.
pub fn calibrate_utilization(
    catalog: &Catalog,
    base: &ThermalConfig,
    target_c: f64,
) -> Result<f64> {
    let ip = InterposerSpec::silicon(400.0);
    let comp = reference_composition();
    let peak_at = |u: f64| {
        let cfg = ThermalConfig {
            utilization: u,
            ..*base
        };
        reference_peak(TopologyKind::Floret, &comp, &ip, catalog, &cfg)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while peak_at(hi)? < target_c {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(DseError::Config("calibration target unreachable".into()));
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if peak_at(mid)? < target_c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma0: f64,
    pub eta_per_k: f64,
    pub t_ref_k: f64,
}

impl Default for NoiseModel {
    /// 0.1 % at 300 K rising to 8 % at 350 K.
    fn default() -> Self {
        NoiseModel {
            sigma0: 0.001,
            eta_per_k: 80f64.ln() / 50.0,
            t_ref_k: 300.0,
        }
    }
}

impl NoiseModel {
    pub fn conductance_variation(&self, t_kelvin: f64) -> Result<f64> {
        if !(t_kelvin >= 0.0) {
            return Err(DseError::validation(
                "temperature",
                "must be a non-negative kelvin value",
            ));
        }
        Ok(self.sigma0 * (self.eta_per_k * (t_kelvin - self.t_ref_k)).exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn dense_oracle(g: &ThermalGrid) -> Vec<f64> {
        let n = g.n_nodes();
        let m = DMatrix::from_row_slice(n, n, &g.dense_matrix());
        let x = m.lu().solve(&DVector::from_column_slice(&g.power)).unwrap();
        x.iter().map(|t| t + g.ambient_c).collect()
    }

    fn uniform_grid(rows: usize, cols: usize, src: &[(usize, f64)]) -> ThermalGrid {
        let n = rows * cols;
        let mut edges = Vec::new();
        for c in 0..n {
            if c % cols + 1 < cols {
                edges.push((c, c + 1, 2.0));
            }
            if c + cols < n {
                edges.push((c, c + cols, 2.0));
            }
        }
        let mut power = vec![0.0; n];
        for &(c, p) in src {
            power[c] = p;
        }
        ThermalGrid::from_network(25.0, n, edges, vec![0.1; n], power).unwrap()
    }

    #[test]
    fn single_node_closed_form() {
        let g = ThermalGrid::from_network(25.0, 1, vec![], vec![0.5], vec![10.0]).unwrap();
        let f = solve_steady_state(&g, &SolverConfig::default()).unwrap();
        assert!((f.temps_c[0] - 45.0).abs() < 1e-9);
    }

    #[test]
    fn zero_power_is_ambient() {
        let g = uniform_grid(4, 4, &[]);
        let f = solve_steady_state(&g, &SolverConfig::default()).unwrap();
        assert!(f.temps_c.iter().all(|&t| t == 25.0));
    }

    #[test]
    fn centred_source_is_rotation_symmetric() {
        let g = uniform_grid(5, 5, &[(12, 3.0)]);
        let t = solve_steady_state(&g, &SolverConfig::default())
            .unwrap()
            .temps_c;
        let rot = |c: usize| {
            let (r, col) = (c / 5, c % 5);
            col * 5 + (4 - r)
        };
        for c in 0..25 {
            assert!((t[c] - t[rot(c)]).abs() < 1e-8);
        }
        assert_eq!(t.iter().copied().fold(f64::MIN, f64::max), t[12]);
    }

    #[test]
    fn matches_dense_solve_on_design_grid() {
        let cat = Catalog::builtin();
        let comp = Composition::new(vec![2, 10, 2, 10, 6], vec![0, 3, 0, 0, 2]).unwrap();
        for ip in [InterposerSpec::glass(144.0), InterposerSpec::silicon(144.0)] {
            let p =
                Placement::canonical(&comp, 6, 6, 2.0, &TopologyKind::Mesh.canonical_order(6, 6))
                    .unwrap();
            let g =
                build_topology(TopologyKind::Mesh, &p, &TopologyParams::default(), 0.1).unwrap();
            let grid =
                ThermalGrid::for_design(&p, &g, &cat, &ip, &ThermalConfig::default()).unwrap();
            let f = solve_steady_state(&grid, &SolverConfig::default()).unwrap();
            let oracle = dense_oracle(&grid);
            for (a, b) in f.temps_c.iter().zip(&oracle) {
                assert!(((a - 25.0) - (b - 25.0)).abs() <= 1e-5 * (b - 25.0).abs().max(1e-12));
            }
            assert!(f.energy_balance_error < 1e-4);
        }
    }

    #[test]
    fn solver_reports_non_convergence() {
        let g = uniform_grid(6, 6, &[(0, 1.0)]);
        let err = solve_steady_state(
            &g,
            &SolverConfig {
                rel_tol: 1e-14,
                max_iterations: 2,
            },
        )
        .unwrap_err();
        assert!(matches!(err, DseError::Solver { iterations: 2, .. }));
    }

    #[test]
    fn noise_anchors() {
        let m = NoiseModel::default();
        assert!((m.conductance_variation(300.0).unwrap() - 0.001).abs() < 1e-15);
        assert!((m.conductance_variation(350.0).unwrap() - 0.08).abs() < 1e-12);
        assert!((m.conductance_variation(325.0).unwrap() - 0.00894).abs() < 1e-5);
        assert!(m.conductance_variation(-1.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn noise_strictly_increasing(t in 250.0f64..399.0, dt in 0.01f64..1.0) {
                let m = NoiseModel::default();
                prop_assert!(m.conductance_variation(t + dt).unwrap() > m.conductance_variation(t).unwrap());
            }

            #[test]
            fn more_power_never_cools(
                rows in 1usize..=5, cols in 1usize..=5,
                base in proptest::collection::vec(0.0f64..5.0, 25),
                bump_cell in 0usize..25, extra in 0.01f64..5.0,
            ) {
                let n = rows * cols;
                let src: Vec<(usize, f64)> = (0..n).map(|c| (c, base[c])).collect();
                let g1 = uniform_grid(rows, cols, &src);
                let mut g2 = g1.clone();
                g2.power[bump_cell % n] += extra;
                let t1 = solve_steady_state(&g1, &SolverConfig::default()).unwrap().temps_c;
                let t2 = solve_steady_state(&g2, &SolverConfig::default()).unwrap().temps_c;
                let o1 = dense_oracle(&g1);
                for i in 0..n {
                    prop_assert!(t2[i] >= t1[i] - 1e-9);
                    prop_assert!((t1[i] - o1[i]).abs() <= 1e-5 * (o1[i] - 25.0).abs().max(1e-9));
                }
            }
        }
    }
}
