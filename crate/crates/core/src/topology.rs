//! Network-on-interposer generation and hop metrics.
//!
//! Every grid site carries one router. A surface chiplet is the node of the
//! router at its site; an embedded chiplet is an extra node hanging off the
//! router above it through a single vertical link, so traffic to or from an
//! embedded chiplet always crosses the surface network.

use std::collections::{BTreeSet, VecDeque};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, Composition};
use crate::error::{DseError, Result};
use crate::mapper::TrafficMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    Mesh,
    Kite,
    #[serde(alias = "hexa_mesh")]
    HexaMesh,
    Floret,
}

impl TopologyKind {
    pub const ALL: [TopologyKind; 4] = [
        TopologyKind::Mesh,
        TopologyKind::Kite,
        TopologyKind::HexaMesh,
        TopologyKind::Floret,
    ];

    /// Cell visiting order used for placement and layer mapping.
    pub fn canonical_order(self, rows: usize, cols: usize) -> Vec<usize> {
        match self {
            TopologyKind::Floret => serpentine_order(rows, cols),
            _ => (0..rows * cols).collect(),
        }
    }
}

impl std::str::FromStr for TopologyKind {
    type Err = DseError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mesh" => Ok(TopologyKind::Mesh),
            "kite" => Ok(TopologyKind::Kite),
            "hexamesh" | "hexa_mesh" | "hexa-mesh" => Ok(TopologyKind::HexaMesh),
            "floret" => Ok(TopologyKind::Floret),
            other => Err(DseError::Config(format!("unknown topology kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TopologyKind::Mesh => "mesh",
            TopologyKind::Kite => "kite",
            TopologyKind::HexaMesh => "hexamesh",
            TopologyKind::Floret => "floret",
        };
        f.write_str(s)
    }
}

/// Boustrophedon scan: left-to-right on even rows, right-to-left on odd rows.
pub fn serpentine_order(rows: usize, cols: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        if r % 2 == 0 {
            out.extend((0..cols).map(|c| r * cols + c));
        } else {
            out.extend((0..cols).rev().map(|c| r * cols + c));
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Surface,
    Embedded,
}

/// Chiplet types per grid cell, on the surface and inside the interposer.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Placement {
    pub rows: usize,
    pub cols: usize,
    /// Stored in micrometres so the placement stays hashable.
    pub pitch_um: u64,
    pub surface: Vec<Option<usize>>,
    pub embedded: Vec<Option<usize>>,
}

impl Placement {
    pub fn empty(rows: usize, cols: usize, pitch_mm: f64) -> Self {
        Placement {
            rows,
            cols,
            pitch_um: (pitch_mm * 1000.0).round() as u64,
            surface: vec![None; rows * cols],
            embedded: vec![None; rows * cols],
        }
    }

    pub fn pitch_mm(&self) -> f64 {
        self.pitch_um as f64 / 1000.0
    }

    pub fn n_cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn cell_rc(&self, cell: usize) -> (usize, usize) {
        (cell / self.cols, cell % self.cols)
    }

    /// Distance of a cell centre from the grid centre, in cell units.
    pub fn distance_from_center(&self, cell: usize) -> f64 {
        let (r, c) = self.cell_rc(cell);
        let dr = r as f64 + 0.5 - self.rows as f64 / 2.0;
        let dc = c as f64 + 0.5 - self.cols as f64 / 2.0;
        (dr * dr + dc * dc).sqrt()
    }

    /// Cells ordered farthest-from-centre first, ties by cell index.
    pub fn cells_by_distance_desc(&self) -> Vec<usize> {
        let mut cells: Vec<usize> = (0..self.n_cells()).collect();
        cells.sort_by(|&a, &b| {
            self.distance_from_center(b)
                .partial_cmp(&self.distance_from_center(a))
                .unwrap()
                .then(a.cmp(&b))
        });
        cells
    }

    /// Surface chiplets in catalog order along `order`; embedded chiplets
    /// (catalog order) under the occupied cells farthest from the centre.
    pub fn canonical(
        comp: &Composition,
        rows: usize,
        cols: usize,
        pitch_mm: f64,
        order: &[usize],
    ) -> Result<Self> {
        let mut p = Placement::empty(rows, cols, pitch_mm);
        let n_surface = comp.n_surface() as usize;
        if n_surface > p.n_cells() {
            return Err(DseError::Config(format!(
                "{n_surface} surface chiplets do not fit a {rows}x{cols} grid"
            )));
        }
        let types = comp
            .surface
            .iter()
            .enumerate()
            .flat_map(|(t, &n)| std::iter::repeat_n(t, n as usize));
        for (cell, t) in order.iter().zip(types) {
            p.surface[*cell] = Some(t);
        }
        let hosts: Vec<usize> = p
            .cells_by_distance_desc()
            .into_iter()
            .filter(|&c| p.surface[c].is_some())
            .collect();
        let emb = comp
            .embedded
            .iter()
            .enumerate()
            .flat_map(|(t, &n)| std::iter::repeat_n(t, n as usize))
            .collect::<Vec<_>>();
        if emb.len() > hosts.len() {
            return Err(DseError::Config(format!(
                "{} embedded chiplets need as many surface hosts, only {} available",
                emb.len(),
                hosts.len()
            )));
        }
        for (cell, t) in hosts.into_iter().zip(emb) {
            p.embedded[cell] = Some(t);
        }
        Ok(p)
    }

    pub fn composition(&self, n_types: usize) -> Composition {
        let mut s = vec![0u32; n_types];
        let mut e = vec![0u32; n_types];
        for t in self.surface.iter().flatten() {
            s[*t] += 1;
        }
        for t in self.embedded.iter().flatten() {
            e[*t] += 1;
        }
        Composition {
            surface: s,
            embedded: e,
        }
    }

    pub fn validate(&self, comp: &Composition, catalog: &Catalog) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(DseError::validation("placement", "grid must be non-empty"));
        }
        if self.surface.len() != self.n_cells() || self.embedded.len() != self.n_cells() {
            return Err(DseError::validation(
                "placement",
                "cell vectors do not match grid size",
            ));
        }
        for cell in 0..self.n_cells() {
            if let Some(t) = self.embedded[cell] {
                if self.surface[cell].is_none() {
                    return Err(DseError::validation(
                        "placement",
                        format!("embedded chiplet at cell {cell} has no surface chiplet above it"),
                    ));
                }
                if !catalog
                    .chiplets
                    .get(t)
                    .map(|c| c.embeddable)
                    .unwrap_or(false)
                {
                    return Err(DseError::validation(
                        "placement",
                        format!("type {t} at cell {cell} is not embeddable"),
                    ));
                }
            }
            for t in self.surface[cell].iter().chain(self.embedded[cell].iter()) {
                if *t >= catalog.len() {
                    return Err(DseError::validation(
                        "placement",
                        format!("unknown chiplet type index {t}"),
                    ));
                }
            }
        }
        if self.composition(catalog.len()) != *comp {
            return Err(DseError::validation(
                "placement",
                "placement does not consume the composition exactly",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    Lateral,
    Vertical,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Link {
    pub a: usize,
    pub b: usize,
    pub length_mm: f64,
    pub kind: LinkKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct NodeInfo {
    pub cell: usize,
    pub tier: Tier,
    /// Chiplet type at this node, if any (empty sites keep a pass-through router).
    pub chiplet: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopologyParams {
    pub kite_stride: usize,
    pub floret_hub_interval: usize,
}

impl Default for TopologyParams {
    fn default() -> Self {
        TopologyParams {
            kite_stride: 2,
            floret_hub_interval: 8,
        }
    }
}

#[derive(Debug)]
pub struct NoiGraph {
    pub kind: TopologyKind,
    pub rows: usize,
    pub cols: usize,
    pub nodes: Vec<NodeInfo>,
    pub links: Vec<Link>,
    adjacency: Vec<Vec<usize>>,
    hops: OnceLock<Vec<Vec<u32>>>,
}

impl Clone for NoiGraph {
    fn clone(&self) -> Self {
        NoiGraph {
            kind: self.kind,
            rows: self.rows,
            cols: self.cols,
            nodes: self.nodes.clone(),
            links: self.links.clone(),
            adjacency: self.adjacency.clone(),
            hops: OnceLock::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PortStats {
    pub routers: usize,
    pub lateral_links: usize,
    pub vertical_links: usize,
    pub avg_lateral_ports: f64,
    pub max_lateral_ports: usize,
}

/// Undirected lateral site pairs for a grid of the given kind.
pub fn lateral_pairs(
    kind: TopologyKind,
    rows: usize,
    cols: usize,
    params: &TopologyParams,
) -> BTreeSet<(usize, usize)> {
    let id = |r: usize, c: usize| r * cols + c;
    let mut set = BTreeSet::new();
    let mut add = |a: usize, b: usize| {
        if a != b {
            set.insert((a.min(b), a.max(b)));
        }
    };
    match kind {
        TopologyKind::Mesh => {
            for r in 0..rows {
                for c in 0..cols {
                    if c + 1 < cols {
                        add(id(r, c), id(r, c + 1));
                    }
                    if r + 1 < rows {
                        add(id(r, c), id(r + 1, c));
                    }
                }
            }
        }
        TopologyKind::Kite => {
            for r in 0..rows {
                for (a, b) in folded_ring(cols, params.kite_stride) {
                    add(id(r, a), id(r, b));
                }
            }
            for c in 0..cols {
                for (a, b) in folded_ring(rows, params.kite_stride) {
                    add(id(a, c), id(b, c));
                }
            }
        }
        TopologyKind::HexaMesh => {
            let interior = |r: usize, c: usize| r > 0 && c > 0 && r + 1 < rows && c + 1 < cols;
            for r in 0..rows {
                for c in 0..cols {
                    if c + 1 < cols {
                        add(id(r, c), id(r, c + 1));
                    }
                    if r + 1 < rows {
                        add(id(r, c), id(r + 1, c));
                        // brick offset: even rows reach down-left, odd rows down-right
                        let diag = if r % 2 == 0 {
                            c.checked_sub(1)
                        } else {
                            Some(c + 1).filter(|&x| x < cols)
                        };
                        if let Some(dc) = diag {
                            if interior(r, c) && interior(r + 1, dc) {
                                add(id(r, c), id(r + 1, dc));
                            }
                        }
                    }
                }
            }
        }
        TopologyKind::Floret => {
            let order = serpentine_order(rows, cols);
            for w in order.windows(2) {
                add(w[0], w[1]);
            }
            let h = params.floret_hub_interval.max(1);
            let hubs: Vec<usize> = order.iter().step_by(h).copied().collect();
            for w in hubs.windows(2) {
                add(w[0], w[1]);
            }
        }
    }
    set
}

/// One ring dimension of a folded torus: stride links plus closing short
/// links, so interior positions keep degree 2.
fn folded_ring(n: usize, stride: usize) -> Vec<(usize, usize)> {
    let stride = stride.max(1);
    let mut deg = vec![0usize; n];
    let mut out = Vec::new();
    for i in 0..n {
        if i + stride < n {
            out.push((i, i + stride));
            deg[i] += 1;
            deg[i + stride] += 1;
        }
    }
    for i in 0..n.saturating_sub(1) {
        if deg[i] < 2 && deg[i + 1] < 2 && !out.contains(&(i, i + 1)) {
            out.push((i, i + 1));
            deg[i] += 1;
            deg[i + 1] += 1;
        }
    }
    out
}

/// Builds the NoI for `placement`. Vertical links have length
/// `vertical_length_mm` (the interposer thickness).
pub fn build_topology(
    kind: TopologyKind,
    placement: &Placement,
    params: &TopologyParams,
    vertical_length_mm: f64,
) -> Result<NoiGraph> {
    let (rows, cols) = (placement.rows, placement.cols);
    if rows == 0 || cols == 0 {
        return Err(DseError::Config("placement grid must be non-empty".into()));
    }
    let pitch = placement.pitch_mm();
    let n_sites = rows * cols;
    let mut nodes: Vec<NodeInfo> = (0..n_sites)
        .map(|cell| NodeInfo {
            cell,
            tier: Tier::Surface,
            chiplet: placement.surface[cell],
        })
        .collect();
    let mut links = Vec::new();
    for (a, b) in lateral_pairs(kind, rows, cols, params) {
        let (ra, ca) = (a / cols, a % cols);
        let (rb, cb) = (b / cols, b % cols);
        let manhattan = ra.abs_diff(rb) + ca.abs_diff(cb);
        links.push(Link {
            a,
            b,
            length_mm: manhattan as f64 * pitch,
            kind: LinkKind::Lateral,
        });
    }
    for cell in 0..n_sites {
        if let Some(t) = placement.embedded[cell] {
            let id = nodes.len();
            nodes.push(NodeInfo {
                cell,
                tier: Tier::Embedded,
                chiplet: Some(t),
            });
            links.push(Link {
                a: cell,
                b: id,
                length_mm: vertical_length_mm,
                kind: LinkKind::Vertical,
            });
        }
    }
    let mut adjacency = vec![Vec::new(); nodes.len()];
    for l in &links {
        adjacency[l.a].push(l.b);
        adjacency[l.b].push(l.a);
    }
    for adj in &mut adjacency {
        adj.sort_unstable();
    }
    Ok(NoiGraph {
        kind,
        rows,
        cols,
        nodes,
        links,
        adjacency,
        hops: OnceLock::new(),
    })
}

impl NoiGraph {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_sites(&self) -> usize {
        self.rows * self.cols
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn lateral_ports(&self, node: usize) -> usize {
        if self.nodes[node].tier == Tier::Embedded {
            return 0;
        }
        self.adjacency[node]
            .iter()
            .filter(|&&n| n < self.n_sites())
            .count()
    }

    /// Node id of the embedded chiplet under `cell`, if any.
    pub fn embedded_node_at(&self, cell: usize) -> Option<usize> {
        self.nodes[self.n_sites()..]
            .iter()
            .position(|n| n.cell == cell)
            .map(|k| self.n_sites() + k)
    }

    pub fn port_stats(&self) -> PortStats {
        let sites = self.n_sites();
        let lateral: Vec<usize> = (0..sites).map(|n| self.lateral_ports(n)).collect();
        PortStats {
            routers: sites,
            lateral_links: self
                .links
                .iter()
                .filter(|l| l.kind == LinkKind::Lateral)
                .count(),
            vertical_links: self
                .links
                .iter()
                .filter(|l| l.kind == LinkKind::Vertical)
                .count(),
            avg_lateral_ports: lateral.iter().sum::<usize>() as f64 / sites as f64,
            max_lateral_ports: lateral.iter().copied().max().unwrap_or(0),
        }
    }

    fn bfs(&self, src: usize) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.n_nodes()];
        dist[src] = 0;
        let mut q = VecDeque::from([src]);
        while let Some(u) = q.pop_front() {
            for &v in &self.adjacency[u] {
                if dist[v] == u32::MAX {
                    dist[v] = dist[u] + 1;
                    q.push_back(v);
                }
            }
        }
        dist
    }

    /// All-pairs hop table, computed once.
    pub fn hop_table(&self) -> &[Vec<u32>] {
        self.hops
            .get_or_init(|| (0..self.n_nodes()).map(|s| self.bfs(s)).collect())
    }

    pub fn shortest_hops(&self, i: usize, j: usize) -> Result<u32> {
        if i >= self.n_nodes() || j >= self.n_nodes() {
            return Err(DseError::Internal(format!(
                "node index out of range ({i}, {j})"
            )));
        }
        match self.hop_table()[i][j] {
            u32::MAX => Err(DseError::Internal(format!(
                "nodes {i} and {j} are disconnected"
            ))),
            h => Ok(h),
        }
    }

    /// Number of vertical links on any shortest path between i and j.
    pub fn vertical_hops(&self, i: usize, j: usize) -> u32 {
        if i == j {
            return 0;
        }
        let emb = |n: usize| (self.nodes[n].tier == Tier::Embedded) as u32;
        emb(i) + emb(j)
    }

    pub fn is_connected(&self) -> bool {
        self.hop_table()[0].iter().all(|&d| d != u32::MAX)
    }
}

/// Traffic-weighted mean hop count, Σ F·H / Σ F.
pub fn average_hop_count(g: &NoiGraph, traffic: &TrafficMatrix) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, j, f) in traffic.flows() {
        if f < 0.0 {
            return Err(DseError::UndefinedInput("negative traffic entry".into()));
        }
        num += f * g.shortest_hops(i, j)? as f64;
        den += f;
    }
    if den <= 0.0 {
        return Err(DseError::UndefinedInput(
            "traffic matrix is all zero".into(),
        ));
    }
    Ok(num / den)
}
