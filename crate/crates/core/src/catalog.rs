//! Chiplet types, interposer materials and composition-level aggregates.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DseError, Result};

/// Embedded default catalog, identical to `data/catalog_default.json`.
pub const BUILTIN_CATALOG_JSON: &str = include_str!("../data/catalog_default.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemTech {
    Sram,
    Reram,
}

/// One PIM chiplet type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChipletSpec {
    pub name: String,
    pub mem_tech: MemTech,
    pub crossbar_rows: u32,
    pub crossbar_cols: u32,
    pub bits_per_cell: u32,
    pub adc_precision: u32,
    pub clock_mhz: f64,
    pub storage_kb: f64,
    pub area_mm2: f64,
    /// Throughput in tera-operations per second.
    pub tops: f64,
    pub energy_per_mac_j: f64,
    pub embeddable: bool,
    /// Explicit peak power; when absent it is derived from TOPS and energy/MAC.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_power_w: Option<f64>,
}

impl ChipletSpec {
    pub fn ops_per_second(&self) -> f64 {
        self.tops * 1e12
    }

    /// Side length of the (square) die footprint.
    pub fn side_mm(&self) -> f64 {
        self.area_mm2.sqrt()
    }

    fn validate(&self) -> Result<()> {
        let ctx = || format!("chiplet `{}`", self.name);
        let positive = [
            ("clock_mhz", self.clock_mhz),
            ("storage_kb", self.storage_kb),
            ("area_mm2", self.area_mm2),
            ("tops", self.tops),
            ("energy_per_mac_j", self.energy_per_mac_j),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(DseError::validation(
                    ctx(),
                    format!("{field} must be > 0, got {v}"),
                ));
            }
        }
        let ints = [
            ("crossbar_rows", self.crossbar_rows),
            ("crossbar_cols", self.crossbar_cols),
            ("bits_per_cell", self.bits_per_cell),
            ("adc_precision", self.adc_precision),
        ];
        for (field, v) in ints {
            if v == 0 {
                return Err(DseError::validation(ctx(), format!("{field} must be > 0")));
            }
        }
        if let Some(p) = self.peak_power_w {
            if !(p.is_finite() && p > 0.0) {
                return Err(DseError::validation(
                    ctx(),
                    format!("peak_power_w must be > 0, got {p}"),
                ));
            }
        }
        if self.embeddable && self.mem_tech != MemTech::Sram {
            return Err(DseError::validation(
                ctx(),
                "only SRAM chiplets may be embeddable",
            ));
        }
        Ok(())
    }
}

/// Peak power of one chiplet at the given utilization.
///
/// An explicit `peak_power_w` on the spec wins over the derived
/// `utilization * ops/s * J/MAC` value (and is itself scaled by utilization).
pub fn derive_peak_power(spec: &ChipletSpec, utilization: f64) -> f64 {
    let u = utilization.clamp(0.0, 1.0);
    match spec.peak_power_w {
        Some(p) => u * p,
        None => u * spec.tops * spec.energy_per_mac_j * 1e12,
    }
}

/// Ordered list of chiplet types plus the package-wide chiplet CTE.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    /// Effective CTE of a mounted chiplet (1/K).
    pub chiplet_cte_per_k: f64,
    pub chiplets: Vec<ChipletSpec>,
}

impl Catalog {
    pub fn builtin() -> Self {
        Self::from_json_str(BUILTIN_CATALOG_JSON, "catalog_default.json")
            .expect("embedded default catalog is valid")
    }

    pub fn from_json_str(text: &str, origin: &str) -> Result<Self> {
        let cat: Catalog = serde_json::from_str(text).map_err(|source| DseError::Parse {
            path: origin.into(),
            source,
        })?;
        cat.validate()?;
        Ok(cat)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| DseError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cat: Catalog = serde_json::from_str(&text).map_err(|source| DseError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cat.validate()
            .map_err(|e| DseError::validation(path.display().to_string(), e.to_string()))?;
        Ok(cat)
    }

    pub fn validate(&self) -> Result<()> {
        if self.chiplets.is_empty() {
            return Err(DseError::validation("catalog", "no chiplet types"));
        }
        if !(self.chiplet_cte_per_k.is_finite() && self.chiplet_cte_per_k > 0.0) {
            return Err(DseError::validation(
                "catalog",
                "chiplet_cte_per_k must be > 0",
            ));
        }
        for (i, c) in self.chiplets.iter().enumerate() {
            c.validate()?;
            if self.chiplets[..i].iter().any(|o| o.name == c.name) {
                return Err(DseError::validation(
                    "catalog",
                    format!("duplicate chiplet name `{}`", c.name),
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.chiplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chiplets.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.chiplets
            .iter()
            .position(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub fn get(&self, idx: usize) -> &ChipletSpec {
        &self.chiplets[idx]
    }

    /// Keeps only the named types, in the given order.
    pub fn subset(&self, names: &[&str]) -> Result<Catalog> {
        let chiplets = names
            .iter()
            .map(|n| {
                self.index_of(n)
                    .map(|i| self.chiplets[i].clone())
                    .ok_or_else(|| DseError::Config(format!("unknown chiplet type `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Catalog {
            chiplet_cte_per_k: self.chiplet_cte_per_k,
            chiplets,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Material {
    Silicon,
    Glass,
}

impl std::fmt::Display for Material {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Material::Silicon => f.write_str("silicon"),
            Material::Glass => f.write_str("glass"),
        }
    }
}

/// Interposer substrate properties.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterposerSpec {
    pub material: Material,
    pub width_mm: f64,
    pub height_mm: f64,
    pub thickness_um: f64,
    pub thermal_conductivity_w_mk: f64,
    pub youngs_modulus_gpa: f64,
    pub stiffness_factor: f64,
    pub cte_per_k: f64,
    /// Relative fabrication cost per mm² of interposer.
    pub unit_cost: f64,
    pub comm_freq_ghz: f64,
    /// Whether chiplets may be embedded inside the substrate.
    pub supports_embedding: bool,
}

pub const SILICON_UNIT_COST: f64 = 1.0;

impl InterposerSpec {
    /// Square silicon interposer of the given area.
    pub fn silicon(area_mm2: f64) -> Self {
        let side = area_mm2.sqrt();
        InterposerSpec {
            material: Material::Silicon,
            width_mm: side,
            height_mm: side,
            thickness_um: 100.0,
            thermal_conductivity_w_mk: 130.0,
            youngs_modulus_gpa: 150.0,
            stiffness_factor: 1.0,
            cte_per_k: 2.6e-6,
            unit_cost: SILICON_UNIT_COST,
            comm_freq_ghz: 1.15,
            supports_embedding: false,
        }
    }

    /// Square glass interposer of the given area.
    pub fn glass(area_mm2: f64) -> Self {
        let side = area_mm2.sqrt();
        InterposerSpec {
            material: Material::Glass,
            width_mm: side,
            height_mm: side,
            thickness_um: 100.0,
            thermal_conductivity_w_mk: 1.0,
            youngs_modulus_gpa: 70.0,
            stiffness_factor: 1.0,
            cte_per_k: 3.35e-6,
            unit_cost: SILICON_UNIT_COST / 8.0,
            comm_freq_ghz: 2.0,
            supports_embedding: true,
        }
    }

    pub fn of_material(material: Material, area_mm2: f64) -> Self {
        match material {
            Material::Silicon => Self::silicon(area_mm2),
            Material::Glass => Self::glass(area_mm2),
        }
    }

    pub fn area_mm2(&self) -> f64 {
        self.width_mm * self.height_mm
    }

    /// Half of the longer lateral dimension.
    pub fn half_length_mm(&self) -> f64 {
        0.5 * self.width_mm.max(self.height_mm)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("width_mm", self.width_mm),
            ("height_mm", self.height_mm),
            ("thickness_um", self.thickness_um),
            ("thermal_conductivity_w_mk", self.thermal_conductivity_w_mk),
            ("youngs_modulus_gpa", self.youngs_modulus_gpa),
            ("stiffness_factor", self.stiffness_factor),
            ("cte_per_k", self.cte_per_k),
            ("unit_cost", self.unit_cost),
            ("comm_freq_ghz", self.comm_freq_ghz),
        ];
        for (field, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(DseError::validation(
                    "interposer",
                    format!("{field} must be > 0, got {v}"),
                ));
            }
        }
        Ok(())
    }
}

/// Chiplet counts per catalog type, split into surface-mounted and embedded.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Composition {
    pub surface: Vec<u32>,
    pub embedded: Vec<u32>,
}

impl Composition {
    pub fn surface_only(counts: Vec<u32>) -> Self {
        let embedded = vec![0; counts.len()];
        Composition {
            surface: counts,
            embedded,
        }
    }

    pub fn new(surface: Vec<u32>, embedded: Vec<u32>) -> Result<Self> {
        if surface.len() != embedded.len() {
            return Err(DseError::Config(format!(
                "surface ({}) and embedded ({}) count vectors differ in length",
                surface.len(),
                embedded.len()
            )));
        }
        Ok(Composition { surface, embedded })
    }

    pub fn len(&self) -> usize {
        self.surface.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surface.is_empty()
    }

    /// α = surface + embedded.
    pub fn total(&self) -> Vec<u32> {
        self.surface
            .iter()
            .zip(&self.embedded)
            .map(|(s, e)| s + e)
            .collect()
    }

    pub fn n_surface(&self) -> u32 {
        self.surface.iter().sum()
    }

    pub fn n_embedded(&self) -> u32 {
        self.embedded.iter().sum()
    }

    pub fn n_chiplets(&self) -> u32 {
        self.n_surface() + self.n_embedded()
    }

    pub fn validate(&self, catalog: &Catalog) -> Result<()> {
        if self.surface.len() != catalog.len() || self.embedded.len() != catalog.len() {
            return Err(DseError::Config(format!(
                "composition has {} entries but catalog has {} types",
                self.surface.len(),
                catalog.len()
            )));
        }
        for (i, &e) in self.embedded.iter().enumerate() {
            if e > 0 && !catalog.chiplets[i].embeddable {
                return Err(DseError::validation(
                    "composition",
                    format!("type `{}` is not embeddable", catalog.chiplets[i].name),
                ));
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for Composition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", format_counts(&self.surface))?;
        if self.n_embedded() > 0 {
            write!(f, "+e{}", format_counts(&self.embedded))?;
        }
        Ok(())
    }
}

/// `[a;b;c]`; semicolons keep the value CSV-safe.
pub fn format_counts(v: &[u32]) -> String {
    let inner: Vec<String> = v.iter().map(|c| c.to_string()).collect();
    format!("[{}]", inner.join(";"))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub total_tops: f64,
    pub total_storage_kb: f64,
    pub surface_area_mm2: f64,
    pub embedded_area_mm2: f64,
    pub total_area_mm2: f64,
    pub total_peak_power_w: f64,
}

impl AggregateMetrics {
    pub fn total_storage_mb(&self) -> f64 {
        self.total_storage_kb / 1024.0
    }
}

pub fn aggregate_metrics(comp: &Composition, catalog: &Catalog) -> Result<AggregateMetrics> {
    comp.validate(catalog)?;
    let mut m = AggregateMetrics::default();
    for (i, spec) in catalog.chiplets.iter().enumerate() {
        let s = comp.surface[i] as f64;
        let e = comp.embedded[i] as f64;
        let n = s + e;
        m.total_tops += n * spec.tops;
        m.total_storage_kb += n * spec.storage_kb;
        m.surface_area_mm2 += s * spec.area_mm2;
        m.embedded_area_mm2 += e * spec.area_mm2;
        m.total_peak_power_w += n * derive_peak_power(spec, 1.0);
    }
    m.total_area_mm2 = m.surface_area_mm2 + m.embedded_area_mm2;
    Ok(m)
}

/// How reclaimed router area is turned into extra surface chiplets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillPolicy {
    /// All reclaimed area goes to the type with the lowest peak power per mm².
    #[default]
    LowestPowerDensity,
    /// Area is split in proportion to each type's current area share.
    Proportional,
    /// All reclaimed area goes to the type with the highest TOPS per mm².
    HighestTopsDensity,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReclaimResult {
    pub composition: Composition,
    pub added: Vec<u32>,
    pub reclaimed_area_mm2: f64,
    pub initial_tops: f64,
    pub final_tops: f64,
}

impl ReclaimResult {
    pub fn tops_gain_fraction(&self) -> f64 {
        if self.initial_tops == 0.0 {
            0.0
        } else {
            self.final_tops / self.initial_tops - 1.0
        }
    }
}

/// Converts the area freed by moving NoI routers into the interposer into
/// additional surface chiplets.
pub fn reclaim_router_area(
    comp: &Composition,
    catalog: &Catalog,
    router_area_pct: f64,
    policy: FillPolicy,
) -> Result<ReclaimResult> {
    if !(0.0..1.0).contains(&router_area_pct) {
        return Err(DseError::Config(format!(
            "router_area_pct must be in [0, 1), got {router_area_pct}"
        )));
    }
    let before = aggregate_metrics(comp, catalog)?;
    let budget = router_area_pct * before.surface_area_mm2;
    let mut added = vec![0u32; catalog.len()];

    let density_pick = |score: &dyn Fn(&ChipletSpec) -> f64, prefer_low: bool| -> usize {
        let mut best = 0;
        for (i, c) in catalog.chiplets.iter().enumerate() {
            let better = if prefer_low {
                score(c) < score(&catalog.chiplets[best])
            } else {
                score(c) > score(&catalog.chiplets[best])
            };
            if better {
                best = i;
            }
        }
        best
    };

    match policy {
        FillPolicy::LowestPowerDensity => {
            let t = density_pick(&|c| derive_peak_power(c, 1.0) / c.area_mm2, true);
            added[t] = (budget / catalog.chiplets[t].area_mm2 + 1e-9).floor() as u32;
        }
        FillPolicy::HighestTopsDensity => {
            let t = density_pick(&|c| c.tops / c.area_mm2, false);
            added[t] = (budget / catalog.chiplets[t].area_mm2 + 1e-9).floor() as u32;
        }
        FillPolicy::Proportional => {
            if before.surface_area_mm2 > 0.0 {
                for (i, c) in catalog.chiplets.iter().enumerate() {
                    let share = comp.surface[i] as f64 * c.area_mm2 / before.surface_area_mm2;
                    added[i] = (budget * share / c.area_mm2 + 1e-9).floor() as u32;
                }
            }
        }
    }

    let mut out = comp.clone();
    for (s, a) in out.surface.iter_mut().zip(&added) {
        *s += a;
    }
    let after = aggregate_metrics(&out, catalog)?;
    Ok(ReclaimResult {
        composition: out,
        added,
        reclaimed_area_mm2: budget,
        initial_tops: before.total_tops,
        final_tops: after.total_tops,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn glass_opt() -> Composition {
        Composition::surface_only(vec![2, 27, 2, 27, 15])
    }

    #[test]
    fn default_catalog_matches_table() {
        let cat = Catalog::builtin();
        let names: Vec<_> = cat.chiplets.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(
            names,
            ["Standard", "Shared", "Adder", "Accumulator", "ADCLess"]
        );
        let storage: Vec<_> = cat.chiplets.iter().map(|c| c.storage_kb).collect();
        assert_eq!(storage, [1196.0, 1080.0, 108.0, 2400.0, 300.0]);
        let area: Vec<_> = cat.chiplets.iter().map(|c| c.area_mm2).collect();
        assert_eq!(area, [4.0, 8.0, 4.0, 4.0, 4.0]);
        let tops: Vec<_> = cat.chiplets.iter().map(|c| c.tops).collect();
        assert_eq!(tops, [30.0, 27.0, 11.0, 35.0, 3.8]);
        let e: Vec<_> = cat.chiplets.iter().map(|c| c.energy_per_mac_j).collect();
        assert_eq!(e, [0.87e-12, 0.30e-12, 0.18e-12, 0.22e-12, 0.27e-12]);
        for c in &cat.chiplets {
            assert_eq!(c.embeddable, c.mem_tech == MemTech::Sram);
        }
    }

    #[test]
    fn glass_optimized_composition_aggregates() {
        let cat = Catalog::builtin();
        let m = aggregate_metrics(&glass_opt(), &cat).unwrap();
        assert!((m.total_tops - 1813.0).abs() < 1e-9);
        assert!((m.total_storage_kb - 101_068.0).abs() < 1e-9);
        assert!((m.total_area_mm2 - 400.0).abs() < 1e-12);
        let mb = m.total_storage_mb();
        assert!((97.0..=99.0).contains(&mb), "{mb}");
    }

    #[test]
    fn empty_composition_is_zero() {
        let cat = Catalog::builtin();
        let m = aggregate_metrics(&Composition::surface_only(vec![0; 5]), &cat).unwrap();
        assert_eq!(m, AggregateMetrics::default());
    }

    #[test]
    fn length_mismatch_is_config_error() {
        let cat = Catalog::builtin();
        let err = aggregate_metrics(&Composition::surface_only(vec![1, 2]), &cat).unwrap_err();
        assert!(matches!(err, DseError::Config(_)));
    }

    #[test]
    fn embedding_moves_area_not_tops() {
        let cat = Catalog::builtin();
        let flat = aggregate_metrics(&glass_opt(), &cat).unwrap();
        let split = Composition::new(vec![2, 22, 2, 27, 15], vec![0, 5, 0, 0, 0]).unwrap();
        let m = aggregate_metrics(&split, &cat).unwrap();
        assert_eq!(m.total_tops, flat.total_tops);
        assert_eq!(m.total_storage_kb, flat.total_storage_kb);
        assert_eq!(m.embedded_area_mm2, 40.0);
        assert_eq!(m.surface_area_mm2, 360.0);
    }

    #[test]
    fn reram_cannot_be_embedded() {
        let cat = Catalog::builtin();
        let c = Composition::new(vec![0; 5], vec![1, 0, 0, 0, 0]).unwrap();
        assert!(c.validate(&cat).is_err());
    }

    #[test]
    fn peak_power_derivation() {
        let cat = Catalog::builtin();
        assert!((derive_peak_power(&cat.chiplets[0], 1.0) - 26.1).abs() < 1e-9);
        assert!((derive_peak_power(&cat.chiplets[4], 1.0) - 1.026).abs() < 1e-12);
        assert_eq!(derive_peak_power(&cat.chiplets[2], 0.0), 0.0);
        let mut spec = cat.chiplets[0].clone();
        spec.peak_power_w = Some(5.0);
        assert_eq!(derive_peak_power(&spec, 1.0), 5.0);
    }

    #[test]
    fn power_density_ordering() {
        // Standard is the densest heat source; ADCLess and Shared the mildest.
        let cat = Catalog::builtin();
        let dens: Vec<f64> = cat
            .chiplets
            .iter()
            .map(|c| derive_peak_power(c, 1.0) / c.area_mm2)
            .collect();
        let max = dens.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(dens[0], max);
        assert!(dens[4] < dens[3] && dens[1] < dens[3]);
    }

    #[test]
    fn reclaim_zero_pct_is_identity() {
        let cat = Catalog::builtin();
        let r = reclaim_router_area(&glass_opt(), &cat, 0.0, FillPolicy::default()).unwrap();
        assert_eq!(r.composition, glass_opt());
        assert_eq!(r.final_tops, r.initial_tops);
    }

    #[test]
    fn reclaim_rejects_out_of_range_pct() {
        let cat = Catalog::builtin();
        assert!(reclaim_router_area(&glass_opt(), &cat, 1.0, FillPolicy::default()).is_err());
        assert!(reclaim_router_area(&glass_opt(), &cat, -0.1, FillPolicy::default()).is_err());
    }

    #[test]
    fn reclaim_stays_within_budget() {
        let cat = Catalog::builtin();
        for policy in [
            FillPolicy::LowestPowerDensity,
            FillPolicy::Proportional,
            FillPolicy::HighestTopsDensity,
        ] {
            let r = reclaim_router_area(&glass_opt(), &cat, 0.0666, policy).unwrap();
            let added_area: f64 = r
                .added
                .iter()
                .zip(&cat.chiplets)
                .map(|(n, c)| *n as f64 * c.area_mm2)
                .sum();
            assert!(added_area <= r.reclaimed_area_mm2 + 1e-9, "{policy:?}");
        }
    }
}
