//! Package-level constraints: warpage, fabrication cost and area.
//!
//! Warpage units: lengths in mm, thickness in μm, CTE in 1/K, output in μm.
//! The cosh wavenumber is the Young's modulus times `k_per_mm_per_gpa`, and
//! the chiplet half-length enters the cosh argument normalised by the
//! interposer half-length, which keeps the profile monotone in |x|. A single
//! scale factor maps the bracket to micrometres; it is fixed so a 400 mm²
//! glass package with no embedding sits just under the 150 μm limit.

use serde::{Deserialize, Serialize};

use crate::catalog::{
    aggregate_metrics, Catalog, Composition, InterposerSpec, Material, SILICON_UNIT_COST,
};
use crate::error::{DseError, Result};

pub const WARPAGE_LIMIT_UM: f64 = 150.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarpageParams {
    pub tau_um: f64,
    pub delta_psi_per_k: f64,
    pub delta_t_k: f64,
    pub lambda: f64,
    pub stiffness_d: f64,
    /// cosh wavenumber, 1/mm
    pub youngs_k: f64,
    pub d_mm: f64,
    pub rho_mm: f64,
    /// μm per unit of the normalised expression
    pub scale: f64,
}

impl WarpageParams {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            self.tau_um,
            self.delta_t_k,
            self.lambda,
            self.stiffness_d,
            self.youngs_k,
            self.d_mm,
            self.rho_mm,
            self.scale,
        ];
        if pos.iter().any(|v| !(v.is_finite() && *v > 0.0)) || !(self.delta_psi_per_k >= 0.0) {
            return Err(DseError::validation(
                "warpage parameters",
                "values must be positive",
            ));
        }
        if self.rho_mm < self.d_mm {
            return Err(DseError::validation(
                "warpage parameters",
                "interposer half-length below chiplet half-length",
            ));
        }
        Ok(())
    }
}

/// (cosh a − 1) / cosh b without overflowing for large arguments.
fn cosh_ratio(a: f64, b: f64) -> f64 {
    let (a, b) = (a.abs(), b.abs());
    if b < 30.0 {
        return (a.cosh() - 1.0) / b.cosh();
    }
    // cosh b ≈ e^b / 2 here; cosh a − 1 = (e^a + e^-a − 2) / 2
    ((a - b).exp() + (-a - b).exp() - 2.0 * (-b).exp()) / (1.0 + (-2.0 * b).exp())
}

pub fn warpage_at(x_mm: f64, p: &WarpageParams) -> Result<f64> {
    if x_mm.abs() > p.rho_mm * (1.0 + 1e-12) {
        return Err(DseError::validation(
            "warpage",
            format!("|x| = {} exceeds half-length {}", x_mm.abs(), p.rho_mm),
        ));
    }
    let k = p.youngs_k;
    let d_norm = p.d_mm / p.rho_mm;
    let bracket = x_mm * x_mm / 2.0 - cosh_ratio(k * x_mm * d_norm, k * p.rho_mm) / (k * k);
    let pre = p.tau_um * p.delta_psi_per_k * p.delta_t_k / (2.0 * p.lambda * p.stiffness_d);
    let v = p.scale * pre * bracket;
    if !v.is_finite() {
        return Err(DseError::validation("warpage", "result out of range"));
    }
    Ok(v)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WarpageConfig {
    pub delta_t_k: f64,
    pub k_per_mm_per_gpa: f64,
    /// Thickness relief per unit embedded fill.
    pub relief_coefficient: f64,
    pub min_tau_fraction: f64,
    pub samples: usize,
    pub limit_um: f64,
    /// Glass warpage (μm) at 400 mm² with no embedding; sets the scale.
    pub glass_reference_um: f64,
}

impl Default for WarpageConfig {
    fn default() -> Self {
        WarpageConfig {
            delta_t_k: 80.0,
            k_per_mm_per_gpa: 0.01,
            relief_coefficient: 9.0,
            min_tau_fraction: 0.05,
            samples: 201,
            limit_um: WARPAGE_LIMIT_UM,
            glass_reference_um: 148.0,
        }
    }
}

const REFERENCE_HALF_CHIPLET_MM: f64 = 1.0;

impl WarpageConfig {
    fn unscaled(
        &self,
        ip: &InterposerSpec,
        chiplet_cte: f64,
        tau_um: f64,
        d_mm: f64,
    ) -> WarpageParams {
        WarpageParams {
            tau_um,
            delta_psi_per_k: (chiplet_cte - ip.cte_per_k).abs(),
            delta_t_k: self.delta_t_k,
            lambda: ip.thermal_conductivity_w_mk,
            stiffness_d: ip.stiffness_factor,
            youngs_k: ip.youngs_modulus_gpa * self.k_per_mm_per_gpa,
            d_mm: d_mm.min(ip.half_length_mm()),
            rho_mm: ip.half_length_mm(),
            scale: 1.0,
        }
    }

    /// μm per unit so glass at 400 mm² lands on `glass_reference_um`.
    pub fn scale(&self, chiplet_cte: f64) -> f64 {
        let ip = InterposerSpec::glass(400.0);
        let p = self.unscaled(&ip, chiplet_cte, ip.thickness_um, REFERENCE_HALF_CHIPLET_MM);
        let raw = warpage_at(p.rho_mm, &p).expect("reference warpage");
        self.glass_reference_um / raw
    }

    pub fn params(
        &self,
        ip: &InterposerSpec,
        catalog: &Catalog,
        comp: &Composition,
    ) -> Result<(WarpageParams, f64)> {
        let m = aggregate_metrics(comp, catalog)?;
        let fill = if ip.area_mm2() > 0.0 {
            m.embedded_area_mm2 / ip.area_mm2()
        } else {
            0.0
        };
        let relief = (1.0 - fill * self.relief_coefficient).max(self.min_tau_fraction);
        let d = comp
            .total()
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .map(|(t, _)| catalog.get(t).side_mm() / 2.0)
            .fold(None, |acc: Option<f64>, v| {
                Some(acc.map_or(v, |a| a.max(v)))
            })
            .unwrap_or(REFERENCE_HALF_CHIPLET_MM);
        let mut p = self.unscaled(ip, catalog.chiplet_cte_per_k, ip.thickness_um * relief, d);
        p.scale = self.scale(catalog.chiplet_cte_per_k);
        p.validate()?;
        Ok((p, fill))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WarpageReport {
    pub max_warpage_um: f64,
    pub feasible: bool,
    pub tau_eff_um: f64,
    pub embed_fill_fraction: f64,
}

pub fn warpage_profile(p: &WarpageParams, samples: usize) -> Result<Vec<(f64, f64)>> {
    let n = samples.max(2);
    (0..n)
        .map(|i| {
            let x = p.rho_mm * i as f64 / (n - 1) as f64;
            warpage_at(x, p).map(|w| (x, w))
        })
        .collect()
}

pub fn check_warpage(
    comp: &Composition,
    catalog: &Catalog,
    ip: &InterposerSpec,
    cfg: &WarpageConfig,
) -> Result<WarpageReport> {
    let (p, fill) = cfg.params(ip, catalog, comp)?;
    let max = warpage_profile(&p, cfg.samples)?
        .into_iter()
        .map(|(_, w)| w.abs())
        .fold(0.0, f64::max);
    Ok(WarpageReport {
        max_warpage_um: max,
        feasible: max <= cfg.limit_um,
        tau_eff_um: p.tau_um,
        embed_fill_fraction: fill,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TsvSpec {
    pub count_per_chiplet: u32,
    pub area_factor: f64,
    pub depth_um: f64,
    /// Cost per unit via area relative to silicon interposer unit area.
    pub cost_rel_unit_area: f64,
}

impl TsvSpec {
    pub fn for_material(m: Material) -> Self {
        match m {
            Material::Silicon => TsvSpec {
                count_per_chiplet: 32,
                area_factor: 1.0,
                depth_um: 150.0,
                cost_rel_unit_area: 1.0,
            },
            Material::Glass => TsvSpec {
                count_per_chiplet: 128,
                area_factor: 16.0,
                depth_um: 150.0,
                cost_rel_unit_area: 64.0,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostParams {
    pub d0_per_mm2: f64,
    pub a_ref_mm2: f64,
    pub wafer_area_mm2: f64,
    /// Die area that defines the reference chiplets-per-wafer count.
    pub ref_chiplet_area_mm2: f64,
    pub via_diameter_um: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            d0_per_mm2: 0.001,
            a_ref_mm2: 864.0,
            wafer_area_mm2: std::f64::consts::PI * 150.0 * 150.0,
            ref_chiplet_area_mm2: 4.0,
            via_diameter_um: 20.0,
        }
    }
}

impl CostParams {
    pub fn chiplets_per_wafer(&self, die_area_mm2: f64) -> f64 {
        self.wafer_area_mm2 / die_area_mm2
    }
}

/// e^{−D0 (A1 − A2)}
pub fn relative_cost(a1_mm2: f64, a2_mm2: f64, d0: f64) -> f64 {
    (-d0 * (a1_mm2 - a2_mm2)).exp()
}

/// (L_ref / L) × e^{−D0 (A_ref − A_sys)}
pub fn chiplet_cost_factor(l_ref: f64, l: f64, a_ref_mm2: f64, a_sys_mm2: f64, d0: f64) -> f64 {
    (l_ref / l) * relative_cost(a_ref_mm2, a_sys_mm2, d0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub interposer: f64,
    pub chiplets: f64,
    pub tsvs: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub c_system: f64,
    /// Total over the cost of a bare 864 mm² silicon interposer.
    pub c_system_norm: f64,
    pub breakdown: CostBreakdown,
    pub tsv_area_mm2: f64,
}

pub fn fabrication_cost(
    comp: &Composition,
    catalog: &Catalog,
    ip: &InterposerSpec,
    cp: &CostParams,
) -> Result<CostReport> {
    comp.validate(catalog)?;
    let a_sys = ip.area_mm2();
    let interposer = ip.unit_cost * a_sys;
    let l_ref = cp.chiplets_per_wafer(cp.ref_chiplet_area_mm2);
    let ref_die_cost = SILICON_UNIT_COST * cp.ref_chiplet_area_mm2;
    let chiplets: f64 = comp
        .total()
        .iter()
        .enumerate()
        .map(|(t, &n)| {
            let l = cp.chiplets_per_wafer(catalog.get(t).area_mm2);
            n as f64
                * ref_die_cost
                * chiplet_cost_factor(l_ref, l, cp.a_ref_mm2, a_sys, cp.d0_per_mm2)
        })
        .sum();
    let tsv = TsvSpec::for_material(ip.material);
    let via_area = std::f64::consts::PI * (cp.via_diameter_um / 2000.0).powi(2);
    let n_vias = comp.n_chiplets() as f64 * tsv.count_per_chiplet as f64;
    let tsvs = n_vias * SILICON_UNIT_COST * via_area * tsv.cost_rel_unit_area;
    let c_system = interposer + chiplets + tsvs;
    Ok(CostReport {
        c_system,
        c_system_norm: c_system / (SILICON_UNIT_COST * cp.a_ref_mm2),
        breakdown: CostBreakdown {
            interposer,
            chiplets,
            tsvs,
        },
        tsv_area_mm2: n_vias * via_area * tsv.area_factor,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AreaReport {
    pub surface_area_mm2: f64,
    pub embedded_area_mm2: f64,
    pub surface_capacity_mm2: f64,
    pub embedded_capacity_mm2: f64,
    pub feasible: bool,
}

pub fn check_area(
    comp: &Composition,
    catalog: &Catalog,
    ip: &InterposerSpec,
    embed_capacity_fraction: f64,
) -> Result<AreaReport> {
    let m = aggregate_metrics(comp, catalog)?;
    let surface_capacity = ip.area_mm2();
    let embedded_capacity = if ip.supports_embedding {
        ip.area_mm2() * embed_capacity_fraction
    } else {
        0.0
    };
    let tol = 1e-9 * surface_capacity.max(1.0);
    Ok(AreaReport {
        surface_area_mm2: m.surface_area_mm2,
        embedded_area_mm2: m.embedded_area_mm2,
        surface_capacity_mm2: surface_capacity,
        embedded_capacity_mm2: embedded_capacity,
        feasible: m.surface_area_mm2 <= surface_capacity + tol
            && m.embedded_area_mm2 <= embedded_capacity + tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat() -> Catalog {
        Catalog::builtin()
    }

    #[test]
    fn warpage_basics() {
        let cfg = WarpageConfig::default();
        let comp = Composition::surface_only(vec![2, 27, 2, 27, 15]);
        for ip in [InterposerSpec::silicon(400.0), InterposerSpec::glass(400.0)] {
            let (p, _) = cfg.params(&ip, &cat(), &comp).unwrap();
            assert_eq!(warpage_at(0.0, &p).unwrap(), 0.0);
            for x in [0.3, 2.0, 7.5, p.rho_mm] {
                assert_eq!(warpage_at(x, &p).unwrap(), warpage_at(-x, &p).unwrap());
            }
            assert!(warpage_at(p.rho_mm * 1.01, &p).is_err());
        }
        let si = check_warpage(&comp, &cat(), &InterposerSpec::silicon(400.0), &cfg).unwrap();
        let gl = check_warpage(&comp, &cat(), &InterposerSpec::glass(400.0), &cfg).unwrap();
        assert!(si.feasible && gl.feasible);
        assert!(gl.max_warpage_um / si.max_warpage_um >= 5.0);
    }

    #[test]
    fn large_arguments_stay_finite() {
        let p = WarpageParams {
            tau_um: 100.0,
            delta_psi_per_k: 1e-6,
            delta_t_k: 80.0,
            lambda: 1.0,
            stiffness_d: 1.0,
            youngs_k: 200.0,
            d_mm: 5.0,
            rho_mm: 20.0,
            scale: 1.0,
        };
        let direct = |x: f64| x * x / 2.0;
        let w = warpage_at(20.0, &p).unwrap();
        assert!(w.is_finite());
        assert!((w / (100.0 * 1e-6 * 80.0 / 2.0) - direct(20.0)).abs() < 1e-3);
    }

    #[test]
    fn cost_basics() {
        assert_eq!(relative_cost(300.0, 300.0, 0.001), 1.0);
        let d0 = 0.002;
        assert!((relative_cost(100.0 + 2f64.ln() / d0, 100.0, d0) - 0.5).abs() < 1e-12);
        assert_eq!(chiplet_cost_factor(10.0, 10.0, 864.0, 864.0, 0.001), 1.0);
        let si = InterposerSpec::silicon(400.0);
        let gl = InterposerSpec::glass(400.0);
        assert_eq!(
            gl.unit_cost * gl.area_mm2() / (si.unit_cost * si.area_mm2()),
            1.0 / 8.0
        );
        let ts = TsvSpec::for_material(Material::Silicon);
        let tg = TsvSpec::for_material(Material::Glass);
        assert_eq!((ts.count_per_chiplet, tg.count_per_chiplet), (32, 128));
        assert_eq!(tg.cost_rel_unit_area / ts.cost_rel_unit_area, 64.0);
        assert_eq!((ts.area_factor, tg.area_factor), (1.0, 16.0));

        let comp = Composition::surface_only(vec![2, 27, 2, 27, 15]);
        for ip in [si, gl] {
            let r = fabrication_cost(&comp, &cat(), &ip, &CostParams::default()).unwrap();
            let b = r.breakdown;
            assert!(b.interposer >= 0.0 && b.chiplets >= 0.0 && b.tsvs >= 0.0);
            assert!((b.interposer + b.chiplets + b.tsvs - r.c_system).abs() < 1e-12 * r.c_system);
        }
    }

    #[test]
    fn area_checks() {
        let si = InterposerSpec::silicon(400.0);
        let ok = check_area(
            &Composition::surface_only(vec![2, 27, 2, 27, 15]),
            &cat(),
            &si,
            1.0,
        )
        .unwrap();
        assert!(ok.feasible);
        assert_eq!(ok.surface_area_mm2, 400.0);
        let over = check_area(
            &Composition::surface_only(vec![24, 28, 0, 18, 12]),
            &cat(),
            &si,
            1.0,
        )
        .unwrap();
        assert!(!over.feasible);
        assert_eq!(over.surface_area_mm2, 440.0);
        assert!(
            check_area(&Composition::surface_only(vec![0; 5]), &cat(), &si, 1.0)
                .unwrap()
                .feasible
        );
        let emb = Composition::new(vec![1, 0, 0, 0, 0], vec![0, 1, 0, 0, 0]).unwrap();
        assert!(!check_area(&emb, &cat(), &si, 1.0).unwrap().feasible);
        assert!(
            check_area(&emb, &cat(), &InterposerSpec::glass(400.0), 1.0)
                .unwrap()
                .feasible
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn relative_cost_antisymmetric(a in 0.0f64..2000.0, b in 0.0f64..2000.0, d0 in 1e-5f64..0.01) {
                prop_assert!((relative_cost(a, b, d0) * relative_cost(b, a, d0) - 1.0).abs() < 1e-9);
            }

            #[test]
            fn warpage_monotone_in_x(area in 16.0f64..1200.0, glass in any::<bool>(), d in 0.5f64..3.0) {
                let ip = if glass { InterposerSpec::glass(area) } else { InterposerSpec::silicon(area) };
                let cfg = WarpageConfig::default();
                let mut p = cfg.unscaled(&ip, 3.3e-6, 100.0, d);
                p.scale = cfg.scale(3.3e-6);
                let prof = warpage_profile(&p, 1000).unwrap();
                for w in prof.windows(2) {
                    prop_assert!(w[1].1 >= w[0].1 - 1e-12 * w[1].1.abs().max(1.0));
                }
            }

            #[test]
            fn warpage_grows_with_size_and_thickness(a1 in 50.0f64..1000.0, da in 1.0f64..300.0, t in 10.0f64..100.0) {
                let cfg = WarpageConfig::default();
                let max = |area: f64, tau: f64| {
                    let ip = InterposerSpec::glass(area);
                    let mut p = cfg.unscaled(&ip, 3.3e-6, tau, 1.0);
                    p.scale = cfg.scale(3.3e-6);
                    warpage_at(p.rho_mm, &p).unwrap()
                };
                prop_assert!(max(a1 + da, t) > max(a1, t));
                prop_assert!(max(a1, t * 0.9) < max(a1, t));
            }
        }
    }
}

#[cfg(test)]
mod calibration_tests {
    use super::*;

    #[test]
    fn embedding_relieves_glass_warpage() {
        let cat = Catalog::builtin();
        let cfg = WarpageConfig::default();
        let plain = Composition::surface_only(vec![4, 50, 4, 50, 30]);
        let si = check_warpage(&plain, &cat, &InterposerSpec::silicon(864.0), &cfg).unwrap();
        let gl = check_warpage(&plain, &cat, &InterposerSpec::glass(864.0), &cfg).unwrap();
        // 11 Shared chiplets embedded: 88 mm², about 10% of 864 mm²
        let emb = Composition::new(vec![4, 50, 4, 50, 30], vec![0, 11, 0, 0, 0]).unwrap();
        let ge = check_warpage(&emb, &cat, &InterposerSpec::glass(864.0), &cfg).unwrap();
        eprintln!("si {si:?}\nglass {gl:?}\nglass+emb {ge:?}");
        assert!(si.feasible && !gl.feasible);
        assert!(ge.feasible && ge.max_warpage_um <= 1.25 * si.max_warpage_um);
    }
}
