//! Cross-module invariants checked over random compositions and designs.

use proptest::prelude::*;

use chipletdse::catalog::{
    aggregate_metrics, reclaim_router_area, Catalog, Composition, FillPolicy, InterposerSpec,
    Material,
};
use chipletdse::design::{baseline_design, evaluate_design, EvalContext};
use chipletdse::topology::TopologyKind;
use chipletdse::workload::{LayerSpec, WorkloadSpec};

fn counts() -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(0u32..30, 5)
}

fn kind() -> impl Strategy<Value = TopologyKind> {
    prop::sample::select(TopologyKind::ALL.to_vec())
}

fn chain() -> WorkloadSpec {
    let layers = (0..4)
        .map(|i| {
            LayerSpec::new(
                &format!("l{i}"),
                4000.0 + 500.0 * i as f64,
                2e9 * (1.0 + i as f64),
                4e5,
            )
        })
        .collect();
    WorkloadSpec::chain("p", layers).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_are_additive(a in counts(), b in counts()) {
        let cat = Catalog::builtin();
        let sum: Vec<u32> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let ma = aggregate_metrics(&Composition::surface_only(a), &cat).unwrap();
        let mb = aggregate_metrics(&Composition::surface_only(b), &cat).unwrap();
        let ms = aggregate_metrics(&Composition::surface_only(sum), &cat).unwrap();
        prop_assert!((ms.total_tops - ma.total_tops - mb.total_tops).abs() < 1e-6);
        prop_assert!((ms.total_area_mm2 - ma.total_area_mm2 - mb.total_area_mm2).abs() < 1e-9);
        prop_assert!((ms.total_storage_kb - ma.total_storage_kb - mb.total_storage_kb).abs() < 1e-6);
    }

    #[test]
    fn reclaim_never_exceeds_freed_area(a in counts(), pct in 0.0f64..0.1) {
        let cat = Catalog::builtin();
        let comp = Composition::surface_only(a);
        let before = aggregate_metrics(&comp, &cat).unwrap();
        let r = reclaim_router_area(&comp, &cat, pct, FillPolicy::default()).unwrap();
        let after = aggregate_metrics(&r.composition, &cat).unwrap();
        prop_assert!(after.total_tops >= before.total_tops);
        prop_assert!(after.total_area_mm2 - before.total_area_mm2 <= r.reclaimed_area_mm2 + 1e-9);
        prop_assert!((r.final_tops - after.total_tops).abs() < 1e-6);
    }

    #[test]
    fn design_objectives_are_consistent(k in kind(), glass in any::<bool>(), extra in 0u32..6) {
        let cat = Catalog::builtin();
        let ip = InterposerSpec::of_material(if glass { Material::Glass } else { Material::Silicon }, 400.0);
        let ctx = EvalContext::new(cat, ip, chain(), k);
        let comp = Composition::surface_only(vec![2, 20 + extra, 2, 20, 10]);
        let d = baseline_design(&ctx, &comp).unwrap();
        let e = evaluate_design(&ctx, &d).unwrap();
        prop_assert_eq!(e.latency_s, e.compute_latency_s.max(e.comm_latency_s));
        prop_assert!((e.energy_j - e.compute_energy_j - e.comm_energy_j).abs() <= 1e-12 * e.energy_j);
        prop_assert!((e.edp - e.latency_s * e.energy_j).abs() <= 1e-12 * e.edp);
        prop_assert!(e.t_peak_c >= ctx.thermal.ambient_c);
        prop_assert!(e.max_warpage_um >= 0.0);
        prop_assert!(e.cost_norm > 0.0);
        // the same design always evaluates to the same numbers
        let again = evaluate_design(&ctx, &d).unwrap();
        prop_assert_eq!(e, again);
    }
}
