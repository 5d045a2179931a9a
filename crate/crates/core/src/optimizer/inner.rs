//! Inner search over placement and mapping for a fixed chiplet composition.
//!
//! A walker performs a random walk over designs while a UCB bandit picks
//! which perturbation operator to apply next, rewarding operators whose
//! candidates recently changed the Pareto archive. Half of the proposals
//! start from an archive member instead of the walker, which concentrates
//! effort near the front. Designs that violate the package constraints are
//! never evaluated, though the walker may pass through them.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::Composition;
use crate::design::{baseline_design, evaluate_perf_only, DesignPoint, EvalContext};
use crate::error::{DseError, Result};
use crate::optimizer::pareto::{Objectives, ParetoArchive};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerStrategy {
    #[default]
    Bandit,
    Annealing,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InnerConfig {
    pub strategy: InnerStrategy,
    pub archive_capacity: usize,
    pub ucb_exploration: f64,
    /// Weight of past rewards in the operator statistics.
    pub reward_discount: f64,
    pub walker_probability: f64,
    pub anneal_t0: f64,
    pub anneal_decay: f64,
}

impl Default for InnerConfig {
    fn default() -> Self {
        InnerConfig {
            strategy: InnerStrategy::Bandit,
            archive_capacity: 64,
            ucb_exploration: 0.5,
            reward_discount: 0.98,
            walker_probability: 0.5,
            anneal_t0: 0.5,
            anneal_decay: 0.999,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    Swap,
    ToggleEmbed,
    ShiftOffset,
    Resplit,
}

impl Operator {
    pub const ALL: [Operator; 4] = [
        Operator::Swap,
        Operator::ToggleEmbed,
        Operator::ShiftOffset,
        Operator::Resplit,
    ];
}

#[derive(Clone, Debug)]
pub struct InnerResult {
    pub archive: ParetoArchive<DesignPoint>,
    pub proposals: usize,
    pub evaluations: usize,
    pub pruned: usize,
    pub diagnostic: Option<String>,
}

/// Applies one perturbation; `None` when the operator has no legal move.
pub fn perturb(
    ctx: &EvalContext,
    d: &DesignPoint,
    op: Operator,
    rng: &mut ChaCha8Rng,
) -> Option<DesignPoint> {
    let mut out = d.clone();
    let cells = d.placement.n_cells();
    match op {
        Operator::Swap => {
            if cells < 2 {
                return None;
            }
            let a = rng.gen_range(0..cells);
            let mut b = rng.gen_range(0..cells - 1);
            if b >= a {
                b += 1;
            }
            let p = &mut out.placement;
            p.surface.swap(a, b);
            let stack_ok = |p: &crate::topology::Placement| {
                (0..cells).all(|c| p.embedded[c].is_none() || p.surface[c].is_some())
            };
            if rng.gen_bool(0.5) || !stack_ok(p) {
                p.embedded.swap(a, b);
            }
            if !stack_ok(p) {
                return None;
            }
        }
        Operator::ToggleEmbed => {
            if !ctx.interposer.supports_embedding {
                return None;
            }
            let p = &mut out.placement;
            let embeddable = |t: usize| ctx.catalog.get(t).embeddable;
            let sinkable: Vec<usize> = (0..cells)
                .filter(|&c| p.embedded[c].is_none() && p.surface[c].is_some_and(embeddable))
                .collect();
            let raisable: Vec<usize> = (0..cells).filter(|&c| p.embedded[c].is_some()).collect();
            let empty: Vec<usize> = (0..cells).filter(|&c| p.surface[c].is_none()).collect();
            let can_raise = !raisable.is_empty() && !empty.is_empty();
            let sink = match (sinkable.is_empty(), can_raise) {
                (true, false) => return None,
                (false, false) => true,
                (true, true) => false,
                (false, true) => rng.gen_bool(0.5),
            };
            if sink {
                let src = *sinkable.choose(rng)?;
                let hosts: Vec<usize> = (0..cells)
                    .filter(|&c| c != src && p.surface[c].is_some() && p.embedded[c].is_none())
                    .collect();
                let dst = *hosts.choose(rng)?;
                p.embedded[dst] = p.surface[src].take();
            } else {
                let src = *raisable.choose(rng)?;
                let dst = *empty.choose(rng)?;
                p.surface[dst] = p.embedded[src].take();
            }
        }
        Operator::ShiftOffset => {
            let n = d
                .placement
                .surface
                .iter()
                .chain(&d.placement.embedded)
                .filter(|c| c.is_some())
                .count();
            if n < 2 {
                return None;
            }
            out.plan.start_offset = (d.plan.start_offset + rng.gen_range(1..n)) % n;
        }
        Operator::Resplit => {
            let layers = ctx.workload.n_layers();
            if layers < 2 {
                return None;
            }
            let l = rng.gen_range(1..layers);
            if !out.plan.fresh_start.remove(&l) {
                out.plan.fresh_start.insert(l);
            }
        }
    }
    (out != *d).then_some(out)
}

struct Bandit {
    value: [f64; 4],
    count: [f64; 4],
    discount: f64,
    c: f64,
}

impl Bandit {
    fn new(discount: f64, c: f64) -> Self {
        Bandit {
            value: [0.0; 4],
            count: [0.0; 4],
            discount,
            c,
        }
    }

    fn pick(&self, allowed: &[bool; 4]) -> usize {
        let total: f64 = self.count.iter().sum::<f64>().max(1.0);
        let mut best = None;
        let mut best_score = f64::NEG_INFINITY;
        for k in 0..4 {
            if !allowed[k] {
                continue;
            }
            let score = if self.count[k] < 1e-9 {
                f64::INFINITY
            } else {
                self.value[k] / self.count[k]
                    + self.c * (2.0 * total.ln().max(0.0) / self.count[k]).sqrt()
            };
            if score > best_score {
                best_score = score;
                best = Some(k);
            }
        }
        best.unwrap_or(0)
    }

    fn update(&mut self, k: usize, reward: f64) {
        for j in 0..4 {
            self.value[j] *= self.discount;
            self.count[j] *= self.discount;
        }
        self.value[k] += reward;
        self.count[k] += 1.0;
    }
}

enum Outcome {
    Pruned,
    Failed,
    Scored(Objectives),
}

pub fn inner_moo_solve(
    ctx: &EvalContext,
    comp: &Composition,
    budget: usize,
    seed: u64,
    cfg: &InnerConfig,
) -> Result<InnerResult> {
    if budget == 0 {
        return Err(DseError::Config("inner budget must be positive".into()));
    }
    comp.validate(&ctx.catalog)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut archive = ParetoArchive::new(cfg.archive_capacity);
    let mut seen: HashMap<DesignPoint, Option<Objectives>> = HashMap::new();
    let (mut proposals, mut evaluations, mut pruned) = (0usize, 0usize, 0usize);

    let score =
        |d: &DesignPoint, seen: &mut HashMap<DesignPoint, Option<Objectives>>| -> Result<Outcome> {
            if let Some(prev) = seen.get(d) {
                return Ok(prev.map_or(Outcome::Failed, Outcome::Scored));
            }
            let pkg = ctx.package_feasibility(&d.composition(&ctx.catalog))?;
            if !pkg.feasible() {
                seen.insert(d.clone(), None);
                return Ok(Outcome::Pruned);
            }
            let res = match evaluate_perf_only(ctx, d) {
                Ok(p) => Some(Objectives {
                    latency_s: p.perf.latency_s,
                    energy_j: p.perf.energy_j,
                }),
                Err(DseError::InsufficientStorage { .. }) => None,
                Err(e) => return Err(e),
            };
            seen.insert(d.clone(), res);
            Ok(res.map_or(Outcome::Failed, Outcome::Scored))
        };

    let base = baseline_design(ctx, comp)?;
    proposals += 1;
    let mut current_obj = match score(&base, &mut seen)? {
        Outcome::Scored(o) => {
            evaluations += 1;
            archive.insert(base.id(&ctx.catalog), o, base.clone());
            Some(o)
        }
        Outcome::Pruned => {
            pruned += 1;
            None
        }
        Outcome::Failed => {
            evaluations += 1;
            None
        }
    };
    let mut current = base;
    let mut bandit = Bandit::new(cfg.reward_discount, cfg.ucb_exploration);
    let mut temperature = cfg.anneal_t0;
    let n_chiplets = comp.n_chiplets() as usize;
    let has_embeddable = comp
        .total()
        .iter()
        .enumerate()
        .any(|(t, &n)| n > 0 && ctx.catalog.get(t).embeddable);
    let allowed = [
        ctx.n_cells() > 1,
        ctx.interposer.supports_embedding && has_embeddable,
        n_chiplets > 1,
        ctx.workload.n_layers() > 1,
    ];

    while proposals < budget {
        if !allowed.iter().any(|a| *a) {
            proposals = budget;
            break;
        }
        let from_archive = cfg.strategy == InnerStrategy::Bandit
            && !archive.is_empty()
            && !rng.gen_bool(cfg.walker_probability);
        let parent = if from_archive {
            let k = rng.gen_range(0..archive.len());
            archive.entries()[k].item.clone()
        } else {
            current.clone()
        };
        let k = match cfg.strategy {
            InnerStrategy::Bandit => bandit.pick(&allowed),
            InnerStrategy::Annealing => {
                let ks: Vec<usize> = (0..4).filter(|&k| allowed[k]).collect();
                *ks.choose(&mut rng).unwrap()
            }
        };
        proposals += 1;
        let Some(cand) = perturb(ctx, &parent, Operator::ALL[k], &mut rng) else {
            bandit.update(k, 0.0);
            continue;
        };
        let fresh = !seen.contains_key(&cand);
        let outcome = score(&cand, &mut seen)?;
        let mut reward = 0.0;
        let cand_obj = match outcome {
            Outcome::Pruned => {
                pruned += fresh as usize;
                None
            }
            Outcome::Failed => {
                evaluations += fresh as usize;
                None
            }
            Outcome::Scored(o) => {
                evaluations += fresh as usize;
                if archive.insert(cand.id(&ctx.catalog), o, cand.clone()) {
                    reward = 1.0;
                }
                Some(o)
            }
        };
        bandit.update(k, reward);

        let accept = match cfg.strategy {
            InnerStrategy::Bandit => !from_archive,
            InnerStrategy::Annealing => match (current_obj, cand_obj) {
                (_, None) => current_obj.is_none(),
                (None, Some(_)) => true,
                (Some(c), Some(n)) => {
                    let delta = (n.edp() / c.edp()).ln();
                    delta <= 0.0 || rng.gen::<f64>() < (-delta / temperature.max(1e-12)).exp()
                }
            },
        };
        if accept {
            current = cand;
            current_obj = cand_obj;
        }
        temperature *= cfg.anneal_decay;
    }

    let diagnostic = archive.is_empty().then(|| {
        format!("no package-feasible, mappable design found for {comp} ({pruned} pruned)")
    });
    Ok(InnerResult {
        archive,
        proposals,
        evaluations,
        pruned,
        diagnostic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Catalog, InterposerSpec};
    use crate::optimizer::pareto::dominates;
    use crate::topology::TopologyKind;
    use crate::workload::WorkloadSpec;

    fn tiny() -> EvalContext {
        let cat = Catalog::builtin().subset(&["Shared", "Adder"]).unwrap();
        let wl = WorkloadSpec::from_json_str(
            include_str!("../../data/workloads/wl_synthetic_small.json"),
            "small",
        )
        .unwrap();
        EvalContext::new(cat, InterposerSpec::glass(16.0), wl, TopologyKind::Floret)
    }

    #[test]
    fn budget_one_returns_the_baseline() {
        let ctx = tiny();
        let comp = Composition::surface_only(vec![1, 2]);
        let r = inner_moo_solve(&ctx, &comp, 1, 3, &InnerConfig::default()).unwrap();
        assert_eq!(r.proposals, 1);
        assert_eq!(r.archive.len(), 1);
        assert_eq!(
            r.archive.entries()[0].item,
            baseline_design(&ctx, &comp).unwrap()
        );
    }

    #[test]
    fn zero_budget_is_rejected() {
        let ctx = tiny();
        assert!(inner_moo_solve(
            &ctx,
            &Composition::surface_only(vec![1, 1]),
            0,
            0,
            &InnerConfig::default()
        )
        .is_err());
    }

    #[test]
    fn same_seed_same_archive() {
        let ctx = tiny();
        let comp = Composition::surface_only(vec![1, 2]);
        for strategy in [InnerStrategy::Bandit, InnerStrategy::Annealing] {
            let cfg = InnerConfig {
                strategy,
                ..InnerConfig::default()
            };
            let a = inner_moo_solve(&ctx, &comp, 300, 11, &cfg).unwrap();
            let b = inner_moo_solve(&ctx, &comp, 300, 11, &cfg).unwrap();
            assert_eq!(a.archive, b.archive);
            assert_eq!(a.evaluations, b.evaluations);
        }
    }

    #[test]
    fn archive_is_non_dominated_and_feasible() {
        let ctx = tiny();
        let comp = Composition::surface_only(vec![1, 2]);
        let r = inner_moo_solve(&ctx, &comp, 500, 5, &InnerConfig::default()).unwrap();
        let es = r.archive.entries();
        for x in es {
            assert_eq!(x.item.composition(&ctx.catalog).total(), comp.total());
            assert!(ctx
                .package_feasibility(&x.item.composition(&ctx.catalog))
                .unwrap()
                .feasible());
            for y in es {
                assert!(!dominates(&x.objectives, &y.objectives));
            }
        }
    }

    #[test]
    fn perturbations_preserve_type_counts() {
        let ctx = tiny();
        let comp = Composition::surface_only(vec![1, 2]);
        let mut d = baseline_design(&ctx, &comp).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..400 {
            if let Some(n) = perturb(&ctx, &d, Operator::ALL[i % 4], &mut rng) {
                assert_eq!(n.composition(&ctx.catalog).total(), vec![1, 2]);
                n.placement
                    .validate(&n.composition(&ctx.catalog), &ctx.catalog)
                    .unwrap();
                d = n;
            }
        }
    }
}
