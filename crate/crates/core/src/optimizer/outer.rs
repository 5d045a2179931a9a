//! Outer Bayesian optimisation over chiplet compositions.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::Composition;
use crate::design::{design_peak_temperature, DesignPoint, EvalContext};
use crate::error::{DseError, Result};
use crate::optimizer::gp::{expected_improvement_at, GpModel};
use crate::optimizer::inner::{inner_moo_solve, InnerConfig};
use crate::optimizer::pareto::Objectives;

/// An archive member that passed the thermal check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoredDesign {
    pub id: String,
    pub design: DesignPoint,
    pub objectives: Objectives,
    pub t_peak_c: f64,
}

#[derive(Clone, Debug)]
pub struct BestEdp {
    /// +∞ when no design survives.
    pub edp: f64,
    pub best: Option<ScoredDesign>,
    pub survivors: Vec<ScoredDesign>,
    pub diagnostic: Option<String>,
}

/// Seed of the inner search for a composition; independent of the outer
/// seed so the outer objective is a fixed function of the composition.
pub fn inner_seed(base: u64, counts: &[u32]) -> u64 {
    let mut h: u64 = 0x9e37_79b9_7f4a_7c15 ^ base;
    for &c in counts {
        h ^= c as u64;
        h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h ^= h >> 31;
    }
    h
}

/// Runs the inner search, discards members above the temperature limit and
/// returns the lowest EDP among the rest.
pub fn best_edp(
    ctx: &EvalContext,
    comp: &Composition,
    budget: usize,
    seed: u64,
    cfg: &InnerConfig,
) -> Result<BestEdp> {
    let inner = inner_moo_solve(ctx, comp, budget, seed, cfg)?;
    let temps: Vec<Result<f64>> = inner
        .archive
        .entries()
        .par_iter()
        .map(|e| design_peak_temperature(ctx, &e.item))
        .collect();
    let mut survivors = Vec::new();
    for (e, t) in inner.archive.entries().iter().zip(temps) {
        let t = t?;
        if t <= ctx.constraints.t_max_c {
            survivors.push(ScoredDesign {
                id: e.id.clone(),
                design: e.item.clone(),
                objectives: e.objectives,
                t_peak_c: t,
            });
        }
    }
    let best = survivors
        .iter()
        .min_by(|a, b| {
            a.objectives
                .edp()
                .partial_cmp(&b.objectives.edp())
                .unwrap()
                .then_with(|| a.id.cmp(&b.id))
        })
        .cloned();
    let diagnostic = inner.diagnostic.or_else(|| {
        (best.is_none() && !inner.archive.is_empty())
            .then(|| format!("all designs for {comp} exceed the temperature limit"))
    });
    Ok(BestEdp {
        edp: best.as_ref().map_or(f64::INFINITY, |b| b.objectives.edp()),
        best,
        survivors,
        diagnostic,
    })
}

/// Integer box of per-type counts, filtered by surface area and cell count.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositionSpace {
    pub max_counts: Vec<u32>,
    pub areas_mm2: Vec<f64>,
    pub area_limit_mm2: f64,
    pub max_chiplets: u32,
}

const ENUMERATION_LIMIT: f64 = 2e5;

impl CompositionSpace {
    pub fn for_context(ctx: &EvalContext, max_counts: Option<&[u32]>) -> Result<Self> {
        let n = ctx.catalog.len();
        if let Some(m) = max_counts {
            if m.len() != n {
                return Err(DseError::Config(format!(
                    "max_counts has {} entries, catalog has {n}",
                    m.len()
                )));
            }
        }
        let area = ctx.interposer.area_mm2();
        let cells = ctx.n_cells() as u32;
        let max_counts = (0..n)
            .map(|t| {
                let fit = (area / ctx.catalog.get(t).area_mm2 + 1e-9).floor() as u32;
                let cap = max_counts.map_or(u32::MAX, |m| m[t]);
                fit.min(cells).min(cap)
            })
            .collect();
        Ok(CompositionSpace {
            max_counts,
            areas_mm2: ctx.catalog.chiplets.iter().map(|c| c.area_mm2).collect(),
            area_limit_mm2: area,
            max_chiplets: cells,
        })
    }

    pub fn is_feasible(&self, a: &[u32]) -> bool {
        let n: u32 = a.iter().sum();
        let area: f64 = a
            .iter()
            .zip(&self.areas_mm2)
            .map(|(&c, s)| c as f64 * s)
            .sum();
        n > 0
            && n <= self.max_chiplets
            && area <= self.area_limit_mm2 * (1.0 + 1e-12)
            && a.iter().zip(&self.max_counts).all(|(c, m)| c <= m)
    }

    pub fn normalize(&self, a: &[u32]) -> Vec<f64> {
        a.iter()
            .zip(&self.max_counts)
            .map(|(&c, &m)| if m == 0 { 0.0 } else { c as f64 / m as f64 })
            .collect()
    }

    fn box_size(&self) -> f64 {
        self.max_counts.iter().map(|&m| m as f64 + 1.0).product()
    }

    /// All feasible points in lexicographic order, if the box is small.
    pub fn enumerate(&self) -> Option<Vec<Vec<u32>>> {
        if self.box_size() > ENUMERATION_LIMIT {
            return None;
        }
        let mut out = Vec::new();
        let mut cur = vec![0u32; self.max_counts.len()];
        loop {
            if self.is_feasible(&cur) {
                out.push(cur.clone());
            }
            let mut i = cur.len();
            loop {
                if i == 0 {
                    return Some(out);
                }
                i -= 1;
                if cur[i] < self.max_counts[i] {
                    cur[i] += 1;
                    break;
                }
                cur[i] = 0;
            }
        }
    }

    /// Random feasible point: types in random order, each drawing a count
    /// within what the remaining area and cells allow.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Option<Vec<u32>> {
        for _ in 0..64 {
            let mut order: Vec<usize> = (0..self.max_counts.len()).collect();
            order.shuffle(rng);
            let mut a = vec![0u32; order.len()];
            let mut area_left = self.area_limit_mm2;
            let mut cells_left = self.max_chiplets;
            for t in order {
                let fit = ((area_left / self.areas_mm2[t]) + 1e-9).floor().max(0.0) as u32;
                let hi = fit.min(cells_left).min(self.max_counts[t]);
                let c = rng.gen_range(0..=hi);
                a[t] = c;
                area_left -= c as f64 * self.areas_mm2[t];
                cells_left -= c;
            }
            if self.is_feasible(&a) {
                return Some(a);
            }
        }
        None
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OuterConfig {
    pub outer_budget: usize,
    pub inner_budget: usize,
    pub n_init: usize,
    pub pool_size: usize,
    pub max_counts: Option<Vec<u32>>,
    /// Seeds every inner search, combined with the composition.
    pub inner_seed: u64,
    pub inner: InnerConfig,
}

impl Default for OuterConfig {
    fn default() -> Self {
        OuterConfig {
            outer_budget: 30,
            inner_budget: 300,
            n_init: 8,
            pool_size: 512,
            max_counts: None,
            inner_seed: 0,
            inner: InnerConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub step: usize,
    pub alpha: Vec<u32>,
    pub best_edp: f64,
    pub incumbent_edp: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub trace: Vec<TraceRow>,
    pub incumbent: Option<Vec<u32>>,
    pub incumbent_edp: f64,
}

impl SearchOutcome {
    /// 1-based evaluation count at which the incumbent first reached `target`.
    pub fn evaluations_to_reach(&self, target: f64, rel_tol: f64) -> Option<usize> {
        self.trace
            .iter()
            .position(|r| r.incumbent_edp <= target * (1.0 + rel_tol))
            .map(|p| p + 1)
    }
}

fn push_trace(
    trace: &mut Vec<TraceRow>,
    alpha: Vec<u32>,
    value: f64,
    incumbent: &mut (Option<Vec<u32>>, f64),
) {
    let better = value < incumbent.1
        || (value == incumbent.1
            && value.is_finite()
            && incumbent.0.as_ref().is_none_or(|a| alpha < *a));
    if better {
        *incumbent = (Some(alpha.clone()), value);
    }
    trace.push(TraceRow {
        step: trace.len(),
        alpha,
        best_edp: value,
        incumbent_edp: incumbent.1,
    });
}

fn candidate_pool(
    space: &CompositionSpace,
    all: Option<&[Vec<u32>]>,
    done: &BTreeSet<Vec<u32>>,
    size: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<u32>> {
    if let Some(all) = all {
        let open: Vec<Vec<u32>> = all.iter().filter(|a| !done.contains(*a)).cloned().collect();
        if open.len() <= size {
            return open;
        }
        let mut picked: Vec<Vec<u32>> = open.choose_multiple(rng, size).cloned().collect();
        picked.sort();
        return picked;
    }
    let mut pool = BTreeSet::new();
    for _ in 0..size * 4 {
        if pool.len() >= size {
            break;
        }
        if let Some(a) = space.sample(rng) {
            if !done.contains(&a) {
                pool.insert(a);
            }
        }
    }
    pool.into_iter().collect()
}

/// GP-EI search over `space` with a caller-supplied objective (EDP, lower
/// is better, +∞ for infeasible). Objective calls within a batch run in
/// parallel; results are consumed in a fixed order.
pub fn bayes_search<F>(
    space: &CompositionSpace,
    budget: usize,
    n_init: usize,
    pool_size: usize,
    seed: u64,
    objective: F,
) -> Result<SearchOutcome>
where
    F: Fn(&[u32]) -> Result<f64> + Sync,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all = space.enumerate();
    if all.as_ref().is_some_and(|a| a.is_empty())
        || (all.is_none() && space.sample(&mut rng).is_none())
    {
        return Err(DseError::Config(
            "no area-feasible composition exists".into(),
        ));
    }
    let mut done: BTreeSet<Vec<u32>> = BTreeSet::new();
    let mut trace = Vec::new();
    let mut incumbent = (None, f64::INFINITY);
    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();

    let init_pool = candidate_pool(
        space,
        all.as_deref(),
        &done,
        pool_size.max(n_init),
        &mut rng,
    );
    let init: Vec<Vec<u32>> = init_pool
        .choose_multiple(&mut rng, n_init.min(budget).max(1))
        .cloned()
        .collect();
    let values: Vec<Result<f64>> = init.par_iter().map(|a| objective(a)).collect();
    for (a, v) in init.into_iter().zip(values) {
        let v = v?;
        done.insert(a.clone());
        xs.push(space.normalize(&a));
        ys.push(v);
        push_trace(&mut trace, a, v, &mut incumbent);
    }

    while trace.len() < budget {
        let pool = candidate_pool(space, all.as_deref(), &done, pool_size, &mut rng);
        if pool.is_empty() {
            break;
        }
        let targets = log_targets(&ys);
        let f_best = targets.iter().copied().fold(f64::INFINITY, f64::min);
        let gp = GpModel::fit(&xs, &targets)?;
        let mut best: Option<(f64, &Vec<u32>)> = None;
        for a in &pool {
            let ei = expected_improvement_at(&gp, &space.normalize(a), f_best);
            if best.is_none_or(|(b, _)| ei > b) {
                best = Some((ei, a));
            }
        }
        let a = best.expect("non-empty pool").1.clone();
        let v = objective(&a)?;
        done.insert(a.clone());
        xs.push(space.normalize(&a));
        ys.push(v);
        push_trace(&mut trace, a, v, &mut incumbent);
    }
    Ok(SearchOutcome {
        trace,
        incumbent: incumbent.0,
        incumbent_edp: incumbent.1,
    })
}

/// log EDP with infeasible points pinned just above the worst feasible one.
fn log_targets(ys: &[f64]) -> Vec<f64> {
    let finite: Vec<f64> = ys
        .iter()
        .filter(|y| y.is_finite() && **y > 0.0)
        .map(|y| y.ln())
        .collect();
    let (lo, hi) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
            (l.min(v), h.max(v))
        });
    let penalty = if finite.is_empty() {
        0.0
    } else {
        hi + (hi - lo).max(1.0)
    };
    ys.iter()
        .map(|y| {
            if y.is_finite() && *y > 0.0 {
                y.ln()
            } else {
                penalty
            }
        })
        .collect()
}

/// Uniform random search without replacement, for comparison.
pub fn random_search<F>(
    space: &CompositionSpace,
    budget: usize,
    seed: u64,
    objective: F,
) -> Result<SearchOutcome>
where
    F: Fn(&[u32]) -> Result<f64> + Sync,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut done = BTreeSet::new();
    let mut trace = Vec::new();
    let mut incumbent = (None, f64::INFINITY);
    let all = space.enumerate();
    while trace.len() < budget {
        let pick = match &all {
            Some(list) => {
                let open: Vec<&Vec<u32>> = list.iter().filter(|a| !done.contains(*a)).collect();
                match open.choose(&mut rng) {
                    Some(a) => (*a).clone(),
                    None => break,
                }
            }
            None => match space.sample(&mut rng) {
                Some(a) if !done.contains(&a) => a,
                Some(_) => continue,
                None => break,
            },
        };
        let v = objective(&pick)?;
        done.insert(pick.clone());
        push_trace(&mut trace, pick, v, &mut incumbent);
    }
    Ok(SearchOutcome {
        trace,
        incumbent: incumbent.0,
        incumbent_edp: incumbent.1,
    })
}

#[derive(Clone, Debug)]
pub struct CoOptResult {
    pub search: SearchOutcome,
    pub best: Option<ScoredDesign>,
    /// Thermally feasible designs from every inner search, non-dominated.
    pub archive: Vec<ScoredDesign>,
}

pub fn co_optimize(ctx: &EvalContext, cfg: &OuterConfig, seed: u64) -> Result<CoOptResult> {
    if cfg.outer_budget == 0 || cfg.inner_budget == 0 {
        return Err(DseError::Config(
            "optimizer budgets must be positive".into(),
        ));
    }
    let space = CompositionSpace::for_context(ctx, cfg.max_counts.as_deref())?;
    let results = std::sync::Mutex::new(std::collections::BTreeMap::<Vec<u32>, BestEdp>::new());
    let objective = |a: &[u32]| -> Result<f64> {
        let comp = Composition::surface_only(a.to_vec());
        let r = best_edp(
            ctx,
            &comp,
            cfg.inner_budget,
            inner_seed(cfg.inner_seed, a),
            &cfg.inner,
        )?;
        if let Some(d) = &r.diagnostic {
            log::debug!("{d}");
        }
        let v = r.edp;
        results.lock().expect("result map").insert(a.to_vec(), r);
        Ok(v)
    };
    let search = bayes_search(
        &space,
        cfg.outer_budget,
        cfg.n_init,
        cfg.pool_size,
        seed,
        objective,
    )?;
    let results = results.into_inner().expect("result map");

    let mut union = crate::optimizer::pareto::ParetoArchive::new(usize::MAX / 2);
    for r in results.values() {
        for s in &r.survivors {
            union.insert(s.id.clone(), s.objectives, s.clone());
        }
    }
    let best = search
        .incumbent
        .as_ref()
        .and_then(|a| results.get(a))
        .and_then(|r| r.best.clone());
    Ok(CoOptResult {
        search,
        best,
        archive: union.into_entries().into_iter().map(|e| e.item).collect(),
    })
}
