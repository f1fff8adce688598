//! Add/drop/swap local search for UFL and CDUFL, with facility-cost scaling
//! and delete-optimal postprocessing.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::cdufl::{CduflInstance, CduflSolution};
use crate::error::{LbflError, Result};
use crate::flow::cdufl_best_assignment;
use crate::model::{UflInstance, UflSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Move {
    Add(usize),
    Drop(usize),
    Swap { close: usize, open: usize },
}

impl Move {
    pub fn apply(&self, open: &[usize]) -> Vec<usize> {
        let mut set: BTreeSet<usize> = open.iter().copied().collect();
        match *self {
            Move::Add(i) => {
                set.insert(i);
            }
            Move::Drop(i) => {
                set.remove(&i);
            }
            Move::Swap { close, open } => {
                set.remove(&close);
                set.insert(open);
            }
        }
        set.into_iter().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalSearchConfig {
    /// Relative improvement a move must achieve, divided by the pool size.
    pub epsilon_ls: f64,
    /// Factor applied to opening costs during the search only.
    pub sigma: f64,
    pub max_iterations: usize,
}

impl Default for LocalSearchConfig {
    fn default() -> Self {
        Self {
            epsilon_ls: 1e-6,
            sigma: 1.0,
            max_iterations: 10_000,
        }
    }
}

impl LocalSearchConfig {
    pub fn with_sigma(self, sigma: f64) -> Self {
        Self { sigma, ..self }
    }

    pub fn with_epsilon(self, epsilon_ls: f64) -> Self {
        Self { epsilon_ls, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_ls > 0.0) || !self.epsilon_ls.is_finite() {
            return Err(LbflError::Domain(format!("epsilon_ls = {}", self.epsilon_ls)));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(LbflError::Domain(format!("sigma = {}", self.sigma)));
        }
        if self.max_iterations == 0 {
            return Err(LbflError::Domain("max_iterations must be at least 1".into()));
        }
        Ok(())
    }

    /// Minimum improvement for a move to count at current cost `cost`.
    pub fn threshold(&self, cost: f64, pool: usize) -> f64 {
        self.epsilon_ls * cost.abs() / pool.max(1) as f64 + 1e-12
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SearchStats {
    pub iterations: usize,
    pub evaluations: usize,
    pub applied: Vec<Move>,
    /// The iteration cap stopped the search before a local optimum.
    pub capped: bool,
}

/// Memoizing evaluator over open sets; `None` marks an infeasible set.
struct Pricer<F> {
    eval: F,
    cache: BTreeMap<Vec<usize>, Option<f64>>,
    evaluations: usize,
}

impl<F: FnMut(&[usize]) -> Option<f64>> Pricer<F> {
    fn new(eval: F) -> Self {
        Self {
            eval,
            cache: BTreeMap::new(),
            evaluations: 0,
        }
    }

    fn price(&mut self, open: &[usize]) -> Option<f64> {
        if let Some(&v) = self.cache.get(open) {
            return v;
        }
        self.evaluations += 1;
        let v = (self.eval)(open);
        self.cache.insert(open.to_vec(), v);
        v
    }
}

/// All moves in tie-break order: adds, drops, swaps, each by lowest ids.
pub fn candidate_moves(pool: &[usize], open: &[usize]) -> Vec<Move> {
    let open_set: BTreeSet<usize> = open.iter().copied().collect();
    let closed: Vec<usize> = pool.iter().copied().filter(|i| !open_set.contains(i)).collect();
    let mut moves: Vec<Move> = closed.iter().map(|&i| Move::Add(i)).collect();
    moves.extend(open_set.iter().map(|&i| Move::Drop(i)));
    for &c in &open_set {
        for &o in &closed {
            moves.push(Move::Swap { close: c, open: o });
        }
    }
    moves
}

fn best_move<F: FnMut(&[usize]) -> Option<f64>>(
    pricer: &mut Pricer<F>,
    pool: &[usize],
    open: &[usize],
    current: f64,
    threshold: f64,
) -> Option<(Move, f64)> {
    let mut best: Option<(Move, f64)> = None;
    for mv in candidate_moves(pool, open) {
        let next = mv.apply(open);
        let Some(cost) = pricer.price(&next) else {
            continue;
        };
        if current - cost <= threshold {
            continue;
        }
        match best {
            Some((_, b)) if cost >= b - 1e-12 => {}
            _ => best = Some((mv, cost)),
        }
    }
    best
}

/// Best-improvement descent over subsets of `pool` from `initial`.
///
/// Returns the final open set, its (scaled) cost, and statistics.
pub fn descend<F: FnMut(&[usize]) -> Option<f64>>(
    pool: &[usize],
    initial: Vec<usize>,
    eval: F,
    config: &LocalSearchConfig,
) -> Result<(Vec<usize>, f64, SearchStats)> {
    config.validate()?;
    let mut pricer = Pricer::new(eval);
    let mut open = initial;
    open.sort_unstable();
    open.dedup();
    let mut current = pricer
        .price(&open)
        .ok_or_else(|| LbflError::Infeasible("initial open set is infeasible".into()))?;
    let mut stats = SearchStats::default();
    loop {
        if stats.iterations >= config.max_iterations {
            stats.capped = true;
            break;
        }
        let threshold = config.threshold(current, pool.len());
        match best_move(&mut pricer, pool, &open, current, threshold) {
            Some((mv, cost)) => {
                open = mv.apply(&open);
                current = cost;
                stats.iterations += 1;
                stats.applied.push(mv);
            }
            None => break,
        }
    }
    stats.evaluations = pricer.evaluations;
    Ok((open, current, stats))
}

/// First move that improves `open` beyond the threshold, if any.
pub fn improving_move<F: FnMut(&[usize]) -> Option<f64>>(
    pool: &[usize],
    open: &[usize],
    eval: F,
    config: &LocalSearchConfig,
) -> Option<(Move, f64)> {
    let mut pricer = Pricer::new(eval);
    let current = pricer.price(open)?;
    let threshold = config.threshold(current, pool.len());
    best_move(&mut pricer, pool, open, current, threshold)
}

fn ufl_pricer<'a>(
    instance: &'a UflInstance,
    sigma: f64,
) -> impl FnMut(&[usize]) -> Option<f64> + 'a {
    move |open: &[usize]| {
        if open.is_empty() && instance.n_clients() > 0 {
            return None;
        }
        let facility: f64 = open.iter().map(|&i| instance.opening_cost(i)).sum();
        let (_, assignment) = instance.nearest_assignment(open);
        Some(sigma * facility + assignment)
    }
}

/// UFL local search with opening costs scaled by `config.sigma` during the
/// search. Starts from all facilities open; clients go to the nearest open
/// facility.
pub fn ufl_local_search(instance: &UflInstance, config: &LocalSearchConfig) -> Result<UflSolution> {
    ufl_local_search_with_stats(instance, config).map(|(s, _)| s)
}

pub fn ufl_local_search_with_stats(
    instance: &UflInstance,
    config: &LocalSearchConfig,
) -> Result<(UflSolution, SearchStats)> {
    if instance.n_facilities() == 0 {
        return Err(LbflError::Invalid("UFL instance has no facilities".into()));
    }
    let pool: Vec<usize> = (0..instance.n_facilities()).collect();
    let (open, _, stats) = descend(&pool, pool.clone(), ufl_pricer(instance, config.sigma), config)?;
    Ok((instance.solution_for(&open), stats))
}

/// Whether no add/drop/swap improves the scaled UFL cost beyond threshold.
pub fn ufl_is_local_optimum(
    instance: &UflInstance,
    open: &[usize],
    config: &LocalSearchConfig,
) -> bool {
    let pool: Vec<usize> = (0..instance.n_facilities()).collect();
    improving_move(&pool, open, ufl_pricer(instance, config.sigma), config).is_none()
}

/// Repeatedly closes the open facility whose removal lowers the (unscaled)
/// cost the most, until no removal lowers it. Removals that leave the cost
/// unchanged are also taken, so a facility whose closure is free never stays.
/// The last open facility is never closed.
pub fn make_delete_optimal(instance: &UflInstance, solution: &UflSolution) -> UflSolution {
    let mut open = solution.open.clone();
    let price = |open: &[usize]| -> f64 {
        let f: f64 = open.iter().map(|&i| instance.opening_cost(i)).sum();
        f + instance.nearest_assignment(open).1
    };
    let mut current = price(&open);
    while open.len() > 1 {
        let mut best: Option<(usize, f64)> = None;
        for (k, _) in open.iter().enumerate() {
            let mut next = open.clone();
            next.remove(k);
            let cost = price(&next);
            if cost <= current + 1e-12 * (1.0 + current.abs())
                && best.is_none_or(|(_, b)| cost < b)
            {
                best = Some((k, cost));
            }
        }
        match best {
            Some((k, cost)) => {
                open.remove(k);
                current = cost.min(current);
            }
            None => break,
        }
    }
    instance.solution_for(&open)
}

/// Whether closing any single open facility would lower the cost.
pub fn is_delete_optimal(instance: &UflInstance, open: &[usize]) -> bool {
    if open.len() <= 1 {
        return true;
    }
    let price = |open: &[usize]| -> f64 {
        let f: f64 = open.iter().map(|&i| instance.opening_cost(i)).sum();
        f + instance.nearest_assignment(open).1
    };
    let current = price(open);
    (0..open.len()).all(|k| {
        let mut next = open.to_vec();
        next.remove(k);
        price(&next) >= current - 1e-9 * (1.0 + current.abs())
    })
}

fn cdufl_pricer<'a>(
    instance: &'a CduflInstance,
    sigma: f64,
) -> impl FnMut(&[usize]) -> Option<f64> + 'a {
    move |open: &[usize]| {
        let (_, assignment) = cdufl_best_assignment(instance, open).ok()?;
        let facility: f64 = open.iter().map(|&s| instance.opening_cost(s)).sum();
        Some(sigma * facility + assignment)
    }
}

/// CDUFL local search over the uncapacitated supply points. Every candidate
/// open set is priced with a fresh min-cost flow.
pub fn cdufl_local_search(
    instance: &CduflInstance,
    config: &LocalSearchConfig,
) -> Result<CduflSolution> {
    cdufl_local_search_with_stats(instance, config).map(|(s, _)| s)
}

pub fn cdufl_local_search_with_stats(
    instance: &CduflInstance,
    config: &LocalSearchConfig,
) -> Result<(CduflSolution, SearchStats)> {
    if !instance.is_feasible() {
        return Err(LbflError::Infeasible(format!(
            "no uncapacitated supply and capacity {} < demand {}",
            instance.total_capacity(),
            instance.total_demand()
        )));
    }
    let pool = instance.uncapacitated();
    let (open, _, stats) = descend(&pool, pool.clone(), cdufl_pricer(instance, config.sigma), config)?;
    let (assignment, _) = cdufl_best_assignment(instance, &open)?;
    Ok((CduflSolution::from_assignment(instance, open, assignment), stats))
}

/// Local search with opening costs scaled by the square root of two.
pub fn cdufl_sqrt2(instance: &CduflInstance, config: &LocalSearchConfig) -> Result<CduflSolution> {
    cdufl_local_search(instance, &config.with_sigma(std::f64::consts::SQRT_2))
}

pub fn cdufl_is_local_optimum(
    instance: &CduflInstance,
    open: &[usize],
    config: &LocalSearchConfig,
) -> bool {
    let pool = instance.uncapacitated();
    improving_move(&pool, open, cdufl_pricer(instance, config.sigma), config).is_none()
}
