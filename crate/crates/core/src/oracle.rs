//! Exact solvers by exhaustive subset enumeration, for desk-scale
//! instances only.
//!
//! Subsets are visited in Gray-code order; a subset is skipped when its
//! opening cost alone already exceeds the incumbent. Among optimal subsets the lexicographically
//! smallest sorted id list wins.

use serde::Serialize;

use crate::cdufl::{CduflInstance, CduflSolution};
use crate::error::{LbflError, Result};
use crate::flow::{assign_lower_bounded, assignment_to_map, cdufl_best_assignment};
use crate::model::{evaluate_lbfl, CostBreakdown, LbflInstance, Solution, UflInstance, TOL};
use crate::reduction::{AggregatedInstance, I2Solution};

/// Largest number of candidate facilities enumerated by default.
pub const DEFAULT_CAP: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult<S> {
    pub cost: CostBreakdown,
    pub open: Vec<usize>,
    pub solution: S,
    pub subsets_tried: u64,
    pub subsets_pruned: u64,
}

struct Incumbent<S> {
    best: Option<(f64, Vec<usize>, CostBreakdown, S)>,
    tried: u64,
    pruned: u64,
}

impl<S> Incumbent<S> {
    fn new() -> Self {
        Self {
            best: None,
            tried: 0,
            pruned: 0,
        }
    }

    fn bound(&self) -> f64 {
        self.best.as_ref().map_or(f64::INFINITY, |b| b.0)
    }

    fn offer(&mut self, open: Vec<usize>, cost: CostBreakdown, solution: S) {
        let better = match &self.best {
            None => true,
            Some((best, best_open, _, _)) => {
                let tol = TOL * (1.0 + best.abs());
                cost.total < best - tol || (cost.total <= best + tol && open < *best_open)
            }
        };
        if better {
            self.best = Some((cost.total, open, cost, solution));
        }
    }

    fn finish(self, what: &str) -> Result<OracleResult<S>> {
        let (_, open, cost, solution) = self
            .best
            .ok_or_else(|| LbflError::Infeasible(format!("no feasible {what} solution")))?;
        Ok(OracleResult {
            cost,
            open,
            solution,
            subsets_tried: self.tried,
            subsets_pruned: self.pruned,
        })
    }
}

fn check_cap(n: usize, cap: usize) -> Result<()> {
    if n > cap || n >= 63 {
        return Err(LbflError::SizeCap { size: n, cap });
    }
    Ok(())
}

/// Visits every nonempty subset of `0..n` once, in Gray-code order, with the
/// sum of `weight` over the subset.
fn for_each_subset(n: usize, weight: impl Fn(usize) -> f64, mut visit: impl FnMut(&[usize], f64)) {
    let mut mask: u64 = 0;
    for step in 1u64..(1u64 << n) {
        mask ^= 1 << step.trailing_zeros();
        let open: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
        let sum = open.iter().map(|&i| weight(i)).sum();
        visit(&open, sum);
    }
}

pub fn exact_lbfl(instance: &LbflInstance) -> Result<OracleResult<Solution>> {
    exact_lbfl_with_cap(instance, DEFAULT_CAP)
}

/// Minimum over nonempty open sets `S` with `M |S| <= |D|` of opening cost
/// plus the lower-bounded assignment cost.
pub fn exact_lbfl_with_cap(instance: &LbflInstance, cap: usize) -> Result<OracleResult<Solution>> {
    let nf = instance.n_facilities();
    check_cap(nf, cap)?;
    let (nc, m) = (instance.n_clients(), instance.lower_bound());
    if nc < m {
        return Err(LbflError::Infeasible(format!("{nc} clients but lower bound M = {m}")));
    }
    let mut inc = Incumbent::new();
    let mut error = None;
    for_each_subset(nf, |i| instance.opening_cost(i), |open, fsum| {
        if m * open.len() > nc || error.is_some() {
            return;
        }
        if fsum > inc.bound() + TOL * (1.0 + inc.bound().abs()) {
            inc.pruned += 1;
            return;
        }
        inc.tried += 1;
        match assign_lower_bounded(instance, open) {
            Ok((a, _)) => {
                let sol = Solution::new(open.iter().copied(), assignment_to_map(&a, nc));
                match evaluate_lbfl(instance, &sol) {
                    Ok(cost) => inc.offer(open.to_vec(), cost, sol),
                    Err(e) => error = Some(e),
                }
            }
            Err(LbflError::Infeasible(_)) => {}
            Err(e) => error = Some(e),
        }
    });
    if let Some(e) = error {
        return Err(e);
    }
    inc.finish("LBFL")
}

pub fn exact_ufl(instance: &UflInstance) -> Result<OracleResult<Solution>> {
    exact_ufl_with_cap(instance, DEFAULT_CAP)
}

/// Minimum over nonempty open sets of opening cost plus nearest-facility
/// assignment cost.
pub fn exact_ufl_with_cap(instance: &UflInstance, cap: usize) -> Result<OracleResult<Solution>> {
    let nf = instance.n_facilities();
    check_cap(nf, cap)?;
    let mut inc = Incumbent::new();
    for_each_subset(nf, |i| instance.opening_cost(i), |open, fsum| {
        if fsum > inc.bound() + TOL * (1.0 + inc.bound().abs()) {
            inc.pruned += 1;
            return;
        }
        inc.tried += 1;
        let sol = instance.solution_for(open);
        let cost = instance.evaluate(&sol);
        inc.offer(open.to_vec(), cost, sol);
    });
    inc.finish("UFL")
}

pub fn exact_cdufl(instance: &CduflInstance) -> Result<OracleResult<CduflSolution>> {
    exact_cdufl_with_cap(instance, DEFAULT_CAP)
}

/// Minimum over subsets of uncapacitated points, the empty set included,
/// of opening cost plus the best feasible flow.
pub fn exact_cdufl_with_cap(instance: &CduflInstance, cap: usize) -> Result<OracleResult<CduflSolution>> {
    let uncap = instance.uncapacitated();
    check_cap(uncap.len(), cap)?;
    if !instance.is_feasible() {
        return Err(LbflError::Infeasible(
            "no uncapacitated point and too little capacity".into(),
        ));
    }
    let mut inc = Incumbent::new();
    let mut error = None;
    let mut price = |open: Vec<usize>, inc: &mut Incumbent<CduflSolution>| {
        inc.tried += 1;
        match cdufl_best_assignment(instance, &open) {
            Ok((a, _)) => {
                let sol = CduflSolution::from_assignment(instance, open.clone(), a);
                let cost = sol.cost();
                inc.offer(open, cost, sol);
            }
            Err(LbflError::Infeasible(_)) => {}
            Err(e) => error = Some(e),
        }
    };
    price(Vec::new(), &mut inc);
    for_each_subset(uncap.len(), |k| instance.opening_cost(uncap[k]), |subset, fsum| {
        if fsum > inc.bound() + TOL * (1.0 + inc.bound().abs()) {
            inc.pruned += 1;
            return;
        }
        price(subset.iter().map(|&k| uncap[k]).collect(), &mut inc);
    });
    if let Some(e) = error {
        return Err(e);
    }
    inc.finish("CDUFL")
}

pub fn exact_i2(i2: &AggregatedInstance) -> Result<OracleResult<I2Solution>> {
    exact_i2_with_cap(i2, DEFAULT_CAP)
}

/// Optimal structured-instance solution: zero opening costs, so only the
/// transfer cost counts.
pub fn exact_i2_with_cap(i2: &AggregatedInstance, cap: usize) -> Result<OracleResult<I2Solution>> {
    let k = i2.n_locations();
    check_cap(k, cap)?;
    let (total, m) = (i2.total_clients(), i2.lower_bound());
    if total < m {
        return Err(LbflError::Infeasible(format!("{total} clients but lower bound M = {m}")));
    }
    let mut inc = Incumbent::new();
    let mut error = None;
    for_each_subset(k, |_| 0.0, |open, _| {
        if m * open.len() as u64 > total || error.is_some() {
            return;
        }
        inc.tried += 1;
        match i2.assign_to(open) {
            Ok((a, _)) => {
                let sol = I2Solution::from_assignment(i2, &a);
                let cost = CostBreakdown::new(0.0, sol.cost);
                inc.offer(open.to_vec(), cost, sol);
            }
            Err(LbflError::Infeasible(_)) => {}
            Err(e) => error = Some(e),
        }
    });
    if let Some(e) = error {
        return Err(e);
    }
    inc.finish("structured")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdufl::SupplyKind;
    use crate::model::DistMatrix;

    #[test]
    fn single_facility_with_colocated_clients() {
        let pts = vec![[0.0, 0.0]; 4];
        let inst = LbflInstance::new(vec![5.0], 3, DistMatrix::euclidean(&pts), 3).unwrap();
        let r = exact_lbfl(&inst).unwrap();
        assert_eq!(r.cost.total, 5.0);
        assert_eq!(r.open, vec![0]);
    }

    #[test]
    fn identical_facilities_open_lowest_id() {
        let pts = vec![[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]];
        let ufl = UflInstance::new(vec![1.0, 1.0], vec![vec![1.0], vec![1.0]]).unwrap();
        let r = exact_ufl(&ufl).unwrap();
        assert_eq!(r.open, vec![0]);
        let inst = LbflInstance::new(vec![1.0, 1.0], 1, DistMatrix::euclidean(&pts), 1).unwrap();
        assert_eq!(exact_lbfl(&inst).unwrap().open, vec![0]);
    }

    #[test]
    fn cap_is_enforced() {
        let n = 5;
        let pts = vec![[0.0, 0.0]; n + 1];
        let inst = LbflInstance::new(vec![1.0; n], 1, DistMatrix::euclidean(&pts), 1).unwrap();
        assert!(matches!(
            exact_lbfl_with_cap(&inst, 4),
            Err(LbflError::SizeCap { size: 5, cap: 4 })
        ));
    }

    #[test]
    fn too_few_clients_is_infeasible() {
        let pts = vec![[0.0, 0.0]; 2];
        let inst = LbflInstance::new(vec![1.0], 1, DistMatrix::euclidean(&pts), 2).unwrap();
        assert!(matches!(exact_lbfl(&inst), Err(LbflError::Infeasible(_))));
    }

    #[test]
    fn cdufl_zero_demand_costs_nothing() {
        let inst = CduflInstance::new(
            vec![SupplyKind::Uncapacitated { opening_cost: 3.0 }],
            vec![],
            vec![vec![]],
        )
        .unwrap();
        let r = exact_cdufl(&inst).unwrap();
        assert_eq!(r.cost.total, 0.0);
        assert!(r.open.is_empty());
    }

    #[test]
    fn cdufl_gap_instance_must_open() {
        let inst = CduflInstance::new(
            vec![
                SupplyKind::Uncapacitated { opening_cost: 10.0 },
                SupplyKind::Capacitated { capacity: 4 },
            ],
            vec![1; 5],
            vec![vec![0.0; 5], vec![0.0; 5]],
        )
        .unwrap();
        let r = exact_cdufl(&inst).unwrap();
        assert_eq!(r.cost.total, 10.0);
        assert_eq!(r.open, vec![0]);
    }

    #[test]
    fn pruning_skips_expensive_subsets() {
        let ufl = UflInstance::new(vec![1.0, 100.0, 100.0], vec![vec![0.0]; 3]).unwrap();
        let r = exact_ufl(&ufl).unwrap();
        assert_eq!(r.cost.total, 1.0);
        assert!(r.subsets_pruned > 0);
        assert_eq!(r.subsets_tried + r.subsets_pruned, 7);
    }
}
