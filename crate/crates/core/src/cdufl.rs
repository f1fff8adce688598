//! Capacity-discounted UFL: every supply point is either uncapacitated with an
//! opening cost, or capacitated with zero opening cost.

use serde::Serialize;

use crate::error::{LbflError, Result};
use crate::flow::Assignment;
use crate::model::CostBreakdown;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SupplyKind {
    Uncapacitated { opening_cost: f64 },
    /// Zero opening cost, always usable.
    Capacitated { capacity: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CduflInstance {
    supply: Vec<SupplyKind>,
    demands: Vec<u64>,
    /// `dist[s][d]`: cost of shipping one unit from supply `s` to demand `d`.
    dist: Vec<Vec<f64>>,
}

impl CduflInstance {
    pub fn new(supply: Vec<SupplyKind>, demands: Vec<u64>, dist: Vec<Vec<f64>>) -> Result<Self> {
        if dist.len() != supply.len() {
            return Err(LbflError::Shape(format!(
                "{} distance rows for {} supply points",
                dist.len(),
                supply.len()
            )));
        }
        for (s, row) in dist.iter().enumerate() {
            if row.len() != demands.len() {
                return Err(LbflError::Shape(format!(
                    "supply {s} has {} distances for {} demand points",
                    row.len(),
                    demands.len()
                )));
            }
            if row.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
                return Err(LbflError::Invalid(format!("supply {s} has a negative distance")));
            }
        }
        for (s, kind) in supply.iter().enumerate() {
            if let SupplyKind::Uncapacitated { opening_cost } = kind {
                if !(*opening_cost >= 0.0) || !opening_cost.is_finite() {
                    return Err(LbflError::Invalid(format!(
                        "supply {s} has opening cost {opening_cost}"
                    )));
                }
            }
        }
        Ok(Self { supply, demands, dist })
    }

    pub fn supply(&self) -> &[SupplyKind] {
        &self.supply
    }

    pub fn demands(&self) -> &[u64] {
        &self.demands
    }

    pub fn n_supply(&self) -> usize {
        self.supply.len()
    }

    pub fn n_demand(&self) -> usize {
        self.demands.len()
    }

    #[inline]
    pub fn dist(&self, s: usize, d: usize) -> f64 {
        self.dist[s][d]
    }

    pub fn dist_table(&self) -> &[Vec<f64>] {
        &self.dist
    }

    pub fn is_uncapacitated(&self, s: usize) -> bool {
        matches!(self.supply[s], SupplyKind::Uncapacitated { .. })
    }

    /// Opening cost; zero for capacitated points.
    pub fn opening_cost(&self, s: usize) -> f64 {
        match self.supply[s] {
            SupplyKind::Uncapacitated { opening_cost } => opening_cost,
            SupplyKind::Capacitated { .. } => 0.0,
        }
    }

    pub fn uncapacitated(&self) -> Vec<usize> {
        (0..self.n_supply()).filter(|&s| self.is_uncapacitated(s)).collect()
    }

    pub fn capacitated(&self) -> Vec<usize> {
        (0..self.n_supply()).filter(|&s| !self.is_uncapacitated(s)).collect()
    }

    pub fn total_demand(&self) -> u64 {
        self.demands.iter().sum()
    }

    pub fn total_capacity(&self) -> u64 {
        self.supply
            .iter()
            .map(|k| match k {
                SupplyKind::Capacitated { capacity } => *capacity,
                SupplyKind::Uncapacitated { .. } => 0,
            })
            .sum()
    }

    /// Whether some open set admits a feasible assignment.
    pub fn is_feasible(&self) -> bool {
        !self.uncapacitated().is_empty() || self.total_capacity() >= self.total_demand()
    }

    /// A copy with every opening cost multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let supply = self
            .supply
            .iter()
            .map(|k| match *k {
                SupplyKind::Uncapacitated { opening_cost } => SupplyKind::Uncapacitated {
                    opening_cost: opening_cost * factor,
                },
                cap => cap,
            })
            .collect();
        Self {
            supply,
            demands: self.demands.clone(),
            dist: self.dist.clone(),
        }
    }
}

/// Open uncapacitated points plus a demand-respecting flow.
///
/// Capacitated points are never listed in `open_uncap`; they are always usable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CduflSolution {
    pub open_uncap: Vec<usize>,
    /// Supplier = supply point, receiver = demand point.
    pub assignment: Assignment,
    pub facility_cost: f64,
    pub assignment_cost: f64,
    /// Shipping cost charged to each supply point.
    pub supply_cost: Vec<f64>,
}

impl CduflSolution {
    pub fn from_assignment(
        instance: &CduflInstance,
        open_uncap: Vec<usize>,
        assignment: Assignment,
    ) -> Self {
        let mut open_uncap = open_uncap;
        open_uncap.sort_unstable();
        open_uncap.dedup();
        let mut supply_cost = vec![0.0; instance.n_supply()];
        for (&(s, d), &x) in assignment.units() {
            supply_cost[s] += x as f64 * instance.dist(s, d);
        }
        let assignment_cost = supply_cost.iter().sum();
        let facility_cost = open_uncap.iter().map(|&s| instance.opening_cost(s)).sum();
        Self {
            open_uncap,
            assignment,
            facility_cost,
            assignment_cost,
            supply_cost,
        }
    }

    pub fn cost(&self) -> CostBreakdown {
        CostBreakdown::new(self.facility_cost, self.assignment_cost)
    }

    pub fn total(&self) -> f64 {
        self.facility_cost + self.assignment_cost
    }

    /// Checks demand coverage, capacities and that only open or capacitated
    /// points ship.
    pub fn verify(&self, instance: &CduflInstance) -> Result<()> {
        for d in 0..instance.n_demand() {
            let got = self.assignment.receiver_total(d);
            if got != instance.demands()[d] {
                return Err(LbflError::Invariant(format!(
                    "demand point {d} receives {got} of {}",
                    instance.demands()[d]
                )));
            }
        }
        for s in 0..instance.n_supply() {
            let shipped = self.assignment.supplier_total(s);
            match instance.supply()[s] {
                SupplyKind::Capacitated { capacity } if shipped > capacity => {
                    return Err(LbflError::Invariant(format!(
                        "supply {s} ships {shipped} over capacity {capacity}"
                    )));
                }
                SupplyKind::Uncapacitated { .. }
                    if shipped > 0 && self.open_uncap.binary_search(&s).is_err() =>
                {
                    return Err(LbflError::Invariant(format!("closed supply {s} ships {shipped}")));
                }
                _ => {}
            }
        }
        Ok(())
    }
}
