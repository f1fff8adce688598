//! Bicriteria step: a UFL instance whose opening costs carry a radius
//! penalty, solved by scaled local search and made delete-optimal, so that
//! every open facility serves at least `ceil(alpha * M)` clients.

use serde::Serialize;

use crate::error::{LbflError, Result};
use crate::local_search::{make_delete_optimal, ufl_local_search, LocalSearchConfig};
use crate::model::{LbflInstance, UflInstance};

/// `ceil(alpha * M)`, snapping values within 1e-9 of a breakpoint `k / M`
/// down to `k` so that `alpha = 0.7, M = 10` gives 7, not 8.
pub fn alpha_rank(alpha: f64, m: usize) -> Result<usize> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(LbflError::Domain(format!("alpha = {alpha} outside (0, 1]")));
    }
    let k = (alpha * m as f64 - 1e-9).ceil() as usize;
    Ok(k.clamp(1, m))
}

/// Sorted distances from each facility to its `M` closest clients.
///
/// Ties among equidistant clients are broken by client id.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiusTable {
    m: usize,
    nearest: Vec<Vec<(f64, usize)>>,
}

impl RadiusTable {
    pub fn new(instance: &LbflInstance) -> Result<Self> {
        let m = instance.lower_bound();
        if instance.n_clients() < m {
            return Err(LbflError::Infeasible(format!(
                "{} clients but lower bound M = {m}",
                instance.n_clients()
            )));
        }
        let nearest = (0..instance.n_facilities())
            .map(|i| {
                let mut row: Vec<(f64, usize)> =
                    (0..instance.n_clients()).map(|j| (instance.conn(i, j), j)).collect();
                row.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                row.truncate(m);
                row
            })
            .collect();
        Ok(Self { m, nearest })
    }

    pub fn lower_bound(&self) -> usize {
        self.m
    }

    /// `(distance, client)` pairs of the `M` closest clients of facility `i`.
    pub fn nearest(&self, i: usize) -> &[(f64, usize)] {
        &self.nearest[i]
    }

    /// Distance to the `k`-th closest client, `1 <= k <= M`.
    pub fn radius_at_rank(&self, i: usize, k: usize) -> f64 {
        self.nearest[i][k - 1].0
    }

    pub fn radius(&self, i: usize, alpha: f64) -> Result<f64> {
        Ok(self.radius_at_rank(i, alpha_rank(alpha, self.m)?))
    }

    /// Sum of distances to the `M` closest clients.
    pub fn nearest_sum(&self, i: usize) -> f64 {
        self.nearest[i].iter().map(|(d, _)| d).sum()
    }

    /// Integral of the radius step function over (0, 1], times `M`.
    pub fn step_integral(&self, i: usize) -> f64 {
        (1..=self.m).map(|k| self.radius_at_rank(i, k)).sum()
    }

    /// Sum of radii over a facility set.
    pub fn total_radius(&self, facilities: &[usize], alpha: f64) -> Result<f64> {
        let k = alpha_rank(alpha, self.m)?;
        Ok(facilities.iter().map(|&i| self.radius_at_rank(i, k)).sum())
    }
}

/// Distance from facility `i` to its `ceil(alpha * M)`-closest client.
pub fn radius(instance: &LbflInstance, i: usize, alpha: f64) -> Result<f64> {
    RadiusTable::new(instance)?.radius(i, alpha)
}

/// Opening cost of facility `i` becomes `f_i + 2 alpha M R_i(alpha)`.
pub fn build_bicriteria_ufl(instance: &LbflInstance, alpha: f64) -> Result<UflInstance> {
    let table = RadiusTable::new(instance)?;
    build_with_table(instance, &table, alpha)
}

fn build_with_table(instance: &LbflInstance, table: &RadiusTable, alpha: f64) -> Result<UflInstance> {
    let m = instance.lower_bound() as f64;
    let costs = (0..instance.n_facilities())
        .map(|i| Ok(instance.opening_cost(i) + 2.0 * alpha * m * table.radius(i, alpha)?))
        .collect::<Result<Vec<f64>>>()?;
    UflInstance::new(costs, instance.conn_table())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BicriteriaSolution {
    pub alpha: f64,
    pub gamma: f64,
    /// `ceil(alpha * M)`.
    pub rank: usize,
    pub open: Vec<usize>,
    pub assign: Vec<usize>,
    /// Clients served by each facility in `open`, same order.
    pub served: Vec<usize>,
    /// Modified opening costs of the open facilities.
    pub facility_cost: f64,
    pub assignment_cost: f64,
    /// Modified opening and assignment cost of the local-search output,
    /// before the delete pass.
    pub search_facility_cost: f64,
    pub search_assignment_cost: f64,
}

impl BicriteriaSolution {
    pub fn min_served(&self) -> usize {
        self.served.iter().copied().min().unwrap_or(0)
    }
}

/// Runs the scaled UFL local search (opening costs times `gamma`) on the
/// modified instance, then makes the result delete-optimal in true cost.
///
/// Fails with [`LbflError::Invariant`] if an open facility serves fewer than
/// `ceil(alpha * M)` clients, which delete-optimality rules out.
pub fn solve_bicriteria(
    instance: &LbflInstance,
    alpha: f64,
    gamma: f64,
    config: &LocalSearchConfig,
) -> Result<BicriteriaSolution> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(LbflError::Domain(format!("gamma = {gamma}")));
    }
    if instance.n_facilities() == 0 {
        return Err(LbflError::Invalid("instance has no facilities".into()));
    }
    let table = RadiusTable::new(instance)?;
    let rank = alpha_rank(alpha, instance.lower_bound())?;
    let ufl = build_with_table(instance, &table, alpha)?;
    let searched = ufl_local_search(&ufl, &config.with_sigma(gamma))?;
    let before = ufl.evaluate(&searched);
    let solution = make_delete_optimal(&ufl, &searched);
    let counts = solution.served_counts(instance.n_facilities());
    let served: Vec<usize> = solution.open.iter().map(|&i| counts[i]).collect();
    if let Some((&i, &n)) = solution.open.iter().zip(&served).find(|(_, &n)| n < rank) {
        return Err(LbflError::Invariant(format!(
            "delete-optimal facility {i} serves {n} < ceil(alpha M) = {rank} clients"
        )));
    }
    let cost = ufl.evaluate(&solution);
    Ok(BicriteriaSolution {
        alpha,
        gamma,
        rank,
        open: solution.open,
        assign: solution.assign,
        served,
        facility_cost: cost.facility_cost,
        assignment_cost: cost.assignment_cost,
        search_facility_cost: before.facility_cost,
        search_assignment_cost: before.assignment_cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DistMatrix;

    /// One facility at the origin with clients on a line at the given offsets.
    fn line(offsets: &[f64], m: usize, f: f64) -> LbflInstance {
        let mut pts = vec![[0.0, 0.0]];
        pts.extend(offsets.iter().map(|&x| [x, 0.0]));
        LbflInstance::new(vec![f], offsets.len(), DistMatrix::euclidean(&pts), m).unwrap()
    }

    #[test]
    fn rank_snaps_to_breakpoints() {
        assert_eq!(alpha_rank(0.7, 10).unwrap(), 7);
        assert_eq!(alpha_rank(0.67, 3).unwrap(), 3);
        assert_eq!(alpha_rank(0.26, 4).unwrap(), 2);
        assert_eq!(alpha_rank(1.0, 4).unwrap(), 4);
        assert_eq!(alpha_rank(0.01, 4).unwrap(), 1);
        assert!(alpha_rank(0.0, 4).is_err());
        assert!(alpha_rank(1.2, 4).is_err());
    }

    #[test]
    fn radius_examples() {
        let inst = line(&[1.0, 2.0, 3.0, 4.0], 4, 0.0);
        assert_eq!(radius(&inst, 0, 0.5).unwrap(), 2.0);
        assert_eq!(radius(&inst, 0, 1.0).unwrap(), 4.0);
        assert_eq!(radius(&inst, 0, 0.26).unwrap(), 2.0);
    }

    #[test]
    fn radius_needs_m_clients() {
        let inst = line(&[1.0], 2, 0.0);
        assert!(matches!(radius(&inst, 0, 1.0), Err(LbflError::Infeasible(_))));
    }

    #[test]
    fn step_integral_matches_nearest_sum() {
        let inst = line(&[4.0, 1.0, 3.0, 2.0, 9.0], 4, 0.0);
        let table = RadiusTable::new(&inst).unwrap();
        assert_eq!(table.step_integral(0), 10.0);
        assert_eq!(table.nearest_sum(0), 10.0);
        // R(alpha) <= sum / (M (1 - alpha))
        for k in 1..4 {
            let alpha = k as f64 / 4.0;
            assert!(table.radius(0, alpha).unwrap() <= 10.0 / (4.0 * (1.0 - alpha)));
        }
    }

    #[test]
    fn opening_cost_formula() {
        let inst = line(&[3.0, 5.0], 2, 0.0);
        let ufl = build_bicriteria_ufl(&inst, 1.0).unwrap();
        assert_eq!(ufl.opening_cost(0), 20.0);
    }

    #[test]
    fn colocated_nearest_client_adds_nothing() {
        let inst = line(&[0.0, 5.0], 2, 3.0);
        let ufl = build_bicriteria_ufl(&inst, 0.5).unwrap();
        assert_eq!(ufl.opening_cost(0), 3.0);
    }

    #[test]
    fn single_facility_serves_everyone() {
        let inst = line(&[1.0, 2.0, 3.0], 2, 1.0);
        let b = solve_bicriteria(&inst, 0.75, 0.5, &LocalSearchConfig::default()).unwrap();
        assert_eq!(b.open, vec![0]);
        assert_eq!(b.served, vec![3]);
        assert!(b.min_served() >= b.rank);
    }

    #[test]
    fn bad_gamma_is_rejected() {
        let inst = line(&[1.0, 2.0], 2, 1.0);
        assert!(solve_bicriteria(&inst, 1.0, 0.0, &LocalSearchConfig::default()).is_err());
    }
}
