//! Instance and solution data model shared by every solver.
//!
//! All points live in one dense distance matrix. For an [`LbflInstance`] with
//! `nf` facilities and `nc` clients, facility `i` is point `i` and client `j`
//! is point `nf + j`.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{LbflError, Result};

/// Tolerance for every metric and cost comparison in the crate.
pub const TOL: f64 = 1e-9;

/// Dense symmetric distance matrix over a set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct DistMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistMatrix {
    /// Builds a matrix from rows, checking only that it is square.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (p, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(LbflError::Shape(format!(
                    "row {p} has {} entries, expected {n}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, data })
    }

    /// Euclidean distances between planar points.
    pub fn euclidean(points: &[[f64; 2]]) -> Self {
        let n = points.len();
        let mut data = vec![0.0; n * n];
        for p in 0..n {
            for q in 0..n {
                let dx = points[p][0] - points[q][0];
                let dy = points[p][1] - points[q][1];
                data[p * n + q] = dx.hypot(dy);
            }
        }
        Self { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize) -> f64 {
        self.data[p * self.n + q]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n.max(1)).take(self.n).map(|r| r.to_vec()).collect()
    }

    /// Restriction of the matrix to `points`, in the given order.
    pub fn restrict(&self, points: &[usize]) -> Self {
        let n = points.len();
        let mut data = Vec::with_capacity(n * n);
        for &p in points {
            for &q in points {
                data.push(self.get(p, q));
            }
        }
        Self { n, data }
    }
}

/// One reason a matrix fails to be a metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum MetricViolation {
    Negative { p: usize, q: usize, value: f64 },
    Diagonal { p: usize, value: f64 },
    Asymmetric { p: usize, q: usize },
    /// `d(p, q) > d(p, via) + d(via, q)` beyond tolerance.
    Triangle { p: usize, q: usize, via: usize, excess: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricReport {
    pub violations: Vec<MetricViolation>,
}

impl MetricReport {
    pub fn is_metric(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks symmetry, zero diagonal and the triangle inequality at [`TOL`].
///
/// Triangle violations are reported once per unordered pair, naming the
/// first intermediate point that witnesses them.
pub fn validate_metric(rows: &[Vec<f64>]) -> Result<MetricReport> {
    let dist = DistMatrix::from_rows(rows)?;
    Ok(validate_dist(&dist))
}

pub fn validate_dist(dist: &DistMatrix) -> MetricReport {
    let n = dist.len();
    let mut violations = Vec::new();
    for p in 0..n {
        let d = dist.get(p, p);
        if d.abs() > TOL {
            violations.push(MetricViolation::Diagonal { p, value: d });
        }
        for q in 0..n {
            let v = dist.get(p, q);
            if v < 0.0 || !v.is_finite() {
                violations.push(MetricViolation::Negative { p, q, value: v });
            }
        }
    }
    for p in 0..n {
        for q in p + 1..n {
            if (dist.get(p, q) - dist.get(q, p)).abs() > TOL {
                violations.push(MetricViolation::Asymmetric { p, q });
            }
        }
    }
    for p in 0..n {
        for q in p + 1..n {
            let direct = dist.get(p, q);
            if let Some(via) = (0..n).find(|&r| direct > dist.get(p, r) + dist.get(r, q) + TOL) {
                let excess = direct - dist.get(p, via) - dist.get(via, q);
                violations.push(MetricViolation::Triangle { p, q, via, excess });
            }
        }
    }
    MetricReport { violations }
}

/// All-pairs shortest paths over an undirected weighted graph on `n` points.
pub fn metric_completion(n: usize, edges: &[(usize, usize, f64)]) -> Result<DistMatrix> {
    let mut data = vec![f64::INFINITY; n * n];
    for p in 0..n {
        data[p * n + p] = 0.0;
    }
    for &(a, b, w) in edges {
        if a >= n || b >= n {
            return Err(LbflError::Reference(format!("edge ({a}, {b}) on {n} points")));
        }
        if !(w >= 0.0) || !w.is_finite() {
            return Err(LbflError::Invalid(format!("edge ({a}, {b}) has weight {w}")));
        }
        if w < data[a * n + b] {
            data[a * n + b] = w;
            data[b * n + a] = w;
        }
    }
    for k in 0..n {
        for p in 0..n {
            let pk = data[p * n + k];
            if pk.is_infinite() {
                continue;
            }
            for q in 0..n {
                let cand = pk + data[k * n + q];
                if cand < data[p * n + q] {
                    data[p * n + q] = cand;
                }
            }
        }
    }
    for p in 0..n {
        for q in p + 1..n {
            if data[p * n + q].is_infinite() {
                return Err(LbflError::Unreachable(p, q));
            }
        }
    }
    Ok(DistMatrix { n, data })
}

/// Facility and assignment cost of a solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub facility_cost: f64,
    pub assignment_cost: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn new(facility_cost: f64, assignment_cost: f64) -> Self {
        Self {
            facility_cost,
            assignment_cost,
            total: facility_cost + assignment_cost,
        }
    }
}

/// Lower-bounded facility location instance.
#[derive(Debug, Clone, PartialEq)]
pub struct LbflInstance {
    opening_costs: Vec<f64>,
    n_clients: usize,
    dist: DistMatrix,
    lower_bound: usize,
}

impl LbflInstance {
    /// Validates shapes, nonnegative opening costs, `M >= 1` and the metric.
    ///
    /// Fewer clients than `M` is accepted here; solvers report it as
    /// infeasibility.
    pub fn new(
        opening_costs: Vec<f64>,
        n_clients: usize,
        dist: DistMatrix,
        lower_bound: usize,
    ) -> Result<Self> {
        let nf = opening_costs.len();
        if dist.len() != nf + n_clients {
            return Err(LbflError::Shape(format!(
                "distance matrix has {} points, expected {} facilities + {} clients",
                dist.len(),
                nf,
                n_clients
            )));
        }
        if let Some((i, f)) = opening_costs
            .iter()
            .enumerate()
            .find(|(_, f)| !(**f >= 0.0) || !f.is_finite())
        {
            return Err(LbflError::Invalid(format!("facility {i} has opening cost {f}")));
        }
        if lower_bound == 0 {
            return Err(LbflError::Invalid("lower bound M must be at least 1".into()));
        }
        let report = validate_dist(&dist);
        if let Some(v) = report.violations.first() {
            return Err(LbflError::NotMetric(format!(
                "{} violation(s), first: {v:?}",
                report.violations.len()
            )));
        }
        Ok(Self {
            opening_costs,
            n_clients,
            dist,
            lower_bound,
        })
    }

    pub fn n_facilities(&self) -> usize {
        self.opening_costs.len()
    }

    pub fn n_clients(&self) -> usize {
        self.n_clients
    }

    pub fn lower_bound(&self) -> usize {
        self.lower_bound
    }

    pub fn opening_costs(&self) -> &[f64] {
        &self.opening_costs
    }

    pub fn opening_cost(&self, i: usize) -> f64 {
        self.opening_costs[i]
    }

    pub fn dist(&self) -> &DistMatrix {
        &self.dist
    }

    /// Connection cost `c_ij` between facility `i` and client `j`.
    #[inline]
    pub fn conn(&self, i: usize, j: usize) -> f64 {
        self.dist.get(i, self.n_facilities() + j)
    }

    /// Distance between two facilities.
    #[inline]
    pub fn facility_dist(&self, a: usize, b: usize) -> f64 {
        self.dist.get(a, b)
    }

    /// Facility-by-client connection cost table.
    pub fn conn_table(&self) -> Vec<Vec<f64>> {
        (0..self.n_facilities())
            .map(|i| (0..self.n_clients).map(|j| self.conn(i, j)).collect())
            .collect()
    }

    /// The same instance viewed as UFL (lower bound dropped).
    pub fn to_ufl(&self) -> UflInstance {
        UflInstance {
            opening_costs: self.opening_costs.clone(),
            conn: self.conn_table(),
        }
    }

    /// A copy with a different lower bound.
    pub fn with_lower_bound(&self, lower_bound: usize) -> Result<Self> {
        if lower_bound == 0 {
            return Err(LbflError::Invalid("lower bound M must be at least 1".into()));
        }
        Ok(Self {
            lower_bound,
            ..self.clone()
        })
    }
}

/// Open facility set plus a total client-to-facility map.
///
/// Used for both LBFL and UFL solutions; `open` is kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Solution {
    pub open: Vec<usize>,
    pub assign: Vec<usize>,
}

pub type LbflSolution = Solution;
pub type UflSolution = Solution;

impl Solution {
    pub fn new(open: impl IntoIterator<Item = usize>, assign: Vec<usize>) -> Self {
        let open: BTreeSet<usize> = open.into_iter().collect();
        Self {
            open: open.into_iter().collect(),
            assign,
        }
    }

    /// Number of clients served by each facility id in `0..nf`.
    pub fn served_counts(&self, nf: usize) -> Vec<usize> {
        let mut counts = vec![0; nf];
        for &i in &self.assign {
            if i < nf {
                counts[i] += 1;
            }
        }
        counts
    }
}

/// Total cost of `solution`; infeasible solutions are priced as given.
pub fn evaluate_lbfl(instance: &LbflInstance, solution: &Solution) -> Result<CostBreakdown> {
    let nf = instance.n_facilities();
    if let Some(&i) = solution.open.iter().find(|&&i| i >= nf) {
        return Err(LbflError::Reference(format!("open facility {i} of {nf}")));
    }
    if solution.assign.len() != instance.n_clients() {
        return Err(LbflError::Reference(format!(
            "assignment covers {} clients, instance has {}",
            solution.assign.len(),
            instance.n_clients()
        )));
    }
    let mut assignment = 0.0;
    for (j, &i) in solution.assign.iter().enumerate() {
        if i >= nf {
            return Err(LbflError::Reference(format!("client {j} assigned to facility {i}")));
        }
        assignment += instance.conn(i, j);
    }
    let facility = solution.open.iter().map(|&i| instance.opening_cost(i)).sum();
    Ok(CostBreakdown::new(facility, assignment))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum FeasibilityViolation {
    /// An open facility serves fewer than `M` clients.
    Underfilled { facility: usize, served: usize, required: usize },
    /// A client is assigned to a facility that is not open.
    ClosedFacility { client: usize, facility: usize },
    Unassigned { client: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Feasibility {
    pub feasible: bool,
    pub violations: Vec<FeasibilityViolation>,
}

pub fn check_feasible(instance: &LbflInstance, solution: &Solution) -> Feasibility {
    let nf = instance.n_facilities();
    let m = instance.lower_bound();
    let open: BTreeSet<usize> = solution.open.iter().copied().collect();
    let mut violations = Vec::new();
    for j in 0..instance.n_clients() {
        match solution.assign.get(j) {
            None => violations.push(FeasibilityViolation::Unassigned { client: j }),
            Some(&i) if !open.contains(&i) => {
                violations.push(FeasibilityViolation::ClosedFacility { client: j, facility: i })
            }
            Some(_) => {}
        }
    }
    let served = solution.served_counts(nf);
    for &i in &open {
        let s = served.get(i).copied().unwrap_or(0);
        if s < m {
            violations.push(FeasibilityViolation::Underfilled {
                facility: i,
                served: s,
                required: m,
            });
        }
    }
    Feasibility {
        feasible: violations.is_empty(),
        violations,
    }
}

/// Uncapacitated facility location instance as a facility-by-client table.
#[derive(Debug, Clone, PartialEq)]
pub struct UflInstance {
    opening_costs: Vec<f64>,
    conn: Vec<Vec<f64>>,
}

impl UflInstance {
    pub fn new(opening_costs: Vec<f64>, conn: Vec<Vec<f64>>) -> Result<Self> {
        if conn.len() != opening_costs.len() {
            return Err(LbflError::Shape(format!(
                "{} cost rows for {} facilities",
                conn.len(),
                opening_costs.len()
            )));
        }
        let nc = conn.first().map_or(0, Vec::len);
        if conn.iter().any(|row| row.len() != nc) {
            return Err(LbflError::Shape("ragged connection table".into()));
        }
        if opening_costs.iter().any(|f| !(*f >= 0.0)) {
            return Err(LbflError::Invalid("negative opening cost".into()));
        }
        Ok(Self { opening_costs, conn })
    }

    pub fn n_facilities(&self) -> usize {
        self.opening_costs.len()
    }

    pub fn n_clients(&self) -> usize {
        self.conn.first().map_or(0, Vec::len)
    }

    pub fn opening_costs(&self) -> &[f64] {
        &self.opening_costs
    }

    pub fn opening_cost(&self, i: usize) -> f64 {
        self.opening_costs[i]
    }

    #[inline]
    pub fn conn(&self, i: usize, j: usize) -> f64 {
        self.conn[i][j]
    }

    /// Assigns every client to its nearest facility in `open`, lowest id on
    /// ties. `open` must be nonempty when there are clients.
    pub fn nearest_assignment(&self, open: &[usize]) -> (Vec<usize>, f64) {
        let mut assign = Vec::with_capacity(self.n_clients());
        let mut total = 0.0;
        for j in 0..self.n_clients() {
            let mut best = usize::MAX;
            let mut best_d = f64::INFINITY;
            for &i in open {
                let d = self.conn[i][j];
                if d < best_d || (d == best_d && i < best) {
                    best = i;
                    best_d = d;
                }
            }
            assign.push(best);
            total += best_d;
        }
        (assign, total)
    }

    /// Solution opening `open` with nearest-facility assignment.
    pub fn solution_for(&self, open: &[usize]) -> Solution {
        let (assign, _) = self.nearest_assignment(open);
        Solution::new(open.iter().copied(), assign)
    }

    pub fn evaluate(&self, solution: &Solution) -> CostBreakdown {
        let facility = solution.open.iter().map(|&i| self.opening_costs[i]).sum();
        let assignment = solution
            .assign
            .iter()
            .enumerate()
            .map(|(j, &i)| self.conn[i][j])
            .sum();
        CostBreakdown::new(facility, assignment)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_metric_is_clean() {
        let report = validate_metric(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(report.is_metric());
    }

    #[test]
    fn triangle_violation_is_reported() {
        let rows = vec![vec![0.0, 1.0, 3.0], vec![1.0, 0.0, 1.0], vec![3.0, 1.0, 0.0]];
        let report = validate_metric(&rows).unwrap();
        assert_eq!(report.violations.len(), 1);
        match report.violations[0] {
            MetricViolation::Triangle { p, q, via, .. } => assert_eq!((p, q, via), (0, 2, 1)),
            ref other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn asymmetry_and_diagonal_are_reported() {
        let rows = vec![vec![0.5, 1.0], vec![2.0, 0.0]];
        let report = validate_metric(&rows).unwrap();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, MetricViolation::Diagonal { p: 0, .. })));
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, MetricViolation::Asymmetric { p: 0, q: 1 })));
    }

    #[test]
    fn non_square_is_a_shape_error() {
        let err = validate_metric(&[vec![0.0, 1.0], vec![1.0]]).unwrap_err();
        assert!(matches!(err, LbflError::Shape(_)));
    }

    #[test]
    fn completion_of_a_path() {
        let d = metric_completion(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        assert_eq!(d.get(0, 2), 2.0);
        assert_eq!(d.get(2, 0), 2.0);
    }

    #[test]
    fn completion_of_a_single_edge() {
        let d = metric_completion(2, &[(0, 1, 4.5)]).unwrap();
        assert_eq!(d.rows(), vec![vec![0.0, 4.5], vec![4.5, 0.0]]);
    }

    #[test]
    fn completion_rejects_disconnected_graphs() {
        let err = metric_completion(3, &[(0, 1, 1.0)]).unwrap_err();
        assert_eq!(err, LbflError::Unreachable(0, 2));
    }

    fn colocated(f: f64, clients: usize, m: usize) -> LbflInstance {
        let n = 1 + clients;
        let dist = DistMatrix::from_rows(&vec![vec![0.0; n]; n]).unwrap();
        LbflInstance::new(vec![f], clients, dist, m).unwrap()
    }

    #[test]
    fn evaluate_colocated() {
        let inst = colocated(7.0, 3, 2);
        let sol = Solution::new([0], vec![0, 0, 0]);
        let cost = evaluate_lbfl(&inst, &sol).unwrap();
        assert_eq!(cost, CostBreakdown::new(7.0, 0.0));
        assert_eq!(cost.total, 7.0);
    }

    #[test]
    fn evaluate_rejects_dangling_ids() {
        let inst = colocated(1.0, 2, 1);
        let sol = Solution::new([0], vec![0, 3]);
        assert!(matches!(evaluate_lbfl(&inst, &sol), Err(LbflError::Reference(_))));
        let sol = Solution::new([5], vec![0, 0]);
        assert!(matches!(evaluate_lbfl(&inst, &sol), Err(LbflError::Reference(_))));
    }

    #[test]
    fn feasibility_checks() {
        let inst = colocated(1.0, 2, 2);
        let sol = Solution::new([0], vec![0, 0]);
        assert!(check_feasible(&inst, &sol).feasible);

        let inst3 = inst.with_lower_bound(3).unwrap();
        let f = check_feasible(&inst3, &sol);
        assert!(!f.feasible);
        assert_eq!(
            f.violations,
            vec![FeasibilityViolation::Underfilled { facility: 0, served: 2, required: 3 }]
        );

        let empty = Solution::new([], vec![0, 0]);
        let f = check_feasible(&inst, &empty);
        assert!(!f.feasible);
        assert_eq!(f.violations.len(), 2);
    }

    #[test]
    fn instance_rejects_non_metric() {
        let rows = vec![
            vec![0.0, 1.0, 3.0],
            vec![1.0, 0.0, 1.0],
            vec![3.0, 1.0, 0.0],
        ];
        let dist = DistMatrix::from_rows(&rows).unwrap();
        assert!(matches!(
            LbflInstance::new(vec![0.0], 2, dist, 1),
            Err(LbflError::NotMetric(_))
        ));
    }

    #[test]
    fn nearest_assignment_breaks_ties_by_id() {
        let ufl = UflInstance::new(vec![1.0, 1.0], vec![vec![2.0, 1.0], vec![2.0, 0.5]]).unwrap();
        let (assign, cost) = ufl.nearest_assignment(&[0, 1]);
        assert_eq!(assign, vec![0, 1]);
        assert_eq!(cost, 2.5);
    }
}
