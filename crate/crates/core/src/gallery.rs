//! Instance generators: random planar instances, the CDUFL integrality-gap
//! instance, and the locality-gap families that defeat plain add/drop/swap
//! local search on LBFL.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bicriteria::alpha_rank;
use crate::cdufl::{CduflInstance, SupplyKind};
use crate::error::{LbflError, Result};
use crate::flow::{assign_lower_bounded, assignment_to_map};
use crate::local_search::{candidate_moves, descend, LocalSearchConfig, Move, SearchStats};
use crate::model::{evaluate_lbfl, metric_completion, DistMatrix, LbflInstance, Solution};

/// Default perturbation of the locality-gap constructions.
pub const DEFAULT_EPSILON: f64 = 1e-3;

/// Random instance with its planar layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarInstance {
    pub facility_points: Vec<[f64; 2]>,
    pub client_points: Vec<[f64; 2]>,
    pub instance: LbflInstance,
}

/// Facilities and clients uniform in the unit square, opening costs uniform
/// in `cost_range`.
pub fn gen_random_planar(
    seed: u64,
    n_facilities: usize,
    n_clients: usize,
    lower_bound: usize,
    cost_range: (f64, f64),
) -> Result<PlanarInstance> {
    if n_clients < lower_bound {
        return Err(LbflError::Infeasible(format!(
            "{n_clients} clients but lower bound M = {lower_bound}"
        )));
    }
    let (lo, hi) = cost_range;
    if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
        return Err(LbflError::Invalid(format!("cost range ({lo}, {hi})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = |rng: &mut ChaCha8Rng| [rng.gen::<f64>(), rng.gen::<f64>()];
    let facility_points: Vec<[f64; 2]> = (0..n_facilities).map(|_| point(&mut rng)).collect();
    let client_points: Vec<[f64; 2]> = (0..n_clients).map(|_| point(&mut rng)).collect();
    let costs = (0..n_facilities)
        .map(|_| if hi > lo { rng.gen_range(lo..hi) } else { lo })
        .collect();
    let all: Vec<[f64; 2]> = facility_points.iter().chain(&client_points).copied().collect();
    let instance = LbflInstance::new(costs, n_clients, DistMatrix::euclidean(&all), lower_bound)?;
    Ok(PlanarInstance {
        facility_points,
        client_points,
        instance,
    })
}

pub fn gen_random(
    seed: u64,
    n_facilities: usize,
    n_clients: usize,
    lower_bound: usize,
    cost_range: (f64, f64),
) -> Result<LbflInstance> {
    Ok(gen_random_planar(seed, n_facilities, n_clients, lower_bound, cost_range)?.instance)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RandomCduflParams {
    pub max_uncapacitated: usize,
    pub max_capacitated: usize,
    pub max_units: u64,
    pub max_opening_cost: f64,
}

impl Default for RandomCduflParams {
    fn default() -> Self {
        Self {
            max_uncapacitated: 6,
            max_capacitated: 3,
            max_units: 12,
            max_opening_cost: 2.0,
        }
    }
}

/// Random planar CDUFL instance with at least one uncapacitated point.
pub fn gen_random_cdufl(seed: u64, params: &RandomCduflParams) -> Result<CduflInstance> {
    if params.max_uncapacitated == 0 {
        return Err(LbflError::Invalid("need at least one uncapacitated point".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_u = rng.gen_range(1..=params.max_uncapacitated);
    let n_c = rng.gen_range(0..=params.max_capacitated);
    let n_d = rng.gen_range(1..=params.max_units.max(1) as usize);
    let mut supply = Vec::new();
    for _ in 0..n_u {
        supply.push(SupplyKind::Uncapacitated {
            opening_cost: rng.gen::<f64>() * params.max_opening_cost,
        });
    }
    for _ in 0..n_c {
        supply.push(SupplyKind::Capacitated {
            capacity: rng.gen_range(1..=4),
        });
    }
    let mut left = params.max_units;
    let mut demands = Vec::new();
    for _ in 0..n_d {
        let d = rng.gen_range(1..=3).min(left);
        left -= d;
        demands.push(d);
    }
    let point = |rng: &mut ChaCha8Rng| [rng.gen::<f64>(), rng.gen::<f64>()];
    let sp: Vec<[f64; 2]> = (0..supply.len()).map(|_| point(&mut rng)).collect();
    let dp: Vec<[f64; 2]> = (0..demands.len()).map(|_| point(&mut rng)).collect();
    let dist = sp
        .iter()
        .map(|s| dp.iter().map(|d| ((s[0] - d[0]).powi(2) + (s[1] - d[1]).powi(2)).sqrt()).collect())
        .collect();
    CduflInstance::new(supply, demands, dist)
}

/// An instance with a designated local optimum and a designated global
/// optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct GalleryInstance {
    pub instance: LbflInstance,
    pub local_optimum: Solution,
    pub global_optimum: Solution,
    pub local_cost: f64,
    pub global_cost: f64,
    /// Ratio the construction is meant to exhibit, from its closed form.
    pub expected_ratio: f64,
}

impl GalleryInstance {
    fn assemble(
        instance: LbflInstance,
        local_open: Vec<usize>,
        global_open: Vec<usize>,
        expected_ratio: f64,
    ) -> Result<Self> {
        let solve = |open: Vec<usize>| -> Result<(Solution, f64)> {
            let (a, _) = assign_lower_bounded(&instance, &open)?;
            let sol = Solution::new(open, assignment_to_map(&a, instance.n_clients()));
            let cost = evaluate_lbfl(&instance, &sol)?.total;
            Ok((sol, cost))
        };
        let (local_optimum, local_cost) = solve(local_open)?;
        let (global_optimum, global_cost) = solve(global_open)?;
        Ok(Self {
            instance,
            local_optimum,
            global_optimum,
            local_cost,
            global_cost,
            expected_ratio,
        })
    }

    /// Local over global cost.
    pub fn ratio(&self) -> f64 {
        self.local_cost / self.global_cost
    }
}

fn check_epsilon(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(LbflError::Invalid(format!("epsilon = {eps} must be positive")))
    }
}

/// Hub `o` (id 0) and spokes `s_1..s_M` (ids 1..=M); `M` clusters of `M`
/// clients, each at distance 1 from the hub and `M` from its spoke. Opening
/// costs `M^2 + eps` at the hub and `M` at each spoke. The spokes form a
/// local optimum of cost `M^2 + M^3`; the hub alone costs `2 M^2 + eps`.
pub fn gen_locality_star(m: usize, eps: f64) -> Result<GalleryInstance> {
    if m < 2 {
        return Err(LbflError::Invalid("the star needs M >= 2".into()));
    }
    star(m, m, eps)
}

/// The star with clusters of `ceil(alpha M)` clients and lower bound
/// `ceil(alpha M)`, opening costs and distances unchanged.
pub fn gen_locality_star_bicriteria(m: usize, alpha: f64, eps: f64) -> Result<GalleryInstance> {
    if m < 2 {
        return Err(LbflError::Invalid("the star needs M >= 2".into()));
    }
    if !(alpha > 0.5) {
        return Err(LbflError::Domain(format!("alpha = {alpha} must exceed 1/2")));
    }
    star(m, alpha_rank(alpha, m)?, eps)
}

fn star(m: usize, cluster: usize, eps: f64) -> Result<GalleryInstance> {
    check_epsilon(eps)?;
    let nf = m + 1;
    let nc = m * cluster;
    let mut edges = Vec::new();
    for s in 1..=m {
        for k in 0..cluster {
            let j = nf + (s - 1) * cluster + k;
            edges.push((0, j, 1.0));
            edges.push((s, j, m as f64));
        }
    }
    let dist = metric_completion(nf + nc, &edges)?;
    let mf = m as f64;
    let mut costs = vec![mf; nf];
    costs[0] = mf * mf + eps;
    let instance = LbflInstance::new(costs, nc, dist, cluster)?;
    let c = cluster as f64;
    let expected = (mf * mf + c * mf * mf) / (mf * mf + eps + c * mf);
    GalleryInstance::assemble(instance, (1..=m).collect(), vec![0], expected)
}

/// An `M`-regular bipartite graph given by its edges `(s, o)`, with `n`
/// vertices on each side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BipartiteGraph {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

impl BipartiteGraph {
    /// The `2k`-cycle `s_i - o_i - s_{i-1}`, edges in the order
    /// `(s_i, o_i), (s_i, o_{i+1})`.
    pub fn cycle(k: usize) -> Self {
        let edges = (0..k).flat_map(|i| [(i, i), (i, (i + 1) % k)]).collect();
        Self { n: k, edges }
    }

    /// Common degree of every vertex.
    pub fn regular_degree(&self) -> Result<usize> {
        let mut deg_s = vec![0usize; self.n];
        let mut deg_o = vec![0usize; self.n];
        for &(s, o) in &self.edges {
            if s >= self.n || o >= self.n {
                return Err(LbflError::Reference(format!("edge ({s}, {o}) with n = {}", self.n)));
            }
            deg_s[s] += 1;
            deg_o[o] += 1;
        }
        let d = deg_s.first().copied().unwrap_or(0);
        if d == 0 || deg_s.iter().chain(&deg_o).any(|&x| x != d) {
            return Err(LbflError::Structural("graph is not regular".into()));
        }
        Ok(d)
    }

    /// Length of the shortest cycle; `None` for a forest. Parallel edges
    /// form a cycle of length 2.
    pub fn girth(&self) -> Option<usize> {
        let v = 2 * self.n;
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); v];
        for (e, &(s, o)) in self.edges.iter().enumerate() {
            adj[s].push((self.n + o, e));
            adj[self.n + o].push((s, e));
        }
        let mut best: Option<usize> = None;
        for root in 0..v {
            let mut dist = vec![usize::MAX; v];
            let mut via = vec![usize::MAX; v];
            dist[root] = 0;
            let mut queue = VecDeque::from([root]);
            while let Some(x) = queue.pop_front() {
                for &(y, e) in &adj[x] {
                    if e == via[x] {
                        continue;
                    }
                    if dist[y] == usize::MAX {
                        dist[y] = dist[x] + 1;
                        via[y] = e;
                        queue.push_back(y);
                    } else {
                        let len = dist[x] + dist[y] + 1;
                        best = Some(best.map_or(len, |b| b.min(len)));
                    }
                }
            }
        }
        best
    }
}

/// One client per edge `(s_n, o_m)`, at distance `T - eps` from `s_n` and 1
/// from `o_m`; zero opening costs; lower bound = the degree. Facilities
/// `o_0..o_{n-1}` take ids `0..n`, `s_0..s_{n-1}` ids `n..2n`; clients
/// follow the edge order.
pub fn gen_locality_bipartite(graph: &BipartiteGraph, girth: usize, eps: f64) -> Result<GalleryInstance> {
    check_epsilon(eps)?;
    let m = graph.regular_degree()?;
    let t = girth as f64;
    if eps >= t {
        return Err(LbflError::Invalid(format!("epsilon = {eps} must be below T = {girth}")));
    }
    match graph.girth() {
        Some(g) if g < girth => {
            return Err(LbflError::Structural(format!("girth {g} is below the required {girth}")))
        }
        _ => {}
    }
    let n = graph.n;
    let nf = 2 * n;
    let nc = graph.edges.len();
    let mut edges = Vec::new();
    for (k, &(s, o)) in graph.edges.iter().enumerate() {
        edges.push((n + s, nf + k, t - eps));
        edges.push((o, nf + k, 1.0));
    }
    let dist = metric_completion(nf + nc, &edges)?;
    let instance = LbflInstance::new(vec![0.0; nf], nc, dist, m)?;
    GalleryInstance::assemble(instance, (n..nf).collect(), (0..n).collect(), t - eps)
}

/// The `4k`-node cycle `o_0, j_0, s_0, j_1, o_1, ...` with `M = 2`: the
/// `s` facilities form a local optimum of cost `2k(k - eps)`, the `o`
/// facilities cost `2k`.
pub fn gen_locality_cycle(k: usize, eps: f64) -> Result<GalleryInstance> {
    if k < 2 {
        return Err(LbflError::Invalid("the cycle needs k >= 2".into()));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(LbflError::Invalid(format!("epsilon = {eps} outside (0, 1)")));
    }
    gen_locality_bipartite(&BipartiteGraph::cycle(k), k, eps)
}

/// CDUFL instance whose LP relaxation is a factor `u + 1` below the
/// integral optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct CduflGap {
    pub instance: CduflInstance,
    pub lp_value: f64,
    pub integral_value: f64,
    pub gap: f64,
}

/// An uncapacitated point of cost `f`, a capacitated point of capacity `u`,
/// and `u + 1` unit demands, all co-located.
pub fn gen_cdufl_gap(f: f64, u: u64) -> Result<CduflGap> {
    if !(f > 0.0 && f.is_finite()) || u == 0 {
        return Err(LbflError::Invalid(format!("need f > 0 and u >= 1, got f = {f}, u = {u}")));
    }
    let n = (u + 1) as usize;
    let instance = CduflInstance::new(
        vec![
            SupplyKind::Uncapacitated { opening_cost: f },
            SupplyKind::Capacitated { capacity: u },
        ],
        vec![1; n],
        vec![vec![0.0; n]; 2],
    )?;
    let lp_value = f / (u + 1) as f64;
    Ok(CduflGap {
        instance,
        lp_value,
        integral_value: f,
        gap: f / lp_value,
    })
}

/// Proof that no single add, drop or swap improves an open set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalCertificate {
    pub moves_checked: usize,
    pub feasible_moves: usize,
    /// Cheapest feasible neighbour minus the current cost.
    pub best_delta: Option<f64>,
    pub best_move: Option<Move>,
    pub locally_optimal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NaiveSearchOutcome {
    pub open: Vec<usize>,
    pub cost: f64,
    pub stats: SearchStats,
    pub certificate: LocalCertificate,
}

fn lbfl_price(instance: &LbflInstance, open: &[usize]) -> Option<f64> {
    if open.is_empty() {
        return None;
    }
    let facility: f64 = open.iter().map(|&i| instance.opening_cost(i)).sum();
    assign_lower_bounded(instance, open).ok().map(|(_, c)| facility + c)
}

/// Scans every add, drop and swap of `open`, pricing each by the optimal
/// lower-bounded assignment.
pub fn certify_local_optimum(instance: &LbflInstance, open: &[usize]) -> Result<LocalCertificate> {
    let current = lbfl_price(instance, open)
        .ok_or_else(|| LbflError::Infeasible("open set admits no feasible assignment".into()))?;
    let pool: Vec<usize> = (0..instance.n_facilities()).collect();
    let moves = candidate_moves(&pool, open);
    let mut best: Option<(Move, f64)> = None;
    let mut feasible = 0;
    for mv in &moves {
        let Some(cost) = lbfl_price(instance, &mv.apply(open)) else {
            continue;
        };
        feasible += 1;
        if best.map_or(true, |(_, b)| cost < b) {
            best = Some((*mv, cost));
        }
    }
    let best_delta = best.map(|(_, c)| c - current);
    Ok(LocalCertificate {
        moves_checked: moves.len(),
        feasible_moves: feasible,
        best_delta,
        best_move: best.map(|(m, _)| m),
        locally_optimal: best_delta.map_or(true, |d| d >= -1e-9 * (1.0 + current.abs())),
    })
}

/// Add/drop/swap descent on LBFL in which every open set is priced by the
/// optimal lower-bounded assignment and sets admitting none are skipped.
/// Returns the local optimum with its exhaustive certificate.
pub fn naive_lbfl_local_search(instance: &LbflInstance, initial: &[usize]) -> Result<NaiveSearchOutcome> {
    let pool: Vec<usize> = (0..instance.n_facilities()).collect();
    let config = LocalSearchConfig::default().with_epsilon(1e-9);
    let (open, cost, stats) = descend(&pool, initial.to_vec(), |o| lbfl_price(instance, o), &config)?;
    let certificate = certify_local_optimum(instance, &open)?;
    Ok(NaiveSearchOutcome {
        open,
        cost,
        stats,
        certificate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_dist;

    #[test]
    fn random_is_deterministic_and_metric() {
        let a = gen_random(3, 4, 10, 2, (0.0, 1.0)).unwrap();
        let b = gen_random(3, 4, 10, 2, (0.0, 1.0)).unwrap();
        assert_eq!(a, b);
        assert!(validate_dist(a.dist()).is_metric());
        let z = gen_random(3, 4, 10, 2, (0.0, 0.0)).unwrap();
        assert!(z.opening_costs().iter().all(|&f| f == 0.0));
        assert!(gen_random(3, 4, 1, 2, (0.0, 1.0)).is_err());
    }

    #[test]
    fn star_costs() {
        let g = gen_locality_star(4, 1e-3).unwrap();
        assert!((g.local_cost - 80.0).abs() < 1e-9);
        assert!((g.global_cost - 32.001).abs() < 1e-9);
        assert!(g.ratio() >= 2.0);
        assert!(validate_dist(g.instance.dist()).is_metric());
    }

    #[test]
    fn star_spokes_are_locally_optimal() {
        let g = gen_locality_star(4, 1e-3).unwrap();
        let out = naive_lbfl_local_search(&g.instance, &g.local_optimum.open).unwrap();
        assert_eq!(out.open, g.local_optimum.open);
        assert!(out.certificate.locally_optimal);
    }

    #[test]
    fn bicriteria_star_is_locally_optimal() {
        let g = gen_locality_star_bicriteria(6, 0.75, 1e-3).unwrap();
        let cert = certify_local_optimum(&g.instance, &g.local_optimum.open).unwrap();
        assert!(cert.locally_optimal);
        assert!(g.ratio() >= 0.75 * 6.0 / 2.0);
    }

    #[test]
    fn cycle_costs() {
        let g = gen_locality_cycle(3, 0.1).unwrap();
        assert!((g.local_cost - 17.4).abs() < 1e-9);
        assert!((g.global_cost - 6.0).abs() < 1e-9);
        assert!((g.ratio() - 2.9).abs() < 1e-9);
        let out = naive_lbfl_local_search(&g.instance, &g.local_optimum.open).unwrap();
        assert_eq!(out.open, g.local_optimum.open);
    }

    #[test]
    fn cycle_swap_increase() {
        // swap(s_r, o_0) raises the cost by 2(1 - k + eps) + 2(k - 1)
        let (k, eps) = (4usize, 0.1);
        let g = gen_locality_cycle(k, eps).unwrap();
        let expected = 2.0 * (1.0 - k as f64 + eps) + (k as f64 - 1.0) * 2.0;
        for r in 0..k {
            let open = Move::Swap { close: k + r, open: 0 }.apply(&g.local_optimum.open);
            let cost = lbfl_price(&g.instance, &open).unwrap();
            assert!((cost - g.local_cost - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn girth_checks() {
        assert_eq!(BipartiteGraph::cycle(3).girth(), Some(6));
        let k22 = BipartiteGraph {
            n: 2,
            edges: vec![(0, 0), (0, 1), (1, 0), (1, 1)],
        };
        assert_eq!(k22.girth(), Some(4));
        assert!(matches!(
            gen_locality_bipartite(&k22, 6, 1e-3),
            Err(LbflError::Structural(_))
        ));
        let irregular = BipartiteGraph {
            n: 2,
            edges: vec![(0, 0), (0, 1), (1, 0)],
        };
        assert!(irregular.regular_degree().is_err());
    }

    #[test]
    fn drop_is_taken_when_it_helps() {
        // two co-located facilities, the second costs more
        let pts = vec![[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]];
        let inst = LbflInstance::new(vec![1.0, 5.0], 2, DistMatrix::euclidean(&pts), 1).unwrap();
        let out = naive_lbfl_local_search(&inst, &[0, 1]).unwrap();
        assert_eq!(out.open, vec![0]);
        assert_eq!(out.cost, 1.0);
    }

    #[test]
    fn cdufl_gap_values() {
        let g = gen_cdufl_gap(10.0, 4).unwrap();
        assert_eq!(g.lp_value, 2.0);
        assert_eq!(g.gap, 5.0);
        assert_eq!(gen_cdufl_gap(3.0, 1).unwrap().gap, 2.0);
        assert!(gen_cdufl_gap(0.0, 1).is_err());
    }

    #[test]
    fn random_cdufl_is_feasible() {
        for seed in 0..20 {
            let inst = gen_random_cdufl(seed, &RandomCduflParams::default()).unwrap();
            assert!(inst.is_feasible());
            assert!(inst.total_demand() <= 12);
        }
    }
}
