//! From a bicriteria solution to an LBFL solution.
//!
//! Clients are aggregated at the bicriteria facilities (the structured
//! instance I2), the structured instance is encoded as a CDUFL instance,
//! the CDUFL local optimum is turned into a client-transfer plan in three
//! phases, and the plan is mapped back to the original clients.
//!
//! Location classes after the first phase, for an uncapacitated supply
//! point `i` shipping `X_i` units to other locations while `N_i` clients sit
//! at `i`:
//!
//! * [`Class::Overdrawn`]: open with `N_i < X_i`;
//! * [`Class::Surplus`]: open with `N_i >= X_i`;
//! * [`Class::Idle`]: closed.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::bicriteria::BicriteriaSolution;
use crate::cdufl::{CduflInstance, CduflSolution, SupplyKind};
use crate::error::{LbflError, Result};
use crate::flow::{lower_bounded_transport, Assignment};
use crate::local_search::{cdufl_local_search, LocalSearchConfig};
use crate::model::{DistMatrix, LbflInstance, Solution, TOL};

/// Clients aggregated at a set of locations with zero opening costs.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedInstance {
    locations: Vec<usize>,
    counts: Vec<u64>,
    dist: DistMatrix,
    lower_bound: u64,
    alpha: f64,
    rank: u64,
    nearest: Vec<Option<usize>>,
    nn_dist: Vec<f64>,
    back_map: Vec<Vec<usize>>,
}

impl AggregatedInstance {
    /// Builds an instance directly from counts and a metric over the
    /// locations. Location `a` stands for original facility `a`, and clients
    /// are numbered consecutively by location.
    pub fn from_counts(dist: DistMatrix, counts: Vec<u64>, lower_bound: u64, alpha: f64) -> Result<Self> {
        let mut next = 0;
        let back_map = counts
            .iter()
            .map(|&n| {
                let ids: Vec<usize> = (next..next + n as usize).collect();
                next += n as usize;
                ids
            })
            .collect();
        let locations = (0..counts.len()).collect();
        Self::assemble(locations, counts, dist, lower_bound, alpha, back_map)
    }

    fn assemble(
        locations: Vec<usize>,
        counts: Vec<u64>,
        dist: DistMatrix,
        lower_bound: u64,
        alpha: f64,
        back_map: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if dist.len() != counts.len() {
            return Err(LbflError::Shape(format!(
                "{} locations but {} counts",
                dist.len(),
                counts.len()
            )));
        }
        if lower_bound == 0 {
            return Err(LbflError::Invalid("lower bound M must be at least 1".into()));
        }
        let rank = crate::bicriteria::alpha_rank(alpha, lower_bound as usize)? as u64;
        let k = counts.len();
        let mut nearest = vec![None; k];
        let mut nn_dist = vec![f64::INFINITY; k];
        for a in 0..k {
            for b in 0..k {
                if a != b && dist.get(a, b) < nn_dist[a] {
                    nn_dist[a] = dist.get(a, b);
                    nearest[a] = Some(b);
                }
            }
        }
        Ok(Self {
            locations,
            counts,
            dist,
            lower_bound,
            alpha,
            rank,
            nearest,
            nn_dist,
            back_map,
        })
    }

    pub fn n_locations(&self) -> usize {
        self.counts.len()
    }

    /// Original facility id of each location.
    pub fn locations(&self) -> &[usize] {
        &self.locations
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, a: usize) -> u64 {
        self.counts[a]
    }

    pub fn total_clients(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn lower_bound(&self) -> u64 {
        self.lower_bound
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `ceil(alpha * M)`.
    pub fn rank(&self) -> u64 {
        self.rank
    }

    #[inline]
    pub fn dist(&self, a: usize, b: usize) -> f64 {
        self.dist.get(a, b)
    }

    pub fn dist_matrix(&self) -> &DistMatrix {
        &self.dist
    }

    /// Nearest other location, lowest id on ties.
    pub fn nearest(&self, a: usize) -> Option<usize> {
        self.nearest[a]
    }

    /// Distance to the nearest other location.
    pub fn nn_dist(&self, a: usize) -> f64 {
        self.nn_dist[a]
    }

    /// Original client ids aggregated at each location, ascending.
    pub fn back_map(&self) -> &[Vec<usize>] {
        &self.back_map
    }

    /// Cheapest reassignment of all clients to `open` with every open
    /// location receiving at least `M`. Supplier = destination,
    /// receiver = source location.
    pub fn assign_to(&self, open: &[usize]) -> Result<(Assignment, f64)> {
        lower_bounded_transport(&self.counts, open, self.lower_bound, |f, g| self.dist(g, f))
    }
}

/// Aggregates each client at the bicriteria facility serving it.
pub fn build_i2(instance: &LbflInstance, b: &BicriteriaSolution) -> Result<AggregatedInstance> {
    let index: BTreeMap<usize, usize> = b.open.iter().enumerate().map(|(a, &i)| (i, a)).collect();
    let mut back_map = vec![Vec::new(); b.open.len()];
    for (j, &i) in b.assign.iter().enumerate() {
        let a = *index
            .get(&i)
            .ok_or_else(|| LbflError::Reference(format!("client {j} assigned to closed facility {i}")))?;
        back_map[a].push(j);
    }
    let counts = back_map.iter().map(|c| c.len() as u64).collect();
    let dist = instance.dist().restrict(&b.open);
    AggregatedInstance::assemble(
        b.open.clone(),
        counts,
        dist,
        instance.lower_bound() as u64,
        b.alpha,
        back_map,
    )
}

/// CDUFL instance encoding a structured instance, with the location of
/// every supply and demand point.
#[derive(Debug, Clone, PartialEq)]
pub struct CduflReduction {
    pub instance: CduflInstance,
    pub delta: f64,
    pub uncap_at: Vec<usize>,
    pub cap_at: Vec<Option<usize>>,
    pub demand_at: Vec<Option<usize>>,
    pub supply_location: Vec<usize>,
    pub demand_location: Vec<usize>,
}

/// Per location `i`: an uncapacitated supply point costing
/// `delta * min(n_i, M) * l(i)`; a capacitated point of capacity `n_i - M`
/// if `n_i > M`; a demand point of demand `M - n_i` if `n_i < M`.
pub fn build_cdufl(i2: &AggregatedInstance, delta: f64) -> Result<CduflReduction> {
    let k = i2.n_locations();
    if k < 2 {
        return Err(LbflError::Structural(
            "a single location has no nearest neighbour; open it directly".into(),
        ));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(LbflError::Domain(format!("delta = {delta}")));
    }
    let m = i2.lower_bound();
    let mut supply = Vec::new();
    let mut supply_location = Vec::new();
    let mut uncap_at = Vec::with_capacity(k);
    let mut cap_at = vec![None; k];
    let mut demand_at = vec![None; k];
    let mut demands = Vec::new();
    let mut demand_location = Vec::new();
    for a in 0..k {
        let n = i2.count(a);
        uncap_at.push(supply.len());
        supply.push(SupplyKind::Uncapacitated {
            opening_cost: delta * n.min(m) as f64 * i2.nn_dist(a),
        });
        supply_location.push(a);
        if n > m {
            cap_at[a] = Some(supply.len());
            supply.push(SupplyKind::Capacitated { capacity: n - m });
            supply_location.push(a);
        }
        if n < m {
            demand_at[a] = Some(demands.len());
            demands.push(m - n);
            demand_location.push(a);
        }
    }
    let dist = supply_location
        .iter()
        .map(|&s| demand_location.iter().map(|&d| i2.dist(s, d)).collect())
        .collect();
    Ok(CduflReduction {
        instance: CduflInstance::new(supply, demands, dist)?,
        delta,
        uncap_at,
        cap_at,
        demand_at,
        supply_location,
        demand_location,
    })
}

/// Reroutes a feasible CDUFL solution, never raising its cost, so that:
/// an open uncapacitated point fully serves its co-located demand point;
/// each demand point draws its uncapacitated share from one supplier, its
/// nearest open one; a co-located capacitated point is saturated before its
/// uncapacitated twin ships; and open points that ship nothing are closed.
pub fn normalize_cdufl_solution(red: &CduflReduction, s: &CduflSolution) -> Result<CduflSolution> {
    let inst = &red.instance;
    s.verify(inst)?;
    let mut flow = s.assignment.clone();
    let mut open = s.open_uncap.clone();
    let is_open = |open: &[usize], p: usize| open.binary_search(&p).is_ok();

    // own demand point served entirely by an open co-located supplier
    for (a, d) in red.demand_at.iter().enumerate() {
        let Some(d) = *d else { continue };
        let u = red.uncap_at[a];
        if !is_open(&open, u) {
            continue;
        }
        for (p, x) in flow.suppliers_of(d) {
            if p != u {
                flow.reroute(d, p, u, x);
            }
        }
    }

    // single, nearest uncapacitated supplier per demand point
    for d in 0..inst.n_demand() {
        let here = red.demand_location[d];
        let target = open.iter().copied().min_by(|&p, &q| {
            let key = |p: usize| (red.supply_location[p] != here, inst.dist(p, d), p);
            let (a, b) = (key(p), key(q));
            a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2))
        });
        let Some(target) = target else { continue };
        for (p, x) in flow.suppliers_of(d) {
            if p != target && inst.is_uncapacitated(p) {
                flow.reroute(d, p, target, x);
            }
        }
    }

    // saturate the capacitated twin of an open supplier
    for (a, c) in red.cap_at.iter().enumerate() {
        let Some(c) = *c else { continue };
        let u = red.uncap_at[a];
        if !is_open(&open, u) {
            continue;
        }
        let SupplyKind::Capacitated { capacity } = inst.supply()[c] else {
            unreachable!("cap_at points at a capacitated supply");
        };
        let mut room = capacity - flow.supplier_total(c);
        for (d, x) in flow.receivers_of(u) {
            if room == 0 {
                break;
            }
            let moved = x.min(room);
            flow.take(u, d, moved);
            flow.add(c, d, moved);
            room -= moved;
        }
    }

    open.retain(|&p| flow.supplier_total(p) > 0);
    let out = CduflSolution::from_assignment(inst, open, flow);
    out.verify(inst)?;
    if out.total() > s.total() + TOL * (1.0 + s.total().abs()) {
        return Err(LbflError::Invariant(format!(
            "normalization raised the cost from {} to {}",
            s.total(),
            out.total()
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Class {
    /// Open, ships more than the clients it holds.
    Overdrawn,
    /// Open, ships at most the clients it holds.
    Surplus,
    /// Closed.
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Transfer {
    pub from: usize,
    pub to: usize,
    pub count: u64,
}

/// Working state of the three-phase mapping from a normalized CDUFL
/// solution to a client-transfer plan on the structured instance.
#[derive(Debug, Clone)]
pub struct MappingState<'a> {
    i2: &'a AggregatedInstance,
    red: &'a CduflReduction,
    solution: CduflSolution,
    /// Clients currently at each location.
    pub counts: Vec<u64>,
    pub plan: Vec<Transfer>,
    /// Sum of `count * distance` over the plan.
    pub plan_cost: f64,
    pub classes: Vec<Class>,
    /// Units each open uncapacitated point ships to other locations.
    pub shipped_out: Vec<u64>,
    /// Unusual but handled situations, for the report.
    pub events: Vec<String>,
}

impl<'a> MappingState<'a> {
    /// `solution` must already be normalized.
    pub fn new(i2: &'a AggregatedInstance, red: &'a CduflReduction, solution: CduflSolution) -> Self {
        let k = i2.n_locations();
        Self {
            i2,
            red,
            solution,
            counts: i2.counts().to_vec(),
            plan: Vec::new(),
            plan_cost: 0.0,
            classes: vec![Class::Idle; k],
            shipped_out: vec![0; k],
            events: Vec::new(),
        }
    }

    pub fn solution(&self) -> &CduflSolution {
        &self.solution
    }

    fn transfer(&mut self, from: usize, to: usize, count: u64) -> Result<()> {
        if count == 0 || from == to {
            return Ok(());
        }
        if self.counts[from] < count {
            return Err(LbflError::Invariant(format!(
                "moving {count} clients out of location {from} holding {}",
                self.counts[from]
            )));
        }
        self.counts[from] -= count;
        self.counts[to] += count;
        self.plan_cost += count as f64 * self.i2.dist(from, to);
        self.plan.push(Transfer { from, to, count });
        Ok(())
    }

    fn is_open(&self, a: usize) -> bool {
        self.solution
            .open_uncap
            .binary_search(&self.red.uncap_at[a])
            .is_ok()
    }

    /// `(location, units)` shipped by the uncapacitated point at `a` to
    /// demand points at other locations.
    pub fn shipments(&self, a: usize) -> Vec<(usize, u64)> {
        self.solution
            .assignment
            .receivers_of(self.red.uncap_at[a])
            .into_iter()
            .map(|(d, x)| (self.red.demand_location[d], x))
            .filter(|&(b, _)| b != a)
            .collect()
    }

    fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Capacitated shipments become client transfers; then every location is
    /// classified.
    pub fn phase_a1(&mut self) -> Result<()> {
        let k = self.i2.n_locations();
        for a in 0..k {
            let Some(c) = self.red.cap_at[a] else { continue };
            for (d, x) in self.solution.assignment.receivers_of(c) {
                let to = self.red.demand_location[d];
                self.transfer(a, to, x)?;
            }
        }
        let m = self.i2.lower_bound();
        for a in 0..k {
            if !self.is_open(a) {
                self.classes[a] = Class::Idle;
                self.shipped_out[a] = 0;
                continue;
            }
            let x: u64 = self.shipments(a).iter().map(|&(_, x)| x).sum();
            self.shipped_out[a] = x;
            let expected = self.i2.count(a).min(m);
            if self.counts[a] != expected {
                return Err(LbflError::Invariant(format!(
                    "open location {a} holds {} clients, expected min(n, M) = {expected}",
                    self.counts[a]
                )));
            }
            self.classes[a] = if self.counts[a] < x {
                Class::Overdrawn
            } else {
                Class::Surplus
            };
        }
        Ok(())
    }

    pub fn members(&self, class: Class) -> Vec<usize> {
        (0..self.classes.len()).filter(|&a| self.classes[a] == class).collect()
    }

    /// Surplus locations ship their promised units, then their leftover
    /// clients are gathered along nearest-neighbour trees so each surplus
    /// location ends with zero or at least `M` clients.
    pub fn phase_a2(&mut self) -> Result<()> {
        let surplus = self.members(Class::Surplus);
        for &a in &surplus {
            for (b, x) in self.shipments(a) {
                self.transfer(a, b, x)?;
            }
        }
        let forest = self.split_forest(&surplus)?;
        for comp in forest {
            match comp.root {
                Root::Node(r) => {
                    for &v in &comp.nodes {
                        if v != r {
                            let n = self.counts[v];
                            self.transfer(v, r, n)?;
                        }
                    }
                }
                Root::Cycle(r, s) => {
                    let target = self
                        .members(Class::Idle)
                        .into_iter()
                        .min_by(|&p, &q| {
                            let d = |p: usize| self.i2.dist(p, r).min(self.i2.dist(p, s));
                            d(p).total_cmp(&d(q)).then(p.cmp(&q))
                        })
                        .ok_or_else(|| {
                            LbflError::Structural(format!(
                                "component rooted at the 2-cycle ({r}, {s}) has fewer than M \
                                 clients and no closed location can absorb them"
                            ))
                        })?;
                    for &v in &comp.nodes {
                        let n = self.counts[v];
                        self.transfer(v, target, n)?;
                    }
                }
            }
        }
        let m = self.i2.lower_bound();
        for &a in &surplus {
            let n = self.counts[a];
            if n != 0 && n < m {
                return Err(LbflError::Invariant(format!(
                    "surplus location {a} left with {n} clients after gathering"
                )));
            }
        }
        Ok(())
    }

    /// Builds the nearest-neighbour forest over `surplus` and cuts it so every
    /// component either holds fewer than `M` clients or can be gathered at
    /// its root.
    fn split_forest(&self, surplus: &[usize]) -> Result<Vec<Component>> {
        let k = self.i2.n_locations();
        let m = self.i2.lower_bound();
        let mut parent: Vec<Option<usize>> = vec![None; k];
        for &a in surplus {
            parent[a] = Some(
                self.i2
                    .nearest(a)
                    .ok_or_else(|| LbflError::Structural("location without neighbour".into()))?,
            );
        }
        let in_forest: Vec<bool> = (0..k)
            .map(|a| parent[a].is_some() || parent.contains(&Some(a)))
            .collect();

        let mut roots = Vec::new();
        let mut seen = vec![false; k];
        for a in 0..k {
            if !in_forest[a] || seen[a] {
                continue;
            }
            let root = find_root(&parent, a)?;
            for v in component_nodes(&parent, root) {
                seen[v] = true;
            }
            roots.push(root);
        }

        let mut done = Vec::new();
        let mut work = roots;
        while let Some(root) = work.pop() {
            let nodes = component_nodes(&parent, root);
            let sums = subtree_sums(&parent, &nodes, &self.counts);
            let total: u64 = nodes.iter().map(|&v| self.counts[v]).sum();
            let candidate = if total < m {
                None
            } else {
                let depth = depths(&parent, &nodes);
                nodes
                    .iter()
                    .copied()
                    .filter(|&v| parent[v].is_some() && sums[&v] >= m)
                    .max_by(|&p, &q| depth[&p].cmp(&depth[&q]).then(q.cmp(&p)))
            };
            let Some(u) = candidate else {
                done.push(root);
                continue;
            };
            let up = parent[u].expect("candidate has an arc");
            let in_cycle = parent[up] == Some(u);
            parent[u] = None;
            if in_cycle {
                let partner_sum: u64 = component_nodes(&parent, up)
                    .iter()
                    .filter(|&&v| v != u)
                    .map(|&v| self.counts[v])
                    .sum();
                let partner_tree = subtree_sum_excluding(&parent, up, u, &self.counts);
                debug_assert!(partner_tree <= partner_sum);
                if partner_tree >= m {
                    parent[up] = None;
                    done.push(Root::Node(up));
                }
                done.push(Root::Node(u));
            } else {
                done.push(Root::Node(u));
                work.push(root);
            }
        }

        let mut out = Vec::new();
        for root in done {
            let mut root = root;
            let mut nodes = component_nodes(&parent, root);
            if let Root::Cycle(r, s) = root {
                let total: u64 = nodes.iter().map(|&v| self.counts[v]).sum();
                if total >= m {
                    let high = r.max(s);
                    parent[high] = None;
                    root = Root::Node(high);
                    nodes = component_nodes(&parent, root);
                }
            }
            out.push(Component { root, nodes });
        }
        out.sort_by_key(|c| c.nodes.first().copied());
        Ok(out)
    }

    /// Each overdrawn location tops up the deficient demand points it
    /// satisfies and hands its leftover clients to a neighbour.
    pub fn phase_a3(&mut self) -> Result<()> {
        let m = self.i2.lower_bound();
        let rank = self.i2.rank();
        for i in self.members(Class::Overdrawn) {
            let served: Vec<(usize, u64)> = self.shipments(i);
            if self.counts[i] < rank {
                return Err(LbflError::Invariant(format!(
                    "overdrawn location {i} holds {} < ceil(alpha M) = {rank}",
                    self.counts[i]
                )));
            }
            if let Some(&(j, _)) = served.iter().find(|&&(j, _)| self.counts[j] < rank) {
                return Err(LbflError::Invariant(format!(
                    "demand location {j} holds {} < ceil(alpha M) = {rank}",
                    self.counts[j]
                )));
            }
            let deficient: Vec<usize> = served
                .iter()
                .map(|&(j, _)| j)
                .filter(|&j| self.counts[j] < m)
                .collect();
            let shortfall: u64 = deficient.iter().map(|&j| m - self.counts[j]).sum();
            if shortfall <= self.counts[i] {
                for &j in &deficient {
                    let y = m - self.counts[j];
                    self.transfer(i, j, y)?;
                }
                let rest = self.counts[i];
                if rest > 0 && rest < m {
                    let by_dist = |p: &usize, q: &usize| {
                        self.i2.dist(i, *p).total_cmp(&self.i2.dist(i, *q)).then(p.cmp(q))
                    };
                    let full = served
                        .iter()
                        .map(|&(j, _)| j)
                        .filter(|&j| self.counts[j] >= m)
                        .min_by(by_dist);
                    let target = match full {
                        Some(j) => j,
                        None => {
                            let j = served.iter().map(|&(j, _)| j).min_by(by_dist).ok_or_else(|| {
                                LbflError::Invariant(format!("overdrawn location {i} serves nobody"))
                            })?;
                            self.events.push(format!(
                                "leftover of location {i} sent to {j}, which holds fewer than M"
                            ));
                            j
                        }
                    };
                    self.transfer(i, target, rest)?;
                }
            } else {
                let mut order = deficient.clone();
                order.sort_by(|p, q| {
                    self.i2.dist(i, *p).total_cmp(&self.i2.dist(i, *q)).then(p.cmp(q))
                });
                let mut seq = vec![i];
                seq.extend(order);
                let counts: Vec<u64> = seq.iter().map(|&v| self.counts[v]).collect();
                let plan = plan_case2(m, &counts)?;
                for mv in plan.fills.iter().chain(&plan.residual_moves) {
                    self.transfer(seq[mv.from], seq[mv.to], mv.count)?;
                }
            }
        }
        for (a, &n) in self.counts.iter().enumerate() {
            if n != 0 && n < m {
                return Err(LbflError::Invariant(format!(
                    "location {a} ends with {n} clients, neither 0 nor at least M = {m}"
                )));
            }
        }
        if self.total() != self.i2.total_clients() {
            return Err(LbflError::Invariant("client count not conserved".into()));
        }
        Ok(())
    }

    /// Locations holding at least `M` clients.
    pub fn open_locations(&self) -> Vec<usize> {
        let m = self.i2.lower_bound();
        (0..self.counts.len()).filter(|&a| self.counts[a] >= m).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Root {
    Node(usize),
    Cycle(usize, usize),
}

#[derive(Debug, Clone)]
struct Component {
    root: Root,
    nodes: Vec<usize>,
}

fn find_root(parent: &[Option<usize>], start: usize) -> Result<Root> {
    let mut v = start;
    for _ in 0..=parent.len() {
        match parent[v] {
            None => return Ok(Root::Node(v)),
            Some(p) if parent[p] == Some(v) => return Ok(Root::Cycle(v.min(p), v.max(p))),
            Some(p) => v = p,
        }
    }
    Err(LbflError::Invariant(
        "nearest-neighbour graph has a cycle longer than two".into(),
    ))
}

/// Children of `v`, excluding its 2-cycle partner.
fn children(parent: &[Option<usize>], v: usize) -> Vec<usize> {
    (0..parent.len())
        .filter(|&c| parent[c] == Some(v) && parent[v] != Some(c))
        .collect()
}

fn component_nodes(parent: &[Option<usize>], root: impl Into<RootLike>) -> Vec<usize> {
    let mut stack = match root.into() {
        RootLike(Root::Node(r)) => vec![r],
        RootLike(Root::Cycle(r, s)) => vec![r, s],
    };
    let mut nodes = Vec::new();
    while let Some(v) = stack.pop() {
        nodes.push(v);
        stack.extend(children(parent, v));
    }
    nodes.sort_unstable();
    nodes
}

struct RootLike(Root);

impl From<Root> for RootLike {
    fn from(r: Root) -> Self {
        RootLike(r)
    }
}

impl From<usize> for RootLike {
    fn from(v: usize) -> Self {
        RootLike(Root::Node(v))
    }
}

fn subtree_sums(parent: &[Option<usize>], nodes: &[usize], counts: &[u64]) -> BTreeMap<usize, u64> {
    nodes
        .iter()
        .map(|&v| (v, subtree_sum_excluding(parent, v, usize::MAX, counts)))
        .collect()
}

/// Clients in the subtree under `v`, not descending into `skip`.
fn subtree_sum_excluding(parent: &[Option<usize>], v: usize, skip: usize, counts: &[u64]) -> u64 {
    let mut total = 0;
    let mut stack = vec![v];
    while let Some(x) = stack.pop() {
        total += counts[x];
        stack.extend(children(parent, x).into_iter().filter(|&c| c != skip));
    }
    total
}

fn depths(parent: &[Option<usize>], nodes: &[usize]) -> BTreeMap<usize, usize> {
    nodes
        .iter()
        .map(|&v| {
            let mut d = 0;
            let mut x = v;
            while let Some(p) = parent[x] {
                if parent[p] == Some(x) {
                    break;
                }
                d += 1;
                x = p;
            }
            (v, d)
        })
        .collect()
}

/// Transfers for an overdrawn location whose deficient demand points need
/// more than it holds. Indices refer to the input order: 0 is the supplier,
/// `1..=t` its deficient demand points sorted by distance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Case2Plan {
    /// `t - floor(sum N / M)`.
    pub ell: usize,
    /// Top-ups of points `ell + 1 ..= t`, drawn from `ell` down to 0.
    pub fills: Vec<Transfer>,
    /// Leftovers and where they sat before moving to `ell + 1`.
    pub residual_moves: Vec<Transfer>,
}

impl Case2Plan {
    /// Clients left at each index after the top-ups.
    pub fn residual_at(&self) -> Vec<(usize, u64)> {
        self.residual_moves.iter().map(|t| (t.from, t.count)).collect()
    }
}

pub fn plan_case2(m: u64, counts: &[u64]) -> Result<Case2Plan> {
    if counts.len() < 2 {
        return Err(LbflError::Invalid("need a supplier and at least one demand point".into()));
    }
    let t = counts.len() - 1;
    let total: u64 = counts.iter().sum();
    let full = (total / m) as usize;
    if full > t || t - full < 1 || t - full >= t {
        return Err(LbflError::Invariant(format!(
            "index ell = {t} - {full} out of range for counts {counts:?}, M = {m}"
        )));
    }
    let ell = t - full;
    let mut left = counts.to_vec();
    let mut fills = Vec::new();
    let mut src = ell;
    for q in ell + 1..=t {
        let mut need = m.checked_sub(counts[q]).ok_or_else(|| {
            LbflError::Invariant(format!("demand point {q} already holds {} >= M", counts[q]))
        })?;
        while need > 0 {
            while left[src] == 0 {
                if src == 0 {
                    return Err(LbflError::Invariant("ran out of clients while topping up".into()));
                }
                src -= 1;
            }
            let x = need.min(left[src]);
            left[src] -= x;
            need -= x;
            fills.push(Transfer { from: src, to: q, count: x });
        }
    }
    let residual_moves = (0..=ell)
        .filter(|&r| left[r] > 0)
        .map(|r| Transfer { from: r, to: ell + 1, count: left[r] })
        .collect();
    Ok(Case2Plan {
        ell,
        fills,
        residual_moves,
    })
}

/// Final client counts of a structured instance after direct transfers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct I2Solution {
    /// Clients moved from the first location to the second (no self pairs).
    pub transfer: BTreeMap<(usize, usize), u64>,
    pub final_counts: Vec<u64>,
    pub open: Vec<usize>,
    pub cost: f64,
}

impl I2Solution {
    /// Builds the solution from a supplier = destination, receiver = source
    /// assignment.
    pub fn from_assignment(i2: &AggregatedInstance, assignment: &Assignment) -> Self {
        let k = i2.n_locations();
        let mut transfer = BTreeMap::new();
        let mut final_counts = vec![0; k];
        let mut cost = 0.0;
        for (&(to, from), &x) in assignment.units() {
            final_counts[to] += x;
            cost += x as f64 * i2.dist(from, to);
            if from != to {
                transfer.insert((from, to), x);
            }
        }
        let open = (0..k).filter(|&a| final_counts[a] > 0).collect();
        Self {
            transfer,
            final_counts,
            open,
            cost,
        }
    }

    /// Every location is kept (nothing moves).
    pub fn identity(i2: &AggregatedInstance) -> Self {
        Self {
            transfer: BTreeMap::new(),
            final_counts: i2.counts().to_vec(),
            open: (0..i2.n_locations()).collect(),
            cost: 0.0,
        }
    }

    pub fn verify(&self, i2: &AggregatedInstance) -> Result<()> {
        let k = i2.n_locations();
        let m = i2.lower_bound();
        let mut n: Vec<i128> = i2.counts().iter().map(|&c| c as i128).collect();
        for (&(a, b), &x) in &self.transfer {
            n[a] -= x as i128;
            n[b] += x as i128;
        }
        for a in 0..k {
            if n[a] < 0 || n[a] as u64 != self.final_counts[a] {
                return Err(LbflError::Invariant(format!("location {a}: counts not conserved")));
            }
            let c = self.final_counts[a];
            if c != 0 && c < m {
                return Err(LbflError::Invariant(format!("location {a} ends with {c} < M")));
            }
            if (c >= m) != self.open.contains(&a) {
                return Err(LbflError::Invariant(format!("open flag of location {a}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct I2Config {
    pub delta: f64,
    pub local_search: LocalSearchConfig,
}

/// What happened while solving a structured instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct I2Outcome {
    pub solution: I2Solution,
    /// Facility cost of the normalized CDUFL solution.
    pub cdufl_facility_cost: f64,
    /// Assignment cost of the normalized CDUFL solution.
    pub cdufl_assignment_cost: f64,
    /// Total of the local search output before normalization.
    pub cdufl_search_total: f64,
    /// Cost of the three-phase transfer plan.
    pub constructive_cost: f64,
    /// `F/(delta alpha) + C (1/alpha + 2 alpha / (2 alpha - 1))`.
    pub transfer_bound: f64,
    /// The bound was certified on the constructive plan.
    pub bound_certified: bool,
    pub class_sizes: BTreeMap<String, usize>,
    pub events: Vec<String>,
}

/// Bound on the transfer plan built from a CDUFL solution with facility
/// cost `f` and assignment cost `c`.
pub fn transfer_bound(f: f64, c: f64, alpha: f64, delta: f64) -> f64 {
    f / (delta * alpha) + c * (1.0 / alpha + 2.0 * alpha / (2.0 * alpha - 1.0))
}

/// Solves a structured instance: CDUFL local search, normalization, the
/// three transfer phases, and a final min-cost-flow repair of the transfers
/// for the chosen open set.
pub fn solve_i2(i2: &AggregatedInstance, config: &I2Config) -> Result<I2Outcome> {
    let m = i2.lower_bound();
    let alpha = i2.alpha();
    if i2.total_clients() < m {
        return Err(LbflError::Infeasible(format!(
            "{} clients but lower bound M = {m}",
            i2.total_clients()
        )));
    }
    if !(alpha > 0.5) {
        return Err(LbflError::Domain(format!("alpha = {alpha} must exceed 1/2")));
    }
    if i2.n_locations() == 1 {
        return Ok(I2Outcome {
            solution: I2Solution::identity(i2),
            cdufl_facility_cost: 0.0,
            cdufl_assignment_cost: 0.0,
            cdufl_search_total: 0.0,
            constructive_cost: 0.0,
            transfer_bound: 0.0,
            bound_certified: true,
            class_sizes: BTreeMap::new(),
            events: vec!["single location opened directly".into()],
        });
    }
    let red = build_cdufl(i2, config.delta)?;
    let searched = cdufl_local_search(&red.instance, &config.local_search)?;
    let normalized = normalize_cdufl_solution(&red, &searched)?;
    let (f_s, c_s) = (normalized.facility_cost, normalized.assignment_cost);
    let bound = transfer_bound(f_s, c_s, alpha, config.delta);

    let mut state = MappingState::new(i2, &red, normalized);
    state.phase_a1()?;
    let class_sizes = [Class::Overdrawn, Class::Surplus, Class::Idle]
        .iter()
        .map(|&c| (format!("{c:?}").to_lowercase(), state.members(c).len()))
        .collect();
    let mut events = Vec::new();
    let mut certified = true;
    match state.phase_a2() {
        Ok(()) => state.phase_a3()?,
        Err(LbflError::Structural(msg)) => {
            events.push(format!("gathering fell back to flow repair: {msg}"));
            certified = false;
        }
        Err(e) => return Err(e),
    }
    events.append(&mut state.events);
    let constructive = state.plan_cost;
    if certified && constructive > bound + 1e-6 {
        return Err(LbflError::Invariant(format!(
            "transfer plan costs {constructive} > bound {bound}"
        )));
    }

    let mut open = state.open_locations();
    if open.is_empty() {
        let best = (0..i2.n_locations())
            .max_by(|&a, &b| i2.count(a).cmp(&i2.count(b)).then(b.cmp(&a)))
            .expect("at least two locations");
        open.push(best);
    }
    let (assignment, _) = i2.assign_to(&open)?;
    let solution = I2Solution::from_assignment(i2, &assignment);
    solution.verify(i2)?;
    if certified && solution.cost > constructive + TOL * (1.0 + constructive) {
        return Err(LbflError::Invariant(format!(
            "flow repair cost {} exceeds the transfer plan {constructive}",
            solution.cost
        )));
    }
    Ok(I2Outcome {
        solution,
        cdufl_facility_cost: f_s,
        cdufl_assignment_cost: c_s,
        cdufl_search_total: searched.total(),
        constructive_cost: constructive,
        transfer_bound: bound,
        bound_certified: certified,
        class_sizes,
        events,
    })
}

/// Opens the kept locations in the original instance; the clients of each
/// location follow its transfers, lowest client ids first and destinations
/// in ascending order.
pub fn map_to_original(
    instance: &LbflInstance,
    i2: &AggregatedInstance,
    s: &I2Solution,
) -> Result<Solution> {
    let mut assign = vec![usize::MAX; instance.n_clients()];
    for a in 0..i2.n_locations() {
        let clients = &i2.back_map()[a];
        let mut next = 0;
        for (&(from, to), &x) in s.transfer.range((a, 0)..=(a, usize::MAX)) {
            debug_assert_eq!(from, a);
            for &j in &clients[next..next + x as usize] {
                assign[j] = i2.locations()[to];
            }
            next += x as usize;
        }
        for &j in &clients[next..] {
            assign[j] = i2.locations()[a];
        }
    }
    if let Some(j) = assign.iter().position(|&i| i == usize::MAX) {
        return Err(LbflError::Reference(format!("client {j} is not aggregated anywhere")));
    }
    let open = s.open.iter().map(|&a| i2.locations()[a]);
    Ok(Solution::new(open, assign))
}
