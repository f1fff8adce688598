//! Min-cost flow by successive shortest paths with node potentials, and the
//! assignment subroutines built on it.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use serde::Serialize;

use crate::cdufl::{CduflInstance, SupplyKind};
use crate::error::{LbflError, Result};
use crate::model::{LbflInstance, TOL};

/// Capacity standing in for "unbounded".
pub const INF_CAP: u64 = u64::MAX / 4;

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    residual: u64,
    cost: f64,
}

/// Directed network with integral capacities and real costs.
///
/// Arc `k` is stored as residual edge `2k`, its reverse as `2k + 1`.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    adj: Vec<Vec<usize>>,
    edges: Vec<Edge>,
    capacity: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolution {
    pub value: u64,
    pub cost: f64,
    /// Flow on each arc, indexed by the id returned from [`FlowNetwork::add_arc`].
    pub arc_flow: Vec<u64>,
}

#[derive(Copy, Clone, PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    // min-heap on (dist, node)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        Self {
            adj: vec![Vec::new(); nodes],
            edges: Vec::new(),
            capacity: Vec::new(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.adj.len()
    }

    pub fn add_arc(&mut self, from: usize, to: usize, capacity: u64, cost: f64) -> usize {
        let id = self.capacity.len();
        self.adj[from].push(self.edges.len());
        self.edges.push(Edge { to, residual: capacity, cost });
        self.adj[to].push(self.edges.len());
        self.edges.push(Edge { to: from, residual: 0, cost: -cost });
        self.capacity.push(capacity);
        id
    }

    fn arc_flow(&self) -> Vec<u64> {
        (0..self.capacity.len())
            .map(|k| self.edges[2 * k + 1].residual)
            .collect()
    }

    /// Bellman-Ford potentials from `source`; handles negative arc costs
    /// as long as there is no negative cycle.
    fn initial_potentials(&self, source: usize) -> Vec<f64> {
        let n = self.n_nodes();
        let mut pot = vec![f64::INFINITY; n];
        pot[source] = 0.0;
        for _ in 0..n {
            let mut changed = false;
            for u in 0..n {
                if pot[u].is_infinite() {
                    continue;
                }
                for &e in &self.adj[u] {
                    let edge = &self.edges[e];
                    if edge.residual > 0 && pot[u] + edge.cost < pot[edge.to] - TOL {
                        pot[edge.to] = pot[u] + edge.cost;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        pot.iter().map(|p| if p.is_finite() { *p } else { 0.0 }).collect()
    }

    /// Sends exactly `required` units from `source` to `sink` at minimum cost.
    pub fn solve(&mut self, source: usize, sink: usize, required: u64) -> Result<FlowSolution> {
        let n = self.n_nodes();
        let mut pot = self.initial_potentials(source);
        let mut value = 0u64;
        let mut dist = vec![f64::INFINITY; n];
        let mut parent = vec![usize::MAX; n];
        let mut done = vec![false; n];
        while value < required {
            dist.fill(f64::INFINITY);
            parent.fill(usize::MAX);
            done.fill(false);
            dist[source] = 0.0;
            let mut heap = BinaryHeap::new();
            heap.push(HeapItem { dist: 0.0, node: source });
            while let Some(HeapItem { dist: d, node: u }) = heap.pop() {
                if done[u] {
                    continue;
                }
                done[u] = true;
                for &e in &self.adj[u] {
                    let edge = &self.edges[e];
                    if edge.residual == 0 || done[edge.to] {
                        continue;
                    }
                    let reduced = (edge.cost + pot[u] - pot[edge.to]).max(0.0);
                    let nd = d + reduced;
                    if nd < dist[edge.to] {
                        dist[edge.to] = nd;
                        parent[edge.to] = e;
                        heap.push(HeapItem { dist: nd, node: edge.to });
                    }
                }
            }
            if !done[sink] {
                return Err(LbflError::FlowInfeasible {
                    required,
                    max_flow: value,
                });
            }
            for v in 0..n {
                if done[v] {
                    pot[v] += dist[v];
                }
            }
            let mut push = required - value;
            let mut v = sink;
            while v != source {
                let e = parent[v];
                push = push.min(self.edges[e].residual);
                v = self.edges[e ^ 1].to;
            }
            let mut v = sink;
            while v != source {
                let e = parent[v];
                self.edges[e].residual -= push;
                self.edges[e ^ 1].residual += push;
                v = self.edges[e ^ 1].to;
            }
            value += push;
        }
        let arc_flow = self.arc_flow();
        let cost = arc_flow
            .iter()
            .enumerate()
            .map(|(k, &f)| f as f64 * self.edges[2 * k].cost)
            .sum();
        Ok(FlowSolution { value, cost, arc_flow })
    }

    /// True if the current residual graph has a cycle of negative cost
    /// (beyond tolerance). An optimal flow has none.
    pub fn has_negative_residual_cycle(&self) -> bool {
        let n = self.n_nodes();
        let mut pot = vec![0.0f64; n];
        for round in 0..=n {
            let mut changed = false;
            for u in 0..n {
                for &e in &self.adj[u] {
                    let edge = &self.edges[e];
                    if edge.residual > 0 && pot[u] + edge.cost < pot[edge.to] - TOL {
                        pot[edge.to] = pot[u] + edge.cost;
                        changed = true;
                    }
                }
            }
            if !changed {
                return false;
            }
            if round == n {
                return true;
            }
        }
        false
    }

    pub fn arc_capacity(&self, arc: usize) -> u64 {
        self.capacity[arc]
    }
}

/// Integral units shipped from suppliers to receivers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Assignment {
    units: BTreeMap<(usize, usize), u64>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn units(&self) -> &BTreeMap<(usize, usize), u64> {
        &self.units
    }

    pub fn get(&self, supplier: usize, receiver: usize) -> u64 {
        self.units.get(&(supplier, receiver)).copied().unwrap_or(0)
    }

    pub fn add(&mut self, supplier: usize, receiver: usize, units: u64) {
        if units > 0 {
            *self.units.entry((supplier, receiver)).or_insert(0) += units;
        }
    }

    /// Removes `units` from a pair; panics if fewer are present.
    pub fn take(&mut self, supplier: usize, receiver: usize, units: u64) {
        if units == 0 {
            return;
        }
        let slot = self
            .units
            .get_mut(&(supplier, receiver))
            .expect("taking units from an empty pair");
        assert!(*slot >= units, "taking more units than assigned");
        *slot -= units;
        if *slot == 0 {
            self.units.remove(&(supplier, receiver));
        }
    }

    /// Moves `units` of `receiver` from supplier `from` to supplier `to`.
    pub fn reroute(&mut self, receiver: usize, from: usize, to: usize, units: u64) {
        self.take(from, receiver, units);
        self.add(to, receiver, units);
    }

    pub fn supplier_total(&self, supplier: usize) -> u64 {
        self.units
            .range((supplier, 0)..=(supplier, usize::MAX))
            .map(|(_, &x)| x)
            .sum()
    }

    pub fn receiver_total(&self, receiver: usize) -> u64 {
        self.units
            .iter()
            .filter(|((_, r), _)| *r == receiver)
            .map(|(_, &x)| x)
            .sum()
    }

    /// `(receiver, units)` pairs served by `supplier`, by receiver id.
    pub fn receivers_of(&self, supplier: usize) -> Vec<(usize, u64)> {
        self.units
            .range((supplier, 0)..=(supplier, usize::MAX))
            .map(|(&(_, r), &x)| (r, x))
            .collect()
    }

    /// `(supplier, units)` pairs serving `receiver`, by supplier id.
    pub fn suppliers_of(&self, receiver: usize) -> Vec<(usize, u64)> {
        self.units
            .iter()
            .filter(|((_, r), _)| *r == receiver)
            .map(|(&(s, _), &x)| (s, x))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }
}

/// Min-cost transportation where `groups[g]` co-located units must each go
/// to an open facility and every open facility receives at least `lower`
/// units. `cost(f, g)` prices one unit of group `g` at facility `f`.
///
/// The facility-to-sink arc is split into a mandatory arc of capacity
/// `lower` and an optional arc routed through an overflow node whose
/// capacity is the surplus `total - lower * |open|`; a full flow therefore
/// saturates every mandatory arc.
pub fn lower_bounded_transport(
    groups: &[u64],
    open: &[usize],
    lower: u64,
    cost: impl Fn(usize, usize) -> f64,
) -> Result<(Assignment, f64)> {
    let total: u64 = groups.iter().sum();
    let need = lower * open.len() as u64;
    if total < need {
        return Err(LbflError::Infeasible(format!(
            "{total} clients cannot give {} open facilities at least {lower} each",
            open.len()
        )));
    }
    if total > 0 && open.is_empty() {
        return Err(LbflError::Infeasible("no open facility to serve clients".into()));
    }
    let (source, sink, overflow) = (0, 1, 2);
    let base_g = 3;
    let base_f = base_g + groups.len();
    let mut net = FlowNetwork::new(base_f + open.len());
    let mut assign_arcs = Vec::new();
    for (g, &n_g) in groups.iter().enumerate() {
        if n_g == 0 {
            continue;
        }
        net.add_arc(source, base_g + g, n_g, 0.0);
        for (k, &f) in open.iter().enumerate() {
            let arc = net.add_arc(base_g + g, base_f + k, n_g, cost(f, g));
            assign_arcs.push((arc, f, g));
        }
    }
    for k in 0..open.len() {
        net.add_arc(base_f + k, sink, lower, 0.0);
        net.add_arc(base_f + k, overflow, INF_CAP, 0.0);
    }
    net.add_arc(overflow, sink, total - need, 0.0);
    let sol = net.solve(source, sink, total)?;
    let mut assignment = Assignment::new();
    for (arc, f, g) in assign_arcs {
        assignment.add(f, g, sol.arc_flow[arc]);
    }
    Ok((assignment, sol.cost))
}

/// Cheapest assignment of the clients of `instance` to `open` in which
/// every open facility serves at least `M` clients.
///
/// Supplier = facility, receiver = client.
pub fn assign_lower_bounded(instance: &LbflInstance, open: &[usize]) -> Result<(Assignment, f64)> {
    if let Some(&i) = open.iter().find(|&&i| i >= instance.n_facilities()) {
        return Err(LbflError::Reference(format!("open facility {i}")));
    }
    let groups = vec![1u64; instance.n_clients()];
    lower_bounded_transport(&groups, open, instance.lower_bound() as u64, |f, j| {
        instance.conn(f, j)
    })
}

/// Client-to-facility map from a unit assignment (every client once).
pub fn assignment_to_map(assignment: &Assignment, n_clients: usize) -> Vec<usize> {
    let mut map = vec![usize::MAX; n_clients];
    for (&(f, j), &x) in assignment.units() {
        debug_assert_eq!(x, 1);
        map[j] = f;
    }
    map
}

/// Cheapest feasible flow for a fixed set of open uncapacitated points;
/// capacitated points are always usable.
///
/// Supplier = supply point, receiver = demand point.
pub fn cdufl_best_assignment(
    instance: &CduflInstance,
    open_uncap: &[usize],
) -> Result<(Assignment, f64)> {
    for &s in open_uncap {
        if s >= instance.n_supply() || !instance.is_uncapacitated(s) {
            return Err(LbflError::Invalid(format!(
                "supply {s} is not an uncapacitated supply point"
            )));
        }
    }
    let total = instance.total_demand();
    if open_uncap.is_empty() && instance.total_capacity() < total {
        return Err(LbflError::Infeasible(format!(
            "capacity {} below demand {total} with no uncapacitated point open",
            instance.total_capacity()
        )));
    }
    let (source, sink) = (0, 1);
    let base_d = 2;
    let base_s = base_d + instance.n_demand();
    let mut net = FlowNetwork::new(base_s + instance.n_supply());
    let usable: Vec<usize> = (0..instance.n_supply())
        .filter(|&s| !instance.is_uncapacitated(s) || open_uncap.contains(&s))
        .collect();
    let mut ship_arcs = Vec::new();
    for (d, &demand) in instance.demands().iter().enumerate() {
        if demand == 0 {
            continue;
        }
        net.add_arc(source, base_d + d, demand, 0.0);
        for &s in &usable {
            let arc = net.add_arc(base_d + d, base_s + s, demand, instance.dist(s, d));
            ship_arcs.push((arc, s, d));
        }
    }
    for &s in &usable {
        let cap = match instance.supply()[s] {
            SupplyKind::Capacitated { capacity } => capacity,
            SupplyKind::Uncapacitated { .. } => total,
        };
        net.add_arc(base_s + s, sink, cap, 0.0);
    }
    let sol = net.solve(source, sink, total)?;
    let mut assignment = Assignment::new();
    for (arc, s, d) in ship_arcs {
        assignment.add(s, d, sol.arc_flow[arc]);
    }
    Ok((assignment, sol.cost))
}
