//! Library results against independent brute-force recomputation.

use lbfl_core::cdufl::{CduflInstance, SupplyKind};
use lbfl_core::flow::{assign_lower_bounded, cdufl_best_assignment};
use lbfl_core::gallery::{gen_random, gen_random_cdufl, RandomCduflParams};
use lbfl_core::local_search::{cdufl_local_search, ufl_local_search, LocalSearchConfig};
use lbfl_core::model::{evaluate_lbfl, LbflInstance, Solution};
use lbfl_core::oracle::{exact_cdufl, exact_lbfl, exact_ufl};

/// Cheapest client-to-facility map with every open facility serving at
/// least `M`, by trying all `|open|^|D|` maps.
fn brute_assignment(inst: &LbflInstance, open: &[usize]) -> Option<f64> {
    let nc = inst.n_clients();
    let mut choice = vec![0usize; nc];
    let mut best: Option<f64> = None;
    loop {
        let mut served = vec![0usize; open.len()];
        let mut cost = 0.0;
        for (j, &c) in choice.iter().enumerate() {
            served[c] += 1;
            cost += inst.conn(open[c], j);
        }
        if served.iter().all(|&s| s >= inst.lower_bound()) {
            best = Some(best.map_or(cost, |b: f64| b.min(cost)));
        }
        let mut k = 0;
        while k < nc {
            choice[k] += 1;
            if choice[k] < open.len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
        if k == nc {
            return best;
        }
    }
}

#[test]
fn lower_bounded_flow_matches_enumeration() {
    for seed in 0..40 {
        let m = 1 + (seed % 3) as usize;
        let inst = gen_random(seed, 3, 7, m, (0.0, 1.0)).unwrap();
        for open in [vec![0], vec![0, 1], vec![1, 2], vec![0, 1, 2]] {
            let flow = assign_lower_bounded(&inst, &open).ok().map(|(_, c)| c);
            let brute = brute_assignment(&inst, &open);
            match (flow, brute) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-9, "seed {seed} {open:?}: {a} vs {b}"),
                (None, None) => {}
                other => panic!("seed {seed} {open:?}: {other:?}"),
            }
        }
    }
}

/// Opening cost plus nearest-facility cost summed directly.
fn direct_ufl_cost(inst: &LbflInstance, open: &[usize]) -> f64 {
    let f: f64 = open.iter().map(|&i| inst.opening_cost(i)).sum();
    let c: f64 = (0..inst.n_clients())
        .map(|j| open.iter().map(|&i| inst.conn(i, j)).fold(f64::INFINITY, f64::min))
        .sum();
    f + c
}

#[test]
fn ufl_oracle_matches_direct_evaluator() {
    for seed in 0..10 {
        let inst = gen_random(seed, 6, 10, 1, (0.0, 1.5)).unwrap();
        let r = exact_ufl(&inst.to_ufl()).unwrap();
        let mut best = f64::INFINITY;
        for mask in 1u32..64 {
            let open: Vec<usize> = (0..6).filter(|&i| mask & (1 << i) != 0).collect();
            best = best.min(direct_ufl_cost(&inst, &open));
        }
        assert!((r.cost.total - best).abs() < 1e-9);
        assert!((direct_ufl_cost(&inst, &r.open) - best).abs() < 1e-9);
    }
}

#[test]
fn unit_lower_bound_oracles_agree() {
    for seed in 0..10 {
        let inst = gen_random(seed, 5, 9, 1, (0.0, 1.0)).unwrap();
        let a = exact_lbfl(&inst).unwrap().cost.total;
        let b = exact_ufl(&inst.to_ufl()).unwrap().cost.total;
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn lbfl_oracle_is_feasible_and_minimal() {
    for seed in 0..8 {
        let m = 2 + (seed % 3) as usize;
        let inst = gen_random(seed, 4, 7, m, (0.0, 1.0)).unwrap();
        let r = exact_lbfl(&inst).unwrap();
        let eval = evaluate_lbfl(&inst, &r.solution).unwrap();
        assert!((eval.total - r.cost.total).abs() < 1e-9);
        for mask in 1u32..16 {
            let open: Vec<usize> = (0..4).filter(|&i| mask & (1 << i) != 0).collect();
            if let Some(c) = brute_assignment(&inst, &open) {
                let f: f64 = open.iter().map(|&i| inst.opening_cost(i)).sum();
                assert!(r.cost.total <= f + c + 1e-9);
            }
        }
    }
}

#[test]
fn ufl_local_search_within_three_of_optimum() {
    let cfg = LocalSearchConfig::default().with_epsilon(1e-9);
    for seed in 0..30 {
        let inst = gen_random(seed, 7, 15, 1, (0.0, 2.0)).unwrap();
        let ufl = inst.to_ufl();
        let ls = ufl_local_search(&ufl, &cfg).unwrap();
        let opt = exact_ufl(&ufl).unwrap().cost.total;
        let got = ufl.evaluate(&ls).total;
        assert!(got <= 3.0 * opt + 1e-9, "seed {seed}: {got} vs {opt}");
        assert!(got >= opt - 1e-9);
    }
}

/// Cheapest CDUFL flow for an open set by trying every split of each unit
/// demand, for instances whose demands are all 1.
fn brute_cdufl(inst: &CduflInstance, open: &[usize]) -> Option<f64> {
    let usable: Vec<usize> = (0..inst.n_supply())
        .filter(|&s| !inst.is_uncapacitated(s) || open.contains(&s))
        .collect();
    let nd = inst.n_demand();
    if usable.is_empty() {
        return if nd == 0 { Some(0.0) } else { None };
    }
    let mut choice = vec![0usize; nd];
    let mut best: Option<f64> = None;
    loop {
        let mut load = vec![0u64; inst.n_supply()];
        let mut cost = 0.0;
        for (d, &c) in choice.iter().enumerate() {
            load[usable[c]] += 1;
            cost += inst.dist(usable[c], d);
        }
        let ok = usable.iter().all(|&s| match inst.supply()[s] {
            SupplyKind::Capacitated { capacity } => load[s] <= capacity,
            SupplyKind::Uncapacitated { .. } => true,
        });
        if ok {
            best = Some(best.map_or(cost, |b: f64| b.min(cost)));
        }
        let mut k = 0;
        while k < nd {
            choice[k] += 1;
            if choice[k] < usable.len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
        if k == nd {
            return best;
        }
    }
}

#[test]
fn cdufl_oracle_matches_reimplementation() {
    let params = RandomCduflParams {
        max_uncapacitated: 3,
        max_capacitated: 2,
        max_units: 5,
        max_opening_cost: 1.0,
    };
    let mut checked = 0;
    for seed in 0..40 {
        let inst = gen_random_cdufl(seed, &params).unwrap();
        if inst.demands().iter().any(|&d| d != 1) {
            continue;
        }
        let uncap = inst.uncapacitated();
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << uncap.len()) {
            let open: Vec<usize> = (0..uncap.len()).filter(|&k| mask & (1 << k) != 0).map(|k| uncap[k]).collect();
            if let Some(c) = brute_cdufl(&inst, &open) {
                let f: f64 = open.iter().map(|&s| inst.opening_cost(s)).sum();
                best = best.min(f + c);
            }
            if let (Some(c), Ok((_, flow))) = (brute_cdufl(&inst, &open), cdufl_best_assignment(&inst, &open)) {
                assert!((c - flow).abs() < 1e-9);
            }
        }
        let r = exact_cdufl(&inst).unwrap();
        assert!((r.cost.total - best).abs() < 1e-9, "seed {seed}");
        checked += 1;
    }
    assert!(checked >= 5);
}

#[test]
fn cdufl_local_optimum_respects_opt_bounds() {
    let cfg = LocalSearchConfig::default().with_epsilon(1e-9);
    for seed in 0..60 {
        let inst = gen_random_cdufl(seed, &RandomCduflParams::default()).unwrap();
        let ls = cdufl_local_search(&inst, &cfg).unwrap();
        let opt = exact_cdufl(&inst).unwrap().cost;
        assert!(ls.facility_cost <= opt.facility_cost + 2.0 * opt.assignment_cost + 1e-6);
        assert!(ls.assignment_cost <= opt.facility_cost + opt.assignment_cost + 1e-6);
    }
}

#[test]
fn oracle_solution_survives_relabeling() {
    let inst = gen_random(5, 4, 8, 2, (0.0, 1.0)).unwrap();
    let r = exact_lbfl(&inst).unwrap();
    // reverse facility order
    let nf = inst.n_facilities();
    let perm: Vec<usize> = (0..nf).rev().chain(nf..nf + inst.n_clients()).collect();
    let dist = inst.dist().restrict(&perm);
    let costs: Vec<f64> = (0..nf).rev().map(|i| inst.opening_cost(i)).collect();
    let flipped = LbflInstance::new(costs, inst.n_clients(), dist, 2).unwrap();
    let rf = exact_lbfl(&flipped).unwrap();
    assert!((r.cost.total - rf.cost.total).abs() < 1e-9);
    let mapped = Solution::new(rf.open.iter().map(|&i| nf - 1 - i), rf.solution.assign.iter().map(|&i| nf - 1 - i).collect());
    assert!((evaluate_lbfl(&inst, &mapped).unwrap().total - r.cost.total).abs() < 1e-9);
}
