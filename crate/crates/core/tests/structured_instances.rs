use std::collections::BTreeMap;

use lbfl_core::bicriteria::alpha_rank;
use lbfl_core::local_search::LocalSearchConfig;
use lbfl_core::model::DistMatrix;
use lbfl_core::oracle::exact_i2;
use lbfl_core::pipeline::{eval_delta, eval_g};
use lbfl_core::reduction::{solve_i2, AggregatedInstance, I2Config};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_i2(seed: u64) -> AggregatedInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(2..=9);
    let m = rng.gen_range(2..=12u64);
    let alpha = [0.55, 0.6, 0.67, 0.75, 0.85, 1.0][rng.gen_range(0..6)];
    let rank = alpha_rank(alpha, m as usize).unwrap() as u64;
    let pts: Vec<[f64; 2]> = (0..k).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).collect();
    let counts = (0..k)
        .map(|_| {
            if rng.gen_bool(0.75) {
                rng.gen_range(rank..=m)
            } else {
                rng.gen_range(rank..=2 * m)
            }
        })
        .collect();
    AggregatedInstance::from_counts(DistMatrix::euclidean(&pts), counts, m, alpha).unwrap()
}

#[test]
fn structured_solve_is_within_g_of_optimum() {
    let mut classes: BTreeMap<String, usize> = BTreeMap::new();
    let mut worst: f64 = 0.0;
    let mut tried = 0;
    for seed in 0..400 {
        let i2 = random_i2(seed);
        if i2.total_clients() < i2.lower_bound() {
            continue;
        }
        tried += 1;
        let alpha = i2.alpha();
        let cfg = I2Config {
            delta: eval_delta(alpha).unwrap(),
            local_search: LocalSearchConfig::default(),
        };
        let out = solve_i2(&i2, &cfg).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        out.solution.verify(&i2).unwrap();
        assert!(out.bound_certified, "seed {seed}: {:?}", out.events);
        let opt = exact_i2(&i2).unwrap().cost.total;
        let g = eval_g(alpha).unwrap();
        assert!(
            out.solution.cost <= g * opt * (1.0 + 1e-3) + 1e-9,
            "seed {seed}: {} > {g} * {opt}",
            out.solution.cost
        );
        if opt > 0.0 {
            worst = worst.max(out.solution.cost / opt);
        }
        for (c, n) in &out.class_sizes {
            *classes.entry(c.clone()).or_default() += n;
        }
    }
    println!("tried {tried}, worst ratio {worst:.4}, classes {classes:?}");
    assert!(classes.get("overdrawn").copied().unwrap_or(0) > 0);
    assert!(classes.get("surplus").copied().unwrap_or(0) > 0);
}

/// The phases only need a normalized feasible solution to produce a valid
/// plan; cost guarantees are what need local optimality.
#[test]
fn phases_yield_valid_plans_from_arbitrary_solutions() {
    use lbfl_core::cdufl::CduflSolution;
    use lbfl_core::flow::cdufl_best_assignment;
    use lbfl_core::reduction::{build_cdufl, normalize_cdufl_solution, Class, MappingState};
    use lbfl_core::LbflError;

    let mut overdrawn = 0;
    let mut structural = 0;
    for seed in 0..4000 {
        let i2 = random_i2(seed);
        let red = build_cdufl(&i2, eval_delta(i2.alpha()).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        let open: Vec<usize> = red
            .instance
            .uncapacitated()
            .into_iter()
            .filter(|_| rng.gen_bool(0.4))
            .collect();
        let Ok((a, _)) = cdufl_best_assignment(&red.instance, &open) else {
            continue;
        };
        let s = CduflSolution::from_assignment(&red.instance, open, a);
        let norm = normalize_cdufl_solution(&red, &s).unwrap();
        let mut state = MappingState::new(&i2, &red, norm);
        state.phase_a1().unwrap();
        overdrawn += state.members(Class::Overdrawn).len();
        match state.phase_a2() {
            Ok(()) => {}
            Err(LbflError::Structural(_)) => {
                structural += 1;
                continue;
            }
            Err(e) => panic!("seed {seed}: {e}"),
        }
        state.phase_a3().unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        let m = i2.lower_bound();
        assert!(state.counts.iter().all(|&n| n == 0 || n >= m));
        assert_eq!(state.counts.iter().sum::<u64>(), i2.total_clients());
    }
    println!("overdrawn {overdrawn}, structural {structural}");
    assert!(overdrawn > 50, "overdrawn class barely exercised");
}
