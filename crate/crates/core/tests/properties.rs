use lbfl_core::flow::lower_bounded_transport;
use lbfl_core::model::{metric_completion, validate_dist};
use lbfl_core::reduction::plan_case2;
use proptest::prelude::*;

proptest! {
    #[test]
    fn completion_is_metric_and_below_edges(
        n in 2usize..7,
        raw in prop::collection::vec((0usize..7, 0usize..7, 0.1f64..10.0), 1..20),
    ) {
        let mut edges: Vec<(usize, usize, f64)> =
            raw.into_iter().filter(|&(a, b, _)| a < n && b < n && a != b).collect();
        // chain keeps the graph connected
        for v in 1..n {
            edges.push((v - 1, v, 20.0));
        }
        let d = metric_completion(n, &edges).unwrap();
        prop_assert!(validate_dist(&d).is_metric());
        for &(a, b, w) in &edges {
            prop_assert!(d.get(a, b) <= w + 1e-12);
        }
    }

    #[test]
    fn transport_respects_lower_bound(
        groups in prop::collection::vec(0u64..6, 1..6),
        lower in 1u64..4,
        pick in 1usize..4,
    ) {
        let k = groups.len();
        let open: Vec<usize> = (0..k).step_by(pick).collect();
        let total: u64 = groups.iter().sum();
        match lower_bounded_transport(&groups, &open, lower, |f, g| (f as f64 - g as f64).abs()) {
            Ok((a, cost)) => {
                for &f in &open {
                    prop_assert!(a.supplier_total(f) >= lower);
                }
                for (g, &n) in groups.iter().enumerate() {
                    prop_assert_eq!(a.receiver_total(g), n);
                }
                prop_assert!(cost >= 0.0);
            }
            Err(_) => prop_assert!(total < lower * open.len() as u64 || (open.is_empty() && total > 0)),
        }
    }

    #[test]
    fn case2_plan_keeps_index_invariant(
        m in 2u64..21,
        alpha_pct in 51u64..100,
        raw in prop::collection::vec(any::<u64>(), 3..10),
    ) {
        let rank = ((alpha_pct * m) as f64 / 100.0).ceil().max(1.0) as u64;
        prop_assume!(rank < m);
        let n0 = rank + raw[0] % (m - rank + 1);
        let mut counts = vec![n0];
        counts.extend(raw[1..].iter().map(|r| rank + r % (m - rank)));
        let shortfall: u64 = counts[1..].iter().map(|&n| m - n).sum();
        prop_assume!(shortfall > n0);
        let plan = plan_case2(m, &counts).unwrap();
        let ell = plan.ell;
        let y: u64 = counts[ell + 1..].iter().map(|&n| m - n).sum();
        let held: u64 = counts[..=ell].iter().sum();
        prop_assert!(y <= held && held < y + m);
        for (idx, amount) in plan.residual_at() {
            prop_assert!(idx <= 1);
            if idx == 1 {
                prop_assert!(amount <= m - n0);
            }
        }
    }
}
