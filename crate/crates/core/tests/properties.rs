use std::collections::BTreeMap;

use halfhop::augment::{half_hop_nodes, make_views};
use halfhop::diffusion::{half_hop_trajectory, half_hop_trajectory_materialized, receptive_field};
use halfhop::graph::{degree_view, homophily_ratio, symmetrize};
use halfhop::io::{format_edge_list, parse_edge_list};
use halfhop::regression::fit_ridge;
use halfhop::spectral::{baseline_eigenvalue, halfhop_eigenvalue, r_reg, predicted_cov_halfhop, predicted_cov_baseline};
use halfhop::*;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn arb_graph(max_n: usize, weighted: bool) -> impl Strategy<Value = Graph> {
    (1..=max_n).prop_flat_map(move |n| {
        let edges = prop::collection::vec((0..n, 0..n), 0..(3 * n + 1));
        let feats = prop::collection::vec(-3.0f64..3.0, n * 2);
        (Just(n), edges, feats, prop::collection::vec(0.1f64..5.0, 3 * n + 1)).prop_map(
            move |(n, edges, feats, w)| {
                let weights = weighted.then(|| w[..edges.len()].to_vec());
                Graph::build_weighted(
                    n,
                    edges,
                    weights,
                    DMatrix::from_row_slice(n, 2, &feats),
                    None,
                    DedupPolicy::Dedup,
                )
                .unwrap()
            },
        )
    })
}

fn arb_variant() -> impl Strategy<Value = Variant> {
    prop_oneof![Just(Variant::Hh), Just(Variant::Hh1), Just(Variant::Hh2)]
}

fn arb_init() -> impl Strategy<Value = SlowInit> {
    prop_oneof![Just(SlowInit::Interpolate), Just(SlowInit::Zero), Just(SlowInit::Random)]
}

fn edge_multiset(g: &Graph) -> BTreeMap<(usize, usize), usize> {
    let mut m = BTreeMap::new();
    for &e in g.edges() {
        *m.entry(e).or_insert(0) += 1;
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn counting_laws(
        g in arb_graph(30, false),
        variant in arb_variant(),
        init in arb_init(),
        p in 0.0f64..=1.0,
        seed in any::<u64>(),
        alpha in 0.0f64..=1.0,
    ) {
        let cfg = HalfHopConfig::new(alpha, p).with_variant(variant).with_init(init).with_seed(seed);
        let ag = half_hop_sampled(&g, &cfg).unwrap();
        let hopped = ag.num_slow_nodes();
        let candidates = g.edges().iter().filter(|(s, t)| s != t).count();
        prop_assert!(hopped <= candidates);
        prop_assert_eq!(ag.graph().num_nodes(), g.num_nodes() + hopped);
        prop_assert_eq!(
            ag.graph().num_edges(),
            g.num_edges() - hopped + variant.edges_per_hop() * hopped
        );
        for (s, slow) in ag.provenance().iter().enumerate() {
            prop_assert!(slow.source != slow.target);
            prop_assert!(ag.is_slow(g.num_nodes() + s));
        }
        let back = strip_slow_nodes(&ag).unwrap();
        prop_assert_eq!(back.num_nodes(), g.num_nodes());
        prop_assert_eq!(back.edges(), g.edges());
        prop_assert_eq!(back.features(), g.features());
        prop_assert_eq!(edge_multiset(&back), edge_multiset(&g));
    }

    #[test]
    fn full_transform_hops_every_non_loop(g in arb_graph(30, true), variant in arb_variant()) {
        let ag = half_hop(&g, &HalfHopConfig::default().with_variant(variant)).unwrap();
        let loops = g.edges().iter().filter(|(s, t)| s == t).count();
        prop_assert_eq!(ag.num_slow_nodes(), g.num_edges() - loops);
        let back = strip_slow_nodes(&ag).unwrap();
        prop_assert_eq!(back.weights(), g.weights());
    }

    #[test]
    fn interpolated_slow_features(g in arb_graph(20, false), alpha in 0.0f64..=1.0) {
        let ag = half_hop(&g, &HalfHopConfig::new(alpha, 1.0)).unwrap();
        let x = g.features();
        let y = ag.graph().features();
        for (s, slow) in ag.provenance().iter().enumerate() {
            let want = x.row(slow.target) * (1.0 - alpha) + x.row(slow.source) * alpha;
            prop_assert!((y.row(g.num_nodes() + s) - want).amax() < 1e-12);
        }
    }

    #[test]
    fn sampling_is_seed_deterministic(g in arb_graph(30, false), seed in any::<u64>()) {
        let cfg = HalfHopConfig::new(0.5, 0.5).with_seed(seed).with_init(SlowInit::Random);
        prop_assert_eq!(half_hop_sampled(&g, &cfg).unwrap(), half_hop_sampled(&g, &cfg).unwrap());
        let (a, b) = make_views(&g, &cfg, &cfg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn selecting_nobody_is_identity(g in arb_graph(30, true)) {
        let ag = half_hop_nodes(&g, &vec![false; g.num_nodes()], &HalfHopConfig::default()).unwrap();
        prop_assert_eq!(ag.num_slow_nodes(), 0);
        prop_assert_eq!(ag.graph().edges(), g.edges());
        prop_assert_eq!(ag.graph().features(), g.features());
    }

    #[test]
    fn degree_sums(g in arb_graph(40, false)) {
        let d = degree_view(&g);
        prop_assert_eq!(d.in_degree.iter().sum::<usize>(), g.num_edges());
        prop_assert_eq!(d.out_degree.iter().sum::<usize>(), g.num_edges());
    }

    #[test]
    fn symmetrize_idempotent(g in arb_graph(30, true)) {
        let once = symmetrize(&g);
        let twice = symmetrize(&once);
        let set = |h: &Graph| h.edges().iter().copied().collect::<std::collections::BTreeSet<_>>();
        prop_assert_eq!(set(&once), set(&twice));
        for &(s, t) in once.edges() {
            prop_assert!(set(&once).contains(&(t, s)));
        }
    }

    #[test]
    fn homophily_label_permutation(
        g in arb_graph(30, false),
        labels in prop::collection::vec(0i64..4, 30),
        perm in Just([2i64, 0, 3, 1]).prop_shuffle(),
    ) {
        let n = g.num_nodes();
        let a = g.clone().with_labels(Labels::Class(labels[..n].to_vec())).unwrap();
        let b = g.with_labels(Labels::Class(labels[..n].iter().map(|&c| perm[c as usize]).collect())).unwrap();
        match (homophily_ratio(&a), homophily_ratio(&b)) {
            (Ok(x), Ok(y)) => {
                prop_assert!((0.0..=1.0).contains(&x));
                prop_assert!((x - y).abs() < 1e-12);
            }
            (Err(_), Err(_)) => {}
            other => prop_assert!(false, "mismatch {:?}", other),
        }
    }

    #[test]
    fn receptive_fields_are_distributions(g in arb_graph(25, true), k in 0usize..8, sym in any::<bool>()) {
        let op = build_operator(&g, OperatorKind::MeanRowNorm, true);
        for c in 0..g.num_nodes() {
            let rf = receptive_field(&op, c, k).unwrap();
            prop_assert!(rf.iter().all(|&v| v >= 0.0));
            prop_assert!((rf.sum() - 1.0).abs() < 1e-10);
        }
        // symmetric normalization keeps weights nonnegative
        if sym {
            let op = build_operator(&g, OperatorKind::SymNorm, true);
            let rf = receptive_field(&op, 0, k).unwrap();
            prop_assert!(rf.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn recurrence_matches_materialized(
        g in arb_graph(15, true),
        alpha in 0.0f64..=1.0,
        hh1 in any::<bool>(),
    ) {
        let variant = if hh1 { Variant::Hh1 } else { Variant::Hh };
        let op = build_operator(&g, OperatorKind::MeanRowNorm, false);
        let fast = half_hop_trajectory(&op, g.features(), alpha, variant, 6).unwrap();
        let cfg = HalfHopConfig::new(alpha, 1.0).with_variant(variant);
        let slow = half_hop_trajectory_materialized(&g, &cfg, OperatorKind::MeanRowNorm, false, 6).unwrap();
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).amax() < 1e-10);
        }
    }

    #[test]
    fn edge_list_text_round_trip(g in arb_graph(30, true)) {
        let text = format_edge_list(&g);
        let el = parse_edge_list(&text, std::path::Path::new("mem"), false).unwrap();
        prop_assert_eq!(&el.edges[..], g.edges());
        prop_assert_eq!(el.weights.as_deref(), g.weights().filter(|w| !w.is_empty()));
    }

    #[test]
    fn ridge_matches_normal_equations(
        data in prop::collection::vec(-2.0f64..2.0, 60 * 4),
        y in prop::collection::vec(-2.0f64..2.0, 60),
        gamma in 1e-3f64..1.0,
    ) {
        let x = DMatrix::from_row_slice(60, 4, &data);
        let y = DMatrix::from_column_slice(60, 1, &y);
        let est = fit_ridge(&x, &y, gamma).unwrap();
        let lhs = x.transpose() * &x + DMatrix::identity(4, 4) * (2.0 * gamma * 60.0);
        let want = lhs.lu().solve(&(x.transpose() * &y)).unwrap();
        prop_assert!((&est.beta - &want).amax() <= 1e-8 * want.amax().max(1.0));
    }

    #[test]
    fn spectral_maps(l in 1e-6f64..1e3, k in 0usize..6, alpha in 0.0f64..=1.0) {
        let k = 2 * k + 1;
        let b = baseline_eigenvalue(l, k);
        let h = halfhop_eigenvalue(l, k, alpha);
        prop_assert!(b >= 0.0 && b <= l);
        prop_assert!(h >= b && h <= l * (1.0 + 1e-12));
    }

    #[test]
    fn risk_is_nonnegative_and_bounded(
        vars in prop::collection::vec(0.05f64..3.0, 1..5),
        gamma in 1e-3f64..1.0,
        k in 0usize..4,
    ) {
        let d = vars.len();
        let m = LatentModel::diagonal(&vars, &vec![0.5; d], 0.1, gamma).unwrap();
        let full = r_reg(&DMatrix::zeros(d, d), &m).unwrap();
        let base = r_reg(&predicted_cov_baseline(&m, k), &m).unwrap();
        let hh = r_reg(&predicted_cov_halfhop(&m, 2 * k + 1, 0.5).unwrap(), &m).unwrap();
        for r in [base, hh] {
            prop_assert!(r >= 0.0 && r <= full + 1e-12);
        }
    }
}
