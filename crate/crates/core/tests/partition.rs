mod common;

use common::{direct_h2, graph_from_triples};
use privse_core::entropy::{two_dim_se, vanilla_minimize, Partition};
use privse_core::partition::{
    build_supergraph, cluster, cluster_with, extract_subgraphs, ClusterOptions, Grouping,
};
use privse_core::MessageGraph;
use proptest::prelude::*;

fn arb_graph_and_labels() -> impl Strategy<Value = (MessageGraph, Vec<usize>)> {
    (3usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec((0..n, 0..n, 1e-3f64..=1.0), 1..100)
                .prop_map(move |t| graph_from_triples(n, &t)),
            prop::collection::vec(0usize..6, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn supergraph_conserves_weight((g, labels) in arb_graph_and_labels()) {
        let p = Partition::from_labels(labels);
        let sg = build_supergraph(&g, &p).unwrap();
        prop_assert_eq!(sg.len(), p.num_communities());
        let self_total: f64 = sg.nodes().iter().map(|n| n.self_weight).sum();
        let cross_total: f64 = sg.edges().values().sum();
        prop_assert!((self_total + cross_total - g.total_weight()).abs() < 1e-9);
        for (c, node) in sg.nodes().iter().enumerate() {
            let vol: f64 = node.members.iter().map(|&i| g.degree(i)).sum();
            prop_assert!((node.volume - vol).abs() < 1e-9);
            prop_assert!(node.members.iter().all(|&i| p.community_of(i) == c));
        }
    }

    #[test]
    fn groups_cover_every_supernode((g, labels) in arb_graph_and_labels(), q in 2usize..10) {
        let sg = build_supergraph(&g, &Partition::from_labels(labels)).unwrap();
        let groups = extract_subgraphs(&sg, q).unwrap();
        let mut seen: Vec<usize> = groups.iter().flatten().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..sg.len()).collect::<Vec<_>>());
        prop_assert!(groups.iter().all(|grp| !grp.is_empty() && grp.len() <= q));
    }

    #[test]
    fn cluster_is_monotone((g, labels) in arb_graph_and_labels(), q0 in 2usize..12, sequential in any::<bool>()) {
        let init = Partition::from_labels(labels);
        let options = ClusterOptions {
            grouping: if sequential { Grouping::Sequential } else { Grouping::OptimalSubgraphs },
            ..ClusterOptions::new(q0)
        };
        let run = cluster_with(&g, &options, &init).unwrap();
        let h0 = two_dim_se(&g, &init).unwrap();
        prop_assert!(run.final_h2 <= h0 + 1e-12);
        prop_assert!(run.rounds.windows(2).all(|w| w[1].h2 <= w[0].h2 + 1e-12));
        prop_assert!(run.rounds.len() <= options.max_rounds);
        prop_assert!((direct_h2(&g, run.partition.assignment()) - run.final_h2).abs() < 1e-9);
        let again = cluster_with(&g, &options, &init).unwrap();
        prop_assert_eq!(run, again);
    }

    #[test]
    fn single_group_equals_vanilla((g, labels) in arb_graph_and_labels()) {
        let init = Partition::from_labels(labels);
        let run = cluster(&g, 400, &init).unwrap();
        let vanilla = vanilla_minimize(&g, &init).unwrap();
        prop_assert!(run.partition.same_grouping(&vanilla));
    }
}

#[test]
fn heavy_pairs_stay_together() {
    let g =
        MessageGraph::from_weighted_edges(4, &[(0, 1, 0.9), (2, 3, 0.9), (0, 2, 0.1), (1, 3, 0.1)])
            .unwrap();
    let sg = build_supergraph(&g, &Partition::singletons(4)).unwrap();
    let groups = extract_subgraphs(&sg, 2).unwrap();
    assert_eq!(groups, vec![vec![0, 1], vec![2, 3]]);
    // the greedy grouping keeps the most internal weight among all pairings
    let internal =
        |a: [usize; 2], b: [usize; 2]| sg.edge_weight(a[0], a[1]) + sg.edge_weight(b[0], b[1]);
    let best = [
        internal([0, 1], [2, 3]),
        internal([0, 2], [1, 3]),
        internal([0, 3], [1, 2]),
    ]
    .into_iter()
    .fold(f64::MIN, f64::max);
    assert_eq!(internal([0, 1], [2, 3]), best);
}

#[test]
fn edgeless_supergraph_gives_singletons() {
    let g = MessageGraph::from_weighted_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
    let sg = build_supergraph(&g, &Partition::new(vec![0, 0, 1, 1]).unwrap()).unwrap();
    assert_eq!(extract_subgraphs(&sg, 5).unwrap(), vec![vec![0], vec![1]]);
}

#[test]
fn small_q_is_rejected() {
    let g = MessageGraph::from_weighted_edges(2, &[(0, 1, 1.0)]).unwrap();
    assert!(cluster(&g, 1, &Partition::singletons(2)).is_err());
}
