#![allow(clippy::needless_range_loop)]

mod common;

use common::dense_transition;
use dnr_core::generators::erdos_renyi;
use dnr_core::{Graph, TransitionMatrix};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn edge_list_round_trip(n in 1usize..25, p in 0.0f64..0.6, directed in any::<bool>(), seed in 0u64..500) {
        let g = erdos_renyi(n, p, directed, seed).unwrap();
        prop_assume!(g.n_edges() > 0);
        let text = g.to_edge_list();
        let back = Graph::parse_edge_list(&text, directed, true).unwrap();
        // isolated nodes are not representable in an edge list
        for s in 0..back.n_nodes() {
            let os = g.node_index(back.node_name(s)).unwrap();
            for (d, w) in back.out_edges(s) {
                let od = g.node_index(back.node_name(d)).unwrap();
                prop_assert_eq!(g.edge_weight(os, od), Some(w));
            }
        }
        prop_assert_eq!(back.n_edges(), g.n_edges());
        if !directed {
            for s in 0..back.n_nodes() {
                for (d, w) in back.out_edges(s) {
                    prop_assert_eq!(back.edge_weight(d, s), Some(w));
                }
            }
        }
    }

    #[test]
    fn columns_are_stochastic(n in 1usize..30, p in 0.0f64..0.5, seed in 0u64..500) {
        let g = erdos_renyi(n, p, true, seed).unwrap();
        let t = TransitionMatrix::from_graph(&g);
        prop_assert_eq!(t.nnz(), g.n_edges());
        let sums = t.column_sums();
        for j in 0..n {
            if t.dangling().contains(&j) {
                prop_assert_eq!(sums[j], 0.0);
                prop_assert_eq!(g.out_edges(j).count(), 0);
            } else {
                prop_assert!((sums[j] - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn relabeling_conjugates_transition(n in 1usize..20, p in 0.1f64..0.6, seed in 0u64..500, rot in 0usize..20) {
        let g = erdos_renyi(n, p, true, seed).unwrap();
        let perm: Vec<usize> = (0..n).map(|i| (i * 7 + rot) % n).collect();
        prop_assume!({ let mut s = perm.clone(); s.sort(); s.dedup(); s.len() == n });
        let h = g.permuted(&perm).unwrap();
        let t = dense_transition(&g);
        let th = TransitionMatrix::from_graph(&h).to_dense();
        for i in 0..n {
            for j in 0..n {
                prop_assert!((th[perm[i]][perm[j]] - t[i][j]).abs() <= 1e-15);
            }
        }
    }
}
