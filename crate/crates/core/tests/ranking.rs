#![allow(clippy::needless_range_loop)]

mod common;

use common::{dense_ppr, dense_transition, linf};
use dnr_core::generators::erdos_renyi;
use dnr_core::pprs::ppr_traced;
use dnr_core::{ppr, ppr_batch, Graph, PprConfig, TransitionMatrix};
use proptest::prelude::*;

fn tight() -> PprConfig {
    PprConfig {
        epsilon: 1e-12,
        ..Default::default()
    }
}

#[test]
fn batch_matches_dense_oracle_on_random_graph() {
    let g = erdos_renyi(10, 0.3, true, 5).unwrap();
    let t = TransitionMatrix::from_graph(&g);
    let dense = dense_transition(&g);
    let seeds: Vec<usize> = (0..10).collect();
    let batch = ppr_batch(&t, &seeds, &tight()).unwrap();
    for (s, v) in batch.iter().enumerate() {
        assert_eq!(v.seed, s);
        let oracle = dense_ppr(&dense, s, 0.5, 1e-12);
        assert!(linf(&v.values, &oracle) <= 1e-8);
    }
}

#[test]
fn two_cycle_matches_exact_solve() {
    let g = Graph::parse_edge_list("a b\nb a\n", false, true).unwrap();
    let t = TransitionMatrix::from_graph(&g);
    for damping in [0.2, 0.5, 0.85] {
        let cfg = PprConfig { damping, ..tight() };
        let v = ppr(&t, 0, &cfg).unwrap();
        assert!((v.values[0] - 1.0 / (1.0 + damping)).abs() <= 1e-9);
        assert!((v.values[1] - damping / (1.0 + damping)).abs() <= 1e-9);
    }
}

fn multi_component(n1: usize, n2: usize, p: f64, seed: u64) -> Graph {
    let a = erdos_renyi(n1, p, true, seed).unwrap();
    let b = erdos_renyi(n2, p, true, seed + 1000).unwrap();
    let mut edges = Vec::new();
    for s in 0..n1 {
        edges.extend(a.out_edges(s).map(|(d, w)| (s, d, w)));
    }
    for s in 0..n2 {
        edges.extend(b.out_edges(s).map(|(d, w)| (n1 + s, n1 + d, w)));
    }
    Graph::from_indexed_edges(n1 + n2, true, edges).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn shrinking_matches_dense_oracle(n in 5usize..40, p in 0.1f64..0.5, seed in 0u64..1000) {
        let g = erdos_renyi(n, p, true, seed).unwrap();
        let t = TransitionMatrix::from_graph(&g);
        let dense = dense_transition(&g);
        for s in 0..n {
            let v = ppr(&t, s, &tight()).unwrap();
            let oracle = dense_ppr(&dense, s, 0.5, 1e-12);
            prop_assert!(linf(&v.values, &oracle) <= 1e-8);
        }
    }

    #[test]
    fn shrinking_is_neutral(n1 in 2usize..15, n2 in 5usize..30, p in 0.05f64..0.4, seed in 0u64..1000) {
        let g = multi_component(n1, n2, p, seed);
        let t = TransitionMatrix::from_graph(&g);
        let on = PprConfig { spread_percent: 0.9, ..Default::default() };
        let off = PprConfig { shrinking: false, ..on };
        for s in 0..g.n_nodes() {
            let a = ppr(&t, s, &on).unwrap();
            let b = ppr(&t, s, &off).unwrap();
            prop_assert!(linf(&a.values, &b.values) <= 1e-10);
            if s < n1 {
                prop_assert!(a.values[n1..].iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn mass_is_conserved(n in 2usize..40, p in 0.02f64..0.4, seed in 0u64..1000) {
        // sparse directed graphs have plenty of dangling nodes
        let g = erdos_renyi(n, p, true, seed).unwrap();
        let t = TransitionMatrix::from_graph(&g);
        for s in 0..n {
            let (v, trace) = ppr_traced(&t, s, &PprConfig::default()).unwrap();
            prop_assert!(v.converged);
            prop_assert!((v.values.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
            prop_assert!(v.values.iter().all(|&x| x >= 0.0));
            prop_assert!(trace.iter().all(|r| r.is_finite()));
            prop_assert!(*trace.last().unwrap() <= 1e-6);
        }
    }

    #[test]
    fn permutation_equivariance(n in 2usize..20, p in 0.1f64..0.5, seed in 0u64..1000, perm_seed in any::<u64>()) {
        let g = erdos_renyi(n, p, true, seed).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut state = perm_seed | 1;
        for i in (1..n).rev() {
            state ^= state << 13; state ^= state >> 7; state ^= state << 17;
            perm.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let h = g.permuted(&perm).unwrap();
        let tg = TransitionMatrix::from_graph(&g);
        let th = TransitionMatrix::from_graph(&h);
        for u in 0..n {
            let a = ppr(&tg, u, &tight()).unwrap();
            let b = ppr(&th, perm[u], &tight()).unwrap();
            for i in 0..n {
                prop_assert!((a.values[i] - b.values[perm[i]]).abs() <= 1e-12);
            }
        }
    }
}
