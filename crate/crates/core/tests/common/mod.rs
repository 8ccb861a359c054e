#![allow(dead_code)]
#![allow(clippy::needless_range_loop)]

use dnr_core::Graph;

/// Dense column-stochastic transpose built straight from the edge weights.
pub fn dense_transition(g: &Graph) -> Vec<Vec<f64>> {
    let n = g.n_nodes();
    let mut t = vec![vec![0.0; n]; n];
    for j in 0..n {
        let out: f64 = g.out_edges(j).map(|(_, w)| w).sum();
        for (i, w) in g.out_edges(j) {
            t[i][j] = w / out;
        }
    }
    t
}

/// Shrink-free power iteration on a dense matrix, dangling mass returned to
/// the seed, run until the L1 step is at most `eps`.
pub fn dense_ppr(t: &[Vec<f64>], seed: usize, damping: f64, eps: f64) -> Vec<f64> {
    let n = t.len();
    let mut r = vec![0.0; n];
    r[seed] = 1.0;
    for _ in 0..1_000_000 {
        let mut next: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| t[i][j] * r[j]).sum())
            .collect();
        let s: f64 = next.iter().sum();
        if s < 1.0 {
            next[seed] += 1.0 - s;
        }
        for v in &mut next {
            *v *= damping;
        }
        next[seed] += 1.0 - damping;
        let diff: f64 = next.iter().zip(&r).map(|(a, b)| (a - b).abs()).sum();
        r = next;
        if diff <= eps {
            break;
        }
    }
    r
}

pub fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
