//! Seeded synthetic graphs used by tests, benchmarks and the acceptance suite.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, LabelMatrix};
use crate::rng::{self, Stream};

fn check_prob(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param(alloc::format!(
            "probability {p} outside [0, 1]"
        )));
    }
    Ok(())
}

/// Undirected planted partition: `blocks` groups of `block_size` nodes,
/// edge probability `p_in` inside a group and `p_out` across. Node `i`
/// belongs to class `i / block_size`.
pub fn planted_partition(
    blocks: usize,
    block_size: usize,
    p_in: f64,
    p_out: f64,
    seed: u64,
) -> Result<(Graph, LabelMatrix)> {
    check_prob(p_in)?;
    check_prob(p_out)?;
    let n = blocks * block_size;
    if n == 0 {
        return Err(Error::param("planted partition needs at least one node"));
    }
    let mut rng = rng::stream(seed, Stream::Generator, 0);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if i / block_size == j / block_size {
                p_in
            } else {
                p_out
            };
            if rng.random::<f64>() < p {
                edges.push((i, j, 1.0));
            }
        }
    }
    let graph = Graph::from_indexed_edges(n, false, edges)?;
    let labels = LabelMatrix::from_assignments(n, blocks, (0..n).map(|i| (i, i / block_size)))?;
    Ok((graph, labels))
}

/// Erdős–Rényi graph over `n` nodes. Directed graphs draw every ordered pair
/// independently; self-loops are never drawn.
pub fn erdos_renyi(n: usize, p: f64, directed: bool, seed: u64) -> Result<Graph> {
    check_prob(p)?;
    if n == 0 {
        return Err(Error::param("graph needs at least one node"));
    }
    let mut rng = rng::stream(seed, Stream::Generator, 1);
    let mut edges = Vec::new();
    for i in 0..n {
        let start = if directed { 0 } else { i + 1 };
        for j in start..n {
            if i != j && rng.random::<f64>() < p {
                edges.push((i, j, 1.0));
            }
        }
    }
    Graph::from_indexed_edges(n, directed, edges)
}
