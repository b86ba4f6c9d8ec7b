#![allow(dead_code, clippy::needless_range_loop)]

use mmflow_core::flownet::FlowGraph;
use mmflow_core::time::{TimeBucket, TimeScale};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn bucket() -> TimeBucket {
    TimeBucket {
        scale: TimeScale::Daily,
        start: 0,
    }
}

/// Random weighted digraph on `n` nodes named `z0..`, every node present
/// even when isolated. Returns the graph and its 0/1 adjacency (self-loops
/// on the diagonal).
pub fn random_digraph(r: &mut ChaCha8Rng, n: usize, p: f64) -> (FlowGraph, Vec<Vec<u64>>) {
    let mut g = FlowGraph::empty("l", bucket());
    let mut w = vec![vec![0u64; n]; n];
    for i in 0..n {
        g.add_node(format!("z{i}"));
        for j in 0..n {
            let pp = if i == j { 0.3 } else { p };
            if r.random_bool(pp) {
                w[i][j] = r.random_range(1..=20);
                g.add_trips(format!("z{i}"), format!("z{j}"), w[i][j]);
            }
        }
    }
    (g, w)
}

pub fn name(i: usize) -> String {
    format!("z{i}")
}

/// Adjacency without self-loops, as 0/1 integers.
pub fn path_adjacency(w: &[Vec<u64>]) -> Vec<Vec<u64>> {
    let n = w.len();
    (0..n)
        .map(|i| (0..n).map(|j| (i != j && w[i][j] > 0) as u64).collect())
        .collect()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}
