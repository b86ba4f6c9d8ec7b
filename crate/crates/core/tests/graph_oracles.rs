//! Network metrics against brute-force oracles on seeded random digraphs.

#![allow(clippy::needless_range_loop)]

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use common::{close, name, path_adjacency, random_digraph, rng};
use mmflow_core::flownet::{
    average_clustering, average_degree_connectivity, degree_centrality, edge_betweenness, edge_connectivity,
    node_betweenness, node_degrees, node_strength, shortest_path_length, Direction, FlowGraph, PathLength,
};
use proptest::prelude::*;
use rand::Rng;

const GRAPHS: u64 = 200;
const TOL: f64 = 1e-9;

/// Floyd–Warshall hop counts, `None` when unreachable.
fn floyd_warshall(a: &[Vec<u64>]) -> Vec<Vec<Option<usize>>> {
    let n = a.len();
    let mut d: Vec<Vec<Option<usize>>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        Some(0)
                    } else if a[i][j] > 0 {
                        Some(1)
                    } else {
                        None
                    }
                })
                .collect()
        })
        .collect();
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(x), Some(y)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|c| x + y < c) {
                        d[i][j] = Some(x + y);
                    }
                }
            }
        }
    }
    d
}

fn matmul(x: &[Vec<u64>], y: &[Vec<u64>]) -> Vec<Vec<u64>> {
    let n = x.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| x[i][k] * y[k][j]).sum()).collect())
        .collect()
}

/// Shortest-path counts: walks of minimal length are exactly the shortest
/// paths, so `sigma[s][t] = (A^d(s,t))[s][t]`.
fn path_counts(a: &[Vec<u64>], dist: &[Vec<Option<usize>>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut powers = vec![(0..n)
        .map(|i| (0..n).map(|j| (i == j) as u64).collect())
        .collect::<Vec<Vec<u64>>>()];
    for _ in 1..n {
        let next = matmul(powers.last().unwrap(), a);
        powers.push(next);
    }
    (0..n)
        .map(|s| {
            (0..n)
                .map(|t| dist[s][t].map_or(0.0, |d| powers[d][s][t] as f64))
                .collect()
        })
        .collect()
}

fn oracle_node_betweenness(a: &[Vec<u64>]) -> Vec<f64> {
    let n = a.len();
    let d = floyd_warshall(a);
    let sigma = path_counts(a, &d);
    let mut b = vec![0.0; n];
    for v in 0..n {
        for s in 0..n {
            for t in 0..n {
                if s == t || s == v || t == v {
                    continue;
                }
                if let (Some(st), Some(sv), Some(vt)) = (d[s][t], d[s][v], d[v][t]) {
                    if sv + vt == st {
                        b[v] += sigma[s][v] * sigma[v][t] / sigma[s][t];
                    }
                }
            }
        }
    }
    if n > 2 {
        let scale = ((n - 1) * (n - 2)) as f64;
        b.iter_mut().for_each(|x| *x /= scale);
    }
    b
}

fn oracle_edge_betweenness(a: &[Vec<u64>], u: usize, v: usize) -> f64 {
    let n = a.len();
    if u == v {
        return 0.0;
    }
    let d = floyd_warshall(a);
    let sigma = path_counts(a, &d);
    let mut b = 0.0;
    for s in 0..n {
        for t in 0..n {
            if s == t {
                continue;
            }
            if let (Some(st), Some(su), Some(vt)) = (d[s][t], d[s][u], d[v][t]) {
                if su + 1 + vt == st {
                    b += sigma[s][u] * sigma[v][t] / sigma[s][t];
                }
            }
        }
    }
    b / (n * (n - 1)) as f64
}

fn neighbor_set(a: &[Vec<u64>], v: usize) -> BTreeSet<usize> {
    (0..a.len())
        .filter(|&u| u != v && (a[u][v] > 0 || a[v][u] > 0))
        .collect()
}

fn total_degree(a: &[Vec<u64>], v: usize) -> usize {
    let n = a.len();
    (0..n).filter(|&u| a[v][u] > 0).count() + (0..n).filter(|&u| a[u][v] > 0).count()
}

/// Fagiolo: `((A + A')^3)_ii / (2 (d_tot (d_tot - 1) - 2 d_recip))`.
fn oracle_clustering(a: &[Vec<u64>]) -> f64 {
    let n = a.len();
    if n == 0 {
        return 0.0;
    }
    let s: Vec<Vec<u64>> = (0..n).map(|i| (0..n).map(|j| a[i][j] + a[j][i]).collect()).collect();
    let cube = matmul(&matmul(&s, &s), &s);
    let mut total = 0.0;
    for i in 0..n {
        let dt = total_degree(a, i);
        let recip = (0..n).filter(|&j| a[i][j] > 0 && a[j][i] > 0).count();
        if dt < 2 {
            continue;
        }
        let denom = (dt * (dt - 1)) as f64 - 2.0 * recip as f64;
        if denom > 0.0 {
            total += cube[i][i] as f64 / (2.0 * denom);
        }
    }
    total / n as f64
}

fn oracle_degree_connectivity(a: &[Vec<u64>]) -> BTreeMap<usize, f64> {
    let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for v in 0..a.len() {
        let nb = neighbor_set(a, v);
        if nb.is_empty() {
            continue;
        }
        let mean = nb.iter().map(|&u| total_degree(a, u) as f64).sum::<f64>() / nb.len() as f64;
        groups.entry(total_degree(a, v)).or_default().push(mean);
    }
    groups
        .into_iter()
        .map(|(k, m)| (k, m.iter().sum::<f64>() / m.len() as f64))
        .collect()
}

fn reachable_without(a: &[Vec<u64>], removed: &[(usize, usize)], s: usize, t: usize) -> bool {
    let n = a.len();
    let mut seen = vec![false; n];
    let mut stack = vec![s];
    seen[s] = true;
    while let Some(u) = stack.pop() {
        if u == t {
            return true;
        }
        for v in 0..n {
            if a[u][v] > 0 && !seen[v] && !removed.contains(&(u, v)) {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    false
}

fn some_subset_disconnects(
    a: &[Vec<u64>],
    edges: &[(usize, usize)],
    k: usize,
    start: usize,
    chosen: &mut Vec<(usize, usize)>,
    s: usize,
    t: usize,
) -> bool {
    if chosen.len() == k {
        return !reachable_without(a, chosen, s, t);
    }
    for i in start..edges.len() {
        chosen.push(edges[i]);
        let hit = some_subset_disconnects(a, edges, k, i + 1, chosen, s, t);
        chosen.pop();
        if hit {
            return true;
        }
    }
    false
}

/// Smallest edge set whose removal breaks every s→t path, by trying every
/// subset in order of size.
fn oracle_edge_connectivity(a: &[Vec<u64>], s: usize, t: usize) -> usize {
    let n = a.len();
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|u| (0..n).map(move |v| (u, v)))
        .filter(|&(u, v)| a[u][v] > 0)
        .collect();
    (0..=edges.len())
        .find(|&k| some_subset_disconnects(a, &edges, k, 0, &mut Vec::new(), s, t))
        .expect("removing every edge disconnects")
}

pub fn betweenness_matches_path_counting_oracle() {
    let mut r = rng(1);
    for _ in 0..GRAPHS {
        let n = r.random_range(1..=8);
        let p = r.random_range(0.1..0.8);
        let (g, w) = random_digraph(&mut r, n, p);
        let a = path_adjacency(&w);
        let nb = node_betweenness(&g);
        let want = oracle_node_betweenness(&a);
        for v in 0..n {
            assert!(
                close(nb[&name(v)], want[v], TOL),
                "node {v}: {} vs {}",
                nb[&name(v)],
                want[v]
            );
        }
        let eb = edge_betweenness(&g);
        assert_eq!(eb.len(), g.num_edges());
        for ((o, d), got) in &eb {
            let (u, v) = (o[1..].parse().unwrap(), d[1..].parse().unwrap());
            let want = oracle_edge_betweenness(&a, u, v);
            assert!(close(*got, want, TOL), "edge {o}->{d}: {got} vs {want}");
        }
    }
}

pub fn degree_centrality_and_strengths_match_enumeration() {
    let mut r = rng(2);
    for _ in 0..GRAPHS {
        let n = r.random_range(2..=8);
        let p = r.random_range(0.1..0.8);
        let (g, w) = random_digraph(&mut r, n, p);
        let a = path_adjacency(&w);
        let all = degree_centrality(&g, Direction::All).unwrap();
        let inn = degree_centrality(&g, Direction::In).unwrap();
        let out = degree_centrality(&g, Direction::Out).unwrap();
        let strength = node_strength(&g);
        let degrees = node_degrees(&g);
        for v in 0..n {
            let key = name(v);
            let denom = (n - 1) as f64;
            assert_eq!(all[&key], neighbor_set(&a, v).len() as f64 / denom);
            assert_eq!(inn[&key], (0..n).filter(|&u| a[u][v] > 0).count() as f64 / denom);
            assert_eq!(out[&key], (0..n).filter(|&u| a[v][u] > 0).count() as f64 / denom);
            let s_in: u64 = (0..n).map(|u| w[u][v]).sum();
            let s_out: u64 = (0..n).map(|u| w[v][u]).sum();
            assert_eq!(strength[&key], (s_in, s_out));
            let d_in = (0..n).filter(|&u| w[u][v] > 0).count();
            let d_out = (0..n).filter(|&u| w[v][u] > 0).count();
            assert_eq!(degrees[&key], (d_in, d_out));
        }
    }
}

pub fn shortest_paths_match_floyd_warshall() {
    let mut r = rng(3);
    for _ in 0..GRAPHS {
        let n = r.random_range(1..=8);
        let p = r.random_range(0.05..0.6);
        let (g, w) = random_digraph(&mut r, n, p);
        let d = floyd_warshall(&path_adjacency(&w));
        for s in 0..n {
            for t in 0..n {
                let want = d[s][t].map_or(PathLength::Unreachable, PathLength::Hops);
                assert_eq!(shortest_path_length(&g, &name(s), &name(t)).unwrap(), want);
            }
        }
    }
}

pub fn clustering_and_degree_connectivity_match_definitions() {
    let mut r = rng(4);
    for _ in 0..GRAPHS {
        let n = r.random_range(1..=8);
        let p = r.random_range(0.1..0.9);
        let (g, w) = random_digraph(&mut r, n, p);
        let a = path_adjacency(&w);
        let c = average_clustering(&g);
        assert!(close(c, oracle_clustering(&a), TOL), "{c} vs {}", oracle_clustering(&a));
        assert!((0.0..=1.0).contains(&c));
        let got = average_degree_connectivity(&g);
        let want = oracle_degree_connectivity(&a);
        assert_eq!(got.keys().collect::<Vec<_>>(), want.keys().collect::<Vec<_>>());
        for (k, v) in &want {
            assert!(close(got[k], *v, TOL));
        }
    }
}

pub fn edge_connectivity_matches_subset_removal() {
    let mut r = rng(5);
    for _ in 0..GRAPHS {
        let n = r.random_range(2..=6);
        let p = r.random_range(0.1..0.55);
        let (g, w) = random_digraph(&mut r, n, p);
        let a = path_adjacency(&w);
        for s in 0..n {
            for t in 0..n {
                if s != t {
                    let got = edge_connectivity(&g, &name(s), &name(t)).unwrap();
                    assert_eq!(got, oracle_edge_connectivity(&a, s, t), "{s}->{t}");
                }
            }
        }
    }
}

pub fn hand_examples() {
    let g = FlowGraph::from_edges("l", common::bucket(), [("s", "t", 1u64)]);
    assert_eq!(edge_connectivity(&g, "s", "t").unwrap(), 1);
    assert_eq!(edge_connectivity(&g, "t", "s").unwrap(), 0);
    assert!(edge_connectivity(&g, "s", "s").is_err());
    assert_eq!(shortest_path_length(&g, "s", "s").unwrap(), PathLength::Hops(0));
    assert!(shortest_path_length(&g, "s", "nowhere").is_err());

    let both = [("a", "b"), ("b", "a"), ("b", "c"), ("c", "b"), ("a", "c"), ("c", "a")];
    let tri = FlowGraph::from_edges("l", common::bucket(), both.iter().map(|&(x, y)| (x, y, 1u64)));
    assert_eq!(average_clustering(&tri), 1.0);
    let tree = FlowGraph::from_edges("l", common::bucket(), [("r", "a", 1u64), ("r", "b", 1), ("a", "c", 1)]);
    assert_eq!(average_clustering(&tree), 0.0);

    // 4-cycle in both directions: every node has total degree 4
    let ring = [("a", "b"), ("b", "c"), ("c", "d"), ("d", "a")];
    let mut g = FlowGraph::empty("l", common::bucket());
    for (x, y) in ring {
        g.add_trips(x.into(), y.into(), 1);
        g.add_trips(y.into(), x.into(), 1);
    }
    g.add_node("iso");
    let adc = average_degree_connectivity(&g);
    assert_eq!(adc.len(), 1);
    assert_eq!(adc[&4], 4.0);
}

fn relabel(g: &FlowGraph, perm: &[usize]) -> FlowGraph {
    let map: HashMap<String, String> = (0..perm.len()).map(|i| (name(i), format!("p{}", perm[i]))).collect();
    let mut out = FlowGraph::empty("l", common::bucket());
    for n in &g.nodes {
        out.add_node(map[n].clone());
    }
    for ((o, d), &w) in &g.edges {
        out.add_trips(map[o].clone(), map[d].clone(), w);
    }
    out
}

#[cfg(test)]
mod tests {
    #[test]
    fn betweenness_matches_path_counting_oracle() {
        super::betweenness_matches_path_counting_oracle();
    }

    #[test]
    fn degree_centrality_and_strengths_match_enumeration() {
        super::degree_centrality_and_strengths_match_enumeration();
    }

    #[test]
    fn shortest_paths_match_floyd_warshall() {
        super::shortest_paths_match_floyd_warshall();
    }

    #[test]
    fn clustering_and_degree_connectivity_match_definitions() {
        super::clustering_and_degree_connectivity_match_definitions();
    }

    #[test]
    fn edge_connectivity_matches_subset_removal() {
        super::edge_connectivity_matches_subset_removal();
    }

    #[test]
    fn hand_examples() {
        super::hand_examples();
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn centralities_are_invariant_under_relabeling(seed in any::<u64>(), n in 3usize..=8, shift in 0usize..8) {
        let mut r = rng(seed);
        let (g, _) = random_digraph(&mut r, n, 0.4);
        // reverse-and-rotate permutation so sorted order changes
        let perm: Vec<usize> = (0..n).map(|i| (n - 1 - i + shift) % n).collect();
        let h = relabel(&g, &perm);
        let (bg, bh) = (node_betweenness(&g), node_betweenness(&h));
        let (dg, dh) = (degree_centrality(&g, Direction::All).unwrap(), degree_centrality(&h, Direction::All).unwrap());
        let (sg, sh) = (node_strength(&g), node_strength(&h));
        for i in 0..n {
            let (a, b) = (name(i), format!("p{}", perm[i]));
            prop_assert!(close(bg[&a], bh[&b], TOL));
            prop_assert_eq!(dg[&a], dh[&b]);
            prop_assert_eq!(sg[&a], sh[&b]);
        }
        let (eg, eh) = (edge_betweenness(&g), edge_betweenness(&h));
        for ((o, d), v) in &eg {
            let key = (format!("p{}", perm[o[1..].parse::<usize>().unwrap()]), format!("p{}", perm[d[1..].parse::<usize>().unwrap()]));
            prop_assert!(close(*v, eh[&key], TOL));
        }
        prop_assert!(close(average_clustering(&g), average_clustering(&h), TOL));
        let (ag, ah) = (average_degree_connectivity(&g), average_degree_connectivity(&h));
        prop_assert_eq!(ag.keys().collect::<Vec<_>>(), ah.keys().collect::<Vec<_>>());
        for (k, v) in &ag {
            prop_assert!(close(*v, ah[k], TOL));
        }
    }
}
