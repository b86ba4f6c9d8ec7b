use std::collections::{BTreeMap, VecDeque};

use super::{Digraph, FlowGraph};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    All,
    In,
    Out,
}

/// Distinct-neighbor degree centrality, self excluded, normalized by `n - 1`.
pub fn degree_centrality(g: &FlowGraph, direction: Direction) -> Result<BTreeMap<String, f64>> {
    let d = g.digraph();
    let c = degree_centrality_idx(&d, direction)?;
    Ok(d.names.iter().cloned().zip(c).collect())
}

pub(crate) fn degree_centrality_idx(d: &Digraph, direction: Direction) -> Result<Vec<f64>> {
    let n = d.len();
    if n < 2 {
        return Err(Error::DegenerateGraph(format!(
            "degree centrality needs at least 2 nodes, graph has {n}"
        )));
    }
    let denom = (n - 1) as f64;
    Ok((0..n)
        .map(|v| {
            let k = match direction {
                Direction::In => d.in_adj[v].len(),
                Direction::Out => d.out_adj[v].len(),
                Direction::All => union_len(&d.in_adj[v], &d.out_adj[v]),
            };
            k as f64 / denom
        })
        .collect())
}

fn union_len(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() || j < b.len() {
        n += 1;
        match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) if x == y => {
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x < y => i += 1,
            (Some(_), None) => i += 1,
            _ => j += 1,
        }
    }
    n
}

pub(crate) fn neighbors(d: &Digraph, v: usize) -> Vec<usize> {
    let mut n: Vec<usize> = d.in_adj[v].iter().chain(&d.out_adj[v]).copied().collect();
    n.sort_unstable();
    n.dedup();
    n
}

/// Weighted in/out degree `(strength_in, strength_out)`; self-loops count
/// towards both.
pub fn node_strength(g: &FlowGraph) -> BTreeMap<String, (u64, u64)> {
    let mut out: BTreeMap<String, (u64, u64)> = g.nodes.iter().map(|n| (n.clone(), (0, 0))).collect();
    for ((o, d), &w) in &g.edges {
        out.get_mut(o).expect("edge endpoint is a node").1 += w;
        out.get_mut(d).expect("edge endpoint is a node").0 += w;
    }
    out
}

/// Unweighted `(in_degree, out_degree)` edge counts, self-loops included.
pub fn node_degrees(g: &FlowGraph) -> BTreeMap<String, (usize, usize)> {
    let mut out: BTreeMap<String, (usize, usize)> = g.nodes.iter().map(|n| (n.clone(), (0, 0))).collect();
    for (o, d) in g.edges.keys() {
        out.get_mut(o).expect("edge endpoint is a node").1 += 1;
        out.get_mut(d).expect("edge endpoint is a node").0 += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetweennessTarget {
    Nodes,
    Edges,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Betweenness {
    Nodes(BTreeMap<String, f64>),
    Edges(BTreeMap<(String, String), f64>),
}

/// Normalized node and edge betweenness on unweighted shortest paths.
pub(crate) struct BrandesResult {
    pub node: Vec<f64>,
    /// Indexed as `edge[u][k]` for the k-th entry of `out_adj[u]`.
    pub edge: Vec<Vec<f64>>,
}

pub(crate) fn brandes(d: &Digraph) -> BrandesResult {
    let n = d.len();
    let mut node = vec![0.0; n];
    let mut edge: Vec<Vec<f64>> = d.out_adj.iter().map(|a| vec![0.0; a.len()]).collect();
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![-1i64; n];
    let mut delta = vec![0.0f64; n];
    let mut preds: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::with_capacity(n);
    for s in 0..n {
        for v in 0..n {
            sigma[v] = 0.0;
            dist[v] = -1;
            delta[v] = 0.0;
            preds[v].clear();
        }
        order.clear();
        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for (k, &w) in d.out_adj[v].iter().enumerate() {
                if dist[w] < 0 {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push((v, k));
                }
            }
        }
        for &w in order.iter().rev() {
            for &(v, k) in &preds[w] {
                let c = sigma[v] / sigma[w] * (1.0 + delta[w]);
                edge[v][k] += c;
                delta[v] += c;
            }
            if w != s {
                node[w] += delta[w];
            }
        }
    }
    if n > 2 {
        let scale = 1.0 / ((n - 1) * (n - 2)) as f64;
        node.iter_mut().for_each(|x| *x *= scale);
    }
    if n > 1 {
        let scale = 1.0 / (n * (n - 1)) as f64;
        edge.iter_mut().flatten().for_each(|x| *x *= scale);
    }
    BrandesResult { node, edge }
}

pub fn node_betweenness(g: &FlowGraph) -> BTreeMap<String, f64> {
    let d = g.digraph();
    let r = brandes(&d);
    d.names.iter().cloned().zip(r.node).collect()
}

/// Edge betweenness keyed by every edge of the graph (self-loops map to 0).
pub fn edge_betweenness(g: &FlowGraph) -> BTreeMap<(String, String), f64> {
    let d = g.digraph();
    let r = brandes(&d);
    let mut out: BTreeMap<(String, String), f64> = g.edges.keys().map(|k| (k.clone(), 0.0)).collect();
    for (u, adj) in d.out_adj.iter().enumerate() {
        for (k, &v) in adj.iter().enumerate() {
            out.insert((d.names[u].clone(), d.names[v].clone()), r.edge[u][k]);
        }
    }
    out
}

pub fn betweenness(g: &FlowGraph, target: BetweennessTarget) -> Betweenness {
    match target {
        BetweennessTarget::Nodes => Betweenness::Nodes(node_betweenness(g)),
        BetweennessTarget::Edges => Betweenness::Edges(edge_betweenness(g)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathLength {
    Hops(usize),
    Unreachable,
}

impl PathLength {
    /// Feature encoding: hop count, or `n` with the unreachable flag set.
    pub fn encode(self, n: usize) -> (f64, bool) {
        match self {
            PathLength::Hops(h) => (h as f64, false),
            PathLength::Unreachable => (n as f64, true),
        }
    }
}

pub(crate) fn bfs_hops(d: &Digraph, s: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; d.len()];
    dist[s] = Some(0);
    let mut q = VecDeque::from([s]);
    while let Some(v) = q.pop_front() {
        let dv = dist[v].expect("queued nodes have a distance");
        for &w in &d.out_adj[v] {
            if dist[w].is_none() {
                dist[w] = Some(dv + 1);
                q.push_back(w);
            }
        }
    }
    dist
}

pub fn shortest_path_length(g: &FlowGraph, s: &str, t: &str) -> Result<PathLength> {
    let d = g.digraph();
    let (si, ti) = (d.require(s)?, d.require(t)?);
    Ok(match bfs_hops(&d, si)[ti] {
        Some(h) => PathLength::Hops(h),
        None => PathLength::Unreachable,
    })
}

/// Unit-capacity max flow (Edmonds–Karp) from `s` to `t`, self-loops ignored.
pub(crate) fn max_flow_unit(d: &Digraph, s: usize, t: usize) -> usize {
    struct Arc {
        to: usize,
        cap: i32,
        rev: usize,
    }
    let n = d.len();
    let mut adj: Vec<Vec<Arc>> = (0..n).map(|_| Vec::new()).collect();
    for u in 0..n {
        for &v in &d.out_adj[u] {
            let ru = adj[v].len();
            let rv = adj[u].len();
            adj[u].push(Arc { to: v, cap: 1, rev: ru });
            adj[v].push(Arc { to: u, cap: 0, rev: rv });
        }
    }
    let mut flow = 0;
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
    loop {
        prev.iter_mut().for_each(|p| *p = None);
        let mut q = VecDeque::from([s]);
        let mut seen = vec![false; n];
        seen[s] = true;
        while let Some(u) = q.pop_front() {
            if u == t {
                break;
            }
            for (k, a) in adj[u].iter().enumerate() {
                if a.cap > 0 && !seen[a.to] {
                    seen[a.to] = true;
                    prev[a.to] = Some((u, k));
                    q.push_back(a.to);
                }
            }
        }
        if !seen[t] {
            return flow;
        }
        let mut v = t;
        while let Some((u, k)) = prev[v] {
            adj[u][k].cap -= 1;
            let rev = adj[u][k].rev;
            adj[v][rev].cap += 1;
            v = u;
        }
        flow += 1;
    }
}

/// Local edge connectivity: minimum number of edges whose removal breaks
/// every directed `s → t` path.
pub fn edge_connectivity(g: &FlowGraph, s: &str, t: &str) -> Result<usize> {
    let d = g.digraph();
    let (si, ti) = (d.require(s)?, d.require(t)?);
    if si == ti {
        return Err(Error::Domain(
            "edge connectivity requires distinct source and target".into(),
        ));
    }
    Ok(max_flow_unit(&d, si, ti))
}

pub(crate) fn total_degree(d: &Digraph, v: usize) -> usize {
    d.in_adj[v].len() + d.out_adj[v].len()
}

/// Mean neighbor total degree for each observed total degree `k`.
pub fn average_degree_connectivity(g: &FlowGraph) -> BTreeMap<usize, f64> {
    average_degree_connectivity_idx(&g.digraph())
}

pub(crate) fn average_degree_connectivity_idx(d: &Digraph) -> BTreeMap<usize, f64> {
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for v in 0..d.len() {
        let nb = neighbors(d, v);
        if nb.is_empty() {
            continue;
        }
        let mean = nb.iter().map(|&u| total_degree(d, u) as f64).sum::<f64>() / nb.len() as f64;
        let e = acc.entry(total_degree(d, v)).or_insert((0.0, 0));
        e.0 += mean;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect()
}

/// Directed clustering (Fagiolo) averaged over all nodes.
pub fn average_clustering(g: &FlowGraph) -> f64 {
    average_clustering_idx(&g.digraph())
}

pub(crate) fn clustering_idx(d: &Digraph) -> Vec<f64> {
    let a = |u: usize, v: usize| -> f64 { d.has_edge(u, v) as u8 as f64 };
    (0..d.len())
        .map(|i| {
            let dtot = total_degree(d, i);
            if dtot < 2 {
                return 0.0;
            }
            let recip = d.out_adj[i].iter().filter(|&&j| d.has_edge(j, i)).count();
            let denom = (dtot * (dtot - 1)) as f64 - 2.0 * recip as f64;
            if denom <= 0.0 {
                return 0.0;
            }
            let nb = neighbors(d, i);
            let mut t = 0.0;
            for &j in &nb {
                let wij = a(i, j) + a(j, i);
                for &k in &nb {
                    if k == j {
                        continue;
                    }
                    t += wij * (a(j, k) + a(k, j)) * (a(k, i) + a(i, k));
                }
            }
            (t / 2.0) / denom
        })
        .collect()
}

pub(crate) fn average_clustering_idx(d: &Digraph) -> f64 {
    if d.is_empty() {
        return 0.0;
    }
    clustering_idx(d).iter().sum::<f64>() / d.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::{TimeBucket, TimeScale};

    fn graph(edges: &[(&str, &str, u64)]) -> FlowGraph {
        FlowGraph::from_edges(
            "l",
            TimeBucket {
                scale: TimeScale::Daily,
                start: 0,
            },
            edges.iter().map(|&(a, b, w)| (a, b, w)),
        )
    }

    #[test]
    fn star_degree_centrality() {
        let g = graph(&[("c", "l1", 1), ("c", "l2", 1), ("c", "l3", 1), ("c", "l4", 1)]);
        let out = degree_centrality(&g, Direction::Out).unwrap();
        let inn = degree_centrality(&g, Direction::In).unwrap();
        assert_eq!(out["c"], 1.0);
        for l in ["l1", "l2", "l3", "l4"] {
            assert_eq!(inn[l], 0.25);
        }
    }

    #[test]
    fn isolated_node_has_zero_centrality() {
        let mut g = graph(&[("a", "b", 1)]);
        g.add_node("z");
        for dir in [Direction::All, Direction::In, Direction::Out] {
            assert_eq!(degree_centrality(&g, dir).unwrap()["z"], 0.0);
        }
        let single = graph(&[("a", "a", 1)]);
        assert!(matches!(
            degree_centrality(&single, Direction::All),
            Err(Error::DegenerateGraph(_))
        ));
    }

    #[test]
    fn strengths_with_self_loop() {
        let g = graph(&[("A", "B", 7), ("C", "C", 3)]);
        let s = node_strength(&g);
        assert_eq!(s["A"], (0, 7));
        assert_eq!(s["B"], (7, 0));
        assert_eq!(s["C"], (3, 3));
    }

    #[test]
    fn complete_digraph_has_zero_node_betweenness() {
        let names = ["a", "b", "c", "d"];
        let mut e = Vec::new();
        for x in names {
            for y in names {
                if x != y {
                    e.push((x, y, 1));
                }
            }
        }
        let g = graph(&e);
        assert!(node_betweenness(&g).values().all(|&v| v == 0.0));
    }

    #[test]
    fn path_betweenness_by_enumeration() {
        // a→b→c: pairs (a,b),(b,c),(a,c); only a→c passes through b.
        // node: 1 / ((n-1)(n-2)) = 1/2; edges: each lies on 2 of the
        // shortest paths, normalized by n(n-1) = 6.
        let g = graph(&[("a", "b", 1), ("b", "c", 1)]);
        let nb = node_betweenness(&g);
        assert_eq!(nb["b"], 0.5);
        assert_eq!(nb["a"], 0.0);
        let eb = edge_betweenness(&g);
        assert!((eb[&("a".into(), "b".into())] - 2.0 / 6.0).abs() < 1e-15);
        assert!((eb[&("b".into(), "c".into())] - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn shortest_paths() {
        let g = graph(&[("s", "t", 1), ("t", "u", 1)]);
        assert_eq!(shortest_path_length(&g, "s", "s").unwrap(), PathLength::Hops(0));
        assert_eq!(shortest_path_length(&g, "s", "t").unwrap(), PathLength::Hops(1));
        assert_eq!(shortest_path_length(&g, "s", "u").unwrap(), PathLength::Hops(2));
        assert_eq!(shortest_path_length(&g, "u", "s").unwrap(), PathLength::Unreachable);
        assert_eq!(PathLength::Unreachable.encode(3), (3.0, true));
        assert!(matches!(
            shortest_path_length(&g, "s", "nope"),
            Err(Error::UnknownNode(_))
        ));
    }

    #[test]
    fn connectivity_cases() {
        let g = graph(&[("s", "t", 5)]);
        assert_eq!(edge_connectivity(&g, "s", "t").unwrap(), 1);
        assert_eq!(edge_connectivity(&g, "t", "s").unwrap(), 0);
        assert!(matches!(edge_connectivity(&g, "s", "s"), Err(Error::Domain(_))));
        let two = graph(&[
            ("s", "a", 1),
            ("a", "t", 1),
            ("s", "b", 1),
            ("b", "t", 1),
            ("s", "t", 1),
            ("s", "s", 9),
        ]);
        assert_eq!(edge_connectivity(&two, "s", "t").unwrap(), 3);
    }

    #[test]
    fn degree_connectivity_cases() {
        // directed 3-cycle in both directions: every node has total degree 4
        let g = graph(&[
            ("a", "b", 1),
            ("b", "a", 1),
            ("b", "c", 1),
            ("c", "b", 1),
            ("c", "a", 1),
            ("a", "c", 1),
        ]);
        let m = average_degree_connectivity(&g);
        assert_eq!(m.len(), 1);
        assert_eq!(m[&4], 4.0);
        let mut iso = graph(&[("a", "b", 1)]);
        iso.add_node("z");
        let m = average_degree_connectivity(&iso);
        assert_eq!(m.get(&0), None);
        assert_eq!(m[&1], 1.0);
    }

    #[test]
    fn clustering_cases() {
        let full = graph(&[
            ("a", "b", 1),
            ("b", "a", 1),
            ("b", "c", 1),
            ("c", "b", 1),
            ("c", "a", 1),
            ("a", "c", 1),
        ]);
        assert!((average_clustering(&full) - 1.0).abs() < 1e-15);
        let tree = graph(&[("r", "a", 1), ("r", "b", 1), ("a", "c", 1), ("a", "d", 1)]);
        assert_eq!(average_clustering(&tree), 0.0);
        // self-loops do not create triangles
        let looped = graph(&[("a", "a", 1), ("a", "b", 1), ("b", "b", 1)]);
        assert_eq!(average_clustering(&looped), 0.0);
    }
}
