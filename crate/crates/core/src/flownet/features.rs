use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::metrics::{
    average_clustering_idx, average_degree_connectivity_idx, bfs_hops, brandes, degree_centrality_idx, max_flow_unit,
    Direction,
};
use super::{Digraph, FlowGraph};

/// Above this node count edge connectivity falls back to
/// `min(out_degree(s), in_degree(t))`.
pub const EXACT_CONNECTIVITY_MAX_NODES: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkOptions {
    pub exact_connectivity_max_nodes: usize,
}

impl Default for NetworkOptions {
    fn default() -> Self {
        NetworkOptions {
            exact_connectivity_max_nodes: EXACT_CONNECTIVITY_MAX_NODES,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeFeatures {
    pub degree_centrality: f64,
    pub in_degree_centrality: f64,
    pub out_degree_centrality: f64,
    pub betweenness: f64,
    pub in_degree: f64,
    pub out_degree: f64,
    pub strength_in: f64,
    pub strength_out: f64,
}

impl NodeFeatures {
    const NAMES: [&'static str; 8] = [
        "degree_centrality",
        "in_degree_centrality",
        "out_degree_centrality",
        "betweenness",
        "in_degree",
        "out_degree",
        "strength_in",
        "strength_out",
    ];

    fn values(&self) -> [f64; 8] {
        [
            self.degree_centrality,
            self.in_degree_centrality,
            self.out_degree_centrality,
            self.betweenness,
            self.in_degree,
            self.out_degree,
            self.strength_in,
            self.strength_out,
        ]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EdgeFeatures {
    pub edge_betweenness: f64,
    pub edge_connectivity: f64,
    pub connectivity_exact: bool,
    pub shortest_path_length: f64,
    pub unreachable: bool,
    /// Pair present in the lagged graph.
    pub present: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphFeatures {
    pub num_nodes: f64,
    pub num_edges: f64,
    /// Mean over `k` of the average-degree-connectivity map.
    pub average_degree_connectivity: f64,
    pub average_clustering: f64,
}

/// Network features for one requested edge, computed on the lagged graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFeatureRow {
    pub origin: String,
    pub dest: String,
    pub origin_features: NodeFeatures,
    pub dest_features: NodeFeatures,
    pub edge: EdgeFeatures,
    pub graph: GraphFeatures,
    pub previous_count: u64,
}

impl NetworkFeatureRow {
    /// Values in [`network_feature_names`] order.
    pub fn values(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(26);
        v.extend(self.origin_features.values());
        v.extend(self.dest_features.values());
        v.extend([
            self.edge.edge_betweenness,
            self.edge.edge_connectivity,
            self.edge.connectivity_exact as u8 as f64,
            self.edge.shortest_path_length,
            self.edge.unreachable as u8 as f64,
            self.edge.present as u8 as f64,
            self.graph.num_nodes,
            self.graph.num_edges,
            self.graph.average_degree_connectivity,
            self.graph.average_clustering,
        ]);
        v
    }
}

/// Column names of the network feature block.
pub fn network_feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(26);
    for prefix in ["orig_", "dest_"] {
        names.extend(NodeFeatures::NAMES.iter().map(|n| format!("{prefix}{n}")));
    }
    names.extend(
        [
            "edge_betweenness",
            "edge_connectivity",
            "connectivity_exact",
            "shortest_path_length",
            "path_unreachable",
            "edge_present_prev",
            "graph_num_nodes",
            "graph_num_edges",
            "graph_avg_degree_connectivity",
            "graph_avg_clustering",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    names
}

struct NodeTable {
    features: Vec<NodeFeatures>,
}

fn node_table(d: &Digraph, node_bc: &[f64]) -> NodeTable {
    let n = d.len();
    let (all, inn, out) = if n >= 2 {
        (
            degree_centrality_idx(d, Direction::All).expect("n >= 2"),
            degree_centrality_idx(d, Direction::In).expect("n >= 2"),
            degree_centrality_idx(d, Direction::Out).expect("n >= 2"),
        )
    } else {
        (vec![0.0; n], vec![0.0; n], vec![0.0; n])
    };
    let features = (0..n)
        .map(|v| NodeFeatures {
            degree_centrality: all[v],
            in_degree_centrality: inn[v],
            out_degree_centrality: out[v],
            betweenness: node_bc[v],
            in_degree: d.in_degree[v] as f64,
            out_degree: d.out_degree[v] as f64,
            strength_in: d.in_strength[v] as f64,
            strength_out: d.out_strength[v] as f64,
        })
        .collect();
    NodeTable { features }
}

/// Network features of each requested `(origin, dest)` pair on `g_prev`, the
/// graph of an earlier bucket. Absent nodes get zero node features; absent
/// edges get zero betweenness and connectivity.
pub fn extract_network_features(
    g_prev: &FlowGraph,
    edges_of_interest: &[(String, String)],
    opts: &NetworkOptions,
) -> Vec<NetworkFeatureRow> {
    let d = g_prev.digraph();
    let n = d.len();
    let bc = brandes(&d);
    let nodes = node_table(&d, &bc.node);
    let adc = average_degree_connectivity_idx(&d);
    let graph = GraphFeatures {
        num_nodes: n as f64,
        num_edges: g_prev.num_edges() as f64,
        average_degree_connectivity: if adc.is_empty() {
            0.0
        } else {
            adc.values().sum::<f64>() / adc.len() as f64
        },
        average_clustering: average_clustering_idx(&d),
    };
    let exact = n <= opts.exact_connectivity_max_nodes;
    let mut hops_cache: HashMap<usize, Vec<Option<usize>>> = HashMap::new();

    edges_of_interest
        .iter()
        .map(|(o, t)| {
            let oi = d.index_of(o);
            let ti = d.index_of(t);
            let node_f = |i: Option<usize>| i.map(|i| nodes.features[i]).unwrap_or_default();
            let mut edge = EdgeFeatures {
                connectivity_exact: exact,
                ..Default::default()
            };
            match (oi, ti) {
                (Some(u), Some(v)) => {
                    let hops = hops_cache.entry(u).or_insert_with(|| bfs_hops(&d, u));
                    let (len, unreachable) = match hops[v] {
                        Some(h) => (h as f64, false),
                        None => (n as f64, true),
                    };
                    edge.shortest_path_length = len;
                    edge.unreachable = unreachable;
                    if u != v {
                        if let Ok(k) = d.out_adj[u].binary_search(&v) {
                            edge.edge_betweenness = bc.edge[u][k];
                        }
                        edge.edge_connectivity = if exact {
                            max_flow_unit(&d, u, v) as f64
                        } else {
                            d.out_adj[u].len().min(d.in_adj[v].len()) as f64
                        };
                    }
                }
                _ => {
                    edge.shortest_path_length = n as f64;
                    edge.unreachable = true;
                }
            }
            let previous_count = g_prev.weight(o, t);
            edge.present = previous_count > 0;
            NetworkFeatureRow {
                origin: o.clone(),
                dest: t.clone(),
                origin_features: node_f(oi),
                dest_features: node_f(ti),
                edge,
                graph,
                previous_count,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flownet::{
        average_clustering, average_degree_connectivity, degree_centrality, edge_betweenness, edge_connectivity,
        node_betweenness, node_strength, shortest_path_length, PathLength,
    };
    use crate::time::{TimeBucket, TimeScale};

    fn hand_graph() -> FlowGraph {
        FlowGraph::from_edges(
            "l",
            TimeBucket {
                scale: TimeScale::Daily,
                start: 0,
            },
            [
                ("a", "b", 5u64),
                ("b", "c", 2),
                ("c", "a", 1),
                ("c", "d", 4),
                ("d", "d", 3),
                ("a", "c", 1),
            ],
        )
    }

    #[test]
    fn previous_count_and_absent_edges() {
        let g = hand_graph();
        let rows = extract_network_features(
            &g,
            &[
                ("a".into(), "b".into()),
                ("b".into(), "a".into()),
                ("x".into(), "a".into()),
            ],
            &NetworkOptions::default(),
        );
        assert_eq!(rows[0].previous_count, 5);
        assert!(rows[0].edge.present);
        assert_eq!(rows[1].previous_count, 0);
        assert_eq!(rows[1].edge.edge_betweenness, 0.0);
        assert!(!rows[1].edge.present);
        assert_eq!(rows[2].origin_features, NodeFeatures::default());
        assert!(rows[2].edge.unreachable);
        assert_eq!(rows[2].edge.shortest_path_length, 4.0);
    }

    #[test]
    fn row_composes_per_metric_results() {
        let g = hand_graph();
        let pairs: Vec<(String, String)> = g
            .nodes
            .iter()
            .flat_map(|a| g.nodes.iter().map(move |b| (a.clone(), b.clone())))
            .collect();
        let rows = extract_network_features(&g, &pairs, &NetworkOptions::default());
        let dc = degree_centrality(&g, Direction::All).unwrap();
        let dci = degree_centrality(&g, Direction::In).unwrap();
        let dco = degree_centrality(&g, Direction::Out).unwrap();
        let nb = node_betweenness(&g);
        let eb = edge_betweenness(&g);
        let st = node_strength(&g);
        let adc = average_degree_connectivity(&g);
        let adc_mean = adc.values().sum::<f64>() / adc.len() as f64;
        for r in &rows {
            let (o, t) = (&r.origin, &r.dest);
            assert_eq!(r.origin_features.degree_centrality, dc[o]);
            assert_eq!(r.dest_features.in_degree_centrality, dci[t]);
            assert_eq!(r.origin_features.out_degree_centrality, dco[o]);
            assert_eq!(r.origin_features.betweenness, nb[o]);
            assert_eq!(r.dest_features.strength_in, st[t].0 as f64);
            assert_eq!(r.origin_features.strength_out, st[o].1 as f64);
            let key = (o.clone(), t.clone());
            assert_eq!(r.edge.edge_betweenness, eb.get(&key).copied().unwrap_or(0.0));
            if o != t {
                assert_eq!(r.edge.edge_connectivity, edge_connectivity(&g, o, t).unwrap() as f64);
            }
            let sp = shortest_path_length(&g, o, t).unwrap();
            assert_eq!((r.edge.shortest_path_length, r.edge.unreachable), sp.encode(4));
            assert_eq!(r.graph.average_clustering, average_clustering(&g));
            assert_eq!(r.graph.average_degree_connectivity, adc_mean);
            assert_eq!(r.graph.num_nodes, 4.0);
            assert_eq!(r.graph.num_edges, 6.0);
            assert_eq!(r.values().len(), network_feature_names().len());
        }
        // d cannot reach anything but itself
        let d_to_a = rows.iter().find(|r| r.origin == "d" && r.dest == "a").unwrap();
        assert!(d_to_a.edge.unreachable);
        assert_eq!(shortest_path_length(&g, "d", "a").unwrap(), PathLength::Unreachable);
    }

    #[test]
    fn large_graph_uses_degree_bound() {
        let g = hand_graph();
        let opts = NetworkOptions {
            exact_connectivity_max_nodes: 2,
        };
        let rows = extract_network_features(&g, &[("a".into(), "c".into())], &opts);
        assert!(!rows[0].edge.connectivity_exact);
        // out(a) = {b, c}, in(c) = {a, b}
        assert_eq!(rows[0].edge.edge_connectivity, 2.0);
    }
}
