//! Time-dependent directed flow graphs and their network metrics.
//!
//! A [`FlowGraph`] holds the trips of one time bucket at one spatial level:
//! nodes are zones, a directed edge `(i, j)` exists when at least one trip
//! went from `i` to `j`, and its weight is the trip count. Self-loops are
//! allowed and count as edges.

mod features;
mod metrics;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::{TimeBucket, TimeScale};

pub use features::{
    extract_network_features, network_feature_names, EdgeFeatures, GraphFeatures, NetworkFeatureRow, NetworkOptions,
    NodeFeatures, EXACT_CONNECTIVITY_MAX_NODES,
};
pub use metrics::{
    average_clustering, average_degree_connectivity, betweenness, degree_centrality, edge_betweenness,
    edge_connectivity, node_betweenness, node_degrees, node_strength, shortest_path_length, Betweenness,
    BetweennessTarget, Direction, PathLength,
};

/// Flow graph for one bucket and spatial level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowGraph {
    pub level: String,
    pub bucket: TimeBucket,
    pub nodes: BTreeSet<String>,
    pub edges: BTreeMap<(String, String), u64>,
}

impl FlowGraph {
    pub fn empty(level: impl Into<String>, bucket: TimeBucket) -> Self {
        FlowGraph {
            level: level.into(),
            bucket,
            nodes: BTreeSet::new(),
            edges: BTreeMap::new(),
        }
    }

    /// Build from weighted edges; zero weights are dropped and parallel
    /// entries are summed.
    pub fn from_edges<I, S>(level: impl Into<String>, bucket: TimeBucket, edges: I) -> Self
    where
        I: IntoIterator<Item = (S, S, u64)>,
        S: Into<String>,
    {
        let mut g = FlowGraph::empty(level, bucket);
        for (o, d, w) in edges {
            g.add_trips(o.into(), d.into(), w);
        }
        g
    }

    pub fn add_trips(&mut self, origin: String, dest: String, count: u64) {
        if count == 0 {
            return;
        }
        self.nodes.insert(origin.clone());
        self.nodes.insert(dest.clone());
        *self.edges.entry((origin, dest)).or_insert(0) += count;
    }

    /// Adds an isolated node.
    pub fn add_node(&mut self, id: impl Into<String>) {
        self.nodes.insert(id.into());
    }

    pub fn weight(&self, origin: &str, dest: &str) -> u64 {
        self.edges
            .get(&(origin.to_string(), dest.to_string()))
            .copied()
            .unwrap_or(0)
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn total_weight(&self) -> u64 {
        self.edges.values().sum()
    }

    /// Index-based view used by the metric kernels.
    pub fn digraph(&self) -> Digraph {
        Digraph::from_flow(self)
    }
}

/// Dense-indexed adjacency form of a [`FlowGraph`]. Node indices follow the
/// sorted zone-id order. Path adjacency excludes self-loops.
#[derive(Debug, Clone)]
pub struct Digraph {
    pub names: Vec<String>,
    pub out_adj: Vec<Vec<usize>>,
    pub in_adj: Vec<Vec<usize>>,
    pub self_loop: Vec<u64>,
    pub out_strength: Vec<u64>,
    pub in_strength: Vec<u64>,
    pub out_degree: Vec<usize>,
    pub in_degree: Vec<usize>,
    index: HashMap<String, usize>,
}

impl Digraph {
    pub fn from_flow(g: &FlowGraph) -> Self {
        let names: Vec<String> = g.nodes.iter().cloned().collect();
        let index: HashMap<String, usize> = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let n = names.len();
        let mut d = Digraph {
            names,
            out_adj: vec![Vec::new(); n],
            in_adj: vec![Vec::new(); n],
            self_loop: vec![0; n],
            out_strength: vec![0; n],
            in_strength: vec![0; n],
            out_degree: vec![0; n],
            in_degree: vec![0; n],
            index,
        };
        for ((o, t), &w) in &g.edges {
            let (u, v) = (d.index[o], d.index[t]);
            d.out_strength[u] += w;
            d.in_strength[v] += w;
            d.out_degree[u] += 1;
            d.in_degree[v] += 1;
            if u == v {
                d.self_loop[u] = w;
            } else {
                d.out_adj[u].push(v);
                d.in_adj[v].push(u);
            }
        }
        for a in d.out_adj.iter_mut().chain(d.in_adj.iter_mut()) {
            a.sort_unstable();
        }
        d
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    fn require(&self, id: &str) -> Result<usize> {
        self.index_of(id).ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.out_adj[u].binary_search(&v).is_ok()
    }
}

/// A trip reduced to its bucket-relevant fields, with endpoint zones given
/// as indices into [`AssignedTrips::zone_ids`] (`None` = unassigned).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignedTrip {
    pub start_ts: i64,
    pub origin: Option<u32>,
    pub dest: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignedTrips {
    pub level: String,
    pub zone_ids: Vec<String>,
    pub trips: Vec<AssignedTrip>,
}

impl AssignedTrips {
    /// Assigns both endpoints of every trip to a zone of `part`.
    pub fn assign(trips: &[crate::ingest::TripRecord], part: &crate::partition::SpatialPartition) -> Self {
        let origins: Vec<_> = trips.iter().map(|t| t.origin).collect();
        let dests: Vec<_> = trips.iter().map(|t| t.destination).collect();
        let (o, d) = (part.assign_batch(&origins), part.assign_batch(&dests));
        AssignedTrips {
            level: part.level.clone(),
            zone_ids: part.zones().iter().map(|z| z.zone_id.clone()).collect(),
            trips: trips
                .iter()
                .zip(o.into_iter().zip(d))
                .map(|(t, (o, d))| AssignedTrip {
                    start_ts: t.start_ts,
                    origin: o.map(|i| i as u32),
                    dest: d.map(|i| i as u32),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OdAggregate {
    pub graphs: BTreeMap<TimeBucket, FlowGraph>,
    /// Trips dropped because an endpoint was unassigned.
    pub dropped_unassigned: usize,
}

/// Group trips by the bucket of their start time and count OD pairs.
pub fn aggregate_od(trips: &AssignedTrips, scale: TimeScale) -> OdAggregate {
    let mut counts: BTreeMap<i64, HashMap<(u32, u32), u64>> = BTreeMap::new();
    let mut dropped = 0;
    for t in &trips.trips {
        match (t.origin, t.dest) {
            (Some(o), Some(d)) => {
                *counts
                    .entry(scale.truncate(t.start_ts))
                    .or_default()
                    .entry((o, d))
                    .or_insert(0) += 1;
            }
            _ => dropped += 1,
        }
    }
    if dropped > 0 {
        log::info!("{dropped} trips dropped at level {}: unassigned endpoint", trips.level);
    }
    let graphs = counts
        .into_iter()
        .map(|(start, pairs)| {
            let bucket = TimeBucket { scale, start };
            let mut g = FlowGraph::empty(trips.level.clone(), bucket);
            for ((o, d), w) in pairs {
                g.add_trips(
                    trips.zone_ids[o as usize].clone(),
                    trips.zone_ids[d as usize].clone(),
                    w,
                );
            }
            (bucket, g)
        })
        .collect();
    OdAggregate {
        graphs,
        dropped_unassigned: dropped,
    }
}

/// JSON graph report for one (level, bucket).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphReport {
    pub level: String,
    pub scale: TimeScale,
    pub bucket_start: String,
    pub nodes: Vec<String>,
    pub edges: Vec<ReportEdge>,
    pub num_nodes: usize,
    pub num_edges: usize,
    pub total_weight: u64,
    pub average_clustering: f64,
    pub average_degree_connectivity: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEdge {
    pub origin: String,
    pub dest: String,
    pub weight: u64,
}

pub fn graph_report(g: &FlowGraph) -> GraphReport {
    GraphReport {
        level: g.level.clone(),
        scale: g.bucket.scale,
        bucket_start: crate::time::format_timestamp(g.bucket.start),
        nodes: g.nodes.iter().cloned().collect(),
        edges: g
            .edges
            .iter()
            .map(|((o, d), &w)| ReportEdge {
                origin: o.clone(),
                dest: d.clone(),
                weight: w,
            })
            .collect(),
        num_nodes: g.num_nodes(),
        num_edges: g.num_edges(),
        total_weight: g.total_weight(),
        average_clustering: average_clustering(g),
        average_degree_connectivity: average_degree_connectivity(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(d: i64) -> i64 {
        1_640_995_200 + d * 86_400 // 2022-01-01
    }

    #[test]
    fn single_trip_graph() {
        let trips = AssignedTrips {
            level: "q".into(),
            zone_ids: vec!["A".into(), "B".into()],
            trips: vec![AssignedTrip {
                start_ts: day(3) + 3_600,
                origin: Some(0),
                dest: Some(1),
            }],
        };
        let agg = aggregate_od(&trips, TimeScale::Daily);
        assert_eq!(agg.graphs.len(), 1);
        let g = agg.graphs.values().next().unwrap();
        assert_eq!(g.bucket.start, day(3));
        assert_eq!(g.nodes.iter().collect::<Vec<_>>(), vec!["A", "B"]);
        assert_eq!(g.weight("A", "B"), 1);
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn all_pairs_with_self_loops() {
        let ids: Vec<String> = (1..=9).map(|i| format!("Q{i}")).collect();
        let mut trips = Vec::new();
        for o in 0..9u32 {
            for d in 0..9u32 {
                for k in 0..=(o + d) % 3 {
                    trips.push(AssignedTrip {
                        start_ts: day(0) + k as i64 * 60,
                        origin: Some(o),
                        dest: Some(d),
                    });
                }
            }
        }
        trips.push(AssignedTrip {
            start_ts: day(0),
            origin: None,
            dest: Some(1),
        });
        let agg = aggregate_od(
            &AssignedTrips {
                level: "quarters".into(),
                zone_ids: ids,
                trips: trips.clone(),
            },
            TimeScale::Daily,
        );
        let g = &agg.graphs[&TimeBucket {
            scale: TimeScale::Daily,
            start: day(0),
        }];
        assert_eq!(g.num_nodes(), 9);
        assert_eq!(g.num_edges(), 81);
        assert_eq!(g.total_weight() as usize, trips.len() - 1);
        assert_eq!(agg.dropped_unassigned, 1);
    }

    #[test]
    fn from_edges_drops_zero_weights() {
        let b = TimeBucket {
            scale: TimeScale::Daily,
            start: day(0),
        };
        let g = FlowGraph::from_edges("l", b, [("a", "b", 0), ("b", "c", 2), ("b", "c", 1)]);
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.weight("b", "c"), 3);
        assert!(!g.nodes.contains("a"));
    }

    #[test]
    fn report_counts() {
        let b = TimeBucket {
            scale: TimeScale::Daily,
            start: day(0),
        };
        let g = FlowGraph::from_edges("l", b, [("a", "b", 2), ("b", "a", 1), ("a", "a", 4)]);
        let r = graph_report(&g);
        assert_eq!(r.num_nodes, 2);
        assert_eq!(r.num_edges, 3);
        assert_eq!(r.total_weight, 7);
        assert_eq!(r.bucket_start, "2022-01-01T00:00:00Z");
    }
}
