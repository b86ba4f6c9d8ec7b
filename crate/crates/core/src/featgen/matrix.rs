use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flownet::FlowGraph;
use crate::time::{self, TimeBucket, TimeScale};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureGroup {
    Spatial,
    Temporal,
    Network,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 3] = [FeatureGroup::Spatial, FeatureGroup::Temporal, FeatureGroup::Network];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureGroup::Spatial => "spatial",
            FeatureGroup::Temporal => "temporal",
            FeatureGroup::Network => "network",
        }
    }
}

impl std::str::FromStr for FeatureGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "spatial" => Ok(FeatureGroup::Spatial),
            "temporal" => Ok(FeatureGroup::Temporal),
            "network" => Ok(FeatureGroup::Network),
            other => Err(Error::Parameter(format!("unknown feature group `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub group: FeatureGroup,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RowKey {
    pub origin: String,
    pub dest: String,
    pub bucket_start: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Row-major feature matrix with one row per (origin, dest, bucket).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub level: String,
    pub scale: TimeScale,
    pub columns: Vec<Column>,
    pub keys: Vec<RowKey>,
    pub data: Vec<f64>,
    pub target: Vec<f64>,
    pub split: Vec<Option<Split>>,
}

impl FeatureMatrix {
    pub fn nrows(&self) -> usize {
        self.keys.len()
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.ncols();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols() + j]
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Indices of columns in any of `groups`, in matrix order.
    pub fn group_columns(&self, groups: &[FeatureGroup]) -> Vec<usize> {
        (0..self.ncols())
            .filter(|&j| groups.contains(&self.columns[j].group))
            .collect()
    }

    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(self.nrows() * cols.len());
        for i in 0..self.nrows() {
            let r = self.row(i);
            data.extend(cols.iter().map(|&j| r[j]));
        }
        FeatureMatrix {
            columns: cols.iter().map(|&j| self.columns[j].clone()).collect(),
            data,
            ..self.clone_without_data()
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.ncols());
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            level: self.level.clone(),
            scale: self.scale,
            columns: self.columns.clone(),
            keys: rows.iter().map(|&i| self.keys[i].clone()).collect(),
            data,
            target: rows.iter().map(|&i| self.target[i]).collect(),
            split: rows.iter().map(|&i| self.split[i]).collect(),
        }
    }

    fn clone_without_data(&self) -> FeatureMatrix {
        FeatureMatrix {
            level: self.level.clone(),
            scale: self.scale,
            columns: Vec::new(),
            keys: self.keys.clone(),
            data: Vec::new(),
            target: self.target.clone(),
            split: self.split.clone(),
        }
    }

    pub fn rows_in(&self, split: Split) -> Vec<usize> {
        (0..self.nrows()).filter(|&i| self.split[i] == Some(split)).collect()
    }

    pub fn has_missing(&self) -> bool {
        self.data.iter().any(|v| v.is_nan())
    }
}

/// Column values of one block for a row key; `None` when the key is unknown.
pub type BlockValues<'a> = Box<dyn Fn(&RowKey) -> Option<Vec<f64>> + Sync + 'a>;

/// A named group of feature columns produced per row key.
pub struct FeatureBlock<'a> {
    pub group: FeatureGroup,
    pub names: Vec<String>,
    pub values: BlockValues<'a>,
}

/// Row keys: every pair with trips in the bucket plus every pair seen in
/// any earlier bucket, sorted by bucket then (origin, dest).
pub fn row_keys(graphs: &BTreeMap<TimeBucket, FlowGraph>, buckets: &[TimeBucket]) -> Vec<RowKey> {
    let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
    let mut keys = Vec::new();
    let mut sorted = buckets.to_vec();
    sorted.sort();
    for b in sorted {
        let current = graphs.get(&b);
        let mut pairs = seen.clone();
        if let Some(g) = current {
            pairs.extend(g.edges.keys().cloned());
        }
        keys.extend(pairs.iter().map(|(o, d)| RowKey {
            origin: o.clone(),
            dest: d.clone(),
            bucket_start: b.start,
        }));
        seen = pairs;
    }
    keys
}

/// Joins feature blocks row by row. Columns are ordered spatial, temporal,
/// network, keeping the given block order within a group.
pub fn assemble_matrix(
    level: &str,
    scale: TimeScale,
    keys: Vec<RowKey>,
    blocks: &[FeatureBlock<'_>],
    target: &(dyn Fn(&RowKey) -> Option<f64> + Sync),
) -> Result<FeatureMatrix> {
    let mut order: Vec<usize> = (0..blocks.len()).collect();
    order.sort_by_key(|&b| blocks[b].group);
    let columns: Vec<Column> = order
        .iter()
        .flat_map(|&b| {
            blocks[b].names.iter().map(move |n| Column {
                name: n.clone(),
                group: blocks[b].group,
            })
        })
        .collect();
    let mut names = BTreeSet::new();
    for c in &columns {
        if !names.insert(&c.name) {
            return Err(Error::Assembly(format!("duplicate column `{}`", c.name)));
        }
    }
    let describe = |k: &RowKey| format!("({}, {}, {})", k.origin, k.dest, time::format_timestamp(k.bucket_start));
    let rows: Vec<(Vec<f64>, f64)> = keys
        .par_iter()
        .map(|k| {
            let mut row = Vec::with_capacity(columns.len());
            for &b in &order {
                let v = (blocks[b].values)(k).ok_or_else(|| {
                    Error::Assembly(format!(
                        "{} block has no entry for key {}",
                        blocks[b].group.as_str(),
                        describe(k)
                    ))
                })?;
                if v.len() != blocks[b].names.len() {
                    return Err(Error::Assembly(format!(
                        "{} block returned {} values for key {}, expected {}",
                        blocks[b].group.as_str(),
                        v.len(),
                        describe(k),
                        blocks[b].names.len()
                    )));
                }
                row.extend(v);
            }
            let y = target(k).ok_or_else(|| Error::Assembly(format!("no target for key {}", describe(k))))?;
            Ok((row, y))
        })
        .collect::<Result<_>>()?;
    let mut data = Vec::with_capacity(rows.len() * columns.len());
    let mut target_v = Vec::with_capacity(rows.len());
    for (r, y) in rows {
        data.extend(r);
        target_v.push(y);
    }
    let n = keys.len();
    Ok(FeatureMatrix {
        level: level.to_string(),
        scale,
        columns,
        keys,
        data,
        target: target_v,
        split: vec![None; n],
    })
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    level: String,
    scale: TimeScale,
    columns: Vec<Column>,
}

const KEY_COLUMNS: [&str; 4] = ["origin", "dest", "bucket_start", "split"];

/// Writes `csv_path` plus a JSON sidecar with the column groups.
pub fn write_matrix(m: &FeatureMatrix, csv_path: &Path, sidecar_path: &Path) -> Result<()> {
    let (csv, side) = encode_matrix(m)?;
    crate::ingest::write_bytes(csv_path, &csv)?;
    crate::ingest::write_bytes(sidecar_path, &side)
}

/// CSV and sidecar contents as written by [`write_matrix`].
pub fn encode_matrix(m: &FeatureMatrix) -> Result<(Vec<u8>, Vec<u8>)> {
    let fail = |e: csv::Error| Error::Assembly(format!("matrix encoding: {e}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = KEY_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(m.column_names());
    header.push("target".into());
    w.write_record(&header).map_err(fail)?;
    for i in 0..m.nrows() {
        let k = &m.keys[i];
        let mut rec: Vec<String> = vec![
            k.origin.clone(),
            k.dest.clone(),
            time::format_timestamp(k.bucket_start),
            match m.split[i] {
                Some(Split::Train) => "train".into(),
                Some(Split::Test) => "test".into(),
                None => String::new(),
            },
        ];
        rec.extend(m.row(i).iter().map(|v| v.to_string()));
        rec.push(m.target[i].to_string());
        w.write_record(&rec).map_err(fail)?;
    }
    let csv = w
        .into_inner()
        .map_err(|e| Error::Assembly(format!("matrix encoding: {e}")))?;
    let side = Sidecar {
        level: m.level.clone(),
        scale: m.scale,
        columns: m.columns.clone(),
    };
    Ok((csv, serde_json::to_vec_pretty(&side).expect("sidecar serializes")))
}

pub fn read_matrix(csv_path: &Path, sidecar_path: &Path) -> Result<FeatureMatrix> {
    let side = std::fs::read(sidecar_path).map_err(|e| Error::io(sidecar_path, e))?;
    let csv = std::fs::read(csv_path).map_err(|e| Error::io(csv_path, e))?;
    parse_matrix(&csv, &side)
}

/// Inverse of [`write_matrix`] on in-memory file contents.
pub fn parse_matrix(csv_bytes: &[u8], sidecar_bytes: &[u8]) -> Result<FeatureMatrix> {
    let side: Sidecar =
        serde_json::from_slice(sidecar_bytes).map_err(|e| Error::Manifest(format!("matrix sidecar: {e}")))?;
    let mut r = csv::Reader::from_reader(csv_bytes);
    let header = r
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    let p = side.columns.len();
    if header.len() != p + KEY_COLUMNS.len() + 1 {
        return Err(Error::Shape(format!(
            "matrix has {} columns, sidecar declares {}",
            header.len(),
            p
        )));
    }
    for (j, c) in side.columns.iter().enumerate() {
        if &header[KEY_COLUMNS.len() + j] != c.name.as_str() {
            return Err(Error::MissingColumn(c.name.clone()));
        }
    }
    let mut m = FeatureMatrix {
        level: side.level,
        scale: side.scale,
        columns: side.columns,
        keys: Vec::new(),
        data: Vec::new(),
        target: Vec::new(),
        split: Vec::new(),
    };
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            row: row + 1,
            message: e.to_string(),
        })?;
        let bad = |m: String| Error::Parse {
            row: row + 1,
            message: m,
        };
        let bucket_start =
            time::parse_timestamp(&rec[2]).ok_or_else(|| bad(format!("bad bucket_start `{}`", &rec[2])))?;
        m.keys.push(RowKey {
            origin: rec[0].to_string(),
            dest: rec[1].to_string(),
            bucket_start,
        });
        m.split.push(match &rec[3] {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            "" => None,
            other => return Err(bad(format!("bad split `{other}`"))),
        });
        for j in 0..=p {
            let s = &rec[KEY_COLUMNS.len() + j];
            let v: f64 = s.parse().map_err(|_| bad(format!("bad number `{s}`")))?;
            if j < p {
                m.data.push(v);
            } else {
                m.target.push(v);
            }
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::SECONDS_PER_DAY;

    const T0: i64 = 1_640_995_200;

    fn graphs() -> BTreeMap<TimeBucket, FlowGraph> {
        let mut out = BTreeMap::new();
        for (k, edges) in [
            (0, vec![("a", "b", 2u64)]),
            (1, vec![("b", "a", 1)]),
            (2, vec![("a", "b", 3), ("b", "a", 4)]),
        ] {
            let b = TimeBucket::containing(TimeScale::Daily, T0 + k * SECONDS_PER_DAY);
            out.insert(b, FlowGraph::from_edges("l", b, edges));
        }
        out
    }

    fn const_block(group: FeatureGroup, prefix: &str, width: usize) -> FeatureBlock<'static> {
        FeatureBlock {
            group,
            names: (0..width).map(|i| format!("{prefix}{i}")).collect(),
            values: Box::new(move |_| Some(vec![1.5; width])),
        }
    }

    #[test]
    fn continuation_rows() {
        let g = graphs();
        let buckets: Vec<TimeBucket> = g.keys().copied().collect();
        let keys = row_keys(&g, &buckets);
        // bucket 0: ab; bucket 1: ab (zero) + ba; bucket 2: ab + ba
        assert_eq!(keys.len(), 5);
        let target = |k: &RowKey| {
            let b = TimeBucket::containing(TimeScale::Daily, k.bucket_start);
            Some(g.get(&b).map(|gr| gr.weight(&k.origin, &k.dest)).unwrap_or(0) as f64)
        };
        let blocks = vec![
            const_block(FeatureGroup::Network, "n", 2),
            const_block(FeatureGroup::Spatial, "s", 3),
            const_block(FeatureGroup::Temporal, "t", 1),
        ];
        let m = assemble_matrix("l", TimeScale::Daily, keys, &blocks, &target).unwrap();
        assert_eq!(m.ncols(), 6);
        assert_eq!(m.column_names(), vec!["s0", "s1", "s2", "t0", "n0", "n1"]);
        assert_eq!(m.target, vec![2.0, 0.0, 1.0, 3.0, 4.0]);
        for i in 0..m.nrows() {
            assert_eq!(m.row(i), m.row(0));
        }
    }

    #[test]
    fn two_edges_three_buckets() {
        let mut g = BTreeMap::new();
        for k in 0..3 {
            let b = TimeBucket::containing(TimeScale::Daily, T0 + k * SECONDS_PER_DAY);
            g.insert(
                b,
                FlowGraph::from_edges("l", b, [("a", "b", 1 + k as u64), ("b", "a", 5)]),
            );
        }
        let buckets: Vec<TimeBucket> = g.keys().copied().collect();
        let keys = row_keys(&g, &buckets);
        let target = |k: &RowKey| {
            let b = TimeBucket::containing(TimeScale::Daily, k.bucket_start);
            Some(g[&b].weight(&k.origin, &k.dest) as f64)
        };
        let m = assemble_matrix(
            "l",
            TimeScale::Daily,
            keys,
            &[const_block(FeatureGroup::Spatial, "s", 1)],
            &target,
        )
        .unwrap();
        assert_eq!(m.nrows(), 6);
        assert_eq!(m.target, vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
    }

    #[test]
    fn missing_key_is_named() {
        let g = graphs();
        let keys = row_keys(&g, &g.keys().copied().collect::<Vec<_>>());
        let block = FeatureBlock {
            group: FeatureGroup::Spatial,
            names: vec!["x".into()],
            values: Box::new(|k: &RowKey| if k.origin == "b" { None } else { Some(vec![0.0]) }),
        };
        let err = assemble_matrix("l", TimeScale::Daily, keys, &[block], &|_| Some(0.0)).unwrap_err();
        match err {
            Error::Assembly(msg) => assert!(msg.contains("(b, a, 2022-01-02T00:00:00Z)"), "{msg}"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn csv_round_trip() {
        let g = graphs();
        let keys = row_keys(&g, &g.keys().copied().collect::<Vec<_>>());
        let block = FeatureBlock {
            group: FeatureGroup::Temporal,
            names: vec!["x".into(), "y".into()],
            values: Box::new(|k: &RowKey| Some(vec![k.bucket_start as f64 / 7.0, 0.1 + 0.2])),
        };
        let mut m = assemble_matrix("l", TimeScale::Daily, keys, &[block], &|_| Some(3.0)).unwrap();
        m.split[0] = Some(Split::Train);
        m.split[4] = Some(Split::Test);
        let dir = tempfile::tempdir().unwrap();
        let (c, s) = (dir.path().join("m.csv"), dir.path().join("m.json"));
        write_matrix(&m, &c, &s).unwrap();
        let back = read_matrix(&c, &s).unwrap();
        assert_eq!(back, m);
    }
}
