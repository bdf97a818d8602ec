//! Temporal graph data model: integer node timestamps, class labels,
//! features, undirected adjacency, and the chronological train/test split.
//!
//! Labels of test-side nodes are stored but gated: estimation code goes
//! through [`TemporalGraph::label_train`], which returns `None` past the
//! boundary. Evaluation and synthetic diagnostics use the explicitly named
//! [`TemporalGraph::labels_oracle`].

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::{Error, Mat, Result};

#[derive(Debug, Clone)]
pub struct TemporalGraph {
    n: usize,
    f: usize,
    times: Vec<i64>,
    labels: Vec<usize>,
    features: Mat,
    edges: Vec<(u32, u32)>,
    t_min: i64,
    t_max: i64,
    test_boundary: i64,
    num_labels: usize,
}

impl TemporalGraph {
    /// Validates and assembles a graph. Edges are undirected `(u, v)` pairs;
    /// self-loops and duplicates are rejected with the offending ids named.
    pub fn build(
        times: Vec<i64>,
        labels: Vec<usize>,
        features: Mat,
        edges: Vec<(u32, u32)>,
        test_boundary: i64,
    ) -> Result<Self> {
        let n = times.len();
        if n == 0 {
            return Err(Error::Graph("graph has no nodes".into()));
        }
        if labels.len() != n {
            return Err(Error::Graph(format!(
                "labels length {} does not match node count {n}",
                labels.len()
            )));
        }
        if features.rows() != n {
            return Err(Error::Graph(format!(
                "feature rows {} do not match node count {n}",
                features.rows()
            )));
        }
        if !features.all_finite() {
            return Err(Error::Graph("non-finite feature value".into()));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        for &(u, v) in &edges {
            if u as usize >= n || v as usize >= n {
                return Err(Error::Graph(format!("edge ({u},{v}) references missing node")));
            }
            if u == v {
                return Err(Error::Graph(format!("self-loop at node {u}")));
            }
            let key = (u.min(v), u.max(v));
            if !seen.insert(key) {
                return Err(Error::Graph(format!("duplicate undirected edge ({u},{v})")));
            }
        }
        let t_min = *times.iter().min().unwrap();
        let t_max = *times.iter().max().unwrap();
        let num_labels = labels.iter().max().map_or(0, |&m| m + 1);
        Ok(Self {
            n,
            f: features.cols(),
            times,
            labels,
            features,
            edges,
            t_min,
            t_max,
            test_boundary,
            num_labels,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn feature_dim(&self) -> usize {
        self.f
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn times(&self) -> &[i64] {
        &self.times
    }

    pub fn time(&self, v: usize) -> i64 {
        self.times[v]
    }

    pub fn t_min(&self) -> i64 {
        self.t_min
    }

    pub fn t_max(&self) -> i64 {
        self.t_max
    }

    /// Number of distinct timestamp slots in `[t_min, t_max]`.
    pub fn time_span(&self) -> usize {
        (self.t_max - self.t_min + 1) as usize
    }

    pub fn time_index(&self, t: i64) -> usize {
        debug_assert!(t >= self.t_min && t <= self.t_max);
        (t - self.t_min) as usize
    }

    pub fn test_boundary(&self) -> i64 {
        self.test_boundary
    }

    pub fn is_test(&self, v: usize) -> bool {
        self.times[v] >= self.test_boundary
    }

    pub fn train_nodes(&self) -> Vec<u32> {
        (0..self.n as u32).filter(|&v| !self.is_test(v as usize)).collect()
    }

    pub fn test_nodes(&self) -> Vec<u32> {
        (0..self.n as u32).filter(|&v| self.is_test(v as usize)).collect()
    }

    /// Label of a node when it is on the train side of the split.
    pub fn label_train(&self, v: usize) -> Option<usize> {
        if self.is_test(v) {
            None
        } else {
            Some(self.labels[v])
        }
    }

    /// All labels, including the test side. Evaluation and synthetic-graph
    /// diagnostics only; estimation paths must use [`Self::label_train`].
    pub fn labels_oracle(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &Mat {
        &self.features
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    /// Undirected adjacency with unit weights (both directions materialized).
    pub fn unit_adjacency(&self) -> WeightedAdjacency<f64> {
        WeightedAdjacency::from_undirected_unit(self.n, &self.edges)
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.n];
        for &(u, v) in &self.edges {
            deg[u as usize] += 1;
            deg[v as usize] += 1;
        }
        deg
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = GraphFile {
            n: self.n,
            f: self.f,
            t_min: self.t_min,
            t_max: self.t_max,
            test_boundary: self.test_boundary,
            times: self.times.clone(),
            labels: self.labels.clone(),
            features: (0..self.n).map(|i| self.features.row(i).to_vec()).collect(),
            edges: self.edges.iter().map(|&(u, v)| [u, v]).collect(),
        };
        std::fs::write(path, serde_json::to_string(&file)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        let file: GraphFile = serde_json::from_str(&raw)?;
        if file.times.len() != file.n || file.labels.len() != file.n {
            return Err(Error::Graph("array lengths do not match n".into()));
        }
        if file.features.len() != file.n || file.features.iter().any(|r| r.len() != file.f) {
            return Err(Error::Graph("feature shape does not match n x f".into()));
        }
        let mut features = Mat::zeros(file.n, file.f);
        for (i, row) in file.features.iter().enumerate() {
            features.row_mut(i).copy_from_slice(row);
        }
        let edges = file.edges.iter().map(|&[u, v]| (u, v)).collect();
        let g = Self::build(file.times, file.labels, features, edges, file.test_boundary)?;
        if g.t_min != file.t_min || g.t_max != file.t_max {
            return Err(Error::Graph(format!(
                "stored time range [{}, {}] disagrees with derived [{}, {}]",
                file.t_min, file.t_max, g.t_min, g.t_max
            )));
        }
        Ok(g)
    }
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    n: usize,
    f: usize,
    t_min: i64,
    t_max: i64,
    test_boundary: i64,
    times: Vec<i64>,
    labels: Vec<usize>,
    features: Vec<Vec<f64>>,
    edges: Vec<[u32; 2]>,
}

/// Directed adjacency stored compressed per target node: for each target,
/// the incoming `(source, weight)` entries. All weights are positive; a
/// rewrite may drop or reweight one direction of an undirected edge.
#[derive(Debug, Clone)]
pub struct WeightedAdjacency<S> {
    offsets: Vec<usize>,
    entries: Vec<(u32, S)>,
}

impl<S: Scalar> WeightedAdjacency<S> {
    /// Builds from per-target in-edge lists.
    pub fn from_in_edges(n: usize, in_edges: Vec<Vec<(u32, S)>>) -> Self {
        assert_eq!(in_edges.len(), n);
        let mut offsets = Vec::with_capacity(n + 1);
        let total: usize = in_edges.iter().map(Vec::len).sum();
        let mut entries = Vec::with_capacity(total);
        offsets.push(0);
        for list in in_edges {
            debug_assert!(list.iter().all(|&(_, w)| w > S::zero()));
            entries.extend(list);
            offsets.push(entries.len());
        }
        Self { offsets, entries }
    }

    pub fn from_undirected_unit(n: usize, edges: &[(u32, u32)]) -> Self {
        let mut lists = vec![Vec::new(); n];
        for &(u, v) in edges {
            lists[v as usize].push((u, S::one()));
            lists[u as usize].push((v, S::one()));
        }
        Self::from_in_edges(n, lists)
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    #[inline]
    pub fn in_edges(&self, v: usize) -> &[(u32, S)] {
        &self.entries[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    /// Targets with no in-edges; propagation falls back to a self-copy there.
    pub fn zero_in_degree_nodes(&self) -> Vec<u32> {
        (0..self.num_nodes() as u32)
            .filter(|&v| self.in_degree(v as usize) == 0)
            .collect()
    }

    pub fn num_entries(&self) -> usize {
        self.entries.len()
    }

    pub fn weight_sum(&self, v: usize) -> S {
        self.in_edges(v).iter().map(|&(_, w)| w).sum()
    }
}

/// Node lists per (label, time) community plus an all-nodes-per-time index.
#[derive(Debug, Clone)]
pub struct CommunityIndex {
    num_labels: usize,
    t_min: i64,
    time_span: usize,
    buckets: Vec<Vec<u32>>,
    by_time: Vec<Vec<u32>>,
}

impl CommunityIndex {
    /// Indexes nodes whose labels are visible. With `visible_labels_only`,
    /// only train-side nodes enter the (label, time) buckets; the per-time
    /// index always covers every node (times are public).
    pub fn build(g: &TemporalGraph, visible_labels_only: bool) -> Self {
        let num_labels = g.num_labels();
        let span = g.time_span();
        let mut buckets = vec![Vec::new(); num_labels * span];
        let mut by_time = vec![Vec::new(); span];
        for v in 0..g.num_nodes() {
            let ti = g.time_index(g.time(v));
            by_time[ti].push(v as u32);
            let label = if visible_labels_only {
                g.label_train(v)
            } else {
                Some(g.labels_oracle()[v])
            };
            if let Some(y) = label {
                buckets[y * span + ti].push(v as u32);
            }
        }
        Self { num_labels, t_min: g.t_min(), time_span: span, buckets, by_time }
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn time_span(&self) -> usize {
        self.time_span
    }

    pub fn t_min(&self) -> i64 {
        self.t_min
    }

    pub fn time_at(&self, ti: usize) -> i64 {
        self.t_min + ti as i64
    }

    /// Nodes with label `y` at time index `ti`.
    pub fn community(&self, y: usize, ti: usize) -> &[u32] {
        &self.buckets[y * self.time_span + ti]
    }

    /// All nodes at time index `ti`, labeled or not.
    pub fn at_time(&self, ti: usize) -> &[u32] {
        &self.by_time[ti]
    }

    pub fn communities(&self) -> impl Iterator<Item = (usize, usize, &[u32])> {
        (0..self.num_labels).flat_map(move |y| {
            (0..self.time_span).map(move |ti| (y, ti, self.community(y, ti)))
        })
    }

    pub fn indexed_node_count(&self) -> usize {
        self.buckets.iter().map(Vec::len).sum()
    }
}

/// Arithmetic mean of undirected degrees over each community; empty
/// communities are reported as `None`.
pub fn mean_degree_per_community(g: &TemporalGraph, idx: &CommunityIndex) -> Vec<Option<f64>> {
    let deg = g.degrees();
    idx.communities()
        .map(|(_, _, nodes)| {
            if nodes.is_empty() {
                None
            } else {
                Some(nodes.iter().map(|&v| deg[v as usize] as f64).sum::<f64>() / nodes.len() as f64)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node_graph() -> TemporalGraph {
        TemporalGraph::build(
            vec![0, 1],
            vec![0, 1],
            Mat::from_rows(&[vec![1.0], vec![2.0]]),
            vec![(0, 1)],
            1,
        )
        .unwrap()
    }

    #[test]
    fn two_nodes_split_at_boundary() {
        let g = two_node_graph();
        assert_eq!(g.train_nodes(), vec![0]);
        assert_eq!(g.test_nodes(), vec![1]);
        assert_eq!(g.label_train(0), Some(0));
        assert_eq!(g.label_train(1), None);
        assert_eq!(g.labels_oracle()[1], 1);
    }

    #[test]
    fn self_loop_rejected() {
        let err = TemporalGraph::build(
            vec![0, 0, 0, 0],
            vec![0; 4],
            Mat::zeros(4, 1),
            vec![(3, 3)],
            1,
        )
        .unwrap_err();
        assert!(err.to_string().contains("self-loop"), "{err}");
    }

    #[test]
    fn duplicate_edge_rejected() {
        let err = TemporalGraph::build(
            vec![0, 0],
            vec![0, 0],
            Mat::zeros(2, 1),
            vec![(0, 1), (1, 0)],
            1,
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn bad_edge_endpoint_rejected() {
        let err = TemporalGraph::build(
            vec![0, 0],
            vec![0, 0],
            Mat::zeros(2, 1),
            vec![(0, 5)],
            1,
        )
        .unwrap_err();
        assert!(err.to_string().contains("missing node"), "{err}");
    }

    #[test]
    fn community_index_partitions_nodes() {
        let g = TemporalGraph::build(
            vec![0, 0, 1, 2, 4],
            vec![0, 1, 0, 1, 1],
            Mat::zeros(5, 1),
            vec![(0, 1), (1, 2), (3, 4)],
            4,
        )
        .unwrap();
        let idx = CommunityIndex::build(&g, false);
        let total: usize = idx.communities().map(|(_, _, c)| c.len()).sum();
        assert_eq!(total, 5);
        // Every node in exactly one bucket.
        let mut seen = HashSet::new();
        for (_, _, c) in idx.communities() {
            for &v in c {
                assert!(seen.insert(v));
            }
        }
        // No nodes at t = 3.
        assert!(idx.at_time(g.time_index(3)).is_empty());
        // Train-only index drops the test node but keeps it in by_time.
        let train_idx = CommunityIndex::build(&g, true);
        assert_eq!(train_idx.indexed_node_count(), 4);
        assert_eq!(train_idx.at_time(g.time_index(4)).len(), 1);
    }

    #[test]
    fn star_graph_mean_degree() {
        let n = 6;
        let mut labels = vec![1; n];
        labels[0] = 0; // center in its own community
        let edges: Vec<(u32, u32)> = (1..n as u32).map(|v| (0, v)).collect();
        let g = TemporalGraph::build(vec![0; n], labels, Mat::zeros(n, 1), edges, 1).unwrap();
        let idx = CommunityIndex::build(&g, false);
        let means = mean_degree_per_community(&g, &idx);
        assert_eq!(means[0], Some((n - 1) as f64));
        assert_eq!(means[1], Some(1.0));
    }

    #[test]
    fn two_node_mean_degree_is_one() {
        let g = two_node_graph();
        let idx = CommunityIndex::build(&g, false);
        for m in mean_degree_per_community(&g, &idx).into_iter().flatten() {
            assert_eq!(m, 1.0);
        }
    }

    #[test]
    fn adjacency_round_trip_degrees() {
        let g = TemporalGraph::build(
            vec![0, 0, 1, 1, 2],
            vec![0, 1, 0, 1, 0],
            Mat::zeros(5, 1),
            vec![(0, 1), (0, 2), (1, 3), (2, 3), (3, 4)],
            2,
        )
        .unwrap();
        let adj = g.unit_adjacency();
        let deg = g.degrees();
        for v in 0..g.num_nodes() {
            assert_eq!(adj.weight_sum(v), deg[v] as f64);
            assert_eq!(adj.in_degree(v), deg[v]);
        }
    }

    #[test]
    fn json_round_trip() {
        let g = TemporalGraph::build(
            vec![0, 1, 2, 3],
            vec![0, 1, 1, 0],
            Mat::from_fn(4, 3, |i, j| (i * 3 + j) as f64 * 0.5 - 1.0),
            vec![(0, 1), (1, 2), (2, 3)],
            3,
        )
        .unwrap();
        let dir = std::env::temp_dir().join("chronopass-graph-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("g.json");
        g.save_json(&path).unwrap();
        let g2 = TemporalGraph::load_json(&path).unwrap();
        assert_eq!(g.times(), g2.times());
        assert_eq!(g.labels_oracle(), g2.labels_oracle());
        assert_eq!(g.edges(), g2.edges());
        assert_eq!(g.features().data(), g2.features().data());
        assert_eq!(g.test_boundary(), g2.test_boundary());
    }
}
