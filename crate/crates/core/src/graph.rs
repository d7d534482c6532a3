//! The joint-by-frequency graph and its partitioned, symmetrically
//! normalized adjacency matrices.
//!
//! Nodes are (frequency bin b, joint i) pairs indexed b*18 + i. Edges are the
//! skeleton limb pairs replicated in every bin, plus chains connecting the
//! same joint across adjacent bins.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::autodiff::SparseMatrix;
use crate::error::{Error, Result};
use crate::pose::joints;

pub const NUM_JOINTS: usize = 18;

/// The 17 limb pairs of the COCO-18 skeleton.
pub fn skeleton_edges_coco18() -> Vec<(usize, usize)> {
    use joints::*;
    vec![
        (NOSE, NECK),
        (NECK, RIGHT_SHOULDER),
        (RIGHT_SHOULDER, RIGHT_ELBOW),
        (RIGHT_ELBOW, RIGHT_WRIST),
        (NECK, LEFT_SHOULDER),
        (LEFT_SHOULDER, LEFT_ELBOW),
        (LEFT_ELBOW, LEFT_WRIST),
        (NECK, RIGHT_HIP),
        (RIGHT_HIP, RIGHT_KNEE),
        (RIGHT_KNEE, RIGHT_ANKLE),
        (NECK, LEFT_HIP),
        (LEFT_HIP, LEFT_KNEE),
        (LEFT_KNEE, LEFT_ANKLE),
        (NOSE, RIGHT_EYE),
        (RIGHT_EYE, RIGHT_EAR),
        (NOSE, LEFT_EYE),
        (LEFT_EYE, LEFT_EAR),
    ]
}

#[derive(Debug, Clone)]
pub struct PoseFrequencyGraph {
    pub num_bins: usize,
    /// Undirected edges as (u, v) node pairs with u < v, sorted, unique.
    pub edges: Vec<(usize, usize)>,
}

impl PoseFrequencyGraph {
    pub fn node_index(bin: usize, joint: usize) -> usize {
        bin * NUM_JOINTS + joint
    }

    pub fn num_nodes(&self) -> usize {
        self.num_bins * NUM_JOINTS
    }

    /// Standard construction: skeleton edges in every bin plus
    /// inter-frequency chains between adjacent bins.
    pub fn build(num_bins: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for b in 0..num_bins {
            for &(i, j) in &skeleton_edges_coco18() {
                edges.push((Self::node_index(b, i), Self::node_index(b, j)));
            }
        }
        for b in 0..num_bins.saturating_sub(1) {
            for i in 0..NUM_JOINTS {
                edges.push((Self::node_index(b, i), Self::node_index(b + 1, i)));
            }
        }
        Self::from_edges(num_bins, edges)
    }

    /// Construction from an explicit edge list (used by ablations that drop
    /// the inter-frequency chains).
    pub fn from_edges(num_bins: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if num_bins < 1 {
            return Err(Error::Param("graph needs at least one frequency bin".into()));
        }
        let n = num_bins * NUM_JOINTS;
        let mut normalized = Vec::with_capacity(edges.len());
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Param(format!("edge ({u},{v}) outside {n} nodes")));
            }
            if u == v {
                return Err(Error::Param(format!("self-edge at node {u}")));
            }
            normalized.push((u.min(v), u.max(v)));
        }
        normalized.sort_unstable();
        normalized.dedup();
        Ok(PoseFrequencyGraph {
            num_bins,
            edges: normalized,
        })
    }

    pub fn build_without_inter_frequency(num_bins: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for b in 0..num_bins {
            for &(i, j) in &skeleton_edges_coco18() {
                edges.push((Self::node_index(b, i), Self::node_index(b, j)));
            }
        }
        Self::from_edges(num_bins, edges)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionStrategy {
    /// One partition holding every edge and the self-loops.
    Uniform,
    /// Self-loops | all neighbors.
    Distance,
    /// Self-loops and equal-distance neighbors | neighbors closer to the
    /// root (neck at bin 0) | neighbors farther from it.
    Spatial,
}

impl PartitionStrategy {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "uniform" => Ok(PartitionStrategy::Uniform),
            "distance" => Ok(PartitionStrategy::Distance),
            "spatial" => Ok(PartitionStrategy::Spatial),
            other => Err(Error::Param(format!("unknown partition strategy '{other}'"))),
        }
    }

    pub fn num_partitions(self) -> usize {
        match self {
            PartitionStrategy::Uniform => 1,
            PartitionStrategy::Distance => 2,
            PartitionStrategy::Spatial => 3,
        }
    }
}

/// Partition labels for every directed neighbor relation plus self-loops.
#[derive(Debug, Clone)]
pub struct EdgePartition {
    pub strategy: PartitionStrategy,
    pub num_partitions: usize,
    /// Label of the directed entry A[u][v] (node u receiving from neighbor v).
    pub directed: HashMap<(usize, usize), usize>,
    /// Partition holding the identity entries.
    pub self_partition: usize,
}

/// Assign each directed neighbor relation to a partition.
pub fn partition(graph: &PoseFrequencyGraph, strategy: PartitionStrategy) -> EdgePartition {
    let mut directed = HashMap::new();
    match strategy {
        PartitionStrategy::Uniform => {
            for &(u, v) in &graph.edges {
                directed.insert((u, v), 0);
                directed.insert((v, u), 0);
            }
            EdgePartition {
                strategy,
                num_partitions: 1,
                directed,
                self_partition: 0,
            }
        }
        PartitionStrategy::Distance => {
            for &(u, v) in &graph.edges {
                directed.insert((u, v), 1);
                directed.insert((v, u), 1);
            }
            EdgePartition {
                strategy,
                num_partitions: 2,
                directed,
                self_partition: 0,
            }
        }
        PartitionStrategy::Spatial => {
            let dist = bfs_distances(graph, PoseFrequencyGraph::node_index(0, joints::NECK));
            for &(u, v) in &graph.edges {
                // A[u][v]: from u's perspective, neighbor v is closer (1),
                // farther (2), or at the same distance (0, with self-loops).
                let label = |from: usize, neighbor: usize| -> usize {
                    match dist[neighbor].cmp(&dist[from]) {
                        std::cmp::Ordering::Less => 1,
                        std::cmp::Ordering::Greater => 2,
                        std::cmp::Ordering::Equal => 0,
                    }
                };
                directed.insert((u, v), label(u, v));
                directed.insert((v, u), label(v, u));
            }
            EdgePartition {
                strategy,
                num_partitions: 3,
                directed,
                self_partition: 0,
            }
        }
    }
}

fn bfs_distances(graph: &PoseFrequencyGraph, root: usize) -> Vec<usize> {
    let n = graph.num_nodes();
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in &graph.edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut dist = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    dist[root] = 0;
    queue.push_back(root);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

/// The partitioned, symmetrically normalized adjacency of Eq.-(3)-style
/// propagation: with A-tilde = A + I and D-tilde its degree, each partition
/// matrix is D^(-1/2) A_p D^(-1/2) where A_p keeps only that partition's
/// entries; degrees are shared across partitions.
#[derive(Debug, Clone)]
pub struct NormalizedAdjacency {
    pub partitions: Vec<Arc<SparseMatrix>>,
    pub num_nodes: usize,
    pub num_bins: usize,
    pub strategy: PartitionStrategy,
}

pub fn normalize_adjacency(graph: &PoseFrequencyGraph, labels: &EdgePartition) -> Result<NormalizedAdjacency> {
    let n = graph.num_nodes();
    let mut degree = vec![1.0f64; n]; // self-loop contributes 1
    for &(u, v) in &graph.edges {
        degree[u] += 1.0;
        degree[v] += 1.0;
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut triplets: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); labels.num_partitions];
    for i in 0..n {
        triplets[labels.self_partition].push((i, i, inv_sqrt[i] * inv_sqrt[i]));
    }
    for (&(u, v), &p) in &labels.directed {
        triplets[p].push((u, v, inv_sqrt[u] * inv_sqrt[v]));
    }
    let partitions = triplets
        .into_iter()
        .map(|t| SparseMatrix::from_triplets(n, t).map(Arc::new))
        .collect::<Result<Vec<_>>>()?;
    Ok(NormalizedAdjacency {
        partitions,
        num_nodes: n,
        num_bins: graph.num_bins,
        strategy: labels.strategy,
    })
}

impl NormalizedAdjacency {
    /// Dense sum of all partition matrices (the full normalized adjacency).
    pub fn summed_dense(&self) -> Vec<f64> {
        let n = self.num_nodes;
        let mut out = vec![0.0; n * n];
        for p in &self.partitions {
            for (r, c, v) in p.entries() {
                out[r * n + c] += v;
            }
        }
        out
    }
}

/// Debug/visualization export: one edge per line with its directed
/// partition labels.
pub fn export_edge_list(graph: &PoseFrequencyGraph, labels: &EdgePartition) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# graph-edgelist v1 strategy={:?}", labels.strategy);
    for &(u, v) in &graph.edges {
        let (bu, iu) = (u / NUM_JOINTS, u % NUM_JOINTS);
        let (bv, iv) = (v / NUM_JOINTS, v % NUM_JOINTS);
        let puv = labels.directed[&(u, v)];
        let pvu = labels.directed[&(v, u)];
        let _ = writeln!(out, "{bu},{iu} -- {bv},{iv} [{puv}/{pvu}]");
    }
    out
}
