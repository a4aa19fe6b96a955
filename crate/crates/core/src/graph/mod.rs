//! Graph storage and graph-level statistics.
//!
//! Edges are kept as a symmetric CSR with implicit unit weight: neighbor
//! lists are sorted, deduplicated, and never contain the vertex itself.

mod io;
mod normalize;
mod sbm;

pub use io::{load_json_graph, load_text_dataset, write_json_graph, TextLoadReport};
pub use normalize::{normalize_adjacency, AdjacencyMode, NormalizedAdjacency};
pub use sbm::{generate_sbm, SbmParams};

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    features: DenseMatrix,
    labels: Option<Vec<usize>>,
    num_classes: Option<usize>,
    label_names: Option<Vec<String>>,
}

impl Graph {
    /// Build from an arbitrary edge list. Self-loops are dropped, reversed
    /// and repeated edges collapse into one undirected edge.
    pub fn from_edges(
        num_vertices: usize,
        edges: &[(usize, usize)],
        features: DenseMatrix,
        labels: Option<Vec<usize>>,
        num_classes: Option<usize>,
    ) -> Result<Self> {
        if features.rows() != num_vertices {
            return Err(Error::InvalidGraph(format!(
                "{} feature rows for {num_vertices} vertices",
                features.rows()
            )));
        }
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); num_vertices];
        for &(u, v) in edges {
            if u >= num_vertices || v >= num_vertices {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) out of bounds for {num_vertices} vertices"
                )));
            }
            if u == v {
                continue;
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut offsets = Vec::with_capacity(num_vertices + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for mut list in adj {
            list.sort_unstable();
            list.dedup();
            neighbors.extend(list);
            offsets.push(neighbors.len());
        }

        let num_classes = match (&labels, num_classes) {
            (Some(l), Some(k)) => {
                if let Some(&bad) = l.iter().find(|&&c| c >= k) {
                    return Err(Error::InvalidGraph(format!(
                        "label {bad} not below num_classes {k}"
                    )));
                }
                Some(k)
            }
            (Some(l), None) => Some(l.iter().max().map_or(0, |m| m + 1)),
            (None, k) => k,
        };
        if let Some(l) = &labels {
            if l.len() != num_vertices {
                return Err(Error::InvalidGraph(format!(
                    "{} labels for {num_vertices} vertices",
                    l.len()
                )));
            }
        }
        Ok(Self {
            offsets,
            neighbors,
            features,
            labels,
            num_classes,
            label_names: None,
        })
    }

    pub fn with_label_names(mut self, names: Vec<String>) -> Self {
        self.label_names = Some(names);
        self
    }

    #[inline]
    pub fn num_vertices(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn csr_offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn csr_neighbors(&self) -> &[usize] {
        &self.neighbors
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.num_classes
    }

    pub fn label_names(&self) -> Option<&[String]> {
        self.label_names.as_deref()
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, in CSR order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_vertices()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .filter(move |&&v| v > u)
                .map(move |&v| (u, v))
        })
    }
}

/// Class-insensitive edge homophily.
///
/// `h_k` is the share of edges touching class `k` whose both endpoints are
/// in class `k`; the result is `sum_k max(0, h_k - |C_k|/|V|) / (C - 1)`.
/// Graphs without edges score 0.
pub fn homophily_ratio(g: &Graph) -> Result<f64> {
    let labels = g.labels().ok_or(Error::MissingLabels("homophily_ratio"))?;
    let k = g.num_classes().unwrap_or(0);
    if g.num_edges() == 0 || k < 2 {
        return Ok(0.0);
    }
    let mut intra = vec![0usize; k];
    let mut touching = vec![0usize; k];
    for (u, v) in g.edges() {
        let (a, b) = (labels[u], labels[v]);
        if a == b {
            intra[a] += 1;
            touching[a] += 1;
        } else {
            touching[a] += 1;
            touching[b] += 1;
        }
    }
    let mut sizes = vec![0usize; k];
    for &c in labels {
        sizes[c] += 1;
    }
    let n = g.num_vertices() as f64;
    let total: f64 = (0..k)
        .map(|c| {
            let h = if touching[c] == 0 {
                0.0
            } else {
                intra[c] as f64 / touching[c] as f64
            };
            (h - sizes[c] as f64 / n).max(0.0)
        })
        .sum();
    Ok((total / (k - 1) as f64).clamp(0.0, 1.0))
}
