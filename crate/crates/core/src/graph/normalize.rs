use serde::{Deserialize, Serialize};

use super::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdjacencyMode {
    /// `D^{-1/2} A D^{-1/2}`
    PlainSymmetric,
    /// The same construction on `A + I`.
    SelfLoopSymmetric,
}

/// Symmetrically normalized adjacency in CSR form with explicit weights.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
    mode: AdjacencyMode,
}

impl NormalizedAdjacency {
    pub fn num_vertices(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn mode(&self) -> AdjacencyMode {
        self.mode
    }

    /// `(target, weight)` pairs of row `v`, ascending by target.
    pub fn row(&self, v: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.offsets[v]..self.offsets[v + 1];
        self.targets[span.clone()]
            .iter()
            .copied()
            .zip(self.weights[span].iter().copied())
    }

    /// Stored weight, 0 if absent.
    pub fn weight(&self, u: usize, v: usize) -> f64 {
        let span = self.offsets[u]..self.offsets[u + 1];
        match self.targets[span.clone()].binary_search(&v) {
            Ok(i) => self.weights[span.start + i],
            Err(_) => 0.0,
        }
    }

    pub fn nnz(&self) -> usize {
        self.weights.len()
    }

    /// Dense copy, for oracles and small instances.
    pub fn to_dense(&self) -> crate::numerics::DenseMatrix {
        let n = self.num_vertices();
        let mut m = crate::numerics::DenseMatrix::zeros(n, n);
        for u in 0..n {
            for (v, w) in self.row(u) {
                m.set(u, v, w);
            }
        }
        m
    }
}

pub fn normalize_adjacency(g: &Graph, mode: AdjacencyMode) -> NormalizedAdjacency {
    let n = g.num_vertices();
    let self_loop = mode == AdjacencyMode::SelfLoopSymmetric;
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|v| {
            let d = g.degree(v) + usize::from(self_loop);
            if d == 0 {
                0.0
            } else {
                1.0 / (d as f64).sqrt()
            }
        })
        .collect();

    let mut offsets = Vec::with_capacity(n + 1);
    let mut targets = Vec::with_capacity(g.csr_neighbors().len() + if self_loop { n } else { 0 });
    let mut weights = Vec::with_capacity(targets.capacity());
    offsets.push(0);
    for u in 0..n {
        let mut pending_self = self_loop;
        for &v in g.neighbors(u) {
            if pending_self && v > u {
                targets.push(u);
                weights.push(inv_sqrt[u] * inv_sqrt[u]);
                pending_self = false;
            }
            targets.push(v);
            weights.push(inv_sqrt[u] * inv_sqrt[v]);
        }
        if pending_self {
            targets.push(u);
            weights.push(inv_sqrt[u] * inv_sqrt[u]);
        }
        offsets.push(targets.len());
    }
    NormalizedAdjacency {
        offsets,
        targets,
        weights,
        mode,
    }
}
