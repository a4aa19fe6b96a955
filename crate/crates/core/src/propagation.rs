//! PageRank, label propagation with entropy filtering, and k-hop feature
//! propagation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AdjacencyMode, Graph, NormalizedAdjacency};
use crate::numerics::{argmax, shannon_entropy, spmm, DenseMatrix};

pub const DEFAULT_ALPHA: f64 = 0.9;
pub const DEFAULT_ENTROPY_THRESHOLD: f64 = 0.2;
pub const DEFAULT_LP_HOPS: usize = 3;
pub const DEFAULT_DAMPING: f64 = 0.85;
pub const DEFAULT_PAGERANK_TOL: f64 = 1e-9;
pub const DEFAULT_PAGERANK_MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageRankScores {
    pub scores: Vec<f64>,
    pub damping: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Power iteration with uniform teleport. Mass sitting on isolated vertices
/// is spread uniformly. Stops once the L1 change drops below `tol`.
pub fn pagerank(g: &Graph, damping: f64, tol: f64, max_iter: usize) -> Result<PageRankScores> {
    if !(damping > 0.0 && damping < 1.0) {
        return Err(Error::InvalidArgument(format!("damping {damping} not in (0, 1)")));
    }
    if tol <= 0.0 {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")));
    }
    let n = g.num_vertices();
    if n == 0 {
        return Ok(PageRankScores {
            scores: Vec::new(),
            damping,
            iterations: 0,
            converged: true,
        });
    }
    let inv_n = 1.0 / n as f64;
    let mut scores = vec![inv_n; n];
    let mut next = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let dangling: f64 = (0..n).filter(|&v| g.degree(v) == 0).map(|v| scores[v]).sum();
        let base = (1.0 - damping) * inv_n + damping * dangling * inv_n;
        for (u, slot) in next.iter_mut().enumerate() {
            let inflow: f64 = g
                .neighbors(u)
                .iter()
                .map(|&v| scores[v] / g.degree(v) as f64)
                .sum();
            *slot = base + damping * inflow;
        }
        let change: f64 = scores.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut scores, &mut next);
        if change < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("pagerank did not converge within {max_iter} iterations");
    }
    Ok(PageRankScores {
        scores,
        damping,
        iterations,
        converged,
    })
}

/// Per-vertex class masses (`num_vertices x num_classes`).
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabels(pub DenseMatrix);

impl SoftLabels {
    /// One-hot rows for the given `(vertex, class)` seeds, zero elsewhere.
    pub fn from_seeds(num_vertices: usize, num_classes: usize, seeds: &[(usize, usize)]) -> Result<Self> {
        let mut y = DenseMatrix::zeros(num_vertices, num_classes);
        for &(v, c) in seeds {
            if v >= num_vertices || c >= num_classes {
                return Err(Error::InvalidArgument(format!(
                    "seed ({v}, {c}) outside {num_vertices}x{num_classes}"
                )));
            }
            y.row_mut(v).fill(0.0);
            y.set(v, c, 1.0);
        }
        Ok(Self(y))
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.0
    }
}

/// `Y <- alpha * A_hat * Y + (1 - alpha) * Y`, applied `hops` times without
/// re-clamping the seed rows.
pub fn label_propagate(
    a: &NormalizedAdjacency,
    seeds: &SoftLabels,
    alpha: f64,
    hops: usize,
) -> Result<SoftLabels> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} not in [0, 1]")));
    }
    if a.mode() != AdjacencyMode::PlainSymmetric {
        log::debug!("label propagation over a self-loop normalized operator");
    }
    let mut y = seeds.0.clone();
    for _ in 0..hops {
        let mut next = spmm(a, &y)?.scale(alpha);
        next.axpy(1.0 - alpha, &y);
        y = next;
    }
    Ok(SoftLabels(y))
}

/// Entropy of a row normalized to a distribution, divided by `ln(classes)`.
pub fn normalized_entropy(row: &[f64]) -> f64 {
    if row.len() < 2 {
        return 0.0;
    }
    shannon_entropy(row) / (row.len() as f64).ln()
}

/// Keep `(vertex, argmax label)` for every non-excluded vertex with positive
/// mass whose normalized entropy is at most `threshold`.
pub fn filter_pseudo_labels(y: &SoftLabels, threshold: f64, exclude: &[usize]) -> Vec<(usize, usize)> {
    let m = &y.0;
    let mut skip = vec![false; m.rows()];
    for &v in exclude {
        if v < skip.len() {
            skip[v] = true;
        }
    }
    (0..m.rows())
        .filter(|&v| !skip[v])
        .filter_map(|v| {
            let row = m.row(v);
            let mass: f64 = row.iter().filter(|x| **x > 0.0).sum();
            if mass <= 0.0 || normalized_entropy(row) > threshold {
                return None;
            }
            Some((v, argmax(row)))
        })
        .collect()
}

/// `A_hat^hops * x` with no nonlinearity.
pub fn propagate_features(a: &NormalizedAdjacency, x: &DenseMatrix, hops: usize) -> Result<DenseMatrix> {
    let mut out = x.clone();
    for _ in 0..hops {
        out = spmm(a, &out)?;
    }
    Ok(out)
}
