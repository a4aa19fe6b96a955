use log::warn;
use rand::seq::IndexedRandom;
use rand::Rng;

use super::{SamplerKind, Setting};
use crate::clustering::{pam, Dissimilarity, DistanceMatrix};
use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, AdjacencyMode, Graph};
use crate::numerics::{shannon_entropy, DenseMatrix};
use crate::propagation::{propagate_features, PageRankScores};

/// Where vertex-to-vertex distances come from.
#[derive(Clone, Copy)]
pub enum VertexSpace<'a> {
    /// One row per vertex; distances computed on demand.
    Rows(&'a DenseMatrix),
    /// Precomputed distances; `rows[v]` is the matrix row of vertex `v`.
    Cached { matrix: &'a DistanceMatrix, rows: &'a [Option<usize>] },
}

impl<'a> VertexSpace<'a> {
    pub fn distances(&self, vertices: &[usize]) -> Result<CellDistances<'a>> {
        match *self {
            VertexSpace::Rows(m) => {
                if let Some(&v) = vertices.iter().find(|&&v| v >= m.rows()) {
                    return Err(Error::dims("vertex-space", format!("vertex {v} of {}", m.rows())));
                }
                Ok(CellDistances::Owned(DistanceMatrix::euclidean(&m.select_rows(vertices))))
            }
            VertexSpace::Cached { matrix, rows } => {
                let mapped = vertices
                    .iter()
                    .map(|&v| {
                        rows.get(v)
                            .copied()
                            .flatten()
                            .ok_or_else(|| Error::InvalidArgument(format!("vertex {v} has no cached row")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(CellDistances::Subset { matrix, rows: mapped })
            }
        }
    }
}

pub enum CellDistances<'a> {
    Owned(DistanceMatrix),
    Subset { matrix: &'a DistanceMatrix, rows: Vec<usize> },
}

impl Dissimilarity for CellDistances<'_> {
    fn len(&self) -> usize {
        match self {
            CellDistances::Owned(m) => m.len(),
            CellDistances::Subset { rows, .. } => rows.len(),
        }
    }

    #[inline]
    fn dist(&self, i: usize, j: usize) -> f64 {
        match self {
            CellDistances::Owned(m) => m.dist(i, j),
            CellDistances::Subset { matrix, rows } => matrix.dist(rows[i], rows[j]),
        }
    }
}

/// Pseudo-class cell of every training vertex.
pub fn partition_vertices(
    setting: Setting,
    training: &[usize],
    truth: Option<&[usize]>,
    space: &VertexSpace<'_>,
    k: usize,
    pool_size: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if setting == Setting::Balanced {
        let truth = truth.ok_or(Error::MissingLabels("balanced partitioning"))?;
        return Ok(training.iter().map(|&v| truth[v]).collect());
    }
    let k_eff = k.min(pool_size).min(training.len());
    if k_eff < k {
        warn!("partition k = {k} clipped to {k_eff}");
    }
    if k_eff == 0 {
        return Ok(vec![0; training.len()]);
    }
    Ok(pam(&space.distances(training)?, k_eff, seed)?.assignment)
}

/// Up to `quota` vertices from every cell, in cell order.
pub fn select_vertices<R: Rng>(
    strategy: SamplerKind,
    cells: &[Vec<usize>],
    quota: usize,
    logits: &DenseMatrix,
    space: &VertexSpace<'_>,
    pr: &PageRankScores,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if quota == 0 {
        return Err(Error::InvalidArgument("selection quota must be at least 1".into()));
    }
    let mut out = Vec::new();
    for cell in cells {
        if cell.len() <= quota {
            out.extend_from_slice(cell);
            continue;
        }
        match strategy {
            SamplerKind::Random => out.extend(cell.choose_multiple(rng, quota).copied()),
            SamplerKind::Entropy => {
                let w: Vec<f64> = cell.iter().map(|&v| shannon_entropy(logits.row(v))).collect();
                out.extend(weighted_sample(cell, &w, quota, rng));
            }
            SamplerKind::Pagerank => {
                let w: Vec<f64> = cell.iter().map(|&v| pr.scores[v]).collect();
                out.extend(weighted_sample(cell, &w, quota, rng));
            }
            SamplerKind::Medoid => {
                let c = pam(&space.distances(cell)?, quota, rng.random())?;
                out.extend(c.medoids().expect("k-medoids").iter().map(|&i| cell[i]));
            }
            SamplerKind::Featprop => {
                return Err(Error::InvalidArgument("featprop selects once, not per cell".into()));
            }
        }
    }
    Ok(out)
}

/// `m` sequential draws without replacement, each proportional to the
/// remaining weights; uniform once the remaining weight vanishes.
pub fn weighted_sample<R: Rng>(items: &[usize], weights: &[f64], m: usize, rng: &mut R) -> Vec<usize> {
    let mut items = items.to_vec();
    let mut weights: Vec<f64> = weights.iter().map(|w| w.max(0.0)).collect();
    let mut out = Vec::with_capacity(m.min(items.len()));
    while out.len() < m && !items.is_empty() {
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = None;
            for (i, &w) in weights.iter().enumerate() {
                if w > 0.0 {
                    chosen = Some(i);
                    if u < w {
                        break;
                    }
                    u -= w;
                }
            }
            chosen.expect("positive total")
        } else {
            rng.random_range(0..items.len())
        };
        out.push(items.remove(pick));
        weights.remove(pick);
    }
    out
}

/// One-shot baseline: k-medoids with `k = budget` over the candidates'
/// rows in `space`. Medoids come back largest cluster first.
pub fn featprop_from_space(
    space: &VertexSpace<'_>,
    candidates: &[usize],
    budget: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let k = budget.min(candidates.len());
    if k == 0 {
        return Ok(Vec::new());
    }
    let c = pam(&space.distances(candidates)?, k, seed)?;
    let sizes = c.members().iter().map(Vec::len).collect::<Vec<_>>();
    let mut order: Vec<(usize, usize)> =
        c.medoids().expect("k-medoids").iter().enumerate().map(|(slot, &m)| (sizes[slot], candidates[m])).collect();
    order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(order.into_iter().map(|(_, v)| v).collect())
}

/// FeatProp over propagated features of `g`, restricted to `candidates`.
pub fn featprop_select(g: &Graph, candidates: &[usize], budget: usize, hops: usize, seed: u64) -> Result<Vec<usize>> {
    if budget > g.num_vertices() {
        return Err(Error::InvalidArgument(format!(
            "budget {budget} exceeds {} vertices",
            g.num_vertices()
        )));
    }
    let adj = normalize_adjacency(g, AdjacencyMode::SelfLoopSymmetric);
    let x = propagate_features(&adj, g.features(), hops)?;
    featprop_from_space(&VertexSpace::Rows(&x), candidates, budget, seed)
}
