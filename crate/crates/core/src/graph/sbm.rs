use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

/// Planted-partition graph description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub num_vertices: usize,
    pub num_classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub feature_shift: f64,
    pub seed: u64,
}

impl Default for SbmParams {
    fn default() -> Self {
        Self {
            num_vertices: 500,
            num_classes: 5,
            p_in: 0.05,
            p_out: 0.005,
            feature_dim: 32,
            feature_shift: 1.0,
            seed: 7,
        }
    }
}

/// Stochastic block model with Gaussian features.
///
/// Blocks are contiguous and near-equal. Class `c` features are unit
/// Gaussians shifted by `feature_shift` along axis `c mod feature_dim`.
pub fn generate_sbm(p: &SbmParams) -> Result<Graph> {
    if p.num_classes < 2 {
        return Err(Error::InvalidArgument("SBM needs at least 2 classes".into()));
    }
    if !(0.0 <= p.p_out && p.p_out <= p.p_in && p.p_in <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "SBM needs 0 <= p_out <= p_in <= 1, got p_in={} p_out={}",
            p.p_in, p.p_out
        )));
    }
    if p.feature_dim == 0 {
        return Err(Error::InvalidArgument("SBM feature_dim must be positive".into()));
    }
    let n = p.num_vertices;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let labels: Vec<usize> = (0..n).map(|v| v * p.num_classes / n.max(1)).collect();

    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let prob = if labels[u] == labels[v] { p.p_in } else { p.p_out };
            if rng.random::<f64>() < prob {
                edges.push((u, v));
            }
        }
    }

    let mut features = DenseMatrix::zeros(n, p.feature_dim);
    for v in 0..n {
        let row = features.row_mut(v);
        for x in row.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        row[labels[v] % p.feature_dim] += p.feature_shift;
    }
    Graph::from_edges(n, &edges, features, Some(labels), Some(p.num_classes))
}
