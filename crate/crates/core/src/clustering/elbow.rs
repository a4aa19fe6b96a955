//! Class-count estimation from the elbow of the k-means distortion curve.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::kmeans::{d2_sample, lloyd, PointSet};
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

const SWEEP_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassEstimate {
    pub k: usize,
    /// `(k, distortion)` for the anchor `k_min - 1` and every swept k.
    pub distortions: Vec<(usize, f64)>,
    /// Set when the swept distortions are flat and no elbow exists.
    pub degenerate: bool,
}

/// Sweeps k over `[k_min, k_max]` (clipped to `n - 1`) and returns the k
/// farthest below the chord joining the normalized curve's endpoints.
///
/// Each k starts from the previous centroids plus one D^2-sampled point, so
/// distortion strictly decreases while distinct points remain. The curve is
/// anchored at `k_min - 1` so that `k_min` itself can be an elbow.
pub fn estimate_num_classes(
    embeddings: &DenseMatrix,
    k_min: usize,
    k_max: usize,
    seed: u64,
) -> Result<ClassEstimate> {
    let n = embeddings.rows();
    if k_min < 2 || k_max < k_min {
        return Err(Error::InvalidArgument(format!("k range [{k_min}, {k_max}]")));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("class estimation needs two points".into()));
    }
    let k_max = k_max.min(n - 1);
    if k_max < k_min {
        return Ok(ClassEstimate { k: k_min.min(n), distortions: Vec::new(), degenerate: true });
    }

    let ps = PointSet::new(embeddings);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let anchor = k_min - 1;
    let mut current = super::kmeans(embeddings, anchor, seed, SWEEP_MAX_ITER)?;
    let mut distortions = vec![(anchor, current.cost)];
    for k in (anchor + 1)..=k_max {
        let centroids = current.centroids().expect("k-means").clone();
        let (_, dist) = ps.assign(&centroids);
        let next = d2_sample(&dist, &[], &mut rng);
        let mut rows: Vec<Vec<f64>> = centroids.row_iter().map(<[f64]>::to_vec).collect();
        rows.push(ps.row(next).to_vec());
        current = lloyd(&ps, DenseMatrix::from_rows(&rows)?, SWEEP_MAX_ITER);
        distortions.push((k, current.cost));
    }

    let swept = &distortions[1..];
    let lo = swept.iter().map(|d| d.1).fold(f64::INFINITY, f64::min);
    let hi = swept.iter().map(|d| d.1).fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 1e-12 {
        return Ok(ClassEstimate { k: k_min, distortions, degenerate: true });
    }

    let top = distortions[0].1;
    let span_x = (k_max - anchor) as f64;
    let span_y = top - lo;
    let mut best = (k_min, f64::NEG_INFINITY);
    for &(k, d) in swept {
        let x = (k - anchor) as f64 / span_x;
        let y = (d - lo) / span_y;
        let below = (1.0 - x) - y;
        if below > best.1 {
            best = (k, below);
        }
    }
    Ok(ClassEstimate { k: best.0, distortions, degenerate: false })
}
