//! k-means++ seeding with Lloyd iterations.

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Centers, Clustering};
use crate::error::{Error, Result};
use crate::exec;
use crate::numerics::{dot, squared_distance, CsrMatrix, DenseMatrix};

/// Below this fill ratio distances go through the sparse rows.
const SPARSE_DENSITY: f64 = 0.25;

/// Point rows with an optional sparse copy for fast distance evaluation.
pub(crate) struct PointSet<'a> {
    dense: &'a DenseMatrix,
    sparse: Option<(CsrMatrix, Vec<f64>)>,
}

impl<'a> PointSet<'a> {
    pub(crate) fn new(points: &'a DenseMatrix) -> Self {
        let total = points.rows() * points.cols();
        let nnz = points.as_slice().iter().filter(|v| **v != 0.0).count();
        let sparse = (total > 0 && (nnz as f64) < SPARSE_DENSITY * total as f64).then(|| {
            let norms = points.row_iter().map(|r| dot(r, r)).collect();
            (CsrMatrix::from_dense(points), norms)
        });
        Self { dense: points, sparse }
    }

    pub(crate) fn len(&self) -> usize {
        self.dense.rows()
    }

    fn dim(&self) -> usize {
        self.dense.cols()
    }

    #[inline]
    fn sq_dist(&self, i: usize, centroid: &[f64], centroid_norm: f64) -> f64 {
        match &self.sparse {
            Some((csr, norms)) => {
                let cross: f64 = csr.row(i).map(|(j, v)| v * centroid[j]).sum();
                (norms[i] + centroid_norm - 2.0 * cross).max(0.0)
            }
            None => squared_distance(self.dense.row(i), centroid),
        }
    }

    /// Nearest centroid (lowest index on ties) and its squared distance.
    pub(crate) fn assign(&self, centroids: &DenseMatrix) -> (Vec<usize>, Vec<f64>) {
        let norms: Vec<f64> = centroids.row_iter().map(|c| dot(c, c)).collect();
        let pairs: Vec<(usize, f64)> = exec::map_range(self.len(), |i| {
            let mut best = (0, f64::INFINITY);
            for (j, c) in centroids.row_iter().enumerate() {
                let d = self.sq_dist(i, c, norms[j]);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best
        });
        pairs.into_iter().unzip()
    }

    fn means(&self, assignment: &[usize], k: usize) -> DenseMatrix {
        let d = self.dim();
        let mut sums = DenseMatrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &c) in assignment.iter().enumerate() {
            counts[c] += 1;
            let row = sums.row_mut(c);
            match &self.sparse {
                Some((csr, _)) => {
                    for (j, v) in csr.row(i) {
                        row[j] += v;
                    }
                }
                None => {
                    for (s, v) in row.iter_mut().zip(self.dense.row(i)) {
                        *s += v;
                    }
                }
            }
        }
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                let inv = 1.0 / count as f64;
                sums.row_mut(c).iter_mut().for_each(|v| *v *= inv);
            }
        }
        sums
    }

    pub(crate) fn row(&self, i: usize) -> &[f64] {
        self.dense.row(i)
    }
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} with {n} points")));
    }
    Ok(())
}

pub fn kmeans(points: &DenseMatrix, k: usize, seed: u64, max_iter: usize) -> Result<Clustering> {
    check_k(points.rows(), k)?;
    let ps = PointSet::new(points);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = plus_plus(&ps, k, &mut rng);
    Ok(lloyd(&ps, init, max_iter))
}

/// Lloyd iterations from the given initial centroids.
pub fn kmeans_from(points: &DenseMatrix, centroids: DenseMatrix, max_iter: usize) -> Result<Clustering> {
    check_k(points.rows(), centroids.rows())?;
    if centroids.cols() != points.cols() {
        return Err(Error::dims(
            "kmeans_from",
            format!("{} point columns vs {} centroid columns", points.cols(), centroids.cols()),
        ));
    }
    Ok(lloyd(&PointSet::new(points), centroids, max_iter))
}

fn plus_plus<R: Rng>(ps: &PointSet, k: usize, rng: &mut R) -> DenseMatrix {
    let n = ps.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = {
        let c = DenseMatrix::from_vec(1, ps.dim(), ps.row(chosen[0]).to_vec()).expect("row");
        ps.assign(&c).1
    };
    while chosen.len() < k {
        let next = d2_sample(&nearest, &chosen, rng);
        chosen.push(next);
        let c = DenseMatrix::from_vec(1, ps.dim(), ps.row(next).to_vec()).expect("row");
        let (_, d) = ps.assign(&c);
        for (slot, v) in nearest.iter_mut().zip(d) {
            *slot = slot.min(v);
        }
    }
    let rows: Vec<Vec<f64>> = chosen.iter().map(|&i| ps.row(i).to_vec()).collect();
    DenseMatrix::from_rows(&rows).expect("k >= 1")
}

/// Index drawn with probability proportional to `weights`; falls back to the
/// first unchosen point when all weights vanish.
pub(crate) fn d2_sample<R: Rng>(weights: &[f64], chosen: &[usize], rng: &mut R) -> usize {
    match WeightedIndex::new(weights) {
        Ok(dist) => dist.sample(rng),
        Err(_) => (0..weights.len()).find(|i| !chosen.contains(i)).unwrap_or(0),
    }
}

pub(crate) fn lloyd(ps: &PointSet, mut centroids: DenseMatrix, max_iter: usize) -> Clustering {
    let k = centroids.rows();
    let mut history = Vec::new();
    let mut previous: Option<Vec<usize>> = None;
    let mut iter = 0;
    loop {
        let (mut assignment, mut dist) = ps.assign(&centroids);
        reseed_empty(ps, &mut centroids, &mut assignment, &mut dist);
        let cost: f64 = dist.iter().sum();
        history.push(cost);
        iter += 1;
        if previous.as_ref() == Some(&assignment) || iter >= max_iter.max(1) {
            return Clustering {
                k,
                assignment,
                centers: Centers::Centroids(centroids),
                cost,
                history,
            };
        }
        centroids = ps.means(&assignment, k);
        previous = Some(assignment);
    }
}

/// Moves each empty centroid onto the farthest point of a cluster that can
/// spare it.
fn reseed_empty(ps: &PointSet, centroids: &mut DenseMatrix, assignment: &mut [usize], dist: &mut [f64]) {
    let k = centroids.rows();
    let mut counts = vec![0usize; k];
    for &c in assignment.iter() {
        counts[c] += 1;
    }
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let mut far: Option<usize> = None;
        for i in 0..assignment.len() {
            if counts[assignment[i]] > 1 && far.is_none_or(|f| dist[i] > dist[f]) {
                far = Some(i);
            }
        }
        let Some(p) = far else { break };
        counts[assignment[p]] -= 1;
        counts[empty] = 1;
        assignment[p] = empty;
        dist[p] = 0.0;
        centroids.row_mut(empty).copy_from_slice(ps.row(p));
    }
}

/// Sum of squared distances from each point to its assigned centroid.
pub fn distortion_score(points: &DenseMatrix, c: &Clustering) -> Result<f64> {
    let centroids = c
        .centroids()
        .ok_or_else(|| Error::InvalidArgument("distortion needs centroids".into()))?;
    if c.assignment.len() != points.rows() || centroids.cols() != points.cols() {
        return Err(Error::dims("distortion_score", "points do not match clustering"));
    }
    Ok(c
        .assignment
        .iter()
        .enumerate()
        .map(|(i, &a)| squared_distance(points.row(i), centroids.row(a)))
        .sum())
}
