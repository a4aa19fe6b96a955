//! k-medoids, k-means, distortion scoring and elbow-based class counting.

mod elbow;
mod kmeans;
mod kmedoids;

pub use elbow::{estimate_num_classes, ClassEstimate};
pub use kmeans::{distortion_score, kmeans, kmeans_from};
pub use kmedoids::{kmedoids, pam};

use crate::exec;
use crate::numerics::{euclidean, DenseMatrix};

#[derive(Debug, Clone, PartialEq)]
pub enum Centers {
    /// Point indices of the medoids, one per cluster.
    Medoids(Vec<usize>),
    /// Centroid vectors, one row per cluster.
    Centroids(DenseMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub k: usize,
    pub assignment: Vec<usize>,
    pub centers: Centers,
    /// Sum of distances to the medoid (k-medoids) or of squared distances
    /// to the centroid (k-means).
    pub cost: f64,
    /// Cost after every pass: BUILD then each SWAP for k-medoids, each
    /// assignment step for k-means.
    pub history: Vec<f64>,
}

impl Clustering {
    pub fn medoids(&self) -> Option<&[usize]> {
        match &self.centers {
            Centers::Medoids(m) => Some(m),
            Centers::Centroids(_) => None,
        }
    }

    pub fn centroids(&self) -> Option<&DenseMatrix> {
        match &self.centers {
            Centers::Centroids(c) => Some(c),
            Centers::Medoids(_) => None,
        }
    }

    /// Members of each cluster in ascending point order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (p, &c) in self.assignment.iter().enumerate() {
            out[c].push(p);
        }
        out
    }
}

/// Symmetric pairwise dissimilarities.
pub trait Dissimilarity: Sync {
    fn len(&self) -> usize;
    fn dist(&self, i: usize, j: usize) -> f64;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Full `n x n` Euclidean distance matrix.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn euclidean(points: &DenseMatrix) -> Self {
        let n = points.rows();
        let mut data = vec![0.0; n * n];
        exec::for_each_chunk(&mut data, n.max(1), |i, row| {
            let a = points.row(i);
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = euclidean(a, points.row(j));
            }
        });
        Self { n, data }
    }

    /// Distances among a subset, in the subset's order.
    pub fn subset<'a>(&'a self, indices: &'a [usize]) -> SubsetView<'a> {
        SubsetView { inner: self, indices }
    }
}

impl Dissimilarity for DistanceMatrix {
    fn len(&self) -> usize {
        self.n
    }

    #[inline]
    fn dist(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

pub struct SubsetView<'a> {
    inner: &'a DistanceMatrix,
    indices: &'a [usize],
}

impl Dissimilarity for SubsetView<'_> {
    fn len(&self) -> usize {
        self.indices.len()
    }

    #[inline]
    fn dist(&self, i: usize, j: usize) -> f64 {
        self.inner.dist(self.indices[i], self.indices[j])
    }
}
