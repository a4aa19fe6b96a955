//! Two-layer graph convolution encoder with a discriminative (softmax) head
//! and a prototypical (distance-to-prototype) head, plus the label
//! propagation baseline.

mod gcn;
mod heads;
mod train;

pub use gcn::{gcn_forward, gcn_forward_tape, GcnParams};
pub use heads::{
    compute_prototypes, discriminative_logits, discriminative_loss, prototype_logits,
    prototypical_loss, ProtoGroups, Prototypes,
};
pub use train::{train_model, untrained_output, EpochRecord, TrainedModel, TrainingSet};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{normalize_adjacency, AdjacencyMode, Graph, NormalizedAdjacency};
use crate::numerics::{AdamConfig, DenseMatrix, SparseFeatures};
use crate::propagation::{self, PageRankScores};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gcn,
    Gpn,
    Lp,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Gcn => "gcn",
            ModelKind::Gpn => "gpn",
            ModelKind::Lp => "lp",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcn" => Ok(ModelKind::Gcn),
            "gpn" => Ok(ModelKind::Gpn),
            "lp" => Ok(ModelKind::Lp),
            _ => Err(crate::Error::InvalidArgument(format!("unknown model '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    pub lambda: f64,
    pub lr: f64,
    pub hidden: usize,
    pub dropout: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub max_epochs: usize,
    /// Let pseudo-labeled vertices join the prototype sets.
    pub pseudo_in_prototypes: bool,
    pub alpha: f64,
    pub lp_hops: usize,
    pub adam: AdamConfig,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            lr: 0.005,
            hidden: 64,
            dropout: 0.5,
            weight_decay: 5e-4,
            patience: 4,
            max_epochs: 200,
            pseudo_in_prototypes: false,
            alpha: propagation::DEFAULT_ALPHA,
            lp_hops: propagation::DEFAULT_LP_HOPS,
            adam: AdamConfig::default(),
        }
    }
}

/// Per-graph operators shared by every model and round.
pub struct GraphInputs {
    pub self_loop: NormalizedAdjacency,
    pub plain: NormalizedAdjacency,
    pub features: SparseFeatures,
    pub pagerank: PageRankScores,
    num_vertices: usize,
    feature_dim: usize,
}

impl GraphInputs {
    pub fn new(g: &Graph, damping: f64) -> Result<Self> {
        Ok(Self {
            self_loop: normalize_adjacency(g, AdjacencyMode::SelfLoopSymmetric),
            plain: normalize_adjacency(g, AdjacencyMode::PlainSymmetric),
            features: SparseFeatures::new(g.features()),
            pagerank: propagation::pagerank(
                g,
                damping,
                propagation::DEFAULT_PAGERANK_TOL,
                propagation::DEFAULT_PAGERANK_MAX_ITER,
            )?,
            num_vertices: g.num_vertices(),
            feature_dim: g.feature_dim(),
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub embeddings: DenseMatrix,
    /// Per-vertex class distribution; uncovered class columns are 0.
    pub logits: DenseMatrix,
    /// Classes the head can predict, ascending.
    pub class_coverage: Vec<usize>,
}

impl ModelOutput {
    /// Predicted class per vertex, restricted to covered classes. Rows with
    /// no mass predict the lowest covered class.
    pub fn predictions(&self) -> Vec<usize> {
        let fallback = self.class_coverage.first().copied().unwrap_or(0);
        self.logits
            .row_iter()
            .map(|row| {
                let mut best: Option<usize> = None;
                for &c in &self.class_coverage {
                    if best.is_none_or(|b| row[c] > row[b]) {
                        best = Some(c);
                    }
                }
                best.unwrap_or(fallback)
            })
            .collect()
    }
}
