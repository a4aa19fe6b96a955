//! The active learning loop across settings, models, samplers and seeds,
//! result aggregation, and the interactive annotation session.

mod dataset;
mod report;
mod run;
pub mod session;


pub use dataset::{DatasetContext, DatasetRef, FallbackSpace, DATA_DIR_ENV};
pub use report::{
    aggregate, read_csv, summary_json, write_csv, write_outputs, ConfigSummary, CsvRecord, SummaryRow,
};
pub use run::{derive_seed, run_experiment, run_single, NullObserver, RunObserver};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::active::{AnnotatorSpec, SamplerKind, Setting};
use crate::error::{Error, Result};
use crate::models::{HyperParams, ModelKind};
use crate::propagation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetRef,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_dir: Option<PathBuf>,
    pub model: ModelKind,
    pub sampler: SamplerKind,
    pub setting: Setting,
    pub label_prop: bool,
    /// Total human labels; defaults to `rounds * per_round_quota * |C|`.
    pub budget: Option<usize>,
    pub rounds: usize,
    pub per_round_quota: usize,
    pub repeats: usize,
    pub seed: u64,
    pub split_seed: u64,
    pub test_fraction: f64,
    pub annotator: AnnotatorSpec,
    pub hyper: HyperParams,
    pub entropy_threshold: f64,
    pub damping: f64,
    /// Propagation hops of the raw-feature space used for class-count
    /// estimation and before any model is trained.
    pub feature_hops: usize,
    pub k_range: (usize, usize),
    /// Record per-round wall time; off gives byte-identical replays.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetRef::Sbm(Default::default()),
            data_dir: None,
            model: ModelKind::Gpn,
            sampler: SamplerKind::Medoid,
            setting: Setting::Balanced,
            label_prop: false,
            budget: None,
            rounds: 5,
            per_round_quota: 1,
            repeats: 10,
            seed: 0,
            split_seed: 0,
            test_fraction: 0.2,
            annotator: AnnotatorSpec::Oracle,
            hyper: HyperParams::default(),
            entropy_threshold: propagation::DEFAULT_ENTROPY_THRESHOLD,
            damping: propagation::DEFAULT_DAMPING,
            feature_hops: 2,
            k_range: (2, 100),
            timing: true,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.repeats == 0 {
            return bad("repeats must be at least 1".into());
        }
        if self.per_round_quota == 0 {
            return bad("per-round quota must be at least 1".into());
        }
        if let AnnotatorSpec::Noisy { epsilon } = self.annotator {
            if !(0.0..=1.0).contains(&epsilon) {
                return bad(format!("epsilon {epsilon} not in [0, 1]"));
            }
        }
        if self.annotator == AnnotatorSpec::Interactive && self.repeats != 1 {
            return bad("an interactive session runs exactly one repeat".into());
        }
        let h = &self.hyper;
        if !(0.0..1.0).contains(&h.dropout) {
            return bad(format!("dropout {} not in [0, 1)", h.dropout));
        }
        if !(h.lr > 0.0 && h.lr.is_finite()) {
            return bad(format!("learning rate {} must be positive", h.lr));
        }
        if h.hidden == 0 {
            return bad("hidden size must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&h.alpha) {
            return bad(format!("alpha {} not in [0, 1]", h.alpha));
        }
        if !(0.0..=1.0).contains(&self.entropy_threshold) {
            return bad(format!("entropy threshold {} not in [0, 1]", self.entropy_threshold));
        }
        if h.lambda < 0.0 || !h.lambda.is_finite() {
            return bad(format!("lambda {} must be nonnegative", h.lambda));
        }
        if self.k_range.0 < 2 || self.k_range.1 < self.k_range.0 {
            return bad(format!("k range {:?}", self.k_range));
        }
        Ok(())
    }
}

/// One test-accuracy measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: usize,
    pub seed: u64,
    pub setting: Setting,
    pub model: ModelKind,
    pub sampler: SamplerKind,
    pub label_prop: bool,
    pub round: usize,
    pub budget_used: usize,
    /// Absent when the graph has no ground truth.
    pub test_accuracy: Option<f64>,
    pub wall_ms: u64,
    /// Training stopped early rather than at the epoch cap.
    pub converged: bool,
    /// Fewer classes covered by human labels than the model predicts over.
    pub degenerate_coverage: bool,
    pub num_classes: usize,
    pub pseudo_labels: usize,
}
