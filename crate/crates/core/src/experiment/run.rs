use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DatasetContext, ExperimentConfig, RunRecord};
use crate::active::{
    featprop_from_space, partition_vertices, select_vertices, AnnotationRequest, Annotator, AnnotatorSpec,
    ClassRegistry, LabelState, NoisyAnnotator, OracleAnnotator, SamplerKind, Setting, VertexSpace,
};
use crate::error::{Error, Result};
use crate::exec;
use crate::models::{train_model, untrained_output, ModelKind, ModelOutput, TrainingSet};
use crate::propagation::{filter_pseudo_labels, label_propagate, SoftLabels};

const TAG_INIT: u64 = 1;
const TAG_PARTITION: u64 = 2;
const TAG_SELECT: u64 = 3;
const TAG_TRAIN: u64 = 4;
const TAG_FEATPROP: u64 = 5;
const TAG_NOISE: u64 = 6;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream seed for one purpose within one round.
pub fn derive_seed(seed: u64, round: usize, tag: u64) -> u64 {
    splitmix(seed ^ splitmix(((round as u64) << 8) | tag))
}

/// Progress hooks for callers that watch a run as it happens.
pub trait RunObserver {
    fn on_record(&mut self, _record: &RunRecord) {}
    fn on_training(&mut self, _round: usize, _budget_used: usize) {}
}

pub struct NullObserver;

impl RunObserver for NullObserver {}

/// Runs every repeat of `cfg`; records are ordered by `(run_id, round)`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    if cfg.annotator == AnnotatorSpec::Interactive {
        return Err(Error::InvalidArgument("interactive runs go through a session".into()));
    }
    let graph = cfg.dataset.load(cfg.data_dir.as_deref())?;
    let ctx = DatasetContext::new(graph, cfg.damping, cfg.split_seed, cfg.test_fraction, cfg.feature_hops)?;
    run_on_context(&ctx, cfg)
}

pub(crate) fn run_on_context(ctx: &DatasetContext, cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    let truth = ctx.truth().ok_or(Error::MissingLabels("oracle and noisy annotators"))?;
    let runs = exec::map_range(cfg.repeats, |run_id| {
        let seed = cfg.seed.wrapping_add(run_id as u64);
        let mut annotator: Box<dyn Annotator> = match cfg.annotator {
            AnnotatorSpec::Noisy { epsilon } => Box::new(NoisyAnnotator::new(
                truth.to_vec(),
                ctx.class_names.clone(),
                epsilon,
                derive_seed(seed, 0, TAG_NOISE),
            )),
            _ => Box::new(OracleAnnotator::new(truth.to_vec(), ctx.class_names.clone())),
        };
        run_single(ctx, cfg, run_id, annotator.as_mut(), &mut NullObserver)
    });
    let mut records = Vec::new();
    for r in runs {
        records.extend(r?);
    }
    Ok(records)
}

/// Total human labels for this configuration.
pub(crate) fn resolve_budget(ctx: &DatasetContext, cfg: &ExperimentConfig) -> Result<usize> {
    if let Some(b) = cfg.budget {
        return Ok(b);
    }
    let k = match (ctx.graph.num_classes(), cfg.setting) {
        (Some(k), _) => k,
        (None, Setting::UnknownK) => ctx.estimated_classes(cfg.k_range.0, cfg.k_range.1)?.k,
        (None, _) => return Err(Error::MissingLabels("the default budget |C| * rounds * quota")),
    };
    Ok(cfg.rounds * cfg.per_round_quota * k)
}

struct Accuracy<'a> {
    ctx: &'a DatasetContext,
}

impl Accuracy<'_> {
    /// Share of test vertices whose predicted class name is the true one.
    fn measure(&self, out: &ModelOutput, classes: &ClassRegistry) -> Option<f64> {
        let truth = self.ctx.truth()?;
        if self.ctx.test.is_empty() {
            return None;
        }
        let predictions = out.predictions();
        let hits = self
            .ctx
            .test
            .iter()
            .filter(|&&v| {
                classes
                    .names()
                    .get(predictions[v])
                    .is_some_and(|name| self.ctx.class_names.get(truth[v]) == Some(name))
            })
            .count();
        Some(hits as f64 / self.ctx.test.len() as f64)
    }
}

/// One repeat of the loop: partition, select, annotate, optionally
/// propagate, train, record; until the budget is spent or the pool is empty.
pub fn run_single(
    ctx: &DatasetContext,
    cfg: &ExperimentConfig,
    run_id: usize,
    annotator: &mut dyn Annotator,
    observer: &mut dyn RunObserver,
) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let seed = cfg.seed.wrapping_add(run_id as u64);
    let budget = resolve_budget(ctx, cfg)?;
    let truth = ctx.truth();
    let accuracy = Accuracy { ctx };
    let mut classes = match cfg.setting {
        Setting::UnknownK => ClassRegistry::new(),
        _ => ClassRegistry::with_names(ctx.class_names.clone()),
    };
    let known_k = match cfg.setting {
        Setting::UnknownK => ctx.estimated_classes(cfg.k_range.0, cfg.k_range.1)?.k,
        _ => ctx
            .graph
            .num_classes()
            .ok_or(Error::MissingLabels("the number of classes"))?,
    };
    let mut state = LabelState::new(ctx.training.clone(), budget);
    let mut records = Vec::new();
    let push = |records: &mut Vec<RunRecord>, r: RunRecord, observer: &mut dyn RunObserver| {
        observer.on_record(&r);
        records.push(r);
    };
    let record = |round: usize, state: &LabelState, acc: Option<f64>, started: Instant, converged, degenerate, k| RunRecord {
        run_id,
        seed,
        setting: cfg.setting,
        model: cfg.model,
        sampler: cfg.sampler,
        label_prop: cfg.label_prop,
        round,
        budget_used: state.budget_used(),
        test_accuracy: acc,
        wall_ms: if cfg.timing { started.elapsed().as_millis() as u64 } else { 0 },
        converged,
        degenerate_coverage: degenerate,
        num_classes: k,
        pseudo_labels: state.pseudo_labels().len(),
    };

    let started = Instant::now();
    let mut output = untrained_output(cfg.model, &ctx.inputs, classes.len(), &cfg.hyper, derive_seed(seed, 0, TAG_INIT))?;
    let acc = accuracy.measure(&output, &classes);
    push(&mut records, record(0, &state, acc, started, false, false, classes.len()), observer);

    let mut featprop_queue: Option<std::collections::VecDeque<usize>> = None;
    let mut learned = false;
    let mut round = 0;
    while state.remaining_budget() > 0 && !state.pool().is_empty() {
        round += 1;
        let started = Instant::now();
        let fallback = ctx.fallback()?;
        let fallback_space = VertexSpace::Cached { matrix: &fallback.distances, rows: &fallback.rows };
        let per_round = known_k * cfg.per_round_quota;

        let mut selected = if cfg.sampler == SamplerKind::Featprop {
            let queue = match &mut featprop_queue {
                Some(q) => q,
                None => featprop_queue.insert(
                    featprop_from_space(&fallback_space, &ctx.training, budget, derive_seed(seed, 0, TAG_FEATPROP))?
                        .into(),
                ),
            };
            let mut batch = Vec::new();
            while batch.len() < per_round {
                match queue.pop_front() {
                    Some(v) if state.pool().contains(&v) => batch.push(v),
                    Some(_) => {}
                    None => break,
                }
            }
            batch
        } else {
            let partition_space = if learned { VertexSpace::Rows(&output.embeddings) } else { fallback_space };
            let cells = partition_vertices(
                cfg.setting,
                state.training(),
                truth,
                &partition_space,
                known_k,
                state.pool().len(),
                derive_seed(seed, round, TAG_PARTITION),
            )?;
            state.set_partition(cells)?;
            let selection_space = if learned { VertexSpace::Rows(&output.logits) } else { fallback_space };
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, round, TAG_SELECT));
            select_vertices(
                cfg.sampler,
                &state.pool_cells(),
                cfg.per_round_quota,
                &output.logits,
                &selection_space,
                &ctx.inputs.pagerank,
                &mut rng,
            )?
        };
        selected.truncate(state.remaining_budget());
        if selected.is_empty() {
            break;
        }

        let names = annotator.annotate(&AnnotationRequest {
            round,
            vertices: &selected,
            output: &output,
            state: &state,
            classes: &classes,
            allow_new_class: cfg.setting == Setting::UnknownK,
        })?;
        if names.len() != selected.len() {
            return Err(Error::InvalidArgument(format!(
                "annotator returned {} labels for {} vertices",
                names.len(),
                selected.len()
            )));
        }
        for (&v, name) in selected.iter().zip(&names) {
            let class = match cfg.setting {
                Setting::UnknownK => classes.intern(name),
                _ => classes
                    .index(name)
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown class '{name}'")))?,
            };
            state.add_human(v, class)?;
        }
        observer.on_training(round, state.budget_used());

        let human = state.human_labels();
        if cfg.label_prop {
            let seeds = SoftLabels::from_seeds(ctx.graph.num_vertices(), classes.len(), &human)?;
            let y = label_propagate(&ctx.inputs.plain, &seeds, cfg.hyper.alpha, cfg.hyper.lp_hops)?;
            let mut exclude: Vec<usize> = human.iter().map(|h| h.0).collect();
            exclude.extend_from_slice(&ctx.test);
            state.set_pseudo(filter_pseudo_labels(&y, cfg.entropy_threshold, &exclude));
        }
        let set = TrainingSet { human, pseudo: state.pseudo_labels().to_vec(), num_classes: classes.len() };
        let trained = train_model(cfg.model, &ctx.inputs, &set, &cfg.hyper, derive_seed(seed, round, TAG_TRAIN))?;
        output = trained.output;
        learned = cfg.model != ModelKind::Lp;
        let converged = cfg.model == ModelKind::Lp || trained.history.len() < cfg.hyper.max_epochs;
        let degenerate = output.class_coverage.len() < classes.len()
            || (cfg.model == ModelKind::Gpn && !trained.regularizers_active);
        let acc = accuracy.measure(&output, &classes);
        log::debug!(
            "run {run_id} round {round}: budget {}/{budget}, {} epochs, accuracy {acc:?}, {:?}",
            state.budget_used(),
            trained.history.len(),
            started.elapsed()
        );
        push(&mut records, record(round, &state, acc, started, converged, degenerate, classes.len()), observer);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_by_round_and_tag() {
        let a = derive_seed(1, 1, TAG_SELECT);
        assert_ne!(a, derive_seed(1, 2, TAG_SELECT));
        assert_ne!(a, derive_seed(1, 1, TAG_TRAIN));
        assert_ne!(a, derive_seed(2, 1, TAG_SELECT));
        assert_eq!(a, derive_seed(1, 1, TAG_SELECT));
    }
}
