//! Full-batch training with validation-based early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::heads::{compute_prototypes, discriminative_logits, prototype_logits, ProtoGroups};
use super::{gcn_forward, gcn_forward_tape, GcnParams, GraphInputs, HyperParams, ModelKind, ModelOutput};
use crate::error::{Error, Result};
use crate::numerics::{adam_step, DenseMatrix, GradTape};
use crate::propagation::{label_propagate, SoftLabels};

/// Below this many supervised vertices validation reuses the training set.
const MIN_HOLDOUT: usize = 8;
const VALIDATION_SHARE: f64 = 0.25;

/// Supervision for one training call, as `(vertex, class)` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    pub human: Vec<(usize, usize)>,
    pub pseudo: Vec<(usize, usize)>,
    pub num_classes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub output: ModelOutput,
    pub params: Option<GcnParams>,
    pub history: Vec<EpochRecord>,
    /// Index into `history` of the retained parameters.
    pub best_epoch: Option<usize>,
    /// False when the prototypical regularizers were skipped for lack of a
    /// second covered class.
    pub regularizers_active: bool,
}

#[derive(Clone, Copy)]
struct Target {
    vertex: usize,
    class: usize,
    human: bool,
}

/// Output of a freshly initialized model, used before any label exists.
pub fn untrained_output(
    kind: ModelKind,
    inputs: &GraphInputs,
    num_classes: usize,
    hyper: &HyperParams,
    seed: u64,
) -> Result<ModelOutput> {
    let k = num_classes.max(1);
    match kind {
        ModelKind::Lp => Ok(ModelOutput {
            embeddings: DenseMatrix::zeros(inputs.num_vertices(), k),
            logits: DenseMatrix::zeros(inputs.num_vertices(), k),
            class_coverage: (0..k).collect(),
        }),
        ModelKind::Gcn | ModelKind::Gpn => {
            let params = GcnParams::from_seed(inputs.feature_dim(), hyper.hidden, k, seed);
            Ok(discriminative_logits(&gcn_forward(inputs, &params)?))
        }
    }
}

pub fn train_model(
    kind: ModelKind,
    inputs: &GraphInputs,
    set: &TrainingSet,
    hyper: &HyperParams,
    seed: u64,
) -> Result<TrainedModel> {
    if set.human.is_empty() {
        return Err(Error::InvalidArgument("training needs at least one labeled vertex".into()));
    }
    if set.num_classes == 0 {
        return Err(Error::NoCoveredClasses);
    }
    if kind == ModelKind::Lp {
        let seeds = SoftLabels::from_seeds(inputs.num_vertices(), set.num_classes, &set.human)?;
        let y = label_propagate(&inputs.plain, &seeds, hyper.alpha, hyper.lp_hops)?.into_matrix();
        return Ok(TrainedModel {
            output: ModelOutput {
                embeddings: y.clone(),
                logits: y,
                class_coverage: (0..set.num_classes).collect(),
            },
            params: None,
            history: Vec::new(),
            best_epoch: None,
            regularizers_active: false,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = GcnParams::glorot(inputs.feature_dim(), hyper.hidden, set.num_classes, &mut rng);
    let targets: Vec<Target> = set
        .human
        .iter()
        .map(|&(vertex, class)| Target { vertex, class, human: true })
        .chain(set.pseudo.iter().map(|&(vertex, class)| Target { vertex, class, human: false }))
        .collect();
    let (train, val) = split(&targets, &mut rng);
    let pairs = |ts: &[Target]| ts.iter().map(|t| (t.vertex, t.class)).collect::<Vec<_>>();
    let (train_pairs, val_pairs) = (pairs(&train), pairs(&val));
    let proto_members = |ts: &[Target]| {
        ts.iter()
            .filter(|t| t.human || hyper.pseudo_in_prototypes)
            .map(|t| (t.vertex, t.class))
            .collect::<Vec<_>>()
    };
    let train_groups = match kind {
        ModelKind::Gpn => Some(ProtoGroups::new(&proto_members(&train), set.num_classes, &inputs.pagerank)?),
        _ => None,
    };
    let regularizers_active = train_groups.as_ref().is_some_and(|g| g.classes.len() >= 2);

    let mut history = Vec::new();
    let mut best: Option<(GcnParams, usize)> = None;
    let mut stale = 0;
    for epoch in 0..hyper.max_epochs {
        let train_loss = {
            let mut tape = GradTape::new();
            let w0 = tape.param(params.w0.clone())?;
            let w1 = tape.param(params.w1.clone())?;
            let h = gcn_forward_tape(&mut tape, inputs, w0, w1, hyper.dropout, true, &mut rng)?;
            let mut loss = match &train_groups {
                Some(groups) => super::prototypical_loss(&mut tape, h, groups, &train_pairs, hyper.lambda)?.0,
                None => super::discriminative_loss(&mut tape, h, &train_pairs)?,
            };
            if hyper.weight_decay > 0.0 {
                let sq = tape.sum_squares(w0)?;
                let decay = tape.scale(sq, hyper.weight_decay / 2.0)?;
                loss = tape.add(loss, decay)?;
            }
            let mut grads = tape.backward(loss)?;
            let g0 = grads.take(w0).expect("parameter gradient");
            let g1 = grads.take(w1).expect("parameter gradient");
            adam_step(&mut params.w0, &g0, &mut params.adam0, hyper.lr, &hyper.adam);
            adam_step(&mut params.w1, &g1, &mut params.adam1, hyper.lr, &hyper.adam);
            tape.scalar(loss)
        };

        let out = head_output(kind, &gcn_forward(inputs, &params)?, train_groups.as_ref())?;
        let (val_accuracy, val_loss) = evaluate(&out, &val_pairs);
        history.push(EpochRecord { train_loss, val_accuracy, val_loss });
        let improved = best.as_ref().is_none_or(|(_, b)| {
            let b = history[*b];
            val_accuracy > b.val_accuracy || (val_accuracy == b.val_accuracy && val_loss < b.val_loss)
        });
        if improved {
            best = Some((params.clone(), epoch));
            stale = 0;
        } else {
            stale += 1;
            if stale >= hyper.patience {
                break;
            }
        }
    }

    let (params, best_epoch) = match best {
        Some((p, e)) => (p, Some(e)),
        None => (params, None),
    };
    let final_groups = match kind {
        ModelKind::Gpn => Some(ProtoGroups::new(&proto_members(&targets), set.num_classes, &inputs.pagerank)?),
        _ => None,
    };
    let output = head_output(kind, &gcn_forward(inputs, &params)?, final_groups.as_ref())?;
    Ok(TrainedModel { output, params: Some(params), history, best_epoch, regularizers_active })
}

fn head_output(kind: ModelKind, h: &DenseMatrix, groups: Option<&ProtoGroups>) -> Result<ModelOutput> {
    match (kind, groups) {
        (ModelKind::Gpn, Some(groups)) => Ok(prototype_logits(h, &compute_prototypes(h, groups)?)),
        _ => Ok(discriminative_logits(h)),
    }
}

/// Accuracy and mean negative log-probability at `targets`.
fn evaluate(out: &ModelOutput, targets: &[(usize, usize)]) -> (f64, f64) {
    let predictions = out.predictions();
    let mut hits = 0usize;
    let mut loss = 0.0;
    for &(v, c) in targets {
        hits += usize::from(predictions[v] == c);
        loss -= out.logits.get(v, c).max(f64::MIN_POSITIVE).ln();
    }
    let n = targets.len().max(1) as f64;
    (hits as f64 / n, loss / n)
}

/// Stratified 75/25 split; validation is the training set itself when the
/// supervision is too small to hold anything out.
fn split(targets: &[Target], rng: &mut ChaCha8Rng) -> (Vec<Target>, Vec<Target>) {
    if targets.len() < MIN_HOLDOUT {
        return (targets.to_vec(), targets.to_vec());
    }
    let mut classes: Vec<usize> = targets.iter().map(|t| t.class).collect();
    classes.sort_unstable();
    classes.dedup();
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for c in classes {
        let mut members: Vec<Target> = targets.iter().copied().filter(|t| t.class == c).collect();
        members.shuffle(rng);
        let held = ((members.len() as f64 * VALIDATION_SHARE).round() as usize).min(members.len() - 1);
        val.extend_from_slice(&members[..held]);
        train.extend_from_slice(&members[held..]);
    }
    if val.is_empty() {
        val = train.clone();
    }
    (train, val)
}
