use super::ModelOutput;
use crate::error::{Error, Result};
use crate::numerics::{euclidean, DenseMatrix, GradTape, Var};
use crate::propagation::PageRankScores;

/// Covered classes and the PageRank weights of their member vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtoGroups {
    pub classes: Vec<usize>,
    /// `column[c]` is the prototype row of class `c` when covered.
    pub column: Vec<Option<usize>>,
    /// Per covered class, `(vertex, weight)` with weights summing to 1.
    pub members: Vec<Vec<(usize, f64)>>,
}

impl ProtoGroups {
    pub fn new(labeled: &[(usize, usize)], num_classes: usize, pr: &PageRankScores) -> Result<Self> {
        let mut by_class = vec![Vec::new(); num_classes];
        for &(v, c) in labeled {
            if c >= num_classes || v >= pr.scores.len() {
                return Err(Error::InvalidArgument(format!("label ({v}, {c}) out of range")));
            }
            by_class[c].push(v);
        }
        let mut classes = Vec::new();
        let mut column = vec![None; num_classes];
        let mut members = Vec::new();
        for (c, vs) in by_class.into_iter().enumerate() {
            if vs.is_empty() {
                continue;
            }
            let total: f64 = vs.iter().map(|&v| pr.scores[v]).sum();
            let weights: Vec<(usize, f64)> = if total > 0.0 {
                vs.iter().map(|&v| (v, pr.scores[v] / total)).collect()
            } else {
                let w = 1.0 / vs.len() as f64;
                vs.iter().map(|&v| (v, w)).collect()
            };
            column[c] = Some(classes.len());
            classes.push(c);
            members.push(weights);
        }
        if classes.is_empty() {
            return Err(Error::NoCoveredClasses);
        }
        Ok(Self { classes, column, members })
    }

    pub fn num_classes(&self) -> usize {
        self.column.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prototypes {
    pub classes: Vec<usize>,
    /// One row per covered class, in `classes` order.
    pub vectors: DenseMatrix,
    pub mean: Vec<f64>,
    num_classes: usize,
}

impl Prototypes {
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
}

pub fn compute_prototypes(embeddings: &DenseMatrix, groups: &ProtoGroups) -> Result<Prototypes> {
    let d = embeddings.cols();
    let mut vectors = DenseMatrix::zeros(groups.classes.len(), d);
    for (row, members) in groups.members.iter().enumerate() {
        for &(v, w) in members {
            if v >= embeddings.rows() {
                return Err(Error::dims("prototypes", format!("vertex {v} of {}", embeddings.rows())));
            }
            for (o, x) in vectors.row_mut(row).iter_mut().zip(embeddings.row(v)) {
                *o += w * x;
            }
        }
    }
    let k = groups.classes.len() as f64;
    let mut mean = vec![0.0; d];
    for row in vectors.row_iter() {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= k);
    Ok(Prototypes { classes: groups.classes.clone(), vectors, mean, num_classes: groups.num_classes() })
}

/// Row-wise softmax of the embeddings; every class is covered.
pub fn discriminative_logits(embeddings: &DenseMatrix) -> ModelOutput {
    ModelOutput {
        embeddings: embeddings.clone(),
        logits: embeddings.row_softmax(),
        class_coverage: (0..embeddings.cols()).collect(),
    }
}

/// Softmax over negated distances to the covered prototypes.
pub fn prototype_logits(embeddings: &DenseMatrix, protos: &Prototypes) -> ModelOutput {
    let mut logits = DenseMatrix::zeros(embeddings.rows(), protos.num_classes);
    let mut scores = vec![0.0; protos.classes.len()];
    for v in 0..embeddings.rows() {
        for (j, s) in scores.iter_mut().enumerate() {
            *s = -euclidean(embeddings.row(v), protos.vectors.row(j));
        }
        crate::numerics::softmax_in_place(&mut scores);
        for (j, &c) in protos.classes.iter().enumerate() {
            logits.set(v, c, scores[j]);
        }
    }
    ModelOutput {
        embeddings: embeddings.clone(),
        logits,
        class_coverage: protos.classes.clone(),
    }
}

/// Mean cross-entropy of the softmax head at `targets` (vertex, class).
pub fn discriminative_loss(tape: &mut GradTape<'_>, h: Var, targets: &[(usize, usize)]) -> Result<Var> {
    tape.cross_entropy(h, targets.to_vec())
}

/// `L_p + lambda * (L_e + L_c)` over covered classes. The second value is
/// false when fewer than two classes are covered and the regularizers are 0.
pub fn prototypical_loss(
    tape: &mut GradTape<'_>,
    h: Var,
    groups: &ProtoGroups,
    targets: &[(usize, usize)],
    lambda: f64,
) -> Result<(Var, bool)> {
    let protos = tape.weighted_row_sum(h, groups.members.clone())?;
    let dist = tape.pairwise_distance(h, protos)?;
    let neg = tape.scale(dist, -1.0)?;
    let columns: Vec<(usize, usize)> = targets
        .iter()
        .filter_map(|&(v, c)| groups.column.get(c).copied().flatten().map(|col| (v, col)))
        .collect();
    let lp = tape.cross_entropy(neg, columns)?;
    if groups.classes.len() < 2 || lambda == 0.0 {
        return Ok((lp, groups.classes.len() >= 2));
    }

    let pp = tape.pairwise_distance(protos, protos)?;
    let pp = tape.scale(pp, -1.0)?;
    let closeness = tape.exp(pp)?;
    let nearest = tape.max_off_diagonal(closeness)?;
    let le = tape.mean(nearest)?;

    let rm = tape.mean_rows(protos)?;
    let centered = tape.sub_row(protos, rm)?;
    let dirs = tape.row_normalize(centered)?;
    let dirs_t = tape.transpose(dirs)?;
    let cosines = tape.matmul(dirs, dirs_t)?;
    let most_aligned = tape.max_off_diagonal(cosines)?;
    let lc = tape.mean(most_aligned)?;
    let lc = tape.add_scalar(lc, 1.0)?;

    let reg = tape.add(le, lc)?;
    let reg = tape.scale(reg, lambda)?;
    Ok((tape.add(lp, reg)?, true))
}
