use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClassRegistry, LabelState};
use crate::error::{Error, Result};
use crate::models::ModelOutput;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum AnnotatorSpec {
    #[default]
    Oracle,
    Noisy {
        epsilon: f64,
    },
    Interactive,
}

/// What an annotator is asked to label in one round.
pub struct AnnotationRequest<'a> {
    pub round: usize,
    pub vertices: &'a [usize],
    pub output: &'a ModelOutput,
    pub state: &'a LabelState,
    pub classes: &'a ClassRegistry,
    pub allow_new_class: bool,
}

pub trait Annotator: Send {
    /// Class names for `req.vertices`, in order.
    fn annotate(&mut self, req: &AnnotationRequest<'_>) -> Result<Vec<String>>;
}

/// Ground-truth labels, optionally corrupted: with probability `epsilon`
/// each returned label is drawn uniformly from the other classes.
pub fn annotate<R: Rng>(
    truth: &[usize],
    num_classes: usize,
    epsilon: f64,
    vertices: &[usize],
    rng: &mut R,
) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} not in [0, 1]")));
    }
    vertices
        .iter()
        .map(|&v| {
            let t = *truth
                .get(v)
                .ok_or_else(|| Error::InvalidArgument(format!("vertex {v} has no label")))?;
            if num_classes > 1 && epsilon > 0.0 && rng.random::<f64>() < epsilon {
                let other = rng.random_range(0..num_classes - 1);
                Ok(if other >= t { other + 1 } else { other })
            } else {
                Ok(t)
            }
        })
        .collect()
}

pub struct OracleAnnotator {
    truth: Vec<usize>,
    names: Vec<String>,
}

impl OracleAnnotator {
    pub fn new(truth: Vec<usize>, names: Vec<String>) -> Self {
        Self { truth, names }
    }
}

impl Annotator for OracleAnnotator {
    fn annotate(&mut self, req: &AnnotationRequest<'_>) -> Result<Vec<String>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ids = annotate(&self.truth, self.names.len(), 0.0, req.vertices, &mut rng)?;
        Ok(ids.into_iter().map(|c| self.names[c].clone()).collect())
    }
}

pub struct NoisyAnnotator {
    truth: Vec<usize>,
    names: Vec<String>,
    epsilon: f64,
    rng: ChaCha8Rng,
}

impl NoisyAnnotator {
    pub fn new(truth: Vec<usize>, names: Vec<String>, epsilon: f64, seed: u64) -> Self {
        Self { truth, names, epsilon, rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Annotator for NoisyAnnotator {
    fn annotate(&mut self, req: &AnnotationRequest<'_>) -> Result<Vec<String>> {
        let ids = annotate(&self.truth, self.names.len(), self.epsilon, req.vertices, &mut self.rng)?;
        Ok(ids.into_iter().map(|c| self.names[c].clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_is_the_oracle() {
        let truth: Vec<usize> = (0..100).map(|v| v % 7).collect();
        let vs: Vec<usize> = (0..100).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(annotate(&truth, 7, 0.0, &vs, &mut rng).unwrap(), truth);
    }

    #[test]
    fn full_noise_is_always_wrong() {
        let truth: Vec<usize> = (0..1000).map(|v| v % 7).collect();
        let vs: Vec<usize> = (0..1000).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let got = annotate(&truth, 7, 1.0, &vs, &mut rng).unwrap();
        assert!(got.iter().zip(&truth).all(|(a, b)| a != b && *a < 7));
    }

    #[test]
    fn noise_rate_concentrates() {
        let truth: Vec<usize> = (0..10_000).map(|v| v % 7).collect();
        let vs: Vec<usize> = (0..10_000).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let got = annotate(&truth, 7, 0.3, &vs, &mut rng).unwrap();
        let wrong = got.iter().zip(&truth).filter(|(a, b)| a != b).count() as f64 / 1e4;
        assert!((wrong - 0.3).abs() <= 0.015, "{wrong}");
    }

    #[test]
    fn wrong_labels_are_uniform_over_other_classes() {
        let truth = vec![0; 30_000];
        let vs: Vec<usize> = (0..30_000).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let got = annotate(&truth, 4, 1.0, &vs, &mut rng).unwrap();
        for c in 1..4 {
            let share = got.iter().filter(|&&g| g == c).count() as f64 / 30_000.0;
            assert!((share - 1.0 / 3.0).abs() < 0.02);
        }
    }

    #[test]
    fn bad_epsilon_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(annotate(&[0], 2, 1.5, &[0], &mut rng).is_err());
    }
}
