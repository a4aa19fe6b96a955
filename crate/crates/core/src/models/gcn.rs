use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::GraphInputs;
use crate::error::{Error, Result};
use crate::numerics::{AdamState, DenseMatrix, GradTape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    pub w0: DenseMatrix,
    pub w1: DenseMatrix,
    pub(crate) adam0: AdamState,
    pub(crate) adam1: AdamState,
}

impl GcnParams {
    /// Glorot-uniform weights.
    pub fn glorot<R: Rng + ?Sized>(feature_dim: usize, hidden: usize, out_dim: usize, rng: &mut R) -> Self {
        Self::from_weights(glorot(feature_dim, hidden, rng), glorot(hidden, out_dim, rng))
    }

    pub fn from_seed(feature_dim: usize, hidden: usize, out_dim: usize, seed: u64) -> Self {
        Self::glorot(feature_dim, hidden, out_dim, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn from_weights(w0: DenseMatrix, w1: DenseMatrix) -> Self {
        let adam0 = AdamState::new(w0.rows(), w0.cols());
        let adam1 = AdamState::new(w1.rows(), w1.cols());
        Self { w0, w1, adam0, adam1 }
    }

    pub fn out_dim(&self) -> usize {
        self.w1.cols()
    }
}

fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> DenseMatrix {
    let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..=limit)).collect();
    DenseMatrix::from_vec(fan_in, fan_out, data).expect("sized")
}

/// `A * relu(A * X * W0) * W1` recorded on `tape`, with dropout after the
/// relu when `training`.
pub fn gcn_forward_tape<'a, R: Rng + ?Sized>(
    tape: &mut GradTape<'a>,
    inputs: &'a GraphInputs,
    w0: Var,
    w1: Var,
    dropout: f64,
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    let (fd, w0_rows) = (inputs.feature_dim(), tape.value(w0).rows());
    if fd != w0_rows {
        return Err(Error::dims("gcn", format!("{fd} features vs W0 with {w0_rows} rows")));
    }
    let xw = tape.sparse_matmul(&inputs.features, w0)?;
    let h = tape.spmm(&inputs.self_loop, xw)?;
    let mut h = tape.relu(h)?;
    if training && dropout > 0.0 {
        h = tape.dropout(h, dropout, rng)?;
    }
    let hw = tape.matmul(h, w1)?;
    tape.spmm(&inputs.self_loop, hw)
}

/// Inference-mode forward pass returning the embeddings.
pub fn gcn_forward(inputs: &GraphInputs, params: &GcnParams) -> Result<DenseMatrix> {
    let mut tape = GradTape::new();
    let w0 = tape.constant(params.w0.clone())?;
    let w1 = tape.constant(params.w1.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let h = gcn_forward_tape(&mut tape, inputs, w0, w1, 0.0, false, &mut rng)?;
    Ok(tape.value(h).clone())
}
