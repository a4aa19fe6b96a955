//! Dense/sparse kernels and the reverse-mode tape the models train with.

mod adam;
mod dense;
mod sparse;
mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use dense::{argmax, dot, euclidean, shannon_entropy, softmax_in_place, squared_distance, DenseMatrix};
pub use sparse::{CsrMatrix, SparseFeatures};
pub use tape::{GradTape, Gradients, Var};

use crate::error::{Error, Result};
use crate::exec;
use crate::graph::NormalizedAdjacency;

/// Row `v` of the result is `sum_{u in N(v)} weight(v, u) * x[u]`.
pub fn spmm(a: &NormalizedAdjacency, x: &DenseMatrix) -> Result<DenseMatrix> {
    if a.num_vertices() != x.rows() {
        return Err(Error::dims(
            "spmm",
            format!("{} vertices vs {} rows", a.num_vertices(), x.rows()),
        ));
    }
    let cols = x.cols();
    let mut out = DenseMatrix::zeros(x.rows(), cols);
    exec::for_each_chunk(out.as_mut_slice(), cols.max(1), |v, orow| {
        for (u, w) in a.row(v) {
            for (o, &xv) in orow.iter_mut().zip(x.row(u)) {
                *o += w * xv;
            }
        }
    });
    Ok(out)
}
