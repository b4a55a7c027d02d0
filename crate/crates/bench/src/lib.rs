//! Shared fixtures for the benchmarks in `benches/`.

use linproc_core::{CoeffSeq, InnovationModel, LinOp};

/// `a_j = ρ^{|j|} I` on `[-J, J]` with bounded innovations of radius 1.
pub fn geometric_fixture(dim: usize, rho: f64, support: usize) -> (CoeffSeq, InnovationModel) {
    let c = CoeffSeq::geometric(rho, &LinOp::identity(dim), support).expect("valid rho");
    let model = InnovationModel::bounded(dim, 1.0).expect("valid radius");
    (c, model)
}

/// A dense `d × d` operator with deterministic entries.
pub fn dense_op(dim: usize) -> LinOp {
    let rows: Vec<Vec<f64>> = (0..dim)
        .map(|i| (0..dim).map(|j| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.4).collect())
        .collect();
    LinOp::from_rows(&rows).expect("square")
}
