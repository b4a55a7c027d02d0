//! Berry–Esseen rates for non-causal linear processes `X_k = Σ_j a_j(ε_{k-j})`
//! in a truncated separable Hilbert space `R^d`.
//!
//! The crate covers the Hilbert-space primitives, innovation laws and their
//! Orlicz norms, the decomposition `S_n = A(Σε) + Q_n + R_n`, the Gaussian
//! limit, and the Monte Carlo estimate of `Δ_n` with its theoretical bounds.

// Range checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod berry_esseen;
pub mod empirical;
pub mod error;
pub mod gaussian;
pub mod hilbert;
pub mod innovations;
pub mod linproc;
pub mod rng;

pub use berry_esseen::{
    delta_hat, mc_error, measure_delta_n, phi, rate_fit, theorem_bound_orlicz, theorem_bound_sup, BoundReport,
    BoundTerms, DeltaOptions, DeltaStudy, RateFit, RatePoint, Regime,
};
pub use empirical::EmpiricalLaw;
pub use error::{Error, Result};
pub use gaussian::{density_bound, limit_covariance, sample_limit_norms, DensityBound, LimitSpec};
pub use hilbert::{covariance_operator, HVector, LinOp};
pub use innovations::{
    luxemburg_norm, Direction, InnovationKind, InnovationModel, MomentEnvelope, NormSource, RadialLaw, YoungFunction,
};
pub use linproc::{b_coeff, c_coeff, decompose, partial_sum, CoeffSeq, PathSampler, Realization, SnDecomposition};
pub use rng::CounterRng;
