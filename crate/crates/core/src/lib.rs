//! Fusion subspace clustering.
//!
//! Every data column gets a subspace of its own. A penalty on the squared
//! Frobenius distance between the columns' projectors pulls the subspaces of
//! same-cluster columns together; spectral clustering of the resulting
//! subspaces yields labels. The same machinery handles missing entries, and
//! the fitted subspaces give per-cluster bases and a completed data matrix.
//!
//! All numerics are generic over [`Real`] (`f32`, `f64`). The `*64` aliases
//! below name the common double-precision instantiations.

// `!(a > b)` checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod completion;
pub mod data;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod optimizer;
pub mod rng;
pub mod scalar;
pub mod selection;
pub mod spectral;
pub mod synth;

pub use data::{BasisSet, Labels, MaskedMatrix};
pub use error::{FscError, Result};
pub use geometry::{
    orthonormalize, projector, projector_distance, restricted_projector, Basis, ObservationPattern,
    Projector,
};
pub use optimizer::{default_lambda, fit, fit_from, init_bases, FitTrace, FscConfig, InitStrategy};
pub use scalar::Real;

pub type Basis64 = Basis<f64>;
pub type Projector64 = Projector<f64>;
pub type MaskedMatrix64 = MaskedMatrix<f64>;
pub type BasisSet64 = BasisSet<f64>;

pub type Basis32 = Basis<f32>;
pub type MaskedMatrix32 = MaskedMatrix<f32>;
pub type BasisSet32 = BasisSet<f32>;
