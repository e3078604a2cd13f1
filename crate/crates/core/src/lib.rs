//! Curvature of Hessian and Kähler Sasaki metrics, the MTW tensor of
//! Ψ-costs, c-convexity diagnostics and small discrete optimal transport.

// NaN-rejecting `!(x > t)` guards and index loops over tensor slots are
// deliberate throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod certify;
pub mod cli;
pub mod cgeometry;
pub mod error;
pub mod expr;
pub mod hessian;
pub mod io;
pub mod jets;
pub mod kahler;
pub mod lp;
pub mod mtw;
pub mod potentials;
pub mod tensor;
pub mod transport;

pub use error::{DomainFailure, Error, Result};
pub use jets::{DerivBundle, Jet4};
pub use potentials::PotentialSpec;
