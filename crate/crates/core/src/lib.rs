//! Numerics for rough-path driven ODEs whose drift may grow without bound.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`] — the step-2 group `G²(R^d)` and its homogeneous norm;
//! * [`drivers`] — sampled rough paths, polyline lifts and fBm samplers;
//! * [`controls`] — p-variation, Hölder norms, control functions and greedy
//!   partitions;
//! * [`fields`] / [`rde`] — bounded diffusion fields and the driftless flow
//!   `ψ` with its Jacobian;
//! * [`drift`] — drift fields and the decomposition `φ = ψ ∘ χ`;
//! * [`bounds`] — empirical checks of the growth of `φ`.

pub mod bounds;
pub mod controls;
pub mod drivers;
pub mod drift;
pub mod error;
pub mod fields;
pub mod linalg;
pub mod ode;
pub mod rde;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::GroupElement;
