//! Hamiltonian dynamics, KAM normalization and desingularization on
//! b^m-symplectic manifolds in action-angle coordinates.
//!
//! The crate is organized around one function representation
//! ([`fourier::FourierTaylor`]: truncated Fourier series in the angles with
//! polynomial action dependence) and one convention for the singular Poisson
//! bracket (see [`singular`]). On top of that it provides:
//!
//! - [`singular`]: b^m-functions, the action-angle Laurent form, brackets,
//!   Hamiltonian vector fields and trajectory integration;
//! - [`fourier`]: the weighted analytic norms and truncation operators;
//! - [`homological`]: the single normalization step (homological solve, Lie
//!   transform, remainder assembly);
//! - [`driver`]: parameter schedules, the outer iteration, invariant-torus
//!   reconstruction;
//! - [`diophantine`]: non-resonance predicates, resonance-zone measures,
//!   Diophantine sampling;
//! - [`desing`]: smoothing profiles and the desingularized (symplectic or
//!   folded) systems;
//! - [`mechanics`]: the celestial-mechanics pullback charts and b^m surfaces.
//!
//! Data-parallel inner loops run on rayon when the `parallel` feature
//! (default) is enabled and fall back to sequential execution otherwise;
//! results are bit-identical either way.

pub mod desing;
pub mod diophantine;
pub mod driver;
pub mod error;
pub mod exec;
pub mod fourier;
pub mod homological;
pub mod mechanics;
pub mod numerics;
pub mod singular;

pub use error::{Error, Result};
