//! Discrete-time H-infinity controller synthesis for plants whose controllers
//! exchange information over a delayed communication network.
//!
//! The library is organized bottom-up:
//!
//! * [`realization`]: state-space realizations and the operator algebra on
//!   them (composition, conjugation, delays, stable/anti-stable splitting,
//!   Gramians, Hankel and H-infinity norms, balanced truncation).
//! * [`riccati`]: discrete Lyapunov and generalized discrete algebraic
//!   Riccati solvers that back every factorization.
//! * [`factorizations`]: inner-outer, bi-stable spectral, and Nehari
//!   constructions used by the synthesis pipeline.
//! * [`delay`]: communication graphs, delay patterns, sparsity constraints on
//!   FIR controller prefixes, and quadratic-invariance checks.
//! * [`lmi`]: the structured feasibility program that certifies a Hankel norm
//!   bound jointly over Lyapunov certificates and free FIR parameters.
//! * [`synthesis`]: centralized and distributed model-matching pipelines,
//!   gamma bisection, and controller recovery.

pub mod delay;
pub mod error;
pub mod factorizations;
pub mod grid;
pub mod linalg;
pub mod lmi;
pub mod norms;
pub mod realization;
pub mod riccati;
pub mod synthesis;
pub mod tol;

pub use error::Error;
pub use realization::{MarkovSequence, MixedSystem, RealizationSS, StabilityClass};

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;
