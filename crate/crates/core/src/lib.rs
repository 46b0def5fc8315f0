//! Numerical machinery for partially hyperbolic torus maps: cone-field
//! certification, stable/unstable leaves by graph transform, su-path
//! holonomies built from C1-small structured perturbations, center-disk
//! combinatorics and Lyapunov diagnostics.
//!
//! Everything is deterministic: grid sweeps use fixed lattices, random
//! sampling is seeded, and parallel reductions are order-independent, so
//! serialized reports are byte-identical across runs and thread counts.

pub mod access;
pub mod cones;
pub mod error;
pub mod exec;
pub mod leaves;
pub mod lyapunov;
pub mod maps;
pub mod perturb;
pub mod sections;
pub mod torus;

pub use error::CoreError;

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, CoreError>;
