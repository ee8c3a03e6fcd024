//! fixnet: averaged-operator machinery for fixed-point views of networks.
//!
//! The crate treats a deep network as a composition of averaged operators
//! (affine maps followed by certified activations), runs the relaxed
//! fixed-point iteration x_{t+1} = x_t + λ_t(O(x_t) − x_t), verifies that
//! converged states are per-layer best responses (a Nash equilibrium of the
//! layer game), trains weights by gradient descent on the dual objective,
//! and simulates federated rounds of that training. A worked projection
//! example (cyclic projections onto convex sets) and an orthonormalization
//! network round out the catalog.
//!
//! Everything is finite-dimensional, deterministic under a master seed, and
//! exercised by sampled certificates rather than symbolic proofs.

pub mod activations;
pub mod equilibrium;
pub mod error;
pub mod federated;
pub mod gram_schmidt;
pub mod linalg;
pub mod network;
pub mod operator;
pub mod rng;
pub mod training;
pub mod transformer;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
