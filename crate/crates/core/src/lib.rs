//! Inverse optimal control for continuous-time LQR.
//!
//! Given one sampled expert trajectory of a closed loop `ẋ = (A − BK)x`, the
//! crate identifies the gain, builds a convex feasibility program over
//! `(A, B, Q, R, P)`, solves its dual by block coordinate descent with
//! closed-form PSD projections and reconstructs a model whose optimal
//! closed loop reproduces the expert.

pub mod assembly;
pub mod bsum;
pub mod data;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod lqr;
pub mod recovery;

pub use error::{IocError, Result};
pub use linalg::{Mat, Vector};
