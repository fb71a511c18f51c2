//! Affinity-graph supervision.
//!
//! Builds pairwise affinity graphs over entities (object proposals in one
//! scene, or samples in one mini-batch), measures how much normalized
//! affinity lands on a supervision target, and trains models to increase
//! it alongside their main objective.

pub mod affinity;
pub mod attention;
pub mod eval;
mod error;
pub mod numerics;
pub mod targets;
pub mod trainer;

pub use error::{Error, Result};
