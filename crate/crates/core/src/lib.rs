//! Deterministic multi-agent simulator of collaborative knowledge
//! translation.
//!
//! Experimenting teams design and sample datasets from a synthetic ground
//! truth, mining teams extract pairwise dependence patterns, and labeling
//! teams turn those patterns into claims. Provenance (datasheets, info
//! sheets and team knowledge) flows between the stages over three
//! switchable channels. Because the ground truth is known, the openness
//! score of the labeled output can be computed exactly.

pub mod cli;
pub mod error;
pub mod experimenting;
pub mod knowledge;
pub mod labeling;
pub mod metrics;
pub mod mining;
pub mod orchestrator;
pub mod seed;

pub use error::{Error, Result};
