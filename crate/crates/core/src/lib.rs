//! Multi-positive citation recommendation.
//!
//! Given the text surrounding a citation placeholder in a manuscript, rank
//! candidate papers so that the cited paper and the papers usually co-cited
//! with it appear near the top. The pipeline:
//!
//! - [`corpus`]: sentence-segmented papers, citation instances, co-citation
//!   frequencies and citation counts;
//! - [`sampling`]: power-law noise distributions for positive and negative
//!   sampling, and dynamic context sampling;
//! - [`encoder`]: hierarchical sentence/document transformer with exact
//!   reverse-mode gradients;
//! - [`objectives`]: triplet and multi-positive triplet losses;
//! - [`trainer`]: fine-tuning of the manuscript and citation encoders;
//! - [`retrieval`] and [`eval`]: exact cosine top-k search and Recall/MAP;
//! - [`synthgen`]: planted-cluster corpora for end-to-end checks.

pub mod corpus;
pub mod encoder;
mod error;
pub mod eval;
pub mod objectives;
pub mod pipeline;
pub mod retrieval;
pub mod rng;
pub mod sampling;
pub mod synthgen;
pub mod trainer;

pub use error::{Error, Result};
