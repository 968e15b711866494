//! BP-LCZ: band-grouped SAR / multi-spectral fusion for local climate zone
//! classification, with band-group prompting and a supervised contrastive
//! training objective.
//!
//! The pipeline has four stages:
//! 1. band grouping ([`bands`]) — 7 physically motivated channel groups,
//! 2. band group prompting ([`prompts`], [`encoders`]) — a textual prompt per
//!    group aligned with the group's image embedding,
//! 3. supervised contrastive training ([`contrastive`]) — a batch-level 0/1
//!    target matrix marking all same-label pairs as positives,
//! 4. fused classification ([`classifier`], [`train`]) — concatenated group
//!    features into a classifier, trained jointly with the contrastive loss.

pub mod bands;
pub mod checkpoint;
pub mod classifier;
pub mod contrastive;
pub mod data;
pub mod encoders;
pub mod error;
pub mod figures;
pub mod manifest;
pub mod metrics;
pub mod model;
pub mod prompts;
pub mod tape;
pub mod train;
pub mod tsne;

pub use error::{Error, Result};
