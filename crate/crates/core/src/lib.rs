//! Vicarious conditioning as an intrinsic reward.
//!
//! A frozen Siamese memory-augmented classifier, trained on a few
//! observation-only demonstrations, scores the agent's recent observations.
//! Confident matches to a demonstrated behaviour become a gated intrinsic
//! reward that shapes a PPO agent in worlds whose terminal conditions pay
//! nothing.

pub mod agent;
pub mod demos;
pub mod envs;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod reward;
pub mod smann;

pub use error::{Error, Result};
