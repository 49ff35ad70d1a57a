//! Bootstrapped Dual Policy Iteration (BDPI) with policy-shaping transfer.
//!
//! The crate is organised bottom-up:
//!
//! - [`approximator`]: small feed-forward networks trained by full-batch
//!   gradient descent, used for the critics and the actor.
//! - [`mdp`]: experiences, the replay buffer and the episode loop.
//! - [`bdpi`]: clipped twin-Q critics and the actor update toward their
//!   greedy policies.
//! - [`transfer`]: policy shaping (acting-time and learning-time transfer)
//!   and the frozen advisor.
//! - [`navsim`]: a deterministic differential-drive robot in a square room
//!   with a pillar, observed through proximity sensors or a depth camera.
//! - [`harness`]: the five experimental settings, CSV logging, summary
//!   statistics and SVG learning curves.

pub mod approximator;
pub mod bdpi;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod navsim;
pub mod transfer;

pub use error::{Error, Result};
