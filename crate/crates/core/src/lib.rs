//! Manifold-aware exploration for group-relative policy optimization of
//! rectified-flow generators, at desk scale.
//!
//! The crate is organized bottom-up:
//!
//! - [`schedule`]: noise-level grids and their clamping regimes.
//! - [`dynamics`]: integrated SDE variances, the Itô-corrected
//!   Euler–Maruyama transition and Gaussian transition log-densities.
//! - [`flownet`]: a small dense velocity network with explicit backward
//!   passes, flow-matching pretraining and a versioned checkpoint format.
//! - [`rlcore`]: group rollouts, composite rewards, group-normalized
//!   advantages, the temporal gradient equalizer and the policy loss.
//! - [`trustregion`]: Gaussian KL terms, moving anchors, the dual KL
//!   penalty and the KL coefficient schedule.
//! - [`oracle`]: independent numerical checks (quadrature, finite
//!   differences, analytic marginals, two-sample tests).
//! - [`harness`]: configuration, seeded experiment commands and CSV metrics.
//!
//! All randomness flows from explicit seeds; identical configurations
//! reproduce identical outputs bit for bit.

// Domain checks are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod flownet;
pub mod harness;
pub mod optim;
pub mod oracle;
pub mod rlcore;
pub mod schedule;
pub mod trustregion;

pub use error::{Error, Result};
