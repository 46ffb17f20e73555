//! KL trust regions: analytic Gaussian KL, the log-probability estimate,
//! moving anchors, the dual penalty and the KL coefficient schedule.

mod controller;
mod drift;
mod kl;

pub use controller::{ControllerSignal, KlController, KlControllerConfig};
pub use drift::{simulate_drift, DriftConfig};
pub use kl::{
    gaussian_kl, kl_penalty, maybe_refresh_anchor, policy_kl, stepwise_kl_estimate, KlMode,
    TrustRegionConfig, TrustRegionState,
};
