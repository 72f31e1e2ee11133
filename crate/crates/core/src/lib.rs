//! Continuous-time LQR by gradient flow on the Bellman error.
//!
//! The crate evaluates the Bellman error `e_K = −tr(M_K)` of a feedback
//! gain and its gradient, the classical LQR cost with plain and natural
//! gradients, integrates the resulting flows with an adaptive
//! Dormand–Prince scheme, and benchmarks them against a Kleinman oracle.

pub mod bellman;
pub mod bench;
pub mod cost_flow;
pub mod error;
pub mod examples;
pub mod flow;
pub mod lqr_core;
pub mod matlin;

#[cfg(test)]
mod testutil;

pub use bellman::{bellman_error, bellman_error_and_gradient, bellman_gradient};
pub use cost_flow::{lqr_cost, lqr_gradient, natural_gradient};
pub use error::{Error, Result};
pub use flow::{integrate, FlowConfig, FlowKind, FlowStatus, FlowTrajectory};
pub use lqr_core::{kleinman, Gain, SystemInstance};
pub use matlin::Mat;
