//! Decentralized detection of adversarial attacks in cooperative
//! multi-agent systems with continuous actions.
//!
//! Each agent learns, for every neighbor whose actions it can observe, a
//! Gaussian predictor of that neighbor's next action. Observed actions are
//! scored by their normalized log-likelihood; because the score has known
//! constant moments under normal behavior, a two-sided CUSUM on the
//! standardized score detects compromised agents in real time. The crate
//! also ships synthetic cooperative environments with scripted stochastic
//! policies, a suite of action-space attacks, a discretized baseline
//! detector, and an ROC/AUC/time-to-detection evaluation harness.

/// Agent identifier within one environment instance.
pub type AgentId = usize;

pub mod attacks;
pub mod baselines;
pub mod detector;
pub mod env;
pub mod eval;
pub mod linalg;
pub mod model_io;
pub mod predictor;
pub mod seeding;
pub mod trace;
