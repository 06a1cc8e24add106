//! Recurrent predictors of other agents' actions.
//!
//! For each (observer, victim) pair a small recurrent network maps the
//! observer's observation history to the parameters of a Gaussian over the
//! victim's next action: a mean vector and a lower-triangular Cholesky
//! factor of the covariance. The factor's free entries are unconstrained
//! network outputs; diagonal entries pass through an exponential map (plus
//! a small additive floor) so the implied covariance is always positive
//! definite. Training maximizes the log-likelihood of observed actions,
//! which after the Cholesky substitution reduces to minimizing
//! 2·Σ log l[k] + yᵀy with y the forward-substitution solve of
//! L·y = a − mu. Gradients are exact and hand-derived, with truncated
//! backpropagation through time.
//!
//! A categorical head variant (used by the discretized baseline) shares
//! the same trunk and training loop with a cross-entropy loss.

mod net;
mod train;

pub use net::{Architecture, HeadKind, PredictorNet, RecurrentState};
pub use train::{episode_loss, grad_nll, gradient_check, train, TrainError};

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{mahalanobis_sq, LinalgError, LowerTriangular};
use crate::AgentId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictorError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("operation requires a {expected} head")]
    WrongHead { expected: &'static str },
    #[error("training sample is empty")]
    EmptySample,
    #[error("categorical sample is missing target bins")]
    MissingBins,
}

/// Predicted action distribution: mean and Cholesky factor of the
/// covariance. The factor has strictly positive diagonal by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mu: Vec<f64>,
    pub chol: LowerTriangular,
}

impl GaussianParams {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Implied covariance L·Lᵀ.
    pub fn covariance(&self) -> crate::linalg::SymmetricPd {
        self.chol.gram()
    }

    /// Draw mu + L·xi with xi standard normal.
    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> Vec<f64> {
        let xi: Vec<f64> = (0..self.dim())
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let lx = self.chol.matvec(&xi).expect("dim");
        self.mu.iter().zip(lx).map(|(m, v)| m + v).collect()
    }
}

/// One episode of (predictor input, victim action) pairs. When the net is
/// configured to consume the victim's previous action, step t uses
/// `targets[t-1]` (zeros at t = 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    /// Quantized targets for categorical heads.
    pub target_bins: Option<Vec<usize>>,
}

impl TrainingSample {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Episodes per gradient step.
    pub batch_size: usize,
    pub epochs: usize,
    /// Gradient flow is cut at segment boundaries of this length.
    pub bptt_len: usize,
    pub hidden_size: usize,
    /// Additive lower bound on predicted Cholesky diagonals.
    pub diag_floor: f64,
    /// Feed the victim's previous action alongside the observation.
    pub include_prev_action: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            batch_size: 20,
            epochs: 10,
            bptt_len: 25,
            hidden_size: 128,
            diag_floor: 1e-3,
            include_prev_action: false,
        }
    }
}

/// The predictors available to a team: one net per (observer, victim)
/// pair, or — with parameter sharing — one net per victim stored under
/// every observer that watches it. Nets are immutable once inserted and
/// shared read-only across evaluation workers.
#[derive(Debug, Clone, Default)]
pub struct PredictorBank {
    nets: BTreeMap<(AgentId, AgentId), Arc<PredictorNet>>,
}

impl PredictorBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, observer: AgentId, victim: AgentId, net: Arc<PredictorNet>) {
        self.nets.insert((observer, victim), net);
    }

    /// Register one shared net for every listed observer of `victim`.
    pub fn insert_shared(
        &mut self,
        victim: AgentId,
        observers: &[AgentId],
        net: Arc<PredictorNet>,
    ) {
        for &observer in observers {
            self.nets.insert((observer, victim), Arc::clone(&net));
        }
    }

    pub fn get(&self, observer: AgentId, victim: AgentId) -> Option<&PredictorNet> {
        self.nets.get(&(observer, victim)).map(|n| n.as_ref())
    }

    pub fn observers_of(&self, victim: AgentId) -> Vec<AgentId> {
        self.nets
            .keys()
            .filter(|(_, v)| *v == victim)
            .map(|(o, _)| *o)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.nets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nets.is_empty()
    }

    /// Number of distinct underlying networks (shared nets count once).
    pub fn distinct_nets(&self) -> usize {
        let mut ptrs: Vec<*const PredictorNet> =
            self.nets.values().map(|n| Arc::as_ptr(n)).collect();
        ptrs.sort_unstable();
        ptrs.dedup();
        ptrs.len()
    }
}

/// Negative log-likelihood of `action` under `params`, up to the constant
/// (d/2)·log 2π: 2·Σ log l[k] + yᵀy with L·y = action − mu.
pub fn nll(params: &GaussianParams, action: &[f64]) -> Result<f64, PredictorError> {
    if action.len() != params.mu.len() {
        return Err(PredictorError::DimensionMismatch {
            expected: params.mu.len(),
            got: action.len(),
        });
    }
    let d2 = mahalanobis_sq(action, &params.mu, &params.chol)?;
    Ok(2.0 * params.chol.log_diag_sum() + d2)
}
