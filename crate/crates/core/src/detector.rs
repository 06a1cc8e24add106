//! Normality scoring and sequential detection.
//!
//! The normality score of an observed action under a predicted Gaussian is
//! the log-density normalized by the density's maximum, which reduces to
//! −½ of the squared Mahalanobis distance. Whenever the action actually
//! follows the predicted distribution the score has mean −d/2 and variance
//! d/2 regardless of how the prediction moves over time, so a mean shift
//! in the standardized score indicates a compromised agent. Detection runs
//! a two-sided CUSUM per (observer, victim) pair; per-observer alarms are
//! combined by a quorum rule.

use std::collections::BTreeMap;
use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{mahalanobis_sq, LinalgError};
use crate::predictor::GaussianParams;
use crate::AgentId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectorError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
}

/// Normality score of one observed action: z = −D²/2 ≤ 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityScore {
    pub z: f64,
    pub t: usize,
    pub observer: AgentId,
    pub victim: AgentId,
}

/// z = −½ · (action−mu)ᵀ Σ⁻¹ (action−mu), the log-density of the action
/// normalized by the density's maximum.
pub fn normality_score(params: &GaussianParams, action: &[f64]) -> Result<f64, DetectorError> {
    let d2 = mahalanobis_sq(action, &params.mu, &params.chol)?;
    Ok(-0.5 * d2)
}

/// Exact moments of the normality score when the action follows the
/// predicted d-dimensional Gaussian: mean −d/2, variance d/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StandardMoments {
    pub mean: f64,
    pub std: f64,
    pub dim: usize,
}

impl StandardMoments {
    pub fn for_dim(dim: usize) -> Self {
        let d = dim as f64;
        Self {
            mean: -d / 2.0,
            std: (d / 2.0).sqrt(),
            dim,
        }
    }
}

/// (z − (−d/2)) / √(d/2).
pub fn standardize(z: f64, dim: usize) -> f64 {
    let m = StandardMoments::for_dim(dim);
    (z - m.mean) / m.std
}

/// Which side of the two-sided CUSUM crossed its threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlarmSide {
    Plus,
    Minus,
}

/// Two-sided CUSUM state for one (observer, victim) pair.
///
/// The first alarm of an episode is latched and never cleared; the sums
/// keep accumulating so threshold sweeps over recorded statistics remain
/// meaningful.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CusumState {
    pub c_plus: f64,
    pub c_minus: f64,
    pub drift: f64,
    pub alarmed: Option<(AlarmSide, usize)>,
}

impl CusumState {
    pub fn new(drift: f64) -> Self {
        Self {
            c_plus: 0.0,
            c_minus: 0.0,
            drift,
            alarmed: None,
        }
    }
}

/// One CUSUM step on a standardized score:
/// c⁺ ← max(0, c⁺ + z_std − w), c⁻ ← max(0, c⁻ − z_std − w).
pub fn cusum_update(state: &CusumState, z_std: f64) -> CusumState {
    let mut next = state.clone();
    next.c_plus = (state.c_plus + z_std - state.drift).max(0.0);
    next.c_minus = (state.c_minus - z_std - state.drift).max(0.0);
    next
}

/// Detector configuration shared by the CUSUM and window modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    /// CUSUM drift w; subtracted from each standardized increment.
    pub drift: f64,
    pub beta_plus: f64,
    pub beta_minus: f64,
    /// Number of observers that must alarm before the team flags a victim.
    pub quorum: usize,
    pub mode: DetectorMode,
    /// Sliding-window length (window mode only).
    pub window_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorMode {
    Cusum,
    Window,
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        if self.beta_plus <= 0.0 || self.beta_minus <= 0.0 {
            return Err(DetectorError::InvalidConfig(
                "thresholds must be positive".into(),
            ));
        }
        if self.drift < 0.0 {
            return Err(DetectorError::InvalidConfig("drift must be >= 0".into()));
        }
        if self.quorum < 1 {
            return Err(DetectorError::InvalidConfig("quorum must be >= 1".into()));
        }
        if self.mode == DetectorMode::Window && self.window_len < 1 {
            return Err(DetectorError::InvalidConfig(
                "window_len must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            drift: 0.5,
            beta_plus: 5.0,
            beta_minus: 5.0,
            quorum: 1,
            mode: DetectorMode::Cusum,
            window_len: 10,
        }
    }
}

/// Latch the first strict threshold crossing. Ties between sides break to
/// plus so replays are deterministic.
pub fn check_alarm(
    state: &mut CusumState,
    cfg: &DetectorConfig,
    t: usize,
) -> Option<(AlarmSide, usize)> {
    if state.alarmed.is_none() {
        if state.c_plus > cfg.beta_plus {
            state.alarmed = Some((AlarmSide::Plus, t));
        } else if state.c_minus > cfg.beta_minus {
            state.alarmed = Some((AlarmSide::Minus, t));
        }
    }
    state.alarmed
}

/// Sliding-window alternative to CUSUM: once `window_len` scores have been
/// seen, each step emits |mean(window) − ref_mean| / ref_std over the most
/// recent `window_len` scores (stride 1).
#[derive(Debug, Clone)]
pub struct WindowScorer {
    buffer: VecDeque<f64>,
    window_len: usize,
    ref_mean: f64,
    ref_std: f64,
}

impl WindowScorer {
    pub fn new(window_len: usize, ref_mean: f64, ref_std: f64) -> Self {
        Self {
            buffer: VecDeque::with_capacity(window_len),
            window_len,
            ref_mean,
            ref_std,
        }
    }

    /// For the Gaussian score the reference moments come in closed form.
    pub fn for_gaussian(window_len: usize, dim: usize) -> Self {
        let m = StandardMoments::for_dim(dim);
        Self::new(window_len, m.mean, m.std)
    }

    pub fn update(&mut self, z: f64) -> Option<f64> {
        if self.buffer.len() == self.window_len {
            self.buffer.pop_front();
        }
        self.buffer.push_back(z);
        if self.buffer.len() < self.window_len {
            return None;
        }
        let mean = self.buffer.iter().sum::<f64>() / self.window_len as f64;
        Some((mean - self.ref_mean).abs() / self.ref_std)
    }
}

/// Earliest time t at which at least `quorum` observers have alarmed at or
/// before t, i.e. the quorum-th smallest alarm time. None when the quorum
/// is never met.
pub fn aggregate(alarms: &BTreeMap<AgentId, Option<usize>>, quorum: usize) -> Option<usize> {
    let mut times: Vec<usize> = alarms.values().filter_map(|t| *t).collect();
    if times.len() < quorum || quorum == 0 {
        return None;
    }
    times.sort_unstable();
    Some(times[quorum - 1])
}
