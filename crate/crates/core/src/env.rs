//! Synthetic cooperative environments with continuous actions.
//!
//! Two kinds are provided: `formation2d` (agents steer toward a shared
//! goal in the plane while keeping formation) and `line1d` (the same task
//! on a line). Agents follow scripted stochastic policies whose action
//! distributions are known in closed form, which gives every calibration
//! test an analytic ground truth: the pre-clip action of agent j is
//! N(gain·(goal − p_j) + cohesion_j, noise_cov), where cohesion is a
//! fixed fraction of the gain times the mean relative position of j's
//! observable neighbors.
//!
//! Dynamics are deterministic given actions; all stochasticity lives in
//! the scripted policies (and, during evaluation, attacks).

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{cholesky, LowerTriangular, SymmetricPd};
use crate::seeding::{rng_for, Stream};

/// Position update scale: p' = p + MOVE_SCALE · action.
pub const MOVE_SCALE: f64 = 0.1;
/// Cohesion gain as a fraction of the goal gain.
pub const COHESION_FRACTION: f64 = 0.2;
/// Target inter-agent spacing entering the formation penalty.
pub const TARGET_SPACING_2D: f64 = 1.0;
pub const TARGET_SPACING_1D: f64 = 0.5;
/// Initial positions are drawn uniformly in a box of this half-width
/// around the goal.
pub const INIT_HALF_WIDTH: f64 = 0.6;
/// The goal itself is drawn uniformly in a box of this half-width.
pub const GOAL_HALF_WIDTH: f64 = 0.5;
/// Slack tolerated before an action is rejected as out of bounds.
pub const BOUNDS_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("action out of bounds: agent {agent}, dim {dim}, value {value}")]
    OutOfBounds { agent: usize, dim: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Formation2d,
    Line1d,
}

impl EnvKind {
    pub fn action_dim(self) -> usize {
        match self {
            EnvKind::Formation2d => 2,
            EnvKind::Line1d => 1,
        }
    }

    fn target_spacing(self) -> f64 {
        match self {
            EnvKind::Formation2d => TARGET_SPACING_2D,
            EnvKind::Line1d => TARGET_SPACING_1D,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Observability {
    /// Neighbors i−1 and i+1 modulo the agent count.
    Ring,
    /// Every other agent.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub num_agents: usize,
    pub horizon: usize,
    /// Per-dimension (low, high) action bounds.
    pub action_bounds: Vec<(f64, f64)>,
    /// Covariance of the scripted policies' action noise.
    pub noise_cov: SymmetricPd,
    /// Goal-seeking gain of the scripted policies.
    pub gain: f64,
    /// Discount applied by attack training objectives; 1.0 keeps the
    /// finite-horizon sum undiscounted.
    pub discount: f64,
    pub observability: Observability,
    pub seed: u64,
}

impl EnvConfig {
    pub fn action_dim(&self) -> usize {
        self.kind.action_dim()
    }

    /// Observation length: own position, relative positions of observable
    /// neighbors, relative goal.
    pub fn obs_dim(&self) -> usize {
        let d = self.action_dim();
        d * (2 + self.neighbor_count())
    }

    fn neighbor_count(&self) -> usize {
        match self.observability {
            Observability::Ring => 2.min(self.num_agents - 1),
            Observability::Full => self.num_agents - 1,
        }
    }
}

/// Environment with a validated config and pre-factored policy noise.
#[derive(Debug, Clone)]
pub struct Env {
    cfg: EnvConfig,
    noise_chol: LowerTriangular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    /// Flattened positions, `action_dim` entries per agent.
    pub positions: Vec<f64>,
    pub goal: Vec<f64>,
    pub t: usize,
}

/// Observation layout: [own position | relative position of each
/// observable neighbor, ascending id | relative goal].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointAction(pub Vec<Vec<f64>>);

impl Env {
    pub fn new(cfg: EnvConfig) -> Result<Self, EnvError> {
        if cfg.num_agents < 3 {
            return Err(EnvError::InvalidConfig("need at least 3 agents".into()));
        }
        if cfg.horizon < 10 {
            return Err(EnvError::InvalidConfig("horizon must be >= 10".into()));
        }
        let d = cfg.action_dim();
        if cfg.action_bounds.len() != d {
            return Err(EnvError::InvalidConfig(format!(
                "need {d} action bounds, got {}",
                cfg.action_bounds.len()
            )));
        }
        if cfg.action_bounds.iter().any(|(lo, hi)| lo >= hi) {
            return Err(EnvError::InvalidConfig("bounds must satisfy low < high".into()));
        }
        if cfg.noise_cov.dim() != d {
            return Err(EnvError::InvalidConfig(format!(
                "noise covariance must be {d}x{d}"
            )));
        }
        if cfg.gain <= 0.0 {
            return Err(EnvError::InvalidConfig("gain must be positive".into()));
        }
        if !(cfg.discount > 0.0 && cfg.discount <= 1.0) {
            return Err(EnvError::InvalidConfig("discount must lie in (0, 1]".into()));
        }
        let noise_chol = cholesky(&cfg.noise_cov)
            .map_err(|e| EnvError::InvalidConfig(format!("noise covariance not SPD: {e}")))?;
        Ok(Self { cfg, noise_chol })
    }

    pub fn cfg(&self) -> &EnvConfig {
        &self.cfg
    }

    /// Observable neighbors of `agent`, ascending by id. Ring mode wraps
    /// around; full mode lists everyone else. Every agent is observed by
    /// at least one other in both modes.
    pub fn observable_neighbors(&self, agent: usize) -> Vec<usize> {
        let k = self.cfg.num_agents;
        match self.cfg.observability {
            Observability::Full => (0..k).filter(|&j| j != agent).collect(),
            Observability::Ring => {
                let mut ids: Vec<usize> = vec![(agent + k - 1) % k, (agent + 1) % k];
                ids.sort_unstable();
                ids.dedup();
                ids
            }
        }
    }

    fn observation(&self, state: &EnvState, agent: usize) -> Observation {
        let d = self.cfg.action_dim();
        let own = &state.positions[agent * d..(agent + 1) * d];
        let mut v = Vec::with_capacity(self.cfg.obs_dim());
        v.extend_from_slice(own);
        for j in self.observable_neighbors(agent) {
            let other = &state.positions[j * d..(j + 1) * d];
            v.extend(other.iter().zip(own).map(|(o, s)| o - s));
        }
        v.extend(state.goal.iter().zip(own).map(|(g, s)| g - s));
        Observation(v)
    }

    fn observations(&self, state: &EnvState) -> Vec<Observation> {
        (0..self.cfg.num_agents)
            .map(|i| self.observation(state, i))
            .collect()
    }

    /// Start an episode: goal and positions drawn uniformly; deterministic
    /// in (cfg.seed, episode_seed).
    pub fn reset(&self, episode_seed: u64) -> (EnvState, Vec<Observation>) {
        let d = self.cfg.action_dim();
        let mut rng = rng_for(self.cfg.seed, episode_seed, Stream::EnvInit);
        let goal: Vec<f64> = (0..d)
            .map(|_| rng.gen_range(-GOAL_HALF_WIDTH..GOAL_HALF_WIDTH))
            .collect();
        let mut positions = Vec::with_capacity(self.cfg.num_agents * d);
        for _ in 0..self.cfg.num_agents {
            for k in 0..d {
                positions.push(goal[k] + rng.gen_range(-INIT_HALF_WIDTH..INIT_HALF_WIDTH));
            }
        }
        let state = EnvState {
            positions,
            goal,
            t: 0,
        };
        let obs = self.observations(&state);
        (state, obs)
    }

    /// Team cost of a position configuration: mean distance to goal plus
    /// mean pairwise deviation from the target spacing. Reward = −cost.
    /// Accepts any number of agents so value surrogates can score partial
    /// views of the system.
    pub fn team_cost(&self, positions: &[f64], goal: &[f64]) -> f64 {
        let d = self.cfg.action_dim();
        let k = positions.len() / d;
        let dist = |a: &[f64], b: &[f64]| -> f64 {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        };
        let mut goal_cost = 0.0;
        for i in 0..k {
            goal_cost += dist(&positions[i * d..(i + 1) * d], goal);
        }
        goal_cost /= k as f64;

        let spacing = self.cfg.kind.target_spacing();
        let mut pair_cost = 0.0;
        let mut pairs = 0;
        for i in 0..k {
            for j in (i + 1)..k {
                let dij = dist(&positions[i * d..(i + 1) * d], &positions[j * d..(j + 1) * d]);
                pair_cost += (dij - spacing).abs();
                pairs += 1;
            }
        }
        goal_cost + pair_cost / pairs as f64
    }

    /// Advance one step. Returns (next state, observations, team reward,
    /// done). Positions move by MOVE_SCALE times the action.
    pub fn step(
        &self,
        state: &EnvState,
        joint: &JointAction,
    ) -> Result<(EnvState, Vec<Observation>, f64, bool), EnvError> {
        let d = self.cfg.action_dim();
        if joint.0.len() != self.cfg.num_agents {
            return Err(EnvError::DimensionMismatch {
                expected: self.cfg.num_agents,
                got: joint.0.len(),
            });
        }
        for (agent, action) in joint.0.iter().enumerate() {
            if action.len() != d {
                return Err(EnvError::DimensionMismatch {
                    expected: d,
                    got: action.len(),
                });
            }
            for (dim, (&a, &(lo, hi))) in action.iter().zip(&self.cfg.action_bounds).enumerate() {
                if a < lo - BOUNDS_SLACK || a > hi + BOUNDS_SLACK {
                    return Err(EnvError::OutOfBounds { agent, dim, value: a });
                }
            }
        }
        let mut positions = state.positions.clone();
        for (agent, action) in joint.0.iter().enumerate() {
            for (k, &a) in action.iter().enumerate() {
                positions[agent * d + k] += MOVE_SCALE * a;
            }
        }
        let reward = -self.team_cost(&positions, &state.goal);
        let next = EnvState {
            positions,
            goal: state.goal.clone(),
            t: state.t + 1,
        };
        let done = next.t >= self.cfg.horizon;
        let obs = self.observations(&next);
        Ok((next, obs, reward, done))
    }

    pub fn clip_action(&self, action: &mut [f64]) {
        for (a, &(lo, hi)) in action.iter_mut().zip(&self.cfg.action_bounds) {
            *a = a.clamp(lo, hi);
        }
    }

    /// Mean of the scripted policy's pre-clip action for `agent`, read off
    /// the agent's observation: gain·(relative goal) plus cohesion toward
    /// the mean relative neighbor position.
    pub fn scripted_mean_from_obs(&self, agent: usize, obs: &Observation) -> Vec<f64> {
        let d = self.cfg.action_dim();
        let neighbors = self.observable_neighbors(agent);
        let goal_off = d * (1 + neighbors.len());
        let rel_goal = &obs.0[goal_off..goal_off + d];
        let mut mean: Vec<f64> = rel_goal.iter().map(|g| self.cfg.gain * g).collect();
        let coh = COHESION_FRACTION * self.cfg.gain / neighbors.len() as f64;
        for n in 0..neighbors.len() {
            let rel = &obs.0[d * (1 + n)..d * (2 + n)];
            for (m, r) in mean.iter_mut().zip(rel) {
                *m += coh * r;
            }
        }
        mean
    }

    /// Mean of the scripted policy's pre-clip action computed from the
    /// full state; the analytic ground truth for calibration tests.
    pub fn scripted_mean_from_state(&self, state: &EnvState, agent: usize) -> Vec<f64> {
        self.scripted_mean_from_obs(agent, &self.observation(state, agent))
    }

    /// Scripted stochastic policy: mean plus correlated Gaussian noise,
    /// clipped to the action box.
    pub fn scripted_policy<R: Rng>(&self, agent: usize, obs: &Observation, rng: &mut R) -> Vec<f64> {
        let d = self.cfg.action_dim();
        let mut action = self.scripted_mean_from_obs(agent, obs);
        let xi: Vec<f64> = (0..d)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let noise = self.noise_chol.matvec(&xi).expect("noise dim");
        for (a, n) in action.iter_mut().zip(noise) {
            *a += n;
        }
        self.clip_action(&mut action);
        action
    }

    /// Rearranged predictor input for (observer, victim): the victim's
    /// relative position is moved to the fixed slot right after the
    /// observer's own position, so one predictor layout serves every
    /// observer of a victim. Layout: [own | victim rel | other neighbor
    /// rels ascending | goal rel].
    pub fn predictor_input(&self, observer: usize, victim: usize, obs: &Observation) -> Vec<f64> {
        let d = self.cfg.action_dim();
        let neighbors = self.observable_neighbors(observer);
        let slot = neighbors
            .iter()
            .position(|&j| j == victim)
            .expect("victim must be an observable neighbor of the observer");
        let mut v = Vec::with_capacity(obs.0.len());
        v.extend_from_slice(&obs.0[0..d]);
        v.extend_from_slice(&obs.0[d * (1 + slot)..d * (2 + slot)]);
        for n in 0..neighbors.len() {
            if n != slot {
                v.extend_from_slice(&obs.0[d * (1 + n)..d * (2 + n)]);
            }
        }
        let goal_off = d * (1 + neighbors.len());
        v.extend_from_slice(&obs.0[goal_off..goal_off + d]);
        v
    }
}

/// A workable default formation2d config with correlated policy noise.
pub fn formation2d_default(seed: u64) -> EnvConfig {
    EnvConfig {
        kind: EnvKind::Formation2d,
        num_agents: 4,
        horizon: 50,
        action_bounds: vec![(-1.0, 1.0), (-1.0, 1.0)],
        noise_cov: correlated_cov(2, 0.35, 0.8),
        gain: 0.3,
        discount: 1.0,
        observability: Observability::Full,
        seed,
    }
}

/// A workable default line1d config.
pub fn line1d_default(seed: u64) -> EnvConfig {
    EnvConfig {
        kind: EnvKind::Line1d,
        num_agents: 5,
        horizon: 60,
        action_bounds: vec![(-1.0, 1.0)],
        noise_cov: SymmetricPd::scaled_identity(1, 0.25),
        gain: 0.3,
        discount: 1.0,
        observability: Observability::Ring,
        seed,
    }
}

/// Equicorrelated covariance: variance on the diagonal, variance·rho off
/// the diagonal.
pub fn correlated_cov(dim: usize, variance: f64, rho: f64) -> SymmetricPd {
    let mut rows = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            rows[i * dim + j] = if i == j { variance } else { variance * rho };
        }
    }
    SymmetricPd::from_rows(dim, &rows).expect("square")
}
