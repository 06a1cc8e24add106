//! Attack strategies against a victim agent's actions.
//!
//! Four kinds: uniform-random actions (rand), a bounded sign-gradient step
//! against a one-step value surrogate (grad), a learned reward-minimizing
//! linear policy (act), and the same learner with a detectability penalty
//! on the normality score (dyn). Learned policies are obtained with the
//! cross-entropy method over the weights of a clamped linear map from the
//! victim's observation to its action.
//!
//! Every emitted adversarial action lies inside the victim's action box.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{normality_score, StandardMoments};
use crate::env::{Env, EnvError, JointAction, Observation, MOVE_SCALE};
use crate::predictor::{PredictorBank, RecurrentState};
use crate::seeding::{derive_seed, rng_for, Stream};
use crate::AgentId;

/// Sentinel onset meaning "never attack".
pub const T0_NEVER: usize = usize::MAX;

/// Finite-difference step for the surrogate gradient.
pub const GRAD_FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttackError {
    #[error("attack kind {0:?} has no trainable policy")]
    UnknownTrainable(AttackKind),
    #[error("attack requires trained policy parameters")]
    MissingPolicy,
    #[error("dyn attack training requires trained predictors")]
    MissingPredictors,
    #[error("policy parameter vector has wrong length: expected {expected}, got {got}")]
    BadPolicyParams { expected: usize, got: usize },
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Rand,
    Grad,
    Act,
    Dyn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Compromised agents; attacks on several victims run independently.
    pub victims: Vec<AgentId>,
    /// First attacked step; `T0_NEVER` disables the attack entirely.
    pub t0: usize,
    /// Sign-gradient step size (grad only).
    pub epsilon: f64,
    /// Detectability-penalty weight (dyn only), uniform across observers.
    pub lambda: f64,
    /// Trained linear-policy weights (act/dyn).
    pub policy_params: Option<Vec<f64>>,
}

impl AttackSpec {
    pub fn new(kind: AttackKind, victims: Vec<AgentId>, t0: usize) -> Self {
        Self {
            kind,
            victims,
            t0,
            epsilon: 0.0,
            lambda: 0.0,
            policy_params: None,
        }
    }

    pub fn active_at(&self, t: usize) -> bool {
        self.t0 != T0_NEVER && t >= self.t0
    }
}

/// Cross-entropy-method search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CemConfig {
    pub population: usize,
    pub elite_frac: f64,
    pub iterations: usize,
    pub episodes_per_candidate: usize,
    /// Initial sampling standard deviation around the zero policy.
    pub init_noise_std: f64,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            population: 40,
            elite_frac: 0.25,
            iterations: 15,
            episodes_per_candidate: 4,
            init_noise_std: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CemResult {
    pub params: Vec<f64>,
    /// Mean elite objective per iteration (minimization view).
    pub elite_curve: Vec<f64>,
    pub best_objective: f64,
}

/// Uniform draw from the action box, one independent draw per dimension.
pub fn rand_attack<R: Rng>(bounds: &[(f64, f64)], rng: &mut R) -> Vec<f64> {
    bounds
        .iter()
        .map(|&(lo, hi)| {
            if lo == hi {
                lo
            } else {
                rng.gen_range(lo..hi)
            }
        })
        .collect()
}

/// Projected sign-gradient step against a value surrogate:
/// Proj{ a − ε·sign(∇_a Q(a)) } with the gradient estimated by central
/// finite differences and Proj the per-dimension clamp onto the box.
pub fn grad_attack<Q: Fn(&[f64]) -> f64>(
    action: &[f64],
    q: Q,
    epsilon: f64,
    bounds: &[(f64, f64)],
) -> Vec<f64> {
    let mut out = action.to_vec();
    for k in 0..action.len() {
        let mut plus = action.to_vec();
        let mut minus = action.to_vec();
        plus[k] += GRAD_FD_STEP;
        minus[k] -= GRAD_FD_STEP;
        let g = (q(&plus) - q(&minus)) / (2.0 * GRAD_FD_STEP);
        let step = if g > 0.0 {
            -epsilon
        } else if g < 0.0 {
            epsilon
        } else {
            0.0
        };
        out[k] = (action[k] + step).clamp(bounds[k].0, bounds[k].1);
    }
    out
}

/// Positions the victim can reconstruct from its own observation: itself
/// plus its observable neighbors, with the goal.
#[derive(Debug, Clone)]
pub struct LocalView {
    /// Present agents, ascending; includes the victim.
    pub ids: Vec<AgentId>,
    /// Flattened positions in `ids` order.
    pub positions: Vec<f64>,
    pub goal: Vec<f64>,
}

pub fn local_view(env: &Env, victim: AgentId, obs: &Observation) -> LocalView {
    let d = env.cfg().action_dim();
    let own = &obs.0[0..d];
    let neighbors = env.observable_neighbors(victim);
    let mut ids = vec![victim];
    let mut positions = own.to_vec();
    for (n, &j) in neighbors.iter().enumerate() {
        ids.push(j);
        let rel = &obs.0[d * (1 + n)..d * (2 + n)];
        positions.extend(rel.iter().zip(own).map(|(r, s)| r + s));
    }
    let goal_off = d * (1 + neighbors.len());
    let goal: Vec<f64> = obs.0[goal_off..goal_off + d]
        .iter()
        .zip(own)
        .map(|(r, s)| r + s)
        .collect();
    LocalView {
        ids,
        positions,
        goal,
    }
}

/// One-step-lookahead team value of playing `candidate`: simulate the next
/// positions with the victim on the candidate action and every visible
/// agent on its scripted mean action, and return the team reward of the
/// resulting configuration. Higher is better for the team.
pub fn q_surrogate(env: &Env, victim: AgentId, obs: &Observation, candidate: &[f64]) -> f64 {
    let d = env.cfg().action_dim();
    let view = local_view(env, victim, obs);
    let n = view.ids.len();
    let mut next = view.positions.clone();

    for (slot, &id) in view.ids.iter().enumerate() {
        let own = &view.positions[slot * d..(slot + 1) * d];
        let mut action: Vec<f64> = if id == victim {
            candidate.to_vec()
        } else {
            // Scripted mean over the neighbors of `id` present in the view.
            let mut mean: Vec<f64> = view
                .goal
                .iter()
                .zip(own)
                .map(|(g, p)| env.cfg().gain * (g - p))
                .collect();
            let wanted = env.observable_neighbors(id);
            let present: Vec<usize> = view
                .ids
                .iter()
                .enumerate()
                .filter(|(_, j)| wanted.contains(j))
                .map(|(s, _)| s)
                .collect();
            if !present.is_empty() {
                let coh = crate::env::COHESION_FRACTION * env.cfg().gain / present.len() as f64;
                for &s in &present {
                    let other = &view.positions[s * d..(s + 1) * d];
                    for k in 0..d {
                        mean[k] += coh * (other[k] - own[k]);
                    }
                }
            }
            mean
        };
        env.clip_action(&mut action);
        for k in 0..d {
            next[slot * d + k] += MOVE_SCALE * action[k];
        }
    }
    let _ = n;
    -env.team_cost(&next, &view.goal)
}

/// Number of weights of the clamped linear attack policy
/// action = clamp(W·obs + b).
pub fn linear_policy_param_count(env: &Env) -> usize {
    let d = env.cfg().action_dim();
    d * env.cfg().obs_dim() + d
}

/// Evaluate the linear attack policy on an observation.
pub fn linear_policy_action(
    env: &Env,
    params: &[f64],
    obs: &Observation,
) -> Result<Vec<f64>, AttackError> {
    let d = env.cfg().action_dim();
    let n = env.cfg().obs_dim();
    if params.len() != d * n + d {
        return Err(AttackError::BadPolicyParams {
            expected: d * n + d,
            got: params.len(),
        });
    }
    let mut action = Vec::with_capacity(d);
    for i in 0..d {
        let row = &params[i * n..(i + 1) * n];
        let bias = params[d * n + i];
        let v: f64 = bias + row.iter().zip(&obs.0).map(|(w, x)| w * x).sum::<f64>();
        action.push(v);
    }
    env.clip_action(&mut action);
    Ok(action)
}

/// Runtime context handed to [`apply_attack`]: the per-victim random
/// stream and, where applicable, the trained policy.
pub struct AttackContext<'a> {
    pub env: &'a Env,
    pub rng: &'a mut ChaCha8Rng,
}

/// Manipulated action for one victim at one step. Before the onset step
/// the normal action passes through bit-identically.
pub fn apply_attack(
    spec: &AttackSpec,
    t: usize,
    victim: AgentId,
    obs: &Observation,
    normal_action: &[f64],
    ctx: &mut AttackContext<'_>,
) -> Result<Vec<f64>, AttackError> {
    if !spec.active_at(t) {
        return Ok(normal_action.to_vec());
    }
    match spec.kind {
        AttackKind::Rand => Ok(rand_attack(&ctx.env.cfg().action_bounds, ctx.rng)),
        AttackKind::Grad => Ok(grad_attack(
            normal_action,
            |cand| q_surrogate(ctx.env, victim, obs, cand),
            spec.epsilon,
            &ctx.env.cfg().action_bounds,
        )),
        AttackKind::Act | AttackKind::Dyn => {
            let params = spec
                .policy_params
                .as_deref()
                .ok_or(AttackError::MissingPolicy)?;
            linear_policy_action(ctx.env, params, obs)
        }
    }
}

/// Adversarial objective of one candidate policy on one episode: the
/// discounted sum of team reward plus, for each observer of each victim,
/// lambda times |z − m_z| on attacked steps. The adversary minimizes this.
fn episode_objective(
    env: &Env,
    victims: &[AgentId],
    params: &[f64],
    lambda: f64,
    bank: Option<&PredictorBank>,
    episode_seed: u64,
) -> Result<f64, AttackError> {
    let k = env.cfg().num_agents;
    let d = env.cfg().action_dim();
    let moments = StandardMoments::for_dim(d);
    let mut rngs: Vec<_> = (0..k)
        .map(|agent| rng_for(env.cfg().seed, episode_seed, Stream::PolicyNoise { agent }))
        .collect();

    // Observer streams for the detectability penalty.
    let mut observer_states: Vec<(AgentId, AgentId, RecurrentState)> = Vec::new();
    if lambda > 0.0 {
        let bank = bank.ok_or(AttackError::MissingPredictors)?;
        for &v in victims {
            for observer in 0..k {
                if observer != v && env.observable_neighbors(observer).contains(&v) {
                    if let Some(net) = bank.get(observer, v) {
                        observer_states.push((observer, v, net.initial_state()));
                    }
                }
            }
        }
        if observer_states.is_empty() {
            return Err(AttackError::MissingPredictors);
        }
    }

    let (mut state, mut obs) = env.reset(episode_seed);
    let mut objective = 0.0;
    let mut discount = 1.0;
    let mut prev_actions: Vec<Option<Vec<f64>>> = vec![None; k];
    loop {
        let mut actions: Vec<Vec<f64>> = (0..k)
            .map(|i| env.scripted_policy(i, &obs[i], &mut rngs[i]))
            .collect();
        for &v in victims {
            actions[v] = linear_policy_action(env, params, &obs[v])?;
        }

        let mut penalty = 0.0;
        if lambda > 0.0 {
            let bank = bank.expect("checked above");
            for (observer, v, rstate) in observer_states.iter_mut() {
                let net = bank.get(*observer, *v).expect("stream implies net");
                let input = env.predictor_input(*observer, *v, &obs[*observer]);
                let prev = prev_actions[*v].as_deref();
                let (next, pred) = net
                    .predict_step(rstate, &input, prev)
                    .expect("predictor dimensions");
                *rstate = next;
                let z = normality_score(&pred, &actions[*v]).expect("score dimensions");
                penalty += lambda * (z - moments.mean).abs();
            }
        }

        for (slot, action) in actions.iter().enumerate() {
            prev_actions[slot] = Some(action.clone());
        }
        let joint = JointAction(actions);
        let (next_state, next_obs, reward, done) = env.step(&state, &joint)?;
        objective += discount * (reward + penalty);
        discount *= env.cfg().discount;
        state = next_state;
        obs = next_obs;
        if done {
            return Ok(objective);
        }
    }
}

/// Cross-entropy-method search for an attack policy.
///
/// Candidates are parameter vectors of the clamped linear policy, sampled
/// from a diagonal Gaussian that is refit to the elite fraction each
/// iteration. Previous elites re-enter the next population and all
/// candidates share the same evaluation episodes, so the mean elite
/// objective is non-increasing across iterations. `kind` must be act or
/// dyn; with lambda = 0 the dyn objective coincides with act.
pub fn cem_train(
    env: &Env,
    kind: AttackKind,
    victims: &[AgentId],
    lambda: f64,
    bank: Option<&PredictorBank>,
    cem: &CemConfig,
    seed: u64,
) -> Result<CemResult, AttackError> {
    match kind {
        AttackKind::Act | AttackKind::Dyn => {}
        other => return Err(AttackError::UnknownTrainable(other)),
    }
    let lambda = if kind == AttackKind::Act { 0.0 } else { lambda };
    if kind == AttackKind::Dyn && lambda > 0.0 && bank.is_none() {
        return Err(AttackError::MissingPredictors);
    }

    let dim = linear_policy_param_count(env);
    let episode_seeds: Vec<u64> = (0..cem.episodes_per_candidate)
        .map(|e| derive_seed(seed, e as u64, Stream::CemEpisode { episode: e as u64 }))
        .collect();
    let evaluate = |params: &[f64]| -> Result<f64, AttackError> {
        let mut total = 0.0;
        for &es in &episode_seeds {
            total += episode_objective(env, victims, params, lambda, bank, es)?;
        }
        Ok(total / episode_seeds.len() as f64)
    };

    let mut mean = vec![0.0; dim];
    let mut std = vec![cem.init_noise_std; dim];
    let mut rng = rng_for(seed, 0, Stream::CemSample);
    let elite_count = ((cem.population as f64 * cem.elite_frac).ceil() as usize)
        .clamp(1, cem.population);

    let mut carried: Vec<Vec<f64>> = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut elite_curve = Vec::with_capacity(cem.iterations);

    for _ in 0..cem.iterations {
        let mut population = carried.clone();
        while population.len() < cem.population {
            let cand: Vec<f64> = (0..dim)
                .map(|i| {
                    mean[i] + std[i] * rng.sample::<f64, _>(rand_distr::StandardNormal)
                })
                .collect();
            population.push(cand);
        }

        let objectives: Vec<f64> = population
            .par_iter()
            .map(|cand| evaluate(cand))
            .collect::<Result<Vec<_>, _>>()?;

        let mut order: Vec<usize> = (0..population.len()).collect();
        order.sort_by(|&a, &b| objectives[a].partial_cmp(&objectives[b]).unwrap());
        let elites: Vec<&Vec<f64>> = order[..elite_count].iter().map(|&i| &population[i]).collect();
        let elite_mean_objective =
            order[..elite_count].iter().map(|&i| objectives[i]).sum::<f64>() / elite_count as f64;
        elite_curve.push(elite_mean_objective);

        let top = order[0];
        if best.as_ref().map_or(true, |(b, _)| objectives[top] < *b) {
            best = Some((objectives[top], population[top].clone()));
        }

        for i in 0..dim {
            let m = elites.iter().map(|e| e[i]).sum::<f64>() / elite_count as f64;
            let v = elites
                .iter()
                .map(|e| (e[i] - m) * (e[i] - m))
                .sum::<f64>()
                / elite_count as f64;
            mean[i] = m;
            std[i] = v.sqrt().max(0.02);
        }
        carried = elites.into_iter().cloned().collect();
    }

    let (best_objective, params) = best.expect("at least one iteration");
    Ok(CemResult {
        params,
        elite_curve,
        best_objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::formation2d_default;

    fn env() -> Env {
        Env::new(formation2d_default(19)).unwrap()
    }

    #[test]
    fn rand_attack_stays_in_box_and_centers() {
        let bounds = [(-1.0, 1.0), (-1.0, 1.0)];
        let mut rng = rng_for(1, 0, Stream::Attack { victim: 0 });
        let n = 10_000;
        let mut sums = [0.0; 2];
        for _ in 0..n {
            let a = rand_attack(&bounds, &mut rng);
            for (k, v) in a.iter().enumerate() {
                assert!(*v >= -1.0 && *v <= 1.0);
                sums[k] += v;
            }
        }
        for s in sums {
            assert!((s / n as f64).abs() < 0.03);
        }
    }

    #[test]
    fn rand_attack_degenerate_bounds() {
        let mut rng = rng_for(1, 0, Stream::Attack { victim: 0 });
        let a = rand_attack(&[(0.25, 0.25)], &mut rng);
        assert_eq!(a, vec![0.25]);
    }

    #[test]
    fn rand_attack_uniformity_chi_square() {
        // 20 bins per dimension; critical value chi2(0.01, df=19) = 36.1909.
        let bounds = [(-1.0, 1.0), (-1.0, 1.0)];
        let mut rng = rng_for(5, 0, Stream::Attack { victim: 1 });
        let n = 100_000;
        let mut counts = [[0usize; 20]; 2];
        for _ in 0..n {
            let a = rand_attack(&bounds, &mut rng);
            for (k, v) in a.iter().enumerate() {
                let bin = (((v + 1.0) / 2.0 * 20.0) as usize).min(19);
                counts[k][bin] += 1;
            }
        }
        let expected = n as f64 / 20.0;
        for dim_counts in counts {
            let chi2: f64 = dim_counts
                .iter()
                .map(|&c| {
                    let d = c as f64 - expected;
                    d * d / expected
                })
                .sum();
            assert!(chi2 < 36.1909, "chi-square statistic {chi2}");
        }
    }

    #[test]
    fn grad_attack_zero_epsilon_is_identity() {
        let a = [0.3, -0.4];
        let out = grad_attack(&a, |c| c[0] + c[1], 0.0, &[(-1.0, 1.0), (-1.0, 1.0)]);
        assert_eq!(out, a.to_vec());
    }

    #[test]
    fn grad_attack_moves_against_sign() {
        // Q = c0 − c1 has sign gradient (1, −1).
        let out = grad_attack(
            &[0.0, 0.0],
            |c| c[0] - c[1],
            0.1,
            &[(-1.0, 1.0), (-1.0, 1.0)],
        );
        assert!((out[0] - (-0.1)).abs() < 1e-12);
        assert!((out[1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn grad_attack_projects_onto_box() {
        let out = grad_attack(&[1.0, 0.0], |c| -c[0], 0.3, &[(-1.0, 1.0), (-1.0, 1.0)]);
        // Gradient pushes past the upper edge; clamp holds the boundary.
        assert_eq!(out[0], 1.0);
    }

    #[test]
    fn grad_attack_sign_symmetry() {
        let a = [0.2, -0.1];
        let bounds = [(-1.0, 1.0), (-1.0, 1.0)];
        let q = |c: &[f64]| c[0] * 0.7 - c[1] * 0.3;
        let down = grad_attack(&a, q, 0.1, &bounds);
        let up = grad_attack(&a, |c| -q(c), 0.1, &bounds);
        for k in 0..2 {
            assert!(((down[k] - a[k]) + (up[k] - a[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn surrogate_prefers_goalward_motion() {
        let e = env();
        let (_, obs) = e.reset(33);
        let victim = 3;
        let d = 2;
        let own = &obs[victim].0[0..d];
        let goal_off = obs[victim].0.len() - d;
        let rel_goal = &obs[victim].0[goal_off..];
        let norm = (rel_goal[0] * rel_goal[0] + rel_goal[1] * rel_goal[1]).sqrt();
        if norm > 0.2 {
            let toward: Vec<f64> = rel_goal.iter().map(|v| v / norm).collect();
            let away: Vec<f64> = toward.iter().map(|v| -v).collect();
            let q_toward = q_surrogate(&e, victim, &obs[victim], &toward);
            let q_away = q_surrogate(&e, victim, &obs[victim], &away);
            assert!(q_toward > q_away);
        }
        let _ = own;
    }

    #[test]
    fn surrogate_symmetry_tie() {
        // Victim at the goal with symmetric partners: mirrored actions
        // along the symmetry axis score equal.
        let e = env();
        let (mut s, _) = e.reset(0);
        s.positions = vec![0.0, 0.0, 0.6, 0.0, -0.6, 0.0, 0.0, 0.6];
        s.goal = vec![0.0, 0.0];
        let obs = {
            // Rebuild observations for the doctored state via a zero step.
            let zero = JointAction(vec![vec![0.0, 0.0]; 4]);
            let (_, obs, _, _) = e.step(&s, &zero).unwrap();
            obs
        };
        let q_left = q_surrogate(&e, 0, &obs[0], &[-0.5, 0.0]);
        let q_right = q_surrogate(&e, 0, &obs[0], &[0.5, 0.0]);
        assert!((q_left - q_right).abs() < 1e-12);
    }

    #[test]
    fn surrogate_is_continuous_at_fd_scale() {
        let e = env();
        let (_, obs) = e.reset(44);
        let a = [0.1, -0.2];
        let base = q_surrogate(&e, 2, &obs[2], &a);
        for h in [1e-3, 1e-4, 1e-5] {
            let moved = q_surrogate(&e, 2, &obs[2], &[a[0] + h, a[1]]);
            assert!((moved - base).abs() < 10.0 * h + 1e-12);
        }
    }

    #[test]
    fn apply_attack_passthrough_before_onset() {
        let e = env();
        let (_, obs) = e.reset(5);
        let spec = AttackSpec::new(AttackKind::Rand, vec![3], 10);
        let mut rng = rng_for(1, 5, Stream::Attack { victim: 3 });
        let normal = vec![0.12345, -0.6789];
        let mut ctx = AttackContext { env: &e, rng: &mut rng };
        let out = apply_attack(&spec, 9, 3, &obs[3], &normal, &mut ctx).unwrap();
        assert_eq!(out, normal);
        let out = apply_attack(&spec, 10, 3, &obs[3], &normal, &mut ctx).unwrap();
        assert_ne!(out, normal);
    }

    #[test]
    fn never_sentinel_disables_attack() {
        let e = env();
        let (_, obs) = e.reset(6);
        let spec = AttackSpec::new(AttackKind::Rand, vec![3], T0_NEVER);
        let mut rng = rng_for(1, 6, Stream::Attack { victim: 3 });
        let normal = vec![0.5, 0.5];
        let mut ctx = AttackContext { env: &e, rng: &mut rng };
        for t in [0usize, 100, 1_000_000] {
            let out = apply_attack(&spec, t, 3, &obs[3], &normal, &mut ctx).unwrap();
            assert_eq!(out, normal);
        }
    }

    #[test]
    fn two_victims_draw_from_independent_streams() {
        let e = env();
        let (_, obs) = e.reset(7);
        let spec = AttackSpec::new(AttackKind::Rand, vec![2, 3], 0);
        let mut r2 = rng_for(9, 7, Stream::Attack { victim: 2 });
        let mut r3 = rng_for(9, 7, Stream::Attack { victim: 3 });
        let normal = vec![0.0, 0.0];
        let mut c2 = AttackContext { env: &e, rng: &mut r2 };
        let a2 = apply_attack(&spec, 0, 2, &obs[2], &normal, &mut c2).unwrap();
        let mut c3 = AttackContext { env: &e, rng: &mut r3 };
        let a3 = apply_attack(&spec, 0, 3, &obs[3], &normal, &mut c3).unwrap();
        assert_ne!(a2, a3);

        // Correlation over many episodes stays near zero.
        let n = 10_000;
        let (mut sx, mut sy, mut sxy) = (0.0, 0.0, 0.0);
        for ep in 0..n {
            let mut r2 = rng_for(9, ep, Stream::Attack { victim: 2 });
            let mut r3 = rng_for(9, ep, Stream::Attack { victim: 3 });
            let x = rand_attack(&e.cfg().action_bounds, &mut r2)[0];
            let y = rand_attack(&e.cfg().action_bounds, &mut r3)[0];
            sx += x;
            sy += y;
            sxy += x * y;
        }
        let nf = n as f64;
        let cov = sxy / nf - (sx / nf) * (sy / nf);
        let corr = cov / (1.0 / 3.0);
        assert!(corr.abs() < 0.04, "cross-victim correlation {corr}");
    }

    #[test]
    fn cem_rejects_untrainable_kinds() {
        let e = env();
        let cem = CemConfig {
            population: 4,
            iterations: 1,
            episodes_per_candidate: 1,
            ..CemConfig::default()
        };
        assert!(matches!(
            cem_train(&e, AttackKind::Rand, &[3], 0.0, None, &cem, 1),
            Err(AttackError::UnknownTrainable(AttackKind::Rand))
        ));
    }

    #[test]
    fn cem_is_reproducible_and_elite_curve_monotone() {
        let e = env();
        let cem = CemConfig {
            population: 10,
            elite_frac: 0.3,
            iterations: 4,
            episodes_per_candidate: 2,
            init_noise_std: 0.5,
        };
        let r1 = cem_train(&e, AttackKind::Act, &[3], 0.0, None, &cem, 42).unwrap();
        let r2 = cem_train(&e, AttackKind::Act, &[3], 0.0, None, &cem, 42).unwrap();
        assert_eq!(r1, r2);
        for w in r1.elite_curve.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "elite curve rose: {:?}", r1.elite_curve);
        }
    }

    #[test]
    fn dyn_with_zero_lambda_matches_act_objective() {
        let e = env();
        let params = vec![0.1; linear_policy_param_count(&e)];
        let a = episode_objective(&e, &[3], &params, 0.0, None, 77).unwrap();
        let b = episode_objective(&e, &[3], &params, 0.0, None, 77).unwrap();
        assert_eq!(a, b);
        // Same candidates and seeds through the act and dyn entry points.
        let cem = CemConfig {
            population: 6,
            elite_frac: 0.34,
            iterations: 2,
            episodes_per_candidate: 2,
            init_noise_std: 0.4,
        };
        let act = cem_train(&e, AttackKind::Act, &[3], 0.0, None, &cem, 9).unwrap();
        let dyn0 = cem_train(&e, AttackKind::Dyn, &[3], 0.0, None, &cem, 9).unwrap();
        assert_eq!(act, dyn0);
    }

    #[test]
    fn trained_act_attack_hurts_team_reward() {
        let e = env();
        let cem = CemConfig {
            population: 24,
            elite_frac: 0.25,
            iterations: 8,
            episodes_per_candidate: 3,
            init_noise_std: 0.5,
        };
        let result = cem_train(&e, AttackKind::Act, &[3], 0.0, None, &cem, 11).unwrap();

        // Monte-Carlo comparison over fresh episodes.
        let eval_eps = 200u64;
        let mut clean_total = 0.0;
        let mut attacked_total = 0.0;
        for ep in 1000..1000 + eval_eps {
            clean_total += episode_objective(&e, &[], &result.params, 0.0, None, ep).unwrap();
            attacked_total += episode_objective(&e, &[3], &result.params, 0.0, None, ep).unwrap();
        }
        let clean = clean_total / eval_eps as f64;
        let attacked = attacked_total / eval_eps as f64;
        // Rewards are negative costs: the attack must push the mean reward
        // down by at least 30%.
        assert!(
            attacked < clean + 0.3 * clean.abs(),
            "attack too weak: clean {clean}, attacked {attacked}"
        );
    }
}
