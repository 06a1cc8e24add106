//! Episode orchestration and detection-performance evaluation.
//!
//! An evaluation runs clean and attacked episodes under identical seeds,
//! records per-(observer, victim) CUSUM trajectories as compact running-max
//! staircases, and sweeps detection thresholds over the recorded
//! statistics. The staircase of each side is a sufficient statistic for
//! any threshold: an episode alarms at threshold β exactly when its
//! running max exceeds β, and the alarm time is the first crossing.
//!
//! Episode-level labeling: an attacked episode counts as detected if the
//! team decision fires at any step; a clean episode counts as a false
//! positive if it fires at all.

pub mod report;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacks::{apply_attack, AttackContext, AttackError, AttackSpec};
use crate::baselines::{discrete_normality_score, BaselineError, CategoricalParams, Quantizer};
use crate::detector::{
    aggregate, check_alarm, cusum_update, normality_score, standardize, AlarmSide, CusumState,
    DetectorConfig, DetectorError, DetectorMode, WindowScorer,
};
use crate::env::{Env, EnvError, JointAction};
use crate::predictor::{PredictorBank, PredictorError, RecurrentState};
use crate::seeding::{rng_for, Stream};
use crate::AgentId;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no predictor for observer {observer} watching victim {victim}")]
    MissingPredictor { observer: AgentId, victim: AgentId },
    #[error("victim {victim} has no observers")]
    NoObservers { victim: AgentId },
    #[error("result set is empty")]
    EmptySet,
    #[error("no true positives at this threshold")]
    NoTruePositives,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Scoring settings for the discretized baseline: how actions map to bins
/// and the empirically calibrated reference moments of its score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteScoring {
    pub quantizer: Quantizer,
    pub ref_mean: f64,
    pub ref_std: f64,
}

/// Everything one episode needs.
#[derive(Clone, Copy)]
pub struct EpisodeSetup<'a> {
    pub env: &'a Env,
    pub bank: &'a PredictorBank,
    pub detector: &'a DetectorConfig,
    /// Victims under watch; clean episodes watch the same agents.
    pub watch: &'a [AgentId],
    pub attack: Option<&'a AttackSpec>,
    /// Present when the bank holds categorical-head nets.
    pub discrete: Option<&'a DiscreteScoring>,
    /// Record one score row per (step, observer, victim).
    pub record_scores: bool,
}

/// One row of the score/alarm trace export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub t: usize,
    pub observer: AgentId,
    pub victim: AgentId,
    pub z: f64,
    pub z_std: f64,
    pub c_plus: f64,
    pub c_minus: f64,
    pub alarmed_side: Option<AlarmSide>,
}

/// Running-max staircase of one decision statistic: `(t, value)` appended
/// whenever a new maximum is reached. The last value is the episode max,
/// and the first entry strictly above a threshold is the alarm step.
pub type Staircase = Vec<(usize, f64)>;

fn stair_push(stair: &mut Staircase, t: usize, value: f64) {
    if stair.last().map_or(value > 0.0, |(_, best)| value > *best) {
        stair.push((t, value));
    }
}

/// First step at which the staircase strictly exceeds `beta`.
pub fn stair_crossing(stair: &Staircase, beta: f64) -> Option<usize> {
    stair.iter().find(|(_, v)| *v > beta).map(|(t, _)| *t)
}

/// Final running max of a staircase (zero when it never rose).
pub fn stair_max(stair: &Staircase) -> f64 {
    stair.last().map_or(0.0, |(_, v)| *v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTrack {
    pub observer: AgentId,
    pub victim: AgentId,
    pub stair_plus: Staircase,
    pub stair_minus: Staircase,
    /// Alarm latched at the configured thresholds.
    pub alarm: Option<(AlarmSide, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode_seed: u64,
    pub attacked: bool,
    pub t0: Option<usize>,
    pub total_reward: f64,
    pub pairs: Vec<PairTrack>,
    /// Team decision at the configured thresholds: the step at which every
    /// watched victim had reached the observer quorum.
    pub team_detection: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub scores: Option<Vec<ScoreRow>>,
}

enum PairScorer {
    Cusum(CusumState),
    Window(WindowScorer, Option<(AlarmSide, usize)>),
}

struct PairStream {
    observer: AgentId,
    victim: AgentId,
    state: RecurrentState,
    scorer: PairScorer,
    track: PairTrack,
}

/// Run one episode to the horizon: victims may be attacked from their
/// onset step; every observer of a watched victim scores the executed
/// action, updates its detector, and latches alarms. Deterministic in
/// (env seed, episode seed, setup).
pub fn run_episode(setup: &EpisodeSetup<'_>, episode_seed: u64) -> Result<EpisodeResult, EvalError> {
    let env = setup.env;
    let k = env.cfg().num_agents;
    let d = env.cfg().action_dim();
    setup.detector.validate()?;

    let mut policy_rngs: Vec<_> = (0..k)
        .map(|agent| rng_for(env.cfg().seed, episode_seed, Stream::PolicyNoise { agent }))
        .collect();
    let mut attack_rngs: BTreeMap<AgentId, rand_chacha::ChaCha8Rng> = BTreeMap::new();
    if let Some(spec) = setup.attack {
        for &v in &spec.victims {
            attack_rngs.insert(v, rng_for(env.cfg().seed, episode_seed, Stream::Attack { victim: v }));
        }
    }

    // One stream per observer of each watched victim.
    let mut streams: Vec<PairStream> = Vec::new();
    for &victim in setup.watch {
        let mut observers = 0;
        for observer in 0..k {
            if observer == victim || !env.observable_neighbors(observer).contains(&victim) {
                continue;
            }
            observers += 1;
            let net = setup
                .bank
                .get(observer, victim)
                .ok_or(EvalError::MissingPredictor { observer, victim })?;
            let scorer = match (setup.detector.mode, setup.discrete) {
                (DetectorMode::Cusum, None) => PairScorer::Cusum(CusumState::new(setup.detector.drift)),
                (DetectorMode::Window, None) => PairScorer::Window(
                    WindowScorer::for_gaussian(setup.detector.window_len, d),
                    None,
                ),
                (_, Some(ds)) => PairScorer::Window(
                    WindowScorer::new(setup.detector.window_len, ds.ref_mean, ds.ref_std),
                    None,
                ),
            };
            streams.push(PairStream {
                observer,
                victim,
                state: net.initial_state(),
                scorer,
                track: PairTrack {
                    observer,
                    victim,
                    stair_plus: Vec::new(),
                    stair_minus: Vec::new(),
                    alarm: None,
                },
            });
        }
        if observers == 0 {
            return Err(EvalError::NoObservers { victim });
        }
    }

    let (mut state, mut obs) = env.reset(episode_seed);
    let mut prev_executed: Vec<Option<Vec<f64>>> = vec![None; k];
    let mut total_reward = 0.0;
    let mut score_rows: Vec<ScoreRow> = Vec::new();

    loop {
        let t = state.t;
        let mut actions: Vec<Vec<f64>> = (0..k)
            .map(|i| env.scripted_policy(i, &obs[i], &mut policy_rngs[i]))
            .collect();
        if let Some(spec) = setup.attack {
            for &v in &spec.victims {
                let rng = attack_rngs.get_mut(&v).expect("attack rng");
                let mut ctx = AttackContext { env, rng };
                actions[v] = apply_attack(spec, t, v, &obs[v], &actions[v], &mut ctx)?;
            }
        }

        for stream in &mut streams {
            let net = setup
                .bank
                .get(stream.observer, stream.victim)
                .expect("stream implies net");
            let input = env.predictor_input(stream.observer, stream.victim, &obs[stream.observer]);
            let prev = prev_executed[stream.victim].as_deref();
            let executed = &actions[stream.victim];

            let (z, z_std, c_plus, c_minus) = match &mut stream.scorer {
                PairScorer::Cusum(cusum) => {
                    let (next, params) = net.predict_step(&stream.state, &input, prev)?;
                    stream.state = next;
                    let z = normality_score(&params, executed)?;
                    let z_std = standardize(z, d);
                    *cusum = cusum_update(cusum, z_std);
                    stream.track.alarm = check_alarm(cusum, setup.detector, t);
                    stair_push(&mut stream.track.stair_plus, t, cusum.c_plus);
                    stair_push(&mut stream.track.stair_minus, t, cusum.c_minus);
                    (z, z_std, cusum.c_plus, cusum.c_minus)
                }
                PairScorer::Window(scorer, alarm) => {
                    let (z, reference) = match setup.discrete {
                        Some(ds) => {
                            let (next, logits) = net.predict_logits(&stream.state, &input, prev)?;
                            stream.state = next;
                            let bin = ds.quantizer.quantize(executed)?;
                            let z = discrete_normality_score(&CategoricalParams { logits }, bin)?;
                            (z, (ds.ref_mean, ds.ref_std))
                        }
                        None => {
                            let (next, params) = net.predict_step(&stream.state, &input, prev)?;
                            stream.state = next;
                            let z = normality_score(&params, executed)?;
                            let m = crate::detector::StandardMoments::for_dim(d);
                            (z, (m.mean, m.std))
                        }
                    };
                    let metric = scorer.update(z).unwrap_or(0.0);
                    if alarm.is_none() && metric > setup.detector.beta_plus {
                        *alarm = Some((AlarmSide::Plus, t));
                    }
                    stream.track.alarm = *alarm;
                    stair_push(&mut stream.track.stair_plus, t, metric);
                    let z_std = (z - reference.0) / reference.1;
                    (z, z_std, metric, 0.0)
                }
            };

            if setup.record_scores {
                score_rows.push(ScoreRow {
                    t,
                    observer: stream.observer,
                    victim: stream.victim,
                    z,
                    z_std,
                    c_plus,
                    c_minus,
                    alarmed_side: stream.track.alarm.map(|(side, _)| side),
                });
            }
        }

        for (slot, action) in actions.iter().enumerate() {
            prev_executed[slot] = Some(action.clone());
        }
        let (next_state, next_obs, reward, done) = env.step(&state, &JointAction(actions))?;
        total_reward += reward;
        state = next_state;
        obs = next_obs;
        if done {
            break;
        }
    }

    // Team decision at the configured thresholds: every watched victim
    // must reach the observer quorum; the decision lands on the latest
    // per-victim quorum time.
    let mut team_detection = Some(0usize);
    for &victim in setup.watch {
        let alarms: BTreeMap<AgentId, Option<usize>> = streams
            .iter()
            .filter(|s| s.victim == victim)
            .map(|s| (s.observer, s.track.alarm.map(|(_, t)| t)))
            .collect();
        match (aggregate(&alarms, setup.detector.quorum), team_detection) {
            (Some(t), Some(best)) => team_detection = Some(best.max(t)),
            _ => team_detection = None,
        }
        if team_detection.is_none() {
            break;
        }
    }

    let attacked = setup
        .attack
        .map_or(false, |s| s.t0 != crate::attacks::T0_NEVER);
    Ok(EpisodeResult {
        episode_seed,
        attacked,
        t0: setup.attack.and_then(|s| {
            if s.t0 == crate::attacks::T0_NEVER {
                None
            } else {
                Some(s.t0)
            }
        }),
        total_reward,
        pairs: streams.into_iter().map(|s| s.track).collect(),
        team_detection,
        scores: if setup.record_scores { Some(score_rows) } else { None },
    })
}

/// Run many episodes on the rayon pool. Results come back in seed order,
/// so statistics never depend on the worker count.
pub fn run_episodes(
    setup: &EpisodeSetup<'_>,
    episode_seeds: &[u64],
) -> Result<Vec<EpisodeResult>, EvalError> {
    episode_seeds
        .par_iter()
        .map(|&seed| run_episode(setup, seed))
        .collect()
}

/// Episode-level decision statistic at quorum `u`: per victim, the u-th
/// largest per-observer max statistic (the level at which u observers
/// would alarm); across victims, the minimum (every victim must be
/// flagged). Sweeping a threshold over this scalar reproduces the team
/// decision rule exactly.
pub fn episode_statistic(result: &EpisodeResult, quorum: usize) -> f64 {
    let victims: Vec<AgentId> = {
        let mut v: Vec<AgentId> = result.pairs.iter().map(|p| p.victim).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let mut stat = f64::INFINITY;
    for victim in victims {
        let mut per_observer: Vec<f64> = result
            .pairs
            .iter()
            .filter(|p| p.victim == victim)
            .map(|p| stair_max(&p.stair_plus).max(stair_max(&p.stair_minus)))
            .collect();
        if per_observer.len() < quorum {
            return f64::NEG_INFINITY;
        }
        per_observer.sort_by(|a, b| b.partial_cmp(a).unwrap());
        stat = stat.min(per_observer[quorum - 1]);
    }
    if stat.is_infinite() {
        f64::NEG_INFINITY
    } else {
        stat
    }
}

/// Team detection time at an arbitrary shared threshold, recovered from
/// the stored staircases.
pub fn detection_time_at(
    result: &EpisodeResult,
    quorum: usize,
    beta_plus: f64,
    beta_minus: f64,
) -> Option<usize> {
    let victims: Vec<AgentId> = {
        let mut v: Vec<AgentId> = result.pairs.iter().map(|p| p.victim).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let mut team: Option<usize> = Some(0);
    for victim in victims {
        let alarms: BTreeMap<AgentId, Option<usize>> = result
            .pairs
            .iter()
            .filter(|p| p.victim == victim)
            .map(|p| {
                let plus = stair_crossing(&p.stair_plus, beta_plus);
                let minus = stair_crossing(&p.stair_minus, beta_minus);
                let first = match (plus, minus) {
                    (Some(a), Some(b)) => Some(a.min(b)),
                    (a, b) => a.or(b),
                };
                (p.observer, first)
            })
            .collect();
        match (aggregate(&alarms, quorum), team) {
            (Some(t), Some(best)) => team = Some(best.max(t)),
            _ => return None,
        }
    }
    team
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub beta: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// Log-spaced default threshold grid: 50 points on [0.1, 100].
pub fn default_beta_grid() -> Vec<f64> {
    let (lo, hi, n) = (0.1f64, 100.0f64, 50);
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// ROC over episode statistics. The curve is evaluated on the union of the
/// supplied grid and every observed statistic, so the area matches the
/// exact pairwise ordering probability (ties counting one half).
pub fn roc(clean: &[f64], attacked: &[f64], grid: &[f64]) -> Result<RocCurve, EvalError> {
    if clean.is_empty() || attacked.is_empty() {
        return Err(EvalError::EmptySet);
    }
    let mut thresholds: Vec<f64> = grid
        .iter()
        .chain(clean.iter())
        .chain(attacked.iter())
        .copied()
        .filter(|v| v.is_finite())
        .collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();

    let frac_above = |stats: &[f64], beta: f64| -> f64 {
        stats.iter().filter(|s| **s > beta).count() as f64 / stats.len() as f64
    };

    let mut points = Vec::with_capacity(thresholds.len() + 2);
    points.push(RocPoint {
        beta: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    });
    for beta in thresholds {
        points.push(RocPoint {
            beta,
            fpr: frac_above(clean, beta),
            tpr: frac_above(attacked, beta),
        });
    }
    points.push(RocPoint {
        beta: f64::NEG_INFINITY,
        fpr: 1.0,
        tpr: 1.0,
    });

    let mut auc = 0.0;
    for w in points.windows(2) {
        auc += (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0;
    }
    Ok(RocCurve { points, auc })
}

/// ROC of a result set at the given quorum.
pub fn roc_of_results(
    clean: &[EpisodeResult],
    attacked: &[EpisodeResult],
    quorum: usize,
    grid: &[f64],
) -> Result<RocCurve, EvalError> {
    let c: Vec<f64> = clean.iter().map(|r| episode_statistic(r, quorum)).collect();
    let a: Vec<f64> = attacked.iter().map(|r| episode_statistic(r, quorum)).collect();
    roc(&c, &a, grid)
}

/// Mean steps from attack onset to team detection, over attacked episodes
/// that are detected at the given threshold ("true positives only").
pub fn time_to_detection(
    results: &[EpisodeResult],
    quorum: usize,
    beta: f64,
) -> Result<f64, EvalError> {
    let mut total = 0.0;
    let mut count = 0usize;
    for r in results.iter().filter(|r| r.attacked) {
        if let Some(t) = detection_time_at(r, quorum, beta, beta) {
            total += t as f64 - r.t0.unwrap_or(0) as f64;
            count += 1;
        }
    }
    if count == 0 {
        return Err(EvalError::NoTruePositives);
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactRow {
    pub kind: String,
    pub episodes: usize,
    pub mean_reward: f64,
    pub std_error: f64,
}

/// Mean total team reward per condition with its standard error.
pub fn impact_table(groups: &BTreeMap<String, Vec<EpisodeResult>>) -> Vec<ImpactRow> {
    groups
        .iter()
        .map(|(kind, results)| {
            let n = results.len().max(1) as f64;
            let mean = results.iter().map(|r| r.total_reward).sum::<f64>() / n;
            let var = results
                .iter()
                .map(|r| (r.total_reward - mean) * (r.total_reward - mean))
                .sum::<f64>()
                / n;
            ImpactRow {
                kind: kind.clone(),
                episodes: results.len(),
                mean_reward: mean,
                std_error: (var / n).sqrt(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track(observer: AgentId, victim: AgentId, plus: &[(usize, f64)]) -> PairTrack {
        PairTrack {
            observer,
            victim,
            stair_plus: plus.to_vec(),
            stair_minus: Vec::new(),
            alarm: None,
        }
    }

    fn result_with(pairs: Vec<PairTrack>, attacked: bool) -> EpisodeResult {
        EpisodeResult {
            episode_seed: 0,
            attacked,
            t0: if attacked { Some(0) } else { None },
            total_reward: 0.0,
            pairs,
            team_detection: None,
            scores: None,
        }
    }

    #[test]
    fn staircase_crossing_and_max() {
        let stair = vec![(2, 0.5), (5, 1.4), (9, 3.0)];
        assert_eq!(stair_crossing(&stair, 1.0), Some(5));
        assert_eq!(stair_crossing(&stair, 3.0), None);
        assert_eq!(stair_max(&stair), 3.0);
        assert_eq!(stair_crossing(&Vec::new(), 0.1), None);
        assert_eq!(stair_max(&Vec::new()), 0.0);
    }

    #[test]
    fn statistic_uses_quorum_order() {
        let r = result_with(
            vec![
                track(0, 3, &[(1, 2.0)]),
                track(1, 3, &[(1, 5.0)]),
                track(2, 3, &[(1, 1.0)]),
            ],
            true,
        );
        assert_eq!(episode_statistic(&r, 1), 5.0);
        assert_eq!(episode_statistic(&r, 2), 2.0);
        assert_eq!(episode_statistic(&r, 3), 1.0);
        assert_eq!(episode_statistic(&r, 4), f64::NEG_INFINITY);
    }

    #[test]
    fn statistic_multi_victim_takes_min() {
        let r = result_with(
            vec![track(0, 2, &[(1, 4.0)]), track(0, 3, &[(1, 1.5)])],
            true,
        );
        assert_eq!(episode_statistic(&r, 1), 1.5);
    }

    #[test]
    fn detection_time_quorum_and_multi_victim() {
        let r = result_with(
            vec![
                track(0, 3, &[(3, 2.0)]),
                track(1, 3, &[(9, 2.0)]),
                track(2, 3, &[(20, 0.1)]),
            ],
            true,
        );
        assert_eq!(detection_time_at(&r, 1, 1.0, 1.0), Some(3));
        assert_eq!(detection_time_at(&r, 2, 1.0, 1.0), Some(9));
        assert_eq!(detection_time_at(&r, 3, 1.0, 1.0), None);

        let r2 = result_with(
            vec![track(0, 2, &[(3, 2.0)]), track(0, 3, &[(7, 2.0)])],
            true,
        );
        // Both victims flagged: the later quorum time decides.
        assert_eq!(detection_time_at(&r2, 1, 1.0, 1.0), Some(7));
    }

    #[test]
    fn roc_hand_dataset() {
        let curve = roc(&[1.0, 2.0], &[1.5, 3.0], &default_beta_grid()).unwrap();
        assert!((curve.auc - 0.75).abs() < 1e-12);
    }

    #[test]
    fn roc_separable_and_null() {
        let clean = [0.5, 0.8, 0.9];
        let attacked = [1.5, 2.0, 9.0];
        let curve = roc(&clean, &attacked, &default_beta_grid()).unwrap();
        assert!((curve.auc - 1.0).abs() < 1e-12);

        let same = [1.0, 2.0, 3.0, 4.0];
        let curve = roc(&same, &same, &default_beta_grid()).unwrap();
        assert!((curve.auc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn roc_monotone_in_threshold() {
        let clean = [0.2, 1.0, 2.5, 0.7];
        let attacked = [1.5, 3.0, 0.9, 5.0];
        let curve = roc(&clean, &attacked, &default_beta_grid()).unwrap();
        for w in curve.points.windows(2) {
            assert!(w[1].beta <= w[0].beta);
            assert!(w[1].fpr >= w[0].fpr);
            assert!(w[1].tpr >= w[0].tpr);
        }
        assert!(curve.auc >= 0.0 && curve.auc <= 1.0);
        assert_eq!(curve.points.first().map(|p| (p.fpr, p.tpr)), Some((0.0, 0.0)));
        assert_eq!(curve.points.last().map(|p| (p.fpr, p.tpr)), Some((1.0, 1.0)));
    }

    #[test]
    fn roc_rejects_empty_sets() {
        assert!(matches!(
            roc(&[], &[1.0], &default_beta_grid()),
            Err(EvalError::EmptySet)
        ));
    }

    #[test]
    fn ttd_cases() {
        let one = |detect_at: usize, t0: usize| {
            let mut r = result_with(vec![track(0, 3, &[(detect_at, 9.0)])], true);
            r.t0 = Some(t0);
            r
        };
        let results = vec![one(9, 5)];
        assert_eq!(time_to_detection(&results, 1, 1.0).unwrap(), 4.0);

        let results = vec![one(5, 5), one(7, 5)];
        assert_eq!(time_to_detection(&results, 1, 1.0).unwrap(), 1.0);

        let none = vec![result_with(vec![track(0, 3, &[])], true)];
        assert!(matches!(
            time_to_detection(&none, 1, 1.0),
            Err(EvalError::NoTruePositives)
        ));
    }

    #[test]
    fn ttd_monotone_in_threshold() {
        let r = result_with(
            vec![track(0, 3, &[(2, 1.0), (8, 4.0), (20, 9.0)])],
            true,
        );
        let results = vec![r];
        let t_low = time_to_detection(&results, 1, 0.5).unwrap();
        let t_high = time_to_detection(&results, 1, 5.0).unwrap();
        assert!(t_low <= t_high);
    }

    #[test]
    fn impact_table_means_and_errors() {
        let mut groups = BTreeMap::new();
        let mk = |rewards: &[f64]| -> Vec<EpisodeResult> {
            rewards
                .iter()
                .map(|&r| {
                    let mut e = result_with(vec![], false);
                    e.total_reward = r;
                    e
                })
                .collect()
        };
        groups.insert("none".to_string(), mk(&[-10.0, -12.0]));
        groups.insert("act".to_string(), mk(&[-100.0, -104.0]));
        let table = impact_table(&groups);
        let none = table.iter().find(|r| r.kind == "none").unwrap();
        let act = table.iter().find(|r| r.kind == "act").unwrap();
        assert_eq!(none.mean_reward, -11.0);
        assert_eq!(act.mean_reward, -102.0);
        assert!(none.mean_reward > act.mean_reward);
        // var = 1 over 2 episodes: SE = sqrt(1/2).
        assert!((none.std_error - (0.5f64).sqrt()).abs() < 1e-12);
    }
}
