//! Episode trace records and their JSON-lines file format.
//!
//! A trace file holds complete episodes: one header line per episode
//! followed by one line per step. Files written with the same seeds are
//! byte-identical, and traces carry everything predictor training and
//! evaluation need (state, per-agent observations, executed actions,
//! reward, attack flag).
//!
//! File layout (version 1):
//!   {"episode": {...}}   — header: seed, agent count, t0 if attacked
//!   {"step": {...}}      — repeated horizon times
//!   ... next episode ...

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Env, EnvError, JointAction, Observation};
use crate::predictor::TrainingSample;
use crate::seeding::{rng_for, Stream};

pub const TRACE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("trace parse error at line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("trace format error: {0}")]
    Format(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub version: u32,
    pub episode_seed: u64,
    pub num_agents: usize,
    /// Attack onset; absent for clean traces.
    pub t0: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub t: usize,
    /// Flattened agent positions at the time the actions were chosen.
    pub positions: Vec<f64>,
    pub goal: Vec<f64>,
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub reward: f64,
    pub attack_active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub header: TraceHeader,
    pub steps: Vec<TraceStep>,
}

impl EpisodeTrace {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum TraceLine {
    Episode(TraceHeader),
    Step(TraceStep),
}

/// Run one clean episode with every agent on its scripted policy and
/// record the full trace.
pub fn collect_episode(env: &Env, episode_seed: u64) -> Result<EpisodeTrace, EnvError> {
    let k = env.cfg().num_agents;
    let mut rngs: Vec<_> = (0..k)
        .map(|agent| rng_for(env.cfg().seed, episode_seed, Stream::PolicyNoise { agent }))
        .collect();
    let (mut state, mut obs) = env.reset(episode_seed);
    let mut steps = Vec::with_capacity(env.cfg().horizon);
    loop {
        let actions: Vec<Vec<f64>> = (0..k)
            .map(|i| env.scripted_policy(i, &obs[i], &mut rngs[i]))
            .collect();
        let joint = JointAction(actions.clone());
        let (next_state, next_obs, reward, done) = env.step(&state, &joint)?;
        steps.push(TraceStep {
            t: state.t,
            positions: state.positions.clone(),
            goal: state.goal.clone(),
            observations: obs.iter().map(|o| o.0.clone()).collect(),
            actions,
            reward,
            attack_active: false,
        });
        state = next_state;
        obs = next_obs;
        if done {
            break;
        }
    }
    Ok(EpisodeTrace {
        header: TraceHeader {
            version: TRACE_FORMAT_VERSION,
            episode_seed,
            num_agents: k,
            t0: None,
        },
        steps,
    })
}

pub fn write_traces<W: Write>(mut w: W, traces: &[EpisodeTrace]) -> Result<(), TraceError> {
    for trace in traces {
        serde_json::to_writer(&mut w, &TraceLine::Episode(trace.header.clone()))
            .map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
        for step in &trace.steps {
            serde_json::to_writer(&mut w, &TraceLine::Step(step.clone()))
                .map_err(std::io::Error::other)?;
            w.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn read_traces<R: BufRead>(r: R) -> Result<Vec<EpisodeTrace>, TraceError> {
    let mut traces: Vec<EpisodeTrace> = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TraceLine =
            serde_json::from_str(&line).map_err(|source| TraceError::Parse {
                line: idx + 1,
                source,
            })?;
        match parsed {
            TraceLine::Episode(header) => {
                if header.version != TRACE_FORMAT_VERSION {
                    return Err(TraceError::Format(format!(
                        "unsupported trace version {}",
                        header.version
                    )));
                }
                traces.push(EpisodeTrace {
                    header,
                    steps: Vec::new(),
                });
            }
            TraceLine::Step(step) => match traces.last_mut() {
                Some(t) => t.steps.push(step),
                None => {
                    return Err(TraceError::Format(
                        "step record before any episode header".into(),
                    ))
                }
            },
        }
    }
    Ok(traces)
}

pub fn write_trace_file(path: &Path, traces: &[EpisodeTrace]) -> Result<(), TraceError> {
    let file = std::fs::File::create(path)?;
    write_traces(std::io::BufWriter::new(file), traces)
}

pub fn read_trace_file(path: &Path) -> Result<Vec<EpisodeTrace>, TraceError> {
    let file = std::fs::File::open(path)?;
    read_traces(std::io::BufReader::new(file))
}

/// Extract the (observer, victim) training sample from a trace: inputs are
/// the observer's observations rearranged victim-first, targets are the
/// victim's executed actions.
pub fn extract_sample(env: &Env, trace: &EpisodeTrace, observer: usize, victim: usize) -> TrainingSample {
    let mut inputs = Vec::with_capacity(trace.steps.len());
    let mut targets = Vec::with_capacity(trace.steps.len());
    for step in &trace.steps {
        let obs = Observation(step.observations[observer].clone());
        inputs.push(env.predictor_input(observer, victim, &obs));
        targets.push(step.actions[victim].clone());
    }
    TrainingSample {
        inputs,
        targets,
        target_bins: None,
    }
}
