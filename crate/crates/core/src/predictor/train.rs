//! Training: exact episode gradients via backpropagation through time,
//! a momentum-SGD loop, and a finite-difference gradient check.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{back_substitute_transpose, forward_substitute};
use crate::predictor::net::{add_outer, add_tmatvec, view, view_mut, HeadKind, PredictorNet, TrunkTape};
use crate::predictor::{PredictorError, TrainConfig, TrainingSample};

const MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("mean loss became non-finite at epoch {epoch}; learning rate too high")]
    DivergenceDetected { epoch: usize },
    #[error(transparent)]
    Predictor(#[from] PredictorError),
}

/// Per-step head values kept for the backward pass.
enum HeadTape {
    Gaussian {
        raw: Vec<f64>,
        diag: Vec<f64>,
        y: Vec<f64>,
        solve_t: Vec<f64>,
    },
    Categorical {
        probs: Vec<f64>,
        target: usize,
    },
}

fn step_forward(
    net: &PredictorNet,
    sample: &TrainingSample,
    t: usize,
    hidden: &[f64],
) -> Result<(TrunkTape, HeadTape, f64), PredictorError> {
    let prev = if net.arch().prev_action_dim > 0 && t > 0 {
        Some(sample.targets[t - 1].as_slice())
    } else {
        None
    };
    let x = net.assemble_input(&sample.inputs[t], prev)?;
    let tape = net.trunk_step(hidden, x);
    let (primary, raw) = net.head_outputs(&tape.h);

    match net.arch().head {
        HeadKind::Gaussian { action_dim, .. } => {
            let target = &sample.targets[t];
            if target.len() != action_dim {
                return Err(PredictorError::DimensionMismatch {
                    expected: action_dim,
                    got: target.len(),
                });
            }
            let chol = net.build_chol(&raw);
            let diff: Vec<f64> = target.iter().zip(&primary).map(|(a, m)| a - m).collect();
            let y = forward_substitute(&chol, &diff)?;
            let solve_t = back_substitute_transpose(&chol, &y)?;
            let loss = 2.0 * chol.log_diag_sum() + y.iter().map(|v| v * v).sum::<f64>();
            let diag: Vec<f64> = (0..action_dim).map(|k| chol.diag(k)).collect();
            Ok((tape, HeadTape::Gaussian { raw, diag, y, solve_t }, loss))
        }
        HeadKind::Categorical { bins } => {
            let target = *sample
                .target_bins
                .as_ref()
                .ok_or(PredictorError::MissingBins)?
                .get(t)
                .ok_or(PredictorError::MissingBins)?;
            if target >= bins {
                return Err(PredictorError::DimensionMismatch {
                    expected: bins,
                    got: target,
                });
            }
            let max = primary.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exp: Vec<f64> = primary.iter().map(|v| (v - max).exp()).collect();
            let sum: f64 = exp.iter().sum();
            let probs: Vec<f64> = exp.iter().map(|v| v / sum).collect();
            let loss = -(probs[target].max(f64::MIN_POSITIVE)).ln();
            Ok((tape, HeadTape::Categorical { probs, target }, loss))
        }
    }
}

/// Mean per-step loss of one episode (forward only).
pub fn episode_loss(net: &PredictorNet, sample: &TrainingSample) -> Result<f64, PredictorError> {
    if sample.is_empty() {
        return Err(PredictorError::EmptySample);
    }
    let mut hidden = net.initial_state().hidden;
    let mut total = 0.0;
    for t in 0..sample.len() {
        let (tape, _, loss) = step_forward(net, sample, t, &hidden)?;
        hidden = tape.h;
        total += loss;
    }
    Ok(total / sample.len() as f64)
}

/// Exact gradient of the mean per-step loss of one episode with respect to
/// every parameter, with gradient flow cut at `bptt_len` segment
/// boundaries. Returns (mean loss, gradient).
pub fn grad_nll(
    net: &PredictorNet,
    sample: &TrainingSample,
    bptt_len: usize,
) -> Result<(f64, Vec<f64>), PredictorError> {
    if sample.is_empty() {
        return Err(PredictorError::EmptySample);
    }
    let steps = sample.len();
    let scale = 1.0 / steps as f64;
    let layout = net.arch().layout();
    let h = net.arch().hidden;
    let params = net.params();

    let mut tapes: Vec<TrunkTape> = Vec::with_capacity(steps);
    let mut heads: Vec<HeadTape> = Vec::with_capacity(steps);
    let mut total = 0.0;
    let mut hidden = net.initial_state().hidden;
    for t in 0..steps {
        let (tape, head, loss) = step_forward(net, sample, t, &hidden)?;
        hidden = tape.h.clone();
        tapes.push(tape);
        heads.push(head);
        total += loss;
    }

    let mut grad = vec![0.0; params.len()];
    let mut dh_next = vec![0.0; h];
    for t in (0..steps).rev() {
        let tape = &tapes[t];
        let mut dh = std::mem::take(&mut dh_next);
        dh_next = vec![0.0; h];

        // Head gradients at this step.
        let (d_primary, d_raw) = match &heads[t] {
            HeadTape::Gaussian { raw, diag, y, solve_t } => {
                // loss_t = 2·Σ log l[k] + yᵀy with L·y = a − mu:
                //   ∂/∂mu    = −2·L⁻ᵀy
                //   ∂/∂L[pq] = −2·(L⁻ᵀy)[p]·y[q]  (+ 2/l[p] on the diagonal)
                let d = y.len();
                let dmu: Vec<f64> = solve_t.iter().map(|v| -2.0 * v * scale).collect();
                let diagonal_only = matches!(
                    net.arch().head,
                    HeadKind::Gaussian { diagonal_only: true, .. }
                );
                let mut draw = vec![0.0; raw.len()];
                if diagonal_only {
                    for k in 0..d {
                        let dl = -2.0 * solve_t[k] * y[k] + 2.0 / diag[k];
                        // l = exp(raw) + floor, so dl/draw = exp(raw).
                        draw[k] = dl * (diag[k] - net.arch().diag_floor) * scale;
                    }
                } else {
                    let mut idx = 0;
                    for p in 0..d {
                        for q in 0..=p {
                            let mut dl = -2.0 * solve_t[p] * y[q];
                            if p == q {
                                dl += 2.0 / diag[p];
                                dl *= diag[p] - net.arch().diag_floor;
                            }
                            draw[idx] = dl * scale;
                            idx += 1;
                        }
                    }
                }
                (dmu, draw)
            }
            HeadTape::Categorical { probs, target } => {
                let mut dl: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                dl[*target] -= scale;
                (dl, Vec::new())
            }
        };

        add_outer(view_mut(&mut grad, layout.w_head_a), h, &d_primary, &tape.h);
        for (g, v) in view_mut(&mut grad, layout.b_head_a).iter_mut().zip(&d_primary) {
            *g += v;
        }
        add_tmatvec(view(params, layout.w_head_a), h, &d_primary, &mut dh);
        if !d_raw.is_empty() {
            add_outer(view_mut(&mut grad, layout.w_head_b), h, &d_raw, &tape.h);
            for (g, v) in view_mut(&mut grad, layout.b_head_b).iter_mut().zip(&d_raw) {
                *g += v;
            }
            add_tmatvec(view(params, layout.w_head_b), h, &d_raw, &mut dh);
        }

        // Cell backward: h = u∘h_prev + (1−u)∘c.
        let mut da_u = vec![0.0; h];
        let mut da_c = vec![0.0; h];
        let mut dh_prev = vec![0.0; h];
        for i in 0..h {
            let du = dh[i] * (tape.h_prev[i] - tape.c[i]);
            let dc = dh[i] * (1.0 - tape.u[i]);
            dh_prev[i] = dh[i] * tape.u[i];
            da_u[i] = du * tape.u[i] * (1.0 - tape.u[i]);
            da_c[i] = dc * (1.0 - tape.c[i] * tape.c[i]);
        }
        add_outer(view_mut(&mut grad, layout.w_gate), h, &da_u, &tape.p);
        add_outer(view_mut(&mut grad, layout.u_gate), h, &da_u, &tape.h_prev);
        for (g, v) in view_mut(&mut grad, layout.b_gate).iter_mut().zip(&da_u) {
            *g += v;
        }
        add_outer(view_mut(&mut grad, layout.w_cand), h, &da_c, &tape.p);
        add_outer(view_mut(&mut grad, layout.u_cand), h, &da_c, &tape.h_prev);
        for (g, v) in view_mut(&mut grad, layout.b_cand).iter_mut().zip(&da_c) {
            *g += v;
        }

        let mut dp = vec![0.0; h];
        add_tmatvec(view(params, layout.w_gate), h, &da_u, &mut dp);
        add_tmatvec(view(params, layout.w_cand), h, &da_c, &mut dp);
        add_tmatvec(view(params, layout.u_gate), h, &da_u, &mut dh_prev);
        add_tmatvec(view(params, layout.u_cand), h, &da_c, &mut dh_prev);

        // Preprocessing layer: p = relu(W_in·x + b_in).
        let da_in: Vec<f64> = dp
            .iter()
            .zip(&tape.p)
            .map(|(g, p)| if *p > 0.0 { *g } else { 0.0 })
            .collect();
        add_outer(
            view_mut(&mut grad, layout.w_in),
            net.arch().input_dim(),
            &da_in,
            &tape.x,
        );
        for (g, v) in view_mut(&mut grad, layout.b_in).iter_mut().zip(&da_in) {
            *g += v;
        }

        // Truncate: gradient does not cross segment starts.
        if bptt_len > 0 && t % bptt_len != 0 {
            dh_next = dh_prev;
        }
    }

    Ok((total * scale, grad))
}

/// Train with momentum SGD: batches of whole episodes, gradients averaged
/// per episode, epochs shuffled deterministically from `seed`. Returns the
/// trained net and the per-epoch mean loss curve.
pub fn train(
    net: &PredictorNet,
    data: &[TrainingSample],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(PredictorNet, Vec<f64>), TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut net = net.clone();
    let mut velocity = vec![0.0; net.param_count()];
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let mut grad = vec![0.0; net.param_count()];
            let mut batch_loss = 0.0;
            for &idx in batch {
                let (loss, g) = grad_nll(&net, &data[idx], cfg.bptt_len)?;
                batch_loss += loss;
                for (acc, v) in grad.iter_mut().zip(&g) {
                    *acc += v;
                }
            }
            let inv = 1.0 / batch.len() as f64;
            epoch_loss += batch_loss;
            let params = net.params_mut();
            for i in 0..params.len() {
                velocity[i] = MOMENTUM * velocity[i] - cfg.learning_rate * grad[i] * inv;
                params[i] += velocity[i];
            }
        }
        let mean = epoch_loss / data.len() as f64;
        if !mean.is_finite() {
            return Err(TrainError::DivergenceDetected { epoch });
        }
        curve.push(mean);
    }
    Ok((net, curve))
}

/// Max over parameters of |analytic − numeric| / max(1, |numeric|), where
/// the numeric gradient is a central finite difference of the episode loss.
pub fn gradient_check(
    net: &PredictorNet,
    sample: &TrainingSample,
    eps: f64,
) -> Result<f64, PredictorError> {
    assert!(eps > 1e-8 && eps < 1e-3, "eps must lie in (1e-8, 1e-3)");
    let (_, analytic) = grad_nll(net, sample, usize::MAX)?;
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for i in 0..net.param_count() {
        let orig = net.params()[i];
        probe.params_mut()[i] = orig + eps;
        let plus = episode_loss(&probe, sample)?;
        probe.params_mut()[i] = orig - eps;
        let minus = episode_loss(&probe, sample)?;
        probe.params_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let err = (analytic[i] - numeric).abs() / numeric.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}
