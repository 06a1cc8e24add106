//! Network architecture, flat parameter layout, and the forward pass.
//!
//! The trunk is an affine+ReLU preprocessing layer feeding a single
//! update-gate recurrent cell:
//!
//!   p   = relu(W_in·x + b_in)
//!   u   = sigmoid(W_g·p + U_g·h + b_g)
//!   c   = tanh(W_c·p + U_c·h + b_c)
//!   h'  = u∘h + (1−u)∘c
//!
//! Heads are affine maps from h'. All weights live in one flat vector in
//! the block order declared by [`Layout`], which is also the order used by
//! the model file format.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::LowerTriangular;
use crate::predictor::{GaussianParams, PredictorError};

/// Output head of the predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum HeadKind {
    /// Mean vector plus Cholesky-factor entries; `diagonal_only` restricts
    /// the factor to its diagonal (independent action dimensions).
    Gaussian { action_dim: usize, diagonal_only: bool },
    /// Logits over a quantized action set.
    Categorical { bins: usize },
}

impl HeadKind {
    /// Number of Cholesky-factor outputs (zero for categorical heads).
    pub fn chol_outputs(&self) -> usize {
        match *self {
            HeadKind::Gaussian {
                action_dim,
                diagonal_only,
            } => {
                if diagonal_only {
                    action_dim
                } else {
                    action_dim * (action_dim + 1) / 2
                }
            }
            HeadKind::Categorical { .. } => 0,
        }
    }

    fn primary_outputs(&self) -> usize {
        match *self {
            HeadKind::Gaussian { action_dim, .. } => action_dim,
            HeadKind::Categorical { bins } => bins,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub obs_dim: usize,
    /// Width of the previous-action input; 0 when it is not fed.
    pub prev_action_dim: usize,
    pub hidden: usize,
    pub head: HeadKind,
    pub diag_floor: f64,
}

impl Architecture {
    pub fn input_dim(&self) -> usize {
        self.obs_dim + self.prev_action_dim
    }

    pub fn param_count(&self) -> usize {
        self.layout().total
    }

    pub(crate) fn layout(&self) -> Layout {
        let n = self.input_dim();
        let h = self.hidden;
        let head_a = self.head.primary_outputs();
        let head_b = self.head.chol_outputs();
        let mut off = 0;
        let mut next = |rows: usize, cols: usize| {
            let b = Block { off, rows, cols };
            off += rows * cols;
            b
        };
        Layout {
            w_in: next(h, n),
            b_in: next(h, 1),
            w_gate: next(h, h),
            u_gate: next(h, h),
            b_gate: next(h, 1),
            w_cand: next(h, h),
            u_cand: next(h, h),
            b_cand: next(h, 1),
            w_head_a: next(head_a, h),
            b_head_a: next(head_a, 1),
            w_head_b: next(head_b, h),
            b_head_b: next(head_b, 1),
            total: off,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Block {
    pub off: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }
}

/// Offsets of every weight block inside the flat parameter vector, in
/// serialization order.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub w_in: Block,
    pub b_in: Block,
    pub w_gate: Block,
    pub u_gate: Block,
    pub b_gate: Block,
    pub w_cand: Block,
    pub u_cand: Block,
    pub b_cand: Block,
    pub w_head_a: Block,
    pub b_head_a: Block,
    pub w_head_b: Block,
    pub b_head_b: Block,
    pub total: usize,
}

pub(crate) fn view(params: &[f64], b: Block) -> &[f64] {
    &params[b.off..b.off + b.len()]
}

pub(crate) fn view_mut(params: &mut [f64], b: Block) -> &mut [f64] {
    &mut params[b.off..b.off + b.len()]
}

/// out = W·x + bias (rows×cols row-major).
pub(crate) fn affine(w: &[f64], bias: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let row = &w[i * cols..(i + 1) * cols];
        *o = bias[i] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// out += Wᵀ·g.
pub(crate) fn add_tmatvec(w: &[f64], cols: usize, g: &[f64], out: &mut [f64]) {
    for (i, gi) in g.iter().enumerate() {
        let row = &w[i * cols..(i + 1) * cols];
        for (o, wij) in out.iter_mut().zip(row) {
            *o += wij * gi;
        }
    }
}

/// dW += g ⊗ x.
pub(crate) fn add_outer(dw: &mut [f64], cols: usize, g: &[f64], x: &[f64]) {
    for (i, gi) in g.iter().enumerate() {
        let row = &mut dw[i * cols..(i + 1) * cols];
        for (r, xj) in row.iter_mut().zip(x) {
            *r += gi * xj;
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Hidden state of the recurrent cell; zeros at episode start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentState {
    pub hidden: Vec<f64>,
}

/// Intermediate values of one trunk step, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct TrunkTape {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub u: Vec<f64>,
    pub c: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorNet {
    arch: Architecture,
    params: Vec<f64>,
}

impl PredictorNet {
    /// Random trunk and head weights, uniform in ±1/√fan_in, biases zero.
    pub fn new(arch: Architecture, seed: u64) -> Self {
        let layout = arch.layout();
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for b in [
            layout.w_in,
            layout.w_gate,
            layout.u_gate,
            layout.w_cand,
            layout.u_cand,
            layout.w_head_a,
            layout.w_head_b,
        ] {
            if b.len() == 0 {
                continue;
            }
            let scale = 1.0 / (b.cols as f64).sqrt();
            for v in view_mut(&mut params, b) {
                *v = rng.gen_range(-scale..scale);
            }
        }
        Self { arch, params }
    }

    /// All-zero weights: predicts mu = 0 with chol diag exp(0) + floor.
    pub fn zeros(arch: Architecture) -> Self {
        let total = arch.param_count();
        Self {
            arch,
            params: vec![0.0; total],
        }
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self, PredictorError> {
        if params.len() != arch.param_count() {
            return Err(PredictorError::DimensionMismatch {
                expected: arch.param_count(),
                got: params.len(),
            });
        }
        Ok(Self { arch, params })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn initial_state(&self) -> RecurrentState {
        RecurrentState {
            hidden: vec![0.0; self.arch.hidden],
        }
    }

    /// Concatenate observation and (optional) previous action into the
    /// trunk input, validating dimensions.
    pub(crate) fn assemble_input(
        &self,
        obs: &[f64],
        prev_action: Option<&[f64]>,
    ) -> Result<Vec<f64>, PredictorError> {
        if obs.len() != self.arch.obs_dim {
            return Err(PredictorError::DimensionMismatch {
                expected: self.arch.obs_dim,
                got: obs.len(),
            });
        }
        let mut x = Vec::with_capacity(self.arch.input_dim());
        x.extend_from_slice(obs);
        if self.arch.prev_action_dim > 0 {
            match prev_action {
                Some(a) if a.len() == self.arch.prev_action_dim => x.extend_from_slice(a),
                Some(a) => {
                    return Err(PredictorError::DimensionMismatch {
                        expected: self.arch.prev_action_dim,
                        got: a.len(),
                    })
                }
                None => x.extend(std::iter::repeat(0.0).take(self.arch.prev_action_dim)),
            }
        }
        Ok(x)
    }

    pub(crate) fn trunk_step(&self, h_prev: &[f64], x: Vec<f64>) -> TrunkTape {
        let layout = self.arch.layout();
        let h = self.arch.hidden;
        let n = self.arch.input_dim();
        let params = &self.params;

        let mut p = vec![0.0; h];
        affine(view(params, layout.w_in), view(params, layout.b_in), n, &x, &mut p);
        for v in &mut p {
            if *v < 0.0 {
                *v = 0.0;
            }
        }

        let mut a_u = vec![0.0; h];
        affine(view(params, layout.w_gate), view(params, layout.b_gate), h, &p, &mut a_u);
        let mut a_c = vec![0.0; h];
        affine(view(params, layout.w_cand), view(params, layout.b_cand), h, &p, &mut a_c);
        let u_gate = view(params, layout.u_gate);
        let u_cand = view(params, layout.u_cand);
        for i in 0..h {
            let row_g = &u_gate[i * h..(i + 1) * h];
            let row_c = &u_cand[i * h..(i + 1) * h];
            a_u[i] += row_g.iter().zip(h_prev).map(|(a, b)| a * b).sum::<f64>();
            a_c[i] += row_c.iter().zip(h_prev).map(|(a, b)| a * b).sum::<f64>();
        }
        let u: Vec<f64> = a_u.iter().map(|&v| sigmoid(v)).collect();
        let c: Vec<f64> = a_c.iter().map(|&v| v.tanh()).collect();
        let h_new: Vec<f64> = (0..h)
            .map(|i| u[i] * h_prev[i] + (1.0 - u[i]) * c[i])
            .collect();

        TrunkTape {
            x,
            p,
            u,
            c,
            h_prev: h_prev.to_vec(),
            h: h_new,
        }
    }

    /// Raw head outputs from a hidden state: (primary, chol-raw).
    pub(crate) fn head_outputs(&self, h: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let layout = self.arch.layout();
        let mut a = vec![0.0; layout.w_head_a.rows];
        affine(
            view(&self.params, layout.w_head_a),
            view(&self.params, layout.b_head_a),
            self.arch.hidden,
            h,
            &mut a,
        );
        let mut b = vec![0.0; layout.w_head_b.rows];
        if layout.w_head_b.rows > 0 {
            affine(
                view(&self.params, layout.w_head_b),
                view(&self.params, layout.b_head_b),
                self.arch.hidden,
                h,
                &mut b,
            );
        }
        (a, b)
    }

    /// Build the Cholesky factor from raw head outputs: diagonal entries
    /// map through exp(·) + diag_floor, off-diagonals pass through.
    pub(crate) fn build_chol(&self, raw: &[f64]) -> LowerTriangular {
        match self.arch.head {
            HeadKind::Gaussian {
                action_dim,
                diagonal_only,
            } => {
                let d = action_dim;
                let mut packed = vec![0.0; d * (d + 1) / 2];
                if diagonal_only {
                    for k in 0..d {
                        packed[k * (k + 1) / 2 + k] = raw[k].exp() + self.arch.diag_floor;
                    }
                } else {
                    let mut idx = 0;
                    for i in 0..d {
                        for j in 0..=i {
                            packed[idx] = if i == j {
                                raw[idx].exp() + self.arch.diag_floor
                            } else {
                                raw[idx]
                            };
                            idx += 1;
                        }
                    }
                }
                LowerTriangular::from_packed(d, packed).expect("packed length")
            }
            HeadKind::Categorical { .. } => unreachable!("categorical head has no factor"),
        }
    }

    /// One prediction step: consume an observation (and optionally the
    /// victim's previous action), produce the next recurrent state and the
    /// predicted Gaussian. Deterministic in (weights, state, inputs).
    pub fn predict_step(
        &self,
        state: &RecurrentState,
        obs: &[f64],
        prev_action: Option<&[f64]>,
    ) -> Result<(RecurrentState, GaussianParams), PredictorError> {
        if !matches!(self.arch.head, HeadKind::Gaussian { .. }) {
            return Err(PredictorError::WrongHead {
                expected: "gaussian",
            });
        }
        if state.hidden.len() != self.arch.hidden {
            return Err(PredictorError::DimensionMismatch {
                expected: self.arch.hidden,
                got: state.hidden.len(),
            });
        }
        let x = self.assemble_input(obs, prev_action)?;
        let tape = self.trunk_step(&state.hidden, x);
        let (mu, raw) = self.head_outputs(&tape.h);
        let chol = self.build_chol(&raw);
        Ok((
            RecurrentState { hidden: tape.h },
            GaussianParams { mu, chol },
        ))
    }

    /// One prediction step for categorical heads, returning bin logits.
    pub fn predict_logits(
        &self,
        state: &RecurrentState,
        obs: &[f64],
        prev_action: Option<&[f64]>,
    ) -> Result<(RecurrentState, Vec<f64>), PredictorError> {
        if !matches!(self.arch.head, HeadKind::Categorical { .. }) {
            return Err(PredictorError::WrongHead {
                expected: "categorical",
            });
        }
        if state.hidden.len() != self.arch.hidden {
            return Err(PredictorError::DimensionMismatch {
                expected: self.arch.hidden,
                got: state.hidden.len(),
            });
        }
        let x = self.assemble_input(obs, prev_action)?;
        let tape = self.trunk_step(&state.hidden, x);
        let (logits, _) = self.head_outputs(&tape.h);
        Ok((RecurrentState { hidden: tape.h }, logits))
    }
}
