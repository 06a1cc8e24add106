//! Discretized baseline detector: a uniform quantizer over the action box
//! and a categorical predictor head, scored by the log-probability of the
//! observed bin normalized by the modal bin. The categorical score has no
//! closed-form moments, so detection uses the sliding-window metric with
//! empirically calibrated reference moments instead of CUSUM.
//!
//! The bin count grows as Q^d, which is the baseline's fundamental
//! scaling limit (Q = 3, d = 9 already needs 19683 outputs).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::predictor::{train, PredictorNet, TrainConfig, TrainError, TrainingSample};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("action out of bounds in dim {dim}: {value} not in [{low}, {high}]")]
    OutOfBounds { dim: usize, value: f64, low: f64, high: f64 },
    #[error("bin index {bin} out of range (have {bins})")]
    IndexOutOfRange { bin: usize, bins: usize },
    #[error("invalid quantizer: {0}")]
    InvalidQuantizer(String),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Uniform per-dimension quantizer. Bins along one dimension are the Q
/// intervals of equal width; a boundary point belongs to the lower bin.
/// Multi-dimensional bins are combined mixed-radix with dimension 0 as
/// the least significant digit: index = Σ_k bin_k · Q^k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantizer {
    pub levels: usize,
    pub bounds: Vec<(f64, f64)>,
}

/// Tolerance for clamping slightly out-of-box actions before binning.
const CLAMP_SLACK: f64 = 1e-9;

impl Quantizer {
    pub fn new(levels: usize, bounds: Vec<(f64, f64)>) -> Result<Self, BaselineError> {
        if levels < 2 {
            return Err(BaselineError::InvalidQuantizer(
                "need at least 2 levels per dimension".into(),
            ));
        }
        if bounds.is_empty() || bounds.iter().any(|(lo, hi)| lo >= hi) {
            return Err(BaselineError::InvalidQuantizer(
                "bounds must be nonempty with low < high".into(),
            ));
        }
        Ok(Self { levels, bounds })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    /// Total bin count Q^d.
    pub fn bins(&self) -> usize {
        self.levels.pow(self.dim() as u32)
    }

    fn bin_1d(&self, dim: usize, value: f64) -> Result<usize, BaselineError> {
        let (lo, hi) = self.bounds[dim];
        if value < lo - CLAMP_SLACK || value > hi + CLAMP_SLACK {
            return Err(BaselineError::OutOfBounds {
                dim,
                value,
                low: lo,
                high: hi,
            });
        }
        let v = value.clamp(lo, hi);
        let width = (hi - lo) / self.levels as f64;
        // ceil((v-lo)/width) - 1 puts boundary points in the lower bin.
        let frac = (v - lo) / width;
        let bin = (frac.ceil() as isize - 1).clamp(0, self.levels as isize - 1);
        Ok(bin as usize)
    }

    pub fn quantize(&self, action: &[f64]) -> Result<usize, BaselineError> {
        if action.len() != self.dim() {
            return Err(BaselineError::InvalidQuantizer(format!(
                "action has {} dims, quantizer has {}",
                action.len(),
                self.dim()
            )));
        }
        let mut index = 0;
        let mut stride = 1;
        for (k, &v) in action.iter().enumerate() {
            index += self.bin_1d(k, v)? * stride;
            stride *= self.levels;
        }
        Ok(index)
    }

    /// Center of the given bin.
    pub fn dequantize(&self, mut index: usize) -> Result<Vec<f64>, BaselineError> {
        if index >= self.bins() {
            return Err(BaselineError::IndexOutOfRange {
                bin: index,
                bins: self.bins(),
            });
        }
        let mut center = Vec::with_capacity(self.dim());
        for &(lo, hi) in &self.bounds {
            let bin = index % self.levels;
            index /= self.levels;
            let width = (hi - lo) / self.levels as f64;
            center.push(lo + (bin as f64 + 0.5) * width);
        }
        Ok(center)
    }
}

/// Predicted categorical distribution as unnormalized logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalParams {
    pub logits: Vec<f64>,
}

impl CategoricalParams {
    pub fn probs(&self) -> Vec<f64> {
        let max = self.logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = self.logits.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exp.iter().sum();
        exp.iter().map(|v| v / sum).collect()
    }
}

/// log p(bin) − log max_b p(b) ≤ 0, the categorical analogue of the
/// Gaussian normality score. The normalization constant cancels, leaving
/// logit[bin] − max logit.
pub fn discrete_normality_score(
    params: &CategoricalParams,
    bin: usize,
) -> Result<f64, BaselineError> {
    if bin >= params.logits.len() {
        return Err(BaselineError::IndexOutOfRange {
            bin,
            bins: params.logits.len(),
        });
    }
    let max = params.logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(params.logits[bin] - max)
}

/// Quantize each target action of a continuous sample into bin labels.
pub fn quantize_sample(
    quant: &Quantizer,
    sample: &TrainingSample,
) -> Result<TrainingSample, BaselineError> {
    let bins = sample
        .targets
        .iter()
        .map(|a| quant.quantize(a))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TrainingSample {
        inputs: sample.inputs.clone(),
        targets: sample.targets.clone(),
        target_bins: Some(bins),
    })
}

/// Train a categorical-head predictor on quantized targets with the same
/// loop as the Gaussian predictor, using cross-entropy loss.
pub fn train_discrete(
    net: &PredictorNet,
    quant: &Quantizer,
    data: &[TrainingSample],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(PredictorNet, Vec<f64>), BaselineError> {
    let quantized = data
        .iter()
        .map(|s| quantize_sample(quant, s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(train(net, &quantized, cfg, seed)?)
}

/// Empirical mean and standard deviation of the categorical score on clean
/// data; the window metric's reference moments for the discrete detector.
pub fn calibrate_scores(scores: &[f64]) -> (f64, f64) {
    let n = scores.len().max(1) as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    (mean, var.sqrt().max(1e-9))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::{Architecture, HeadKind};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn quantize_center_of_symmetric_range() {
        let q = Quantizer::new(3, vec![(-1.0, 1.0)]).unwrap();
        assert_eq!(q.quantize(&[0.0]).unwrap(), 1);
    }

    #[test]
    fn quantize_mixed_radix_order() {
        let q = Quantizer::new(3, vec![(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
        // (-1, 1): bins (0, 2), index = 0·3⁰ + 2·3¹ = 6.
        assert_eq!(q.quantize(&[-1.0, 1.0]).unwrap(), 6);
    }

    #[test]
    fn quantize_enumerates_bijectively() {
        let q = Quantizer::new(3, vec![(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
        let mut seen = vec![false; q.bins()];
        for i in 0..q.bins() {
            let center = q.dequantize(i).unwrap();
            let back = q.quantize(&center).unwrap();
            assert_eq!(back, i);
            assert!(!seen[i]);
            seen[i] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn boundary_point_goes_to_lower_bin() {
        let q = Quantizer::new(2, vec![(-1.0, 1.0)]).unwrap();
        assert_eq!(q.quantize(&[0.0]).unwrap(), 0);
        assert_eq!(q.quantize(&[-1.0]).unwrap(), 0);
        assert_eq!(q.quantize(&[1.0]).unwrap(), 1);
    }

    #[test]
    fn out_of_bounds_rejected_beyond_slack() {
        let q = Quantizer::new(3, vec![(-1.0, 1.0)]).unwrap();
        assert!(q.quantize(&[1.0 + 1e-10]).is_ok());
        assert!(matches!(
            q.quantize(&[1.1]),
            Err(BaselineError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn roundtrip_error_bounded_by_half_bin() {
        let q = Quantizer::new(4, vec![(-1.0, 1.0), (0.0, 2.0)]).unwrap();
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..500 {
            let a = [rng.gen_range(-1.0..1.0), rng.gen_range(0.0..2.0)];
            let center = q.dequantize(q.quantize(&a).unwrap()).unwrap();
            for (k, (&(lo, hi), c)) in q.bounds.iter().zip(&center).enumerate() {
                assert!((a[k] - c).abs() <= (hi - lo) / (2.0 * 4.0) + 1e-12);
            }
        }
    }

    #[test]
    fn head_size_grows_as_levels_pow_dim() {
        let q = Quantizer::new(3, vec![(-1.0, 1.0); 9]).unwrap();
        assert_eq!(q.bins(), 19683);
        assert_eq!(q.bins(), 3usize.pow(9));
    }

    #[test]
    fn uniform_logits_score_zero_everywhere() {
        let p = CategoricalParams { logits: vec![0.7; 5] };
        for b in 0..5 {
            assert_eq!(discrete_normality_score(&p, b).unwrap(), 0.0);
        }
    }

    #[test]
    fn score_against_modal_bin() {
        let p = CategoricalParams {
            logits: vec![0.7f64.ln(), 0.2f64.ln(), 0.1f64.ln()],
        };
        assert_eq!(discrete_normality_score(&p, 0).unwrap(), 0.0);
        let s = discrete_normality_score(&p, 2).unwrap();
        assert!((s - (0.1f64 / 0.7).ln()).abs() < 1e-12);
        assert!((s - (-1.9459)).abs() < 1e-4);
        assert!(matches!(
            discrete_normality_score(&p, 3),
            Err(BaselineError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn train_discrete_learns_uniform_and_deterministic_targets() {
        let mut rng = StdRng::seed_from_u64(4);
        let q = Quantizer::new(3, vec![(-1.0, 1.0)]).unwrap();
        let arch = Architecture {
            obs_dim: 2,
            prev_action_dim: 0,
            hidden: 8,
            head: HeadKind::Categorical { bins: q.bins() },
            diag_floor: 1e-3,
        };

        // i.i.d. uniform targets: learned distribution close to uniform in
        // total variation.
        let data: Vec<TrainingSample> = (0..80)
            .map(|_| TrainingSample {
                inputs: (0..20)
                    .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
                    .collect(),
                targets: (0..20).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect(),
                target_bins: None,
            })
            .collect();
        let net = PredictorNet::new(arch.clone(), 8);
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            batch_size: 20,
            epochs: 30,
            hidden_size: 8,
            ..TrainConfig::default()
        };
        let (trained, _) = train_discrete(&net, &q, &data, &cfg, 9).unwrap();
        let mut state = trained.initial_state();
        let mut tv_worst: f64 = 0.0;
        for t in 0..20 {
            let (next, logits) = trained
                .predict_logits(&state, &data[0].inputs[t], None)
                .unwrap();
            state = next;
            let probs = CategoricalParams { logits }.probs();
            let tv: f64 = probs.iter().map(|p| (p - 1.0 / 3.0).abs()).sum::<f64>() / 2.0;
            tv_worst = tv_worst.max(tv);
        }
        assert!(tv_worst < 0.05, "total variation {tv_worst}");

        // Deterministic bin per observation: cross-entropy approaches zero.
        let det_data: Vec<TrainingSample> = (0..40)
            .map(|_| {
                let inputs: Vec<Vec<f64>> = (0..15)
                    .map(|_| vec![rng.gen_range(-1.0..1.0), 0.0])
                    .collect();
                let targets: Vec<Vec<f64>> = inputs
                    .iter()
                    .map(|o| vec![if o[0] > 0.0 { 0.9 } else { -0.9 }])
                    .collect();
                TrainingSample {
                    inputs,
                    targets,
                    target_bins: None,
                }
            })
            .collect();
        let net = PredictorNet::new(arch, 10);
        let cfg = TrainConfig {
            learning_rate: 3e-2,
            batch_size: 10,
            epochs: 120,
            hidden_size: 8,
            ..TrainConfig::default()
        };
        let (_, curve) = train_discrete(&net, &q, &det_data, &cfg, 11).unwrap();
        assert!(
            *curve.last().unwrap() < 0.05,
            "final cross-entropy {}",
            curve.last().unwrap()
        );
    }

    #[test]
    fn calibration_moments() {
        let (m, s) = calibrate_scores(&[-1.0, -3.0]);
        assert_eq!(m, -2.0);
        assert_eq!(s, 1.0);
    }
}
