//! Covariate-shift reweighting in the toy world.
//!
//! A frozen reference encoder scores each training image against the prompt
//! label's text embedding; `exp(scale·⟨u_image, u_prompt⟩)` then weights that
//! pair's loss. Both runs share the seed and step budget, and are compared on
//! images drawn from the prompt's own component.

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::eval::predict_log_ratios;
use super::model::DualEncoder;
use super::train::{train, TrainConfig};
use super::world::MixtureWorld;
use crate::bootstrap::mix_seed;
use crate::error::{Error, Result};
use crate::ratio::{Calibration, DEFAULT_IWL_SCALE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IwlConfig {
    pub prompt_label: usize,
    pub weight_scale: f64,
    /// Recipe for the frozen reference encoder.
    pub reference: TrainConfig,
    /// Recipe shared by the weighted and baseline runs.
    pub train: TrainConfig,
    pub n_test: usize,
}

impl Default for IwlConfig {
    fn default() -> Self {
        Self {
            prompt_label: 0,
            weight_scale: DEFAULT_IWL_SCALE,
            reference: TrainConfig { steps: 1000, ..Default::default() },
            train: TrainConfig { steps: 300, ..Default::default() },
            n_test: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IwlReport {
    pub prompt_label: usize,
    pub seed: u64,
    pub steps: usize,
    pub baseline_test_loss: f64,
    pub weighted_test_loss: f64,
    pub mean_weight_on_prompt: f64,
    pub mean_weight_off_prompt: f64,
}

impl IwlReport {
    pub fn weighted_wins(&self) -> bool {
        self.weighted_test_loss <= self.baseline_test_loss
    }
}

/// Unnormalized weights for a batch of raw images.
pub fn reference_weights(reference: &DualEncoder, prompt: usize, scale: f64, images: ArrayView2<f64>) -> Vec<f64> {
    let u_prompt = reference.embed_labels(&[prompt]);
    let dots = reference.embed_images(images).dot(&u_prompt.row(0));
    dots.mapv(|d| (scale * d).exp()).to_vec()
}

/// Mean cross-entropy between the true label posterior and the model's,
/// `p̂(k | i) ∝ π_k · r̂_k(i)`, over `images`.
pub fn posterior_cross_entropy(model: &DualEncoder, world: &MixtureWorld, images: ArrayView2<f64>) -> Result<f64> {
    let log_r = predict_log_ratios(model, images, Calibration::None, &world.priors)?;
    let mut total = 0.0;
    for (img, row) in images.outer_iter().zip(log_r.axis_iter(Axis(0))) {
        let truth = world.posterior(img);
        let logits: Vec<f64> = row
            .iter()
            .zip(&world.priors)
            .map(|(l, p)| if *p > 0.0 { l + p.ln() } else { f64::NEG_INFINITY })
            .collect();
        let lse = crate::stats::log_sum_exp(&logits);
        total -= truth
            .iter()
            .zip(&logits)
            .filter(|(t, _)| **t > 0.0)
            .map(|(t, l)| t * (l - lse))
            .sum::<f64>();
    }
    Ok(total / images.nrows() as f64)
}

/// Weighted vs unweighted training at one seed (the `train.seed` of `cfg`).
pub fn iwl_demo(world: &MixtureWorld, cfg: &IwlConfig) -> Result<IwlReport> {
    if cfg.prompt_label >= world.k {
        return Err(Error::contract(format!("prompt label {} out of range", cfg.prompt_label)));
    }
    if !(cfg.weight_scale > 0.0) || cfg.n_test == 0 {
        return Err(Error::contract("weight scale must be positive and n_test ≥ 1"));
    }
    let seed = cfg.train.seed;
    let reference_cfg = TrainConfig { seed: mix_seed(seed, 1, 0), ..cfg.reference.clone() };
    let reference = train(world, &reference_cfg, None)?.model;
    let weigh = |x: ArrayView2<f64>| reference_weights(&reference, cfg.prompt_label, cfg.weight_scale, x);
    let baseline = train(world, &cfg.train, None)?.model;
    let weighted = train(world, &cfg.train, Some(&weigh))?.model;

    let mut target = world.clone();
    target.priors = vec![0.0; world.k];
    target.priors[cfg.prompt_label] = 1.0;
    let (_, test) = target.sample_pairs(cfg.n_test, mix_seed(seed, 2, 0))?;

    let (labels, pool) = world.sample_pairs(cfg.n_test, mix_seed(seed, 3, 0))?;
    let w = weigh(pool.view());
    let (mut on, mut n_on, mut off, mut n_off) = (0.0, 0usize, 0.0, 0usize);
    for (l, v) in labels.iter().zip(&w) {
        if *l == cfg.prompt_label {
            on += v;
            n_on += 1;
        } else {
            off += v;
            n_off += 1;
        }
    }
    Ok(IwlReport {
        prompt_label: cfg.prompt_label,
        seed,
        steps: cfg.train.steps,
        baseline_test_loss: posterior_cross_entropy(&baseline, world, test.view())?,
        weighted_test_loss: posterior_cross_entropy(&weighted, world, test.view())?,
        mean_weight_on_prompt: if n_on > 0 { on / n_on as f64 } else { f64::NAN },
        mean_weight_off_prompt: if n_off > 0 { off / n_off as f64 } else { f64::NAN },
    })
}
