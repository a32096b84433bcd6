use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{DualEncoder, MAX_LOGIT_SCALE};
use super::world::MixtureWorld;
use crate::error::{Error, Result};
use crate::ratio::Flavor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub flavor: Flavor,
    pub hidden: usize,
    pub embed_dim: usize,
    pub batch: usize,
    pub steps: usize,
    pub lr: f64,
    pub init_logit_scale: f64,
    pub init_bias: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            flavor: Flavor::SoftmaxContrastive,
            hidden: 64,
            embed_dim: 32,
            batch: 256,
            steps: 2000,
            lr: 3e-3,
            init_logit_scale: 10.0,
            init_bias: -10.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch < 2 {
            return Err(Error::contract("batch must hold at least two pairs"));
        }
        if self.hidden == 0 || self.embed_dim < 2 {
            return Err(Error::contract("hidden ≥ 1 and embed_dim ≥ 2 required"));
        }
        if !(self.lr > 0.0) || !(self.init_logit_scale > 0.0) {
            return Err(Error::contract("lr and initial logit scale must be positive"));
        }
        Ok(())
    }
}

/// Per-pair weights for a batch, computed from its images.
pub type BatchWeights<'a> = dyn Fn(ArrayView2<f64>) -> Vec<f64> + 'a;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DualEncoder,
    /// Batch loss before each update.
    pub losses: Vec<f64>,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(model: &DualEncoder) -> Self {
        let shapes: Vec<Vec<f64>> = model.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self { m: shapes.clone(), v: shapes, t: 0 }
    }

    fn step(&mut self, model: &mut DualEncoder, grad: &DualEncoder, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (((p, g), m), v) in model
            .tensors_mut()
            .into_iter()
            .zip(grad.tensors())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = Self::B1 * m[i] + (1.0 - Self::B1) * g[i];
                v[i] = Self::B2 * v[i] + (1.0 - Self::B2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

/// Cosine decay from `lr` to a tenth of it.
fn schedule(lr: f64, step: usize, steps: usize) -> f64 {
    let t = step as f64 / steps.max(1) as f64;
    lr * (0.1 + 0.45 * (1.0 + (std::f64::consts::PI * t).cos()))
}

/// Weights normalized to mean one within the batch.
fn normalize_weights(mut w: Vec<f64>) -> Result<Vec<f64>> {
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::contract("batch weights must be finite and nonnegative"));
    }
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    if mean <= 0.0 {
        return Err(Error::contract("batch weights are all zero"));
    }
    for v in &mut w {
        *v /= mean;
    }
    Ok(w)
}

/// Train a dual encoder on fresh minibatches from `world`.
///
/// Fully deterministic given `cfg.seed`. With `weights`, each pair's loss term
/// is scaled by its weight (normalized to mean one per batch).
pub fn train(world: &MixtureWorld, cfg: &TrainConfig, weights: Option<&BatchWeights>) -> Result<TrainOutcome> {
    world.validate()?;
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = DualEncoder::init(
        &mut rng,
        cfg.flavor,
        world.k,
        world.d,
        cfg.hidden,
        cfg.embed_dim,
        world.input_scale(),
        cfg.init_logit_scale,
        cfg.init_bias,
    );
    model.nu = (cfg.batch - 1) as f64;
    let mut adam = Adam::new(&model);
    let mut losses = Vec::with_capacity(cfg.steps);
    let max_log_scale = MAX_LOGIT_SCALE.ln();
    for step in 0..cfg.steps {
        let (labels, images): (Vec<usize>, Array2<f64>) = world.sample_with(&mut rng, cfg.batch);
        let w = match weights {
            Some(f) => normalize_weights(f(images.view()))?,
            None => vec![1.0; cfg.batch],
        };
        let out = model.loss_and_grad(images.view(), &labels, &w);
        if !out.loss.is_finite() {
            return Err(Error::Diverged { step });
        }
        losses.push(out.loss);
        adam.step(&mut model, &out.grad, schedule(cfg.lr, step, cfg.steps));
        model.log_scale = model.log_scale.min(max_log_scale);
        if model.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::Diverged { step });
        }
    }
    Ok(TrainOutcome { model, losses })
}
