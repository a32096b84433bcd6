//! Synthetic paired embedding corpora.
//!
//! Pairs share a latent point drawn around one of several cluster centres
//! (Zipf-distributed popularity); image and text are independent noisy views
//! of that latent, projected to the unit sphere. A shared offset gives the
//! cloud a nonzero mean direction, as real contrastive embeddings have.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingMatrix, Modality, PairedCorpus};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub dim: usize,
    pub clusters: usize,
    /// Per-coordinate std of a latent around its cluster centre.
    pub spread: f64,
    /// Per-coordinate std of each modality's view around the latent.
    pub noise: f64,
    /// Length of the offset shared by all samples.
    pub common: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            dim: 16,
            clusters: 24,
            spread: 0.08,
            noise: 0.06,
            common: 0.6,
            seed: 0,
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> Array1<f64> {
    Array1::from_shape_fn(d, |_| StandardNormal.sample(rng))
}

fn unit(v: Array1<f64>) -> Array1<f64> {
    let n = v.dot(&v).sqrt();
    v / n
}

/// Generate a normalized paired corpus; pair IDs are `p000000`, `p000001`, ...
pub fn clustered_pairs(cfg: &SynthConfig) -> Result<PairedCorpus> {
    if cfg.n == 0 || cfg.dim < 2 || cfg.clusters == 0 {
        return Err(Error::contract("synthetic corpus needs n ≥ 1, dim ≥ 2, clusters ≥ 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.dim;
    let common = unit(gaussian(&mut rng, d)) * cfg.common;
    let centres: Vec<Array1<f64>> = (0..cfg.clusters)
        .map(|_| unit(gaussian(&mut rng, d)))
        .collect();
    let zipf: Vec<f64> = (0..cfg.clusters).map(|k| 1.0 / (k as f64 + 1.0)).collect();
    let total: f64 = zipf.iter().sum();
    let mut images = Array2::zeros((cfg.n, d));
    let mut texts = Array2::zeros((cfg.n, d));
    for p in 0..cfg.n {
        let mut u = rng.random::<f64>() * total;
        let mut k = 0;
        while k + 1 < cfg.clusters && u >= zipf[k] {
            u -= zipf[k];
            k += 1;
        }
        let latent = &centres[k] + &(gaussian(&mut rng, d) * cfg.spread);
        let img = unit(&latent + &(gaussian(&mut rng, d) * cfg.noise) + &common);
        let txt = unit(&latent + &(gaussian(&mut rng, d) * cfg.noise) + &common);
        images.row_mut(p).assign(&img);
        texts.row_mut(p).assign(&txt);
    }
    let ids: Vec<String> = (0..cfg.n).map(|p| format!("p{p:06}")).collect();
    let images = EmbeddingMatrix::new(ids.clone(), images, Modality::Image)?.normalize()?;
    let texts = EmbeddingMatrix::new(ids, texts, Modality::Text)?.normalize()?;
    PairedCorpus::new(images, texts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_unit() {
        let cfg = SynthConfig { n: 50, ..Default::default() };
        let a = clustered_pairs(&cfg).unwrap();
        let b = clustered_pairs(&cfg).unwrap();
        assert_eq!(a.images.rows(), b.images.rows());
        for r in a.texts.rows().outer_iter() {
            assert!((r.dot(&r) - 1.0).abs() < 1e-12);
        }
        // paired rows are closer than random rows on average
        let paired: f64 = (0..50).map(|k| a.images.row(k).dot(&a.texts.row(k))).sum::<f64>() / 50.0;
        let shifted: f64 = (0..50)
            .map(|k| a.images.row(k).dot(&a.texts.row((k + 1) % 50)))
            .sum::<f64>()
            / 50.0;
        assert!(paired > shifted);
    }
}
