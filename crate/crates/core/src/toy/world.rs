use ndarray::{Array2, ArrayView1};
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::log_sum_exp;

/// Component variance used when none is given (covariance `4·I`).
pub const DEFAULT_VARIANCE: f64 = 4.0;
/// Distance of the component means from the origin in the default worlds.
pub const DEFAULT_RADIUS: f64 = 6.0;

/// Categorical labels with one isotropic Gaussian image component per label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureWorld {
    pub k: usize,
    pub d: usize,
    pub means: Vec<Vec<f64>>,
    /// Per-coordinate variance `σ²`.
    pub var: f64,
    pub priors: Vec<f64>,
    pub seed: u64,
}

impl MixtureWorld {
    pub fn new(means: Vec<Vec<f64>>, var: f64, priors: Vec<f64>, seed: u64) -> Result<Self> {
        let world = Self {
            k: means.len(),
            d: means.first().map_or(0, Vec::len),
            means,
            var,
            priors,
            seed,
        };
        world.validate()?;
        Ok(world)
    }

    /// Check shapes, the prior simplex and mean distinctness.
    ///
    /// Priors may contain zeros (a degenerate world that only ever emits some
    /// labels) but must sum to one.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.d == 0 {
            return Err(Error::contract("world needs k ≥ 1 and d ≥ 1"));
        }
        if self.means.len() != self.k || self.means.iter().any(|m| m.len() != self.d) {
            return Err(Error::contract("means must be k vectors of dimension d"));
        }
        if self.priors.len() != self.k {
            return Err(Error::contract("priors must have k entries"));
        }
        if !(self.var > 0.0 && self.var.is_finite()) {
            return Err(Error::contract("variance must be positive"));
        }
        if self.priors.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::contract("priors must be nonnegative"));
        }
        let total: f64 = self.priors.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::contract(format!("priors sum to {total}, not 1")));
        }
        for a in 0..self.k {
            for b in a + 1..self.k {
                if self.means[a] == self.means[b] {
                    return Err(Error::contract(format!("means {a} and {b} coincide")));
                }
            }
        }
        Ok(())
    }

    /// Means evenly spaced on a circle in the first two coordinates.
    pub fn ring(k: usize, d: usize, radius: f64, var: f64) -> Result<Self> {
        if d < 2 && k > 2 {
            return Err(Error::contract("a ring of more than two means needs d ≥ 2"));
        }
        let means = (0..k)
            .map(|j| {
                let angle = 2.0 * std::f64::consts::PI * j as f64 / k as f64;
                let mut m = vec![0.0; d];
                m[0] = radius * angle.cos();
                if d > 1 {
                    m[1] = radius * angle.sin();
                }
                m
            })
            .collect();
        Self::new(means, var, vec![1.0 / k as f64; k], 0)
    }

    /// Means at `radius` along random directions.
    pub fn random(k: usize, d: usize, radius: f64, var: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let means = (0..k)
            .map(|_| {
                let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                g.into_iter().map(|v| radius * v / n).collect()
            })
            .collect();
        Self::new(means, var, vec![1.0 / k as f64; k], seed)
    }

    /// The default world: a ring for `d = 2`, random directions otherwise,
    /// uniform priors, `σ² = 4`.
    pub fn standard(k: usize, d: usize, seed: u64) -> Result<Self> {
        if d == 2 {
            let mut w = Self::ring(k, d, DEFAULT_RADIUS, DEFAULT_VARIANCE)?;
            w.seed = seed;
            Ok(w)
        } else {
            Self::random(k, d, DEFAULT_RADIUS, DEFAULT_VARIANCE, seed)
        }
    }

    /// Component log density up to the constant shared by all components.
    fn log_component(&self, x: ArrayView1<f64>, j: usize) -> f64 {
        let sq: f64 = x
            .iter()
            .zip(&self.means[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        -sq / (2.0 * self.var)
    }

    /// `log p(i | t_j) / p(i)`.
    pub fn log_true_ratio(&self, image: ArrayView1<f64>, label: usize) -> f64 {
        let terms: Vec<f64> = (0..self.k)
            .filter(|&k| self.priors[k] > 0.0)
            .map(|k| self.priors[k].ln() + self.log_component(image, k))
            .collect();
        self.log_component(image, label) - log_sum_exp(&terms)
    }

    /// `p(i | t_j) / p(i)`, evaluated in log space.
    pub fn true_ratio(&self, image: ArrayView1<f64>, label: usize) -> Result<f64> {
        if label >= self.k {
            return Err(Error::contract(format!("label {label} out of range 0..{}", self.k)));
        }
        if image.len() != self.d {
            return Err(Error::contract("image dimension does not match the world"));
        }
        Ok(self.log_true_ratio(image, label).exp())
    }

    /// Posterior `p(t_k | i)` for all labels.
    pub fn posterior(&self, image: ArrayView1<f64>) -> Vec<f64> {
        let logs: Vec<f64> = (0..self.k)
            .map(|k| {
                if self.priors[k] > 0.0 {
                    self.priors[k].ln() + self.log_component(image, k)
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let lse = log_sum_exp(&logs);
        logs.iter().map(|l| (l - lse).exp()).collect()
    }

    /// Draw one image from component `label`.
    pub fn sample_image<R: Rng>(&self, rng: &mut R, label: usize) -> Vec<f64> {
        let sd = self.var.sqrt();
        self.means[label]
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(rng);
                m + sd * z
            })
            .collect()
    }

    /// Labels from the priors and images from their components, drawn from `rng`.
    pub fn sample_with<R: Rng>(&self, rng: &mut R, n: usize) -> (Vec<usize>, Array2<f64>) {
        let dist = WeightedIndex::new(&self.priors).expect("validated priors");
        let mut labels = Vec::with_capacity(n);
        let mut images = Array2::zeros((n, self.d));
        for r in 0..n {
            let label = dist.sample(rng);
            let img = self.sample_image(rng, label);
            images.row_mut(r).assign(&ArrayView1::from(&img));
            labels.push(label);
        }
        (labels, images)
    }

    /// `n` i.i.d. pairs, deterministic under `seed`.
    pub fn sample_pairs(&self, n: usize, seed: u64) -> Result<(Vec<usize>, Array2<f64>)> {
        if n == 0 {
            return Err(Error::contract("sample at least one pair"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(self.sample_with(&mut rng, n))
    }

    /// RMS scale of an image coordinate under the marginal, used to
    /// standardize encoder inputs.
    pub fn input_scale(&self) -> f64 {
        let mean_sq: f64 = self
            .means
            .iter()
            .zip(&self.priors)
            .map(|(m, p)| p * m.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            / self.d as f64;
        (mean_sq + self.var).sqrt()
    }
}
