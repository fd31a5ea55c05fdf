//! Synthetic 2-D (and 1-D) data sources standing in for the real-data
//! distribution.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::{derive, rng_from, SALT_DATA};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DataKind {
    /// `modes` Gaussians of width `sigma` spaced evenly on a circle.
    RingOfGaussians { modes: usize, radius: f64, sigma: f64 },
    /// Two interleaved half circles with additive Gaussian noise.
    TwoMoons { noise: f64 },
    /// `k x k` grid of Gaussians centered on the origin.
    GridOfGaussians { k: usize, spacing: f64, sigma: f64 },
    /// Finite 1-D distribution given by support values and probabilities.
    Discrete1d { values: Vec<f64>, probs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSource {
    pub kind: DataKind,
    pub seed: u64,
}

impl DataSource {
    pub fn ring(modes: usize, radius: f64, sigma: f64, seed: u64) -> Self {
        Self {
            kind: DataKind::RingOfGaussians { modes, radius, sigma },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            DataKind::RingOfGaussians { modes, radius, sigma } => {
                if *modes == 0 || *radius <= 0.0 || *sigma <= 0.0 {
                    return Err(Error::Contract(format!(
                        "ring needs modes>0, radius>0, sigma>0, got {modes}/{radius}/{sigma}"
                    )));
                }
            }
            DataKind::TwoMoons { noise } => {
                if *noise < 0.0 {
                    return Err(Error::Contract("two_moons noise must be >= 0".into()));
                }
            }
            DataKind::GridOfGaussians { k, spacing, sigma } => {
                if *k == 0 || *spacing <= 0.0 || *sigma <= 0.0 {
                    return Err(Error::Contract(format!(
                        "grid needs k>0, spacing>0, sigma>0, got {k}/{spacing}/{sigma}"
                    )));
                }
            }
            DataKind::Discrete1d { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return Err(Error::Contract(
                        "discrete_1d needs matching non-empty values/probs".into(),
                    ));
                }
                if probs.iter().any(|&p| p < 0.0) {
                    return Err(Error::Contract("discrete_1d probabilities must be >= 0".into()));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::Contract(format!(
                        "discrete_1d probabilities sum to {total}, need 1 within 1e-12"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            DataKind::Discrete1d { .. } => 1,
            _ => 2,
        }
    }

    /// Gaussian-mixture mode centers, for sources that have them.
    pub fn mode_centers(&self) -> Option<Vec<[f64; 2]>> {
        match &self.kind {
            DataKind::RingOfGaussians { modes, radius, .. } => Some(
                (0..*modes)
                    .map(|j| {
                        let theta = 2.0 * std::f64::consts::PI * j as f64 / *modes as f64;
                        [radius * theta.cos(), radius * theta.sin()]
                    })
                    .collect(),
            ),
            DataKind::GridOfGaussians { k, spacing, .. } => {
                let offset = (*k as f64 - 1.0) / 2.0;
                Some(
                    (0..k * k)
                        .map(|idx| {
                            let (i, j) = (idx / k, idx % k);
                            [
                                (i as f64 - offset) * spacing,
                                (j as f64 - offset) * spacing,
                            ]
                        })
                        .collect(),
                )
            }
            _ => None,
        }
    }

    pub fn mode_sigma(&self) -> Option<f64> {
        match self.kind {
            DataKind::RingOfGaussians { sigma, .. } => Some(sigma),
            DataKind::GridOfGaussians { sigma, .. } => Some(sigma),
            _ => None,
        }
    }

    /// Draws `n` samples as an `[n×dim]` tensor.
    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        self.validate()?;
        let dim = self.dim();
        let mut data = Vec::with_capacity(n * dim);
        match &self.kind {
            DataKind::RingOfGaussians { modes, radius, sigma } => {
                for _ in 0..n {
                    let j = rng.random_range(0..*modes);
                    let theta = 2.0 * std::f64::consts::PI * j as f64 / *modes as f64;
                    let nx: f64 = rng.sample(StandardNormal);
                    let ny: f64 = rng.sample(StandardNormal);
                    data.push(radius * theta.cos() + sigma * nx);
                    data.push(radius * theta.sin() + sigma * ny);
                }
            }
            DataKind::TwoMoons { noise } => {
                for _ in 0..n {
                    let t = rng.random_range(0.0..std::f64::consts::PI);
                    let upper = rng.random_range(0..2) == 0;
                    let (mut x, mut y) = if upper {
                        (t.cos(), t.sin())
                    } else {
                        (1.0 - t.cos(), 0.5 - t.sin())
                    };
                    let nx: f64 = rng.sample(StandardNormal);
                    let ny: f64 = rng.sample(StandardNormal);
                    x += noise * nx;
                    y += noise * ny;
                    data.push(x);
                    data.push(y);
                }
            }
            DataKind::GridOfGaussians { sigma, .. } => {
                let centers = self.mode_centers().expect("grid has centers");
                for _ in 0..n {
                    let c = centers[rng.random_range(0..centers.len())];
                    let nx: f64 = rng.sample(StandardNormal);
                    let ny: f64 = rng.sample(StandardNormal);
                    data.push(c[0] + sigma * nx);
                    data.push(c[1] + sigma * ny);
                }
            }
            DataKind::Discrete1d { values, probs } => {
                for _ in 0..n {
                    let u: f64 = rng.random_range(0.0..1.0);
                    let mut acc = 0.0;
                    let mut chosen = *values.last().unwrap();
                    for (v, p) in values.iter().zip(probs) {
                        acc += p;
                        if u < acc {
                            chosen = *v;
                            break;
                        }
                    }
                    data.push(chosen);
                }
            }
        }
        Tensor::matrix(n, dim, data)
    }

    /// The fixed finite training set of a run: `n` samples drawn once from a
    /// stream derived from the source seed and the run seed.
    pub fn training_set(&self, n: usize, run_seed: u64) -> Result<Tensor> {
        let mut rng = rng_from(derive(self.seed ^ run_seed, SALT_DATA));
        self.sample(n, &mut rng)
    }
}
