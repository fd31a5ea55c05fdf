//! Baseline (non-robust) GAN objective and sampling — the control arm of
//! every experiment.
//!
//! The discriminator objective is the two-term sample average
//! `S_m = (1/m) Σ log D(x_i) + (1/m) Σ log(1 - D(G(z_i)))`, which the trainer
//! ascends for D (implemented as descending `-S_m`). The generator descends
//! either the minimax term `(1/m) Σ log(1 - D(G(z_i)))` or its non-saturating
//! surrogate `-(1/m) Σ log D(G(z_i))`; the surrogate exists because the
//! minimax form can stall when the discriminator wins early.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::models::{Mlp, StagedMlp};
use crate::tape::{NodeId, ReduceAxis, Tape};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    Minimax,
    NonSaturating,
}

/// Hyperparameters of one (baseline) training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanConfig {
    /// Batch size m.
    pub batch_size: usize,
    pub latent_dim: usize,
    pub steps: u64,
    pub d_steps_per_g_step: u32,
    pub lr_g: f64,
    pub lr_d: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    pub loss_variant: LossVariant,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            latent_dim: 8,
            steps: 20_000,
            d_steps_per_g_step: 1,
            lr_g: 1e-4,
            lr_d: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            seed: 1,
            loss_variant: LossVariant::Minimax,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(crate::error::Error::Contract(
                "batch_size must be >= 2".into(),
            ));
        }
        if self.steps < 1 {
            return Err(crate::error::Error::Contract("steps must be >= 1".into()));
        }
        if self.d_steps_per_g_step < 1 {
            return Err(crate::error::Error::Contract(
                "d_steps_per_g_step must be >= 1".into(),
            ));
        }
        if self.latent_dim == 0 {
            return Err(crate::error::Error::Contract("latent_dim must be > 0".into()));
        }
        Ok(())
    }
}

/// `m x latent_dim` of i.i.d. standard normal draws.
pub fn sample_latent(m: usize, latent_dim: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let data: Vec<f64> = (0..m * latent_dim).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::matrix(m, latent_dim, data).expect("normal draws are finite")
}

/// Records `S_m(G, D)` for a staged discriminator, given real and fake
/// batches already on the tape. The real branch is recorded before the fake
/// branch; gradient accumulation order depends on it.
pub fn d_loss_baseline(
    tape: &mut Tape,
    d: &StagedMlp,
    x: NodeId,
    fake: NodeId,
) -> Result<NodeId> {
    let d_real = d.apply(tape, x)?;
    let log_real = tape.log(d_real)?;
    let real_term = tape.mean(log_real, ReduceAxis::All)?;

    let d_fake = d.apply(tape, fake)?;
    let one_minus = tape.one_minus(d_fake)?;
    let log_fake = tape.log(one_minus)?;
    let fake_term = tape.mean(log_fake, ReduceAxis::All)?;

    tape.add(real_term, fake_term)
}

/// Records the generator objective on fake samples `g_out` (the generator's
/// taped output, so gradients flow back into G). G descends this value.
pub fn g_loss_baseline(
    tape: &mut Tape,
    d: &StagedMlp,
    g_out: NodeId,
    variant: LossVariant,
) -> Result<NodeId> {
    let d_fake = d.apply(tape, g_out)?;
    match variant {
        LossVariant::Minimax => {
            let one_minus = tape.one_minus(d_fake)?;
            let log_fake = tape.log(one_minus)?;
            tape.mean(log_fake, ReduceAxis::All)
        }
        LossVariant::NonSaturating => {
            let log_fake = tape.log(d_fake)?;
            let mean = tape.mean(log_fake, ReduceAxis::All)?;
            tape.neg(mean)
        }
    }
}

/// Value-level `S_m` for fixed networks and batches.
pub fn d_loss_baseline_value(d: &Mlp, x: &Tensor, fake: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let staged = StagedMlp::stage(&mut tape, &d.spec, &d.params)?;
    let x_id = tape.leaf(x.clone());
    let fake_id = tape.leaf(fake.clone());
    let loss = d_loss_baseline(&mut tape, &staged, x_id, fake_id)?;
    tape.value(loss).scalar_value()
}

/// Value-level generator objective for fixed networks and fake samples.
pub fn g_loss_baseline_value(d: &Mlp, fake: &Tensor, variant: LossVariant) -> Result<f64> {
    let mut tape = Tape::new();
    let staged = StagedMlp::stage(&mut tape, &d.spec, &d.params)?;
    let fake_id = tape.leaf(fake.clone());
    let loss = g_loss_baseline(&mut tape, &staged, fake_id, variant)?;
    tape.value(loss).scalar_value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{init_params, HiddenActivation, Mlp, MlpSpec, ParamSet};
    use crate::seeding::rng_from;
    use crate::tensor::Tensor;

    fn zero_d(input_dim: usize) -> Mlp {
        let spec = MlpSpec::discriminator(vec![input_dim, 4, 1], HiddenActivation::LeakyRelu).unwrap();
        let mut params = init_params(&spec, 0);
        for t in params.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        Mlp { spec, params }
    }

    #[test]
    fn latent_batches_are_deterministic_with_shape() {
        let a = sample_latent(5, 8, &mut rng_from(4));
        let b = sample_latent(5, 8, &mut rng_from(4));
        assert_eq!(a, b);
        assert_eq!(a.shape(), &[5, 8]);
    }

    #[test]
    fn latent_moments_match_standard_normal() {
        let z = sample_latent(12_500, 8, &mut rng_from(6));
        let n = z.len() as f64;
        let mean = z.data().iter().sum::<f64>() / n;
        let var = z.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn constant_half_discriminator_gives_minus_two_log_two() {
        let d = zero_d(2);
        let x = Tensor::matrix(4, 2, vec![0.0; 8]).unwrap();
        let fake = Tensor::matrix(4, 2, vec![1.0; 8]).unwrap();
        let s = d_loss_baseline_value(&d, &x, &fake).unwrap();
        assert!((s - (-2.0 * std::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn separating_linear_logit_matches_analytic_value() {
        // D(x) = sigmoid(w x), w = ln 9, real at +1 → 0.9, fake at -1 → 0.1.
        // S_m = log 0.9 + log(1 - 0.1) = 2 log 0.9 ≈ -0.21072.
        let spec = MlpSpec::discriminator(vec![1, 1], HiddenActivation::Relu).unwrap();
        let params = ParamSet {
            layers: vec![crate::models::LayerParams {
                weight: Tensor::matrix(1, 1, vec![9.0f64.ln()]).unwrap(),
                bias: Tensor::zeros(&[1]),
            }],
        };
        let d = Mlp { spec, params };
        let x = Tensor::matrix(3, 1, vec![1.0; 3]).unwrap();
        let fake = Tensor::matrix(3, 1, vec![-1.0; 3]).unwrap();
        let s = d_loss_baseline_value(&d, &x, &fake).unwrap();
        assert!((s - 2.0 * 0.9f64.ln()).abs() < 1e-12, "got {s}");
    }

    #[test]
    fn d_loss_matches_independent_scalar_recomputation() {
        // Scalar oracle: recompute S_m with plain per-sample arithmetic.
        let spec = MlpSpec::discriminator(vec![2, 3, 1], HiddenActivation::Tanh).unwrap();
        let d = Mlp {
            params: init_params(&spec, 17),
            spec,
        };
        let mut rng = rng_from(55);
        let draw = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
        };
        let x = Tensor::matrix(6, 2, draw(&mut rng, 12)).unwrap();
        let fake = Tensor::matrix(6, 2, draw(&mut rng, 12)).unwrap();

        let scalar_d = |d: &Mlp, pt: &[f64]| -> f64 {
            let w0 = &d.params.layers[0];
            let mut h = vec![0.0; 3];
            for j in 0..3 {
                let mut acc = w0.bias.data()[j];
                for (i, x) in pt.iter().enumerate() {
                    acc += x * w0.weight.data()[i * 3 + j];
                }
                h[j] = acc.tanh();
            }
            let w1 = &d.params.layers[1];
            let mut logit = w1.bias.data()[0];
            for (j, hj) in h.iter().enumerate() {
                logit += hj * w1.weight.data()[j];
            }
            1.0 / (1.0 + (-logit).exp())
        };
        let mut expected = 0.0;
        for i in 0..6 {
            expected += scalar_d(&d, x.row(i)).ln() / 6.0;
        }
        let mut fake_term = 0.0;
        for i in 0..6 {
            fake_term += (1.0 - scalar_d(&d, fake.row(i))).ln() / 6.0;
        }
        let got = d_loss_baseline_value(&d, &x, &fake).unwrap();
        assert!((got - (expected + fake_term)).abs() < 1e-12);
    }

    #[test]
    fn g_loss_variants_at_half() {
        let d = zero_d(2);
        let fake = Tensor::matrix(4, 2, vec![0.3; 8]).unwrap();
        let mm = g_loss_baseline_value(&d, &fake, LossVariant::Minimax).unwrap();
        let ns = g_loss_baseline_value(&d, &fake, LossVariant::NonSaturating).unwrap();
        assert!((mm - (-std::f64::consts::LN_2)).abs() < 1e-12);
        assert!((ns - std::f64::consts::LN_2).abs() < 1e-12);
    }
}
