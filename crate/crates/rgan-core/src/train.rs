//! The experiment training driver shared by every arm.
//!
//! One run is described by a [`TrainRun`]: the robust configuration (whose
//! ablation switch selects the arm), a data source, network shapes and
//! evaluation settings. Training alternates `d_steps_per_g_step`
//! discriminator updates with one generator update per step and emits a
//! [`MetricsRecord`] at step 0, every `eval_interval` steps and at the end.
//!
//! Runs are deterministic: the training stream, parameter initialization,
//! the fixed training set and every evaluation stream are derived from the
//! run seed with distinct salts, so a `(config, seed)` pair reproduces its
//! outputs byte for byte.

use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::DataSource;
use crate::error::{Error, Result};
use crate::gan::{
    d_loss_baseline_value, g_loss_baseline_value, sample_latent, GanConfig,
};
use crate::metrics::{
    mmd_rbf, mode_coverage, worst_noise_stress, MetricsRecord, MMD_BANDWIDTH_SCALES,
};
use crate::models::{init_params, AdamState, HiddenActivation, Mlp, MlpSpec};
use crate::robust::{
    random_unit_batch, rgan_d_loss, rgan_g_loss, rgan_train_step, solve_fake_perturbation,
    solve_real_perturbation, worst_latent_perturbation, Ablation, PerturbationBatch,
    PerturbationConfig, RganConfig, Weighting,
};
use crate::seeding::{derive, rng_from, SALT_D_INIT, SALT_EVAL, SALT_G_INIT};
use crate::tensor::Tensor;
use crate::theory::{generalization_gap, GapObjective};

/// Hidden-layer shapes for the two players.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub g_hidden: Vec<usize>,
    pub d_hidden: Vec<usize>,
    pub hidden_activation: HiddenActivation,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            g_hidden: vec![64, 64],
            d_hidden: vec![64, 64],
            hidden_activation: HiddenActivation::LeakyRelu,
        }
    }
}

/// Evaluation cadence and sample sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub interval: u64,
    /// Samples per metric evaluation (coverage, MMD, stress).
    pub samples: usize,
    /// Size of the fixed finite training set.
    pub train_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            interval: 2000,
            samples: 500,
            train_size: 256,
        }
    }
}

/// Full description of one run. The arm is the ablation switch of the
/// robust config; `Ablation::None` is the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub rgan: RganConfig,
    pub data: DataSource,
    pub net: NetConfig,
    pub eval: EvalConfig,
}

impl TrainRun {
    pub fn validate(&self) -> Result<()> {
        self.rgan.validate()?;
        self.data.validate()?;
        if self.eval.interval == 0 {
            return Err(Error::Contract("eval interval must be > 0".into()));
        }
        if self.eval.samples < 100 {
            return Err(Error::Contract(
                "eval samples must be >= 100 for mode coverage".into(),
            ));
        }
        if self.eval.train_size < 2 {
            return Err(Error::Contract("train_size must be >= 2".into()));
        }
        if self.net.g_hidden.is_empty() || self.net.d_hidden.is_empty() {
            return Err(Error::Contract("networks need at least one hidden layer".into()));
        }
        Ok(())
    }

    pub fn arm_name(&self) -> &'static str {
        arm_name(self.rgan.ablation)
    }

    pub fn seed(&self) -> u64 {
        self.rgan.base.seed
    }

    pub fn g_spec(&self) -> Result<MlpSpec> {
        let mut sizes = vec![self.rgan.base.latent_dim];
        sizes.extend_from_slice(&self.net.g_hidden);
        sizes.push(self.data.dim());
        MlpSpec::generator(sizes, self.net.hidden_activation)
    }

    pub fn d_spec(&self) -> Result<MlpSpec> {
        let mut sizes = vec![self.data.dim()];
        sizes.extend_from_slice(&self.net.d_hidden);
        sizes.push(1);
        MlpSpec::discriminator(sizes, self.net.hidden_activation)
    }

    /// The reference ring-of-8-Gaussians experiment: published trade-off
    /// λ=0.1 and latent magnitude ε₁=0.01, with the data perturbation
    /// magnitude scaled to the 2-D ring (ε₂=0.1; the published 4 is an
    /// image-scale value). Non-saturating generator loss keeps the early
    /// phase from stalling.
    pub fn ring8_reference(ablation: Ablation, seed: u64) -> Self {
        Self {
            rgan: RganConfig {
                base: GanConfig {
                    batch_size: 32,
                    latent_dim: 8,
                    steps: 20_000,
                    d_steps_per_g_step: 1,
                    lr_g: 1e-4,
                    lr_d: 1e-4,
                    beta1: 0.5,
                    beta2: 0.999,
                    seed,
                    loss_variant: crate::gan::LossVariant::NonSaturating,
                },
                perturb: PerturbationConfig {
                    eps1: 0.01,
                    eps2: 0.1,
                    lambda_z: 1.0,
                    lambda_d: 1.0,
                    inner_steps: 1,
                    inner_lr: 0.05,
                },
                lambda: 0.1,
                weighting: Weighting::Eq11Convex,
                ablation,
            },
            data: DataSource::ring(8, 2.0, 0.05, 7),
            net: NetConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// CSV/CLI name of an ablation arm.
pub fn arm_name(ablation: Ablation) -> &'static str {
    match ablation {
        Ablation::None => "baseline",
        Ablation::Both => "rgan",
        Ablation::GOnly => "ablation_g_only",
        Ablation::DOnly => "ablation_d_only",
        Ablation::RandomNoise => "ablation_random_noise",
    }
}

pub fn ablation_from_arm_name(name: &str) -> Option<Ablation> {
    match name {
        "baseline" => Some(Ablation::None),
        "rgan" => Some(Ablation::Both),
        "ablation_g_only" => Some(Ablation::GOnly),
        "ablation_d_only" => Some(Ablation::DOnly),
        "ablation_random_noise" => Some(Ablation::RandomNoise),
        _ => None,
    }
}

pub const ARM_NAMES: [&str; 5] = [
    "baseline",
    "rgan",
    "ablation_g_only",
    "ablation_d_only",
    "ablation_random_noise",
];

/// Mutable training state of one run.
pub struct TrainState {
    pub g: Mlp,
    pub d: Mlp,
    pub opt_g: AdamState,
    pub opt_d: AdamState,
    pub step: u64,
    pub train_set: Tensor,
    pub(crate) rng: ChaCha8Rng,
}

impl TrainState {
    pub fn init(run: &TrainRun) -> Result<Self> {
        run.validate()?;
        let seed = run.seed();
        let g_spec = run.g_spec()?;
        let d_spec = run.d_spec()?;
        let g = Mlp {
            params: init_params(&g_spec, derive(seed, SALT_G_INIT)),
            spec: g_spec,
        };
        let d = Mlp {
            params: init_params(&d_spec, derive(seed, SALT_D_INIT)),
            spec: d_spec,
        };
        let base = &run.rgan.base;
        let opt_g = AdamState::new(&g.params, base.lr_g, base.beta1, base.beta2);
        let opt_d = AdamState::new(&d.params, base.lr_d, base.beta1, base.beta2);
        let train_set = run.data.training_set(run.eval.train_size, seed)?;
        Ok(Self {
            g,
            d,
            opt_g,
            opt_d,
            step: 0,
            train_set,
            rng: rng_from(seed),
        })
    }

    /// Samples a training batch (rows of the fixed training set, with
    /// replacement).
    pub fn next_real_batch(&mut self, m: usize) -> Tensor {
        let (n, dim) = self.train_set.dims2().expect("training set is 2-D");
        let mut data = Vec::with_capacity(m * dim);
        for _ in 0..m {
            let i = self.rng.random_range(0..n);
            data.extend_from_slice(self.train_set.row(i));
        }
        Tensor::matrix(m, dim, data).expect("training rows are finite")
    }

    pub fn next_latent(&mut self, m: usize, dim: usize) -> Tensor {
        sample_latent(m, dim, &mut self.rng)
    }
}

/// Losses of one training step (values of the objectives, not their
/// negations).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub d_loss: f64,
    pub g_loss: f64,
}

/// Maps an arm onto the discriminator objective its generalization gap is
/// measured against: arms that train D on worst-case data use the robust
/// objective, the others the plain one.
pub fn gap_objective(run: &TrainRun) -> GapObjective {
    match run.rgan.ablation {
        Ablation::Both | Ablation::DOnly => GapObjective::Robust {
            lambda: run.rgan.lambda,
            perturb: run.rgan.perturb.clone(),
            weighting: run.rgan.weighting,
        },
        _ => GapObjective::Baseline,
    }
}

/// Deterministic evaluation snapshot at the current step. All draws come
/// from a stream derived from (seed, step), so arms sharing a seed are
/// evaluated on identical draws, and re-evaluating a checkpoint reproduces
/// the trainer's record exactly.
pub fn evaluate(state: &TrainState, run: &TrainRun) -> Result<MetricsRecord> {
    let base = &run.rgan.base;
    let seed = base.seed;
    let mut erng = rng_from(derive(derive(seed, SALT_EVAL), state.step));
    let m = base.batch_size;
    let ablation = run.rgan.ablation;
    let pc = &run.rgan.perturb;

    // Objective values on a held-out batch, per the arm's own loss.
    let x = run.data.sample(m, &mut erng)?;
    let z = state.next_latent_from(&mut erng, m);
    let fake = state.g.forward_inference(&z)?;
    let (d_loss, g_loss) = match ablation {
        Ablation::None => (
            d_loss_baseline_value(&state.d, &x, &fake)?,
            g_loss_baseline_value(&state.d, &fake, base.loss_variant)?,
        ),
        _ => {
            let dim = run.data.dim();
            let (r1, r2) = match ablation {
                Ablation::Both | Ablation::DOnly => (
                    solve_real_perturbation(&state.d, &x, pc)?,
                    solve_fake_perturbation(&state.d, &fake, pc)?,
                ),
                Ablation::GOnly => (PerturbationBatch::zeros(m, dim), PerturbationBatch::zeros(m, dim)),
                Ablation::RandomNoise => (
                    random_unit_batch(m, dim, &mut erng)?,
                    random_unit_batch(m, dim, &mut erng)?,
                ),
                Ablation::None => unreachable!(),
            };
            let r_z = match ablation {
                Ablation::Both | Ablation::GOnly => {
                    worst_latent_perturbation(&state.g, &state.d, &z, pc)?
                }
                Ablation::DOnly => PerturbationBatch::zeros(m, base.latent_dim),
                Ablation::RandomNoise => random_unit_batch(m, base.latent_dim, &mut erng)?,
                Ablation::None => unreachable!(),
            };
            (
                rgan_d_loss(&state.d, &state.g, &x, &z, &r1, &r2, run.rgan.lambda, pc.eps2, run.rgan.weighting)?,
                rgan_g_loss(&state.g, &state.d, &z, &r_z, run.rgan.lambda, pc.eps1, run.rgan.weighting, base.loss_variant)?,
            )
        }
    };

    // Generation metrics.
    let n_eval = run.eval.samples;
    let z_big = sample_latent(n_eval, base.latent_dim, &mut erng);
    let samples = state.g.forward_inference(&z_big)?;
    let real_ref = run.data.sample(n_eval, &mut erng)?;
    let (covered, hqf) = match (run.data.mode_centers(), run.data.mode_sigma()) {
        (Some(centers), Some(sigma)) => {
            let report = mode_coverage(&samples, &centers, sigma)?;
            (report.covered_modes, report.high_quality_fraction)
        }
        _ => (0, 0.0),
    };
    let mmd = mmd_rbf(&real_ref, &samples, &MMD_BANDWIDTH_SCALES)?;
    let stress = worst_noise_stress(&state.g, &state.d, pc, &run.data, n_eval, &mut erng)?;
    let gap = generalization_gap(
        &state.d,
        &gap_objective(run),
        &state.train_set,
        &run.data,
        50 * run.eval.train_size,
        derive(seed, state.step),
    )?;

    Ok(MetricsRecord {
        step: state.step,
        seed,
        arm: run.arm_name().to_string(),
        d_loss,
        g_loss,
        mode_coverage: covered,
        high_quality_fraction: hqf,
        mmd,
        mmd_worst_noise: stress.metric_worst,
        robustness_gap: stress.robustness_gap,
        gen_gap_d: gap.gap,
    })
}

impl TrainState {
    fn next_latent_from(&self, rng: &mut ChaCha8Rng, m: usize) -> Tensor {
        sample_latent(m, self.g.spec.input_dim(), rng)
    }
}

/// Outcome of a full run: final state, the metrics stream and the wall time.
pub struct TrainOutcome {
    pub state: TrainState,
    pub records: Vec<MetricsRecord>,
    pub wall: Duration,
}

impl TrainOutcome {
    pub fn final_record(&self) -> &MetricsRecord {
        self.records.last().expect("at least the step-0 record")
    }
}

/// Runs one arm to completion, passing each metrics record to `sink` as it
/// is produced.
pub fn train_with_sink(
    run: &TrainRun,
    mut sink: impl FnMut(&MetricsRecord),
) -> Result<TrainOutcome> {
    run.validate()?;
    let start = Instant::now();
    let mut state = TrainState::init(run)?;
    let mut records = Vec::new();
    let record = evaluate(&state, run)?;
    sink(&record);
    records.push(record);
    while state.step < run.rgan.base.steps {
        rgan_train_step(&mut state, run)?;
        if state.step % run.eval.interval == 0 || state.step == run.rgan.base.steps {
            let record = evaluate(&state, run)?;
            sink(&record);
            records.push(record);
        }
    }
    Ok(TrainOutcome {
        state,
        records,
        wall: start.elapsed(),
    })
}

pub fn train(run: &TrainRun) -> Result<TrainOutcome> {
    train_with_sink(run, |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short_run(ablation: Ablation, seed: u64) -> TrainRun {
        let mut run = TrainRun::ring8_reference(ablation, seed);
        run.rgan.base.steps = 30;
        run.eval.interval = 15;
        run.eval.samples = 120;
        run.eval.train_size = 64;
        run
    }

    #[test]
    fn step_zero_record_reflects_untrained_generator() {
        let run = short_run(Ablation::None, 3);
        let outcome = train(&run).unwrap();
        assert_eq!(outcome.records[0].step, 0);
        // Untrained G cannot cover the ring.
        assert_eq!(outcome.records[0].mode_coverage, 0);
        assert!(outcome.records[0].mmd > 0.05);
    }

    #[test]
    fn metrics_stream_is_deterministic() {
        let run = short_run(Ablation::Both, 4);
        let a = train(&run).unwrap();
        let b = train(&run).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.state.g.params, b.state.g.params);
        assert_eq!(a.state.d.params, b.state.d.params);
    }

    #[test]
    fn eval_cadence_includes_endpoints() {
        let run = short_run(Ablation::None, 5);
        let outcome = train(&run).unwrap();
        let steps: Vec<u64> = outcome.records.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![0, 15, 30]);
    }

    #[test]
    fn arm_names_round_trip() {
        for name in ARM_NAMES {
            assert_eq!(arm_name(ablation_from_arm_name(name).unwrap()), name);
        }
        assert!(ablation_from_arm_name("nonsense").is_none());
    }

    #[test]
    fn all_arms_take_steps_without_divergence() {
        for ablation in [
            Ablation::Both,
            Ablation::GOnly,
            Ablation::DOnly,
            Ablation::RandomNoise,
        ] {
            let run = short_run(ablation, 6);
            let outcome = train(&run).unwrap();
            assert!(outcome.final_record().d_loss.is_finite());
            assert!(outcome.final_record().g_loss.is_finite());
        }
    }
}
