//! Robust GAN training laboratory on low-dimensional synthetic data.
//!
//! The crate implements a min-max game between an MLP generator and
//! discriminator where both players additionally face worst-case input
//! perturbations inside a small neighborhood: the generator maps the worst
//! latent distribution to the data, the discriminator separates real from
//! fake under perturbations that make the two less distinguishable. A
//! baseline GAN arm, ablation arms and a battery of closed-form theory
//! checks and two-sample metrics make the comparison measurable.
//!
//! Modules:
//!
//! * [`tensor`] / [`tape`] — dense f64 tensors with reverse-mode autodiff;
//! * [`models`] — MLP specs, Glorot initialization, Adam;
//! * [`data`] — synthetic 2-D/1-D data sources;
//! * [`gan`] — the baseline objective and sampling;
//! * [`robust`] — worst-case perturbation solvers and the robust objective;
//! * [`theory`] — discrete-density verification of the optimal
//!   discriminator, the JSD identity and generalization gaps;
//! * [`metrics`] — mode coverage, RBF MMD and the worst-noise stress
//!   protocol;
//! * [`train`] — the deterministic experiment driver;
//! * [`checkpoint`] — exact JSON round-trips of trained players.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gan;
pub mod metrics;
pub mod models;
pub mod robust;
pub mod seeding;
pub mod tape;
pub mod tensor;
pub mod theory;
pub mod train;

pub use checkpoint::Checkpoint;
pub use data::{DataKind, DataSource};
pub use error::{Error, Result};
pub use gan::{GanConfig, LossVariant};
pub use metrics::{MetricsRecord, ModeReport, StressReport};
pub use models::{AdamState, HiddenActivation, Mlp, MlpSpec, OutputActivation, ParamSet};
pub use robust::{Ablation, PerturbationBatch, PerturbationConfig, RganConfig, Weighting};
pub use tape::{Gradients, NodeId, Tape};
pub use tensor::Tensor;
pub use theory::{DiscreteDensity, GapEstimate, GapObjective, TheoryCheckReport};
pub use train::{EvalConfig, NetConfig, TrainOutcome, TrainRun, TrainState};
