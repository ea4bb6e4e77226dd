//! Label model for programmatic weak supervision with partial labeling
//! functions (PLFs).
//!
//! A PLF maps an example to a subset of the classes, or abstains by emitting
//! the full label set. Given only the votes of many PLFs on unlabeled data,
//! [`training::fit`] estimates per-PLF accuracies and propensities by
//! maximizing the marginal likelihood of the votes under a naive Bayes
//! generative model, and [`model::posterior`] turns the fitted model into soft
//! labels for a downstream classifier ([`endmodel`]).
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below name the common double-precision instantiations.

pub mod baselines;
pub mod bench;
pub mod endmodel;
pub mod error;
pub mod identifiability;
pub mod io;
pub mod label_space;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
pub use label_space::{LabelSpace, PartialLabel, PlfSpec, VoteMatrix};
pub use model::{BalanceMode, ModelParams, Posterior, PrecomputedBatch};
pub use scalar::Scalar;

pub type ModelParams64 = model::ModelParams<f64>;
pub type ModelParams32 = model::ModelParams<f32>;
pub type Posterior64 = model::Posterior<f64>;
pub type PrecomputedBatch64 = model::PrecomputedBatch<f64>;
pub type TrainReport64 = training::TrainReport<f64>;
pub type SynthSample64 = synthetic::SynthSample<f64>;
pub type LinearModel64 = endmodel::LinearModel<f64>;
