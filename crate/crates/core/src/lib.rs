//! Consensus message passing for layered factor graphs.
//!
//! The crate is organised bottom-up: [`expfam`] holds the message algebra,
//! [`factors`] the per-factor message rules, [`graph`] and [`engine`] the
//! model structure and scheduler, [`forest`] the regression forests used as
//! message predictors, [`cmp`] the consensus layer, [`models`] the circle,
//! square and face models, and [`harness`] the experiment drivers.

pub mod cmp;
pub mod engine;
pub mod expfam;
pub mod factors;
pub mod forest;
pub mod graph;
pub mod harness;
pub mod models;
pub(crate) mod serde_float;

pub use expfam::{Bernoulli, Family, Gaussian, Message, MessageError, Moments, MvGaussian};
pub use factors::{FactorKind, InferenceMode, LinearRule, QuadratureSpec};
