//! Gradient-free black-box adversarial attacks on image classifiers.
//!
//! The crate is organized bottom-up:
//!
//! * [`tt`]: tensor-train tensors used as discrete distributions (evaluation,
//!   sampling, log-likelihood gradients, a binary container format);
//! * [`protes`]: the PROTES optimizer over TT distributions;
//! * [`model`]: images, predictions, black-box endpoints and a small built-in
//!   differentiable classifier;
//! * [`attribution`]: saliency and integrated-gradients maps, top pixel selection;
//! * [`attack`]: HSV pixel perturbations and the TETRADAT attack loop;
//! * [`harness`]: campaigns over image sets, metrics, and report emission.

pub mod attack;
pub mod attribution;
pub mod dataset;
pub mod harness;
pub mod model;
pub mod protes;
pub mod tt;

pub use attack::{tetradat, AttackConfig, AttackError, AttackResult};
pub use attribution::{AttributionMap, Baseline, PixelSelection};
pub use model::{BlackBox, BuiltinClassifier, Classifier, Differentiable, Image, ModelError, Prediction};
pub use protes::{ProtesConfig, ProtesState, StopReason};
pub use tt::{MultiIndex, TtTensor};
