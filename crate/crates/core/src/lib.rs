//! Dual-quaternion rigid-motion algebra and hypercomplex neural networks.
//!
//! - [`algebra`]: quaternions, dual numbers, dual quaternions, screw motions.
//! - [`nn`]: dense networks over the reals, quaternions and dual quaternions.
//! - [`lorenz`]: Lorenz trajectories, window datasets and rigidly moved test sets.
//! - [`metrics`]: MSE, prediction gain, VIM and FDE.
//! - [`seqmodels`]: pose encoding, algebra-valued LSTMs and the forecasting autoencoder.
//! - [`cli`]: file formats, configuration and the command pipeline behind the `dqmotion` binary.

pub mod algebra;
pub mod cli;
pub mod lorenz;
pub mod metrics;
pub mod nn;
pub mod seqmodels;

pub use algebra::{DualNumber, DualQuaternion, Point3, Quaternion, RigidTransform, ScrewParams};
pub use nn::{Activation, AlgebraTag, Mlp, Parameters, TrainConfig};
