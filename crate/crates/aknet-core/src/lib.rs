//! AKNet: a Kalman filter whose gain is computed by a compact recurrent
//! network, fine-tuned at inference time by a hypernetwork that maps a
//! scalar process-to-observation noise ratio (the "state of the world",
//! SoW) into per-neuron conditional-modulation weights.
//!
//! The crate provides:
//!
//! - [`numerics`]: dense linear algebra, a reverse-mode autodiff tape, and
//!   an adaptive-moment optimizer;
//! - [`ssm`]: linear state-space models with time-varying Gaussian or
//!   exponential noise, trajectory generation, and the SoW scalar;
//! - [`kf`]: the classical Kalman filter (Joseph-form update) and the
//!   adaptive-KF baseline fed by an online noise estimator;
//! - [`kgain`]: the learned Kalman-gain network (FC -> GRU -> FC) that
//!   replaces the gain computation while preserving the predict/update flow;
//! - [`hypercm`]: the hypernetwork that maps (SoW, switch) to gain/shift
//!   modulation vectors and the conditional-modulation layer algebra;
//! - [`training`]: the l2 trajectory loss and the two-stage training
//!   procedure (gain network first, hypernetwork second, gain frozen);
//! - [`estimator`]: online SoW estimators (innovation-correlation recursion
//!   and grid search over an unsupervised prediction loss);
//! - [`experiment`]: experiment harness: dataset generation, training
//!   orchestration, MSE tables, CSV/SVG emission.

pub mod checkpoint;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod hypercm;
pub mod kf;
pub mod kgain;
pub mod numerics;
pub mod params;
pub mod ssm;
pub mod training;

pub use error::{Error, Result};
pub use numerics::{Adam, Matrix, Tape, Var};
pub use params::ParamStore;
