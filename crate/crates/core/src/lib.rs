//! Game-theoretic interactions between adversarial perturbation units.
//!
//! The crate is organised bottom-up:
//!
//! - [`nn`]: a small dense classifier engine with input gradients,
//!   training and model files.
//! - [`game`]: coalition games over perturbation units, exact Shapley values
//!   and pairwise interactions, the closed-form average interaction and its
//!   sampled batch estimator.
//! - [`attacks`]: single-step, PGD, momentum, variance-reduced,
//!   optimisation-based, interaction-reduced and interaction-only attacks.
//! - [`analysis`]: transfer utility, leave-one-out step selection and the
//!   experiment sweeps.
//! - [`verify`]: the oracle battery behind `interlab verify`.

pub mod analysis;
pub mod attacks;
pub mod error;
pub mod game;
pub mod nn;
pub mod numdiff;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
