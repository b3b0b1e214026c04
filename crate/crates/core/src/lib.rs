//! Blocked Gibbs sampling for switching linear stochastic differential
//! equations observed at discrete times with Gaussian noise.
//!
//! A latent Markov jump process `z(t)` selects the affine drift and constant
//! dispersion of a continuous state `y(t)`. The sampler alternates between the
//! state path given the modes, the mode path given the state, and the model
//! parameters.

pub mod cli;
pub mod diffusion;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod params;
pub mod rng;
pub mod sampler;
pub mod sim;
pub mod switching;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use linalg::{Mat, Vector};
pub use model::{
    DiffusionPath, InitialLaw, IwPrior, MatrixNormalPrior, MjpPath, ModeDynamics, ModelParams,
    NiwPrior, ObservationModel, ObservationSet, PriorHyperparams, RateMatrix, TimeGrid,
};
pub use rng::SimRng;
