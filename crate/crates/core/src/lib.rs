//! Heterogeneous Gompertz plant growth with size–distance competition.
//!
//! The crate covers three layers:
//!
//! * [`model`], [`ode`] and [`population`]: the finite-`N` interacting system,
//!   its integrator and the single-probe empirical flow;
//! * [`init`], [`features`], [`lstsq`] and [`meanfield`]: sampling of the
//!   initial law and the regression-based approximation of the mean-field flow;
//! * [`metrics`]: Wasserstein distances between finite populations and the
//!   mean-field prediction, and the a-priori error bound.

pub mod error;
pub mod features;
pub mod init;
pub mod lstsq;
pub mod meanfield;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod ode;
pub mod population;

pub use error::{Error, Result};
pub use init::{Mu0Config, Sample, SampleStream};
pub use meanfield::{MeanFieldModel, TrainConfig};
pub use model::{ModelParams, PlantTraits};
pub use ode::{Method, SolverConfig};
pub use population::{integrate, PopulationState, Trajectory};
