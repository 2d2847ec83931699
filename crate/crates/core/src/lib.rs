//! Fitted Q-iteration with spectral (principal component) compression of a
//! high-dimensional, block-structured part of the state.
//!
//! The algorithms are generic over [`Real`]; the aliases below fix the scalar
//! to `f64`, which is what the simulator, evaluation and CLI use.

pub mod cli;
pub mod dataset;
pub mod envsim;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod fqi;
pub mod linalg;
pub mod scalar;
pub mod seeds;
pub mod spectral;
pub mod textio;
pub mod neuralnet;

pub use error::{Error, Result};
pub use fqi::{spectral_fqi, FeatureVariant, FqiConfig, Policy};
pub use scalar::Real;

pub type State = dataset::MixedState<f64>;
pub type Dataset = dataset::TrajectoryDataset<f64>;
pub type Basis = spectral::SpectralBasis<f64>;
pub type Network = neuralnet::NetworkParameters<f64>;
pub type Ensemble = fqi::QEnsemble<f64>;
pub type Outcome = fqi::FqiOutcome<f64>;
