pub mod circuit;
pub mod classify;
pub mod cluster;
pub mod error;
pub mod etd;
pub mod fock;
pub mod format;
pub mod meanfield;
pub mod observables;
pub mod ode;
pub mod params;
pub mod recipes;
pub mod semiclassical;
pub mod sparse;
pub mod sweep;

pub use error::{Error, Result};
pub use params::ModelParams;
