//! Space-time adaptive finite elements for a low Mach number combustion
//! model with goal-oriented error estimation.

pub mod error;
pub mod adapt;
pub mod estimator;
pub mod cli;
pub mod fespace;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod model;
pub mod timestep;

pub use error::{Error, Result};
