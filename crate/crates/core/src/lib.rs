pub mod analysis;
pub mod baselines;
pub mod data;
pub mod diffcore;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod io;
pub mod model;
pub mod synth;

pub use error::{Error, Result};
