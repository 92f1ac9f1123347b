pub mod cli;
pub mod daepair;
pub mod error;
pub mod linalg;
pub mod modeobs;
pub mod observer;
pub mod simulator;
pub mod subspace;
pub mod trajectory;
pub mod windowing;

pub use error::{Error, Result};
