//! Learning-from-demonstration controllers for autonomous wheel-loader bucket
//! filling: dense and attention-masked neural policies, the dataset pipeline
//! that turns demonstrations into training sets, a desk-scale loader/pile
//! simulator, and the training and evaluation loops that tie them together.

pub mod error;
pub mod numerics;

pub use error::{CheckpointError, Error, Result};
pub mod controllers;
pub mod signals;
pub mod dataset;
pub mod simulator;
pub mod training;
