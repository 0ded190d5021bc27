//! Cooperative robot-row tasks: a 1D simulator with IR sensing and
//! neighbour messaging, expert and hand-written controllers, imitation-trained
//! networks with a learned message channel, and the evaluation metrics.

pub mod cli;
pub mod controllers;
pub mod error;
pub mod eval;
pub mod dataset;
pub mod nn;
pub mod rng;
pub mod sensing;
pub mod training;
pub mod world;

pub use error::{Error, Result};
