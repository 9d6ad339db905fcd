//! Collective decision-making for a swarm of inspection robots.
//!
//! Robots drive over a tiled floor, classify each tile sample as vibrating or
//! quiet, fold their own samples and their neighbours' broadcasts into a
//! Beta posterior, and decide whether most of the surface vibrates.
//!
//! - [`bayes`]: posterior, belief and decision rule
//! - [`strategy`]: what a robot broadcasts after sampling
//! - [`signal`]: accelerometer windows to binary observations
//! - [`sim`]: the tick-based swarm simulator
//! - [`pso`]: parameter tuning
//! - [`experiment`]: campaign configs, paired batches and reports

pub mod bayes;
pub mod error;
pub mod experiment;
pub mod pso;
pub mod signal;
pub mod sim;
pub mod special;
pub mod stats;
pub mod strategy;

pub use error::{Error, Result};
