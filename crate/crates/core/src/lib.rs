//! Sibling-network transfer learning for real-vs-generated image detection:
//! a small reverse-mode autodiff engine, a segmented CNN, route-crossing
//! training with a pairwise AUC surrogate, and synthetic two-domain data.

pub mod autodiff;
pub mod blocknet;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataforge;
mod error;
pub mod losses;
pub mod metrics;
pub mod report;
pub mod rng;
pub mod trainer;
pub mod xroutes;

pub use error::{Error, Result};
