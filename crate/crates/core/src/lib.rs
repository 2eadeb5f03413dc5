//! DDPM sampling error laboratory.
//!
//! Variance schedules and their step-size audits, smoothed targets with exact
//! scores, the sampler and its Föllmer twin, closed-form Gaussian pipelines,
//! W2 upper/lower bound evaluators and empirical optimal transport.

pub mod bounds;
pub mod error;
pub mod gaussian_exact;
pub mod harness;
pub mod ot;
pub mod profiles;
pub mod quad;
pub mod sampler;
pub mod schedules;
pub mod targets;

pub use error::{Error, Result};
