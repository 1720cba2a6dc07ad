//! Sequential three-way decisions over an incrementally grown single-hidden-layer
//! network, with the baselines and reporting needed to evaluate it.

pub mod baselines;
pub mod dataset;
pub mod discretizer;
pub mod error;
pub mod metrics;
pub mod numerics;
pub mod report;
pub mod sfnn;
pub mod stwd;
pub mod trainer;

pub use dataset::{Dataset, Label};
pub use error::{Error, Result};
pub use numerics::{ActivationKind, RngStream};
