//! Emission-capped, fairness-aware hierarchical multi-agent reinforcement
//! learning on a desk-scale maritime logistics digital twin.

pub mod constraints;
pub mod env;
pub mod error;
pub mod fairness;
pub mod harness;
pub mod learner;
pub mod metrics;
pub mod nn;
pub mod oracle;
pub mod policy;
pub mod trainer;

pub use error::{Error, Result};
