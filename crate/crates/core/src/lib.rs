//! Kernels of the VCOD benchmark toolkit: mask primitives, the five frame
//! metrics, dataset manifests, annotation fusion and report aggregation.

pub mod dataset;
pub mod error;
pub mod fusion;
pub mod mask;
pub mod metrics;
pub mod par;
pub mod report;
pub mod synth;

pub use error::{Error, Result};
pub use par::Exec;
