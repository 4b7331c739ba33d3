//! Aumann-Shapley path-integral attribution for multi-agent feature panels.

pub mod baselines;
pub mod error;
pub mod attribution;
pub mod numeric;
pub mod panel;
pub mod scalingbias;
pub mod study;
pub mod valuefn;

pub use error::{Error, Result};
pub use panel::{FeaturePanel, TierPartition};
pub use valuefn::{CustomFn, ValueFunction, ValueKind};
