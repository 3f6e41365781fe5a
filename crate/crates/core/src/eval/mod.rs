//! Partition planners, trainer, scorer and the metric suite.

pub mod metrics;
pub mod split;
pub mod train;
