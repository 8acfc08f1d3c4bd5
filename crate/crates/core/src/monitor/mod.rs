//! Runtime monitors: cross-source consistency and out-of-distribution scoring.

pub mod anomaly;
pub mod function;
pub mod knowledge;
