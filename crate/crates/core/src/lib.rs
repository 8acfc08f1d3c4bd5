//! Deterministic driving-scenario simulator wrapped in a runtime-safety cage:
//! redundant perception paths, a function monitor, an anomaly monitor, a
//! fail-operational reactor, an incident recorder and a telemetry boundary.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod command;
pub mod error;
pub mod fallback;
pub mod geometry;
pub mod monitor;
pub mod perception;
pub mod pipeline;
pub mod raster;
pub mod reactor;
pub mod record;
pub mod recorder;
pub mod replay;
pub mod scene;
pub mod seed;
pub mod sim;
pub mod summary;
pub mod telemetry;

pub use error::{CageError, Result};
