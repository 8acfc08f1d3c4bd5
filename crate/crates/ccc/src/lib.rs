//! Command Control Center service: streams telemetry frames to operator
//! clients over websockets and feeds their commands to the vehicle.
//! The wire format is documented in `protocol.md`.

pub mod gate;
pub mod hub;
pub mod protocol;
pub mod server;

pub use hub::Hub;
pub use server::{CccConfig, CccService, Health, DEFAULT_PORT};

#[derive(Debug, thiserror::Error)]
pub enum CccError {
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("telemetry frame for tick {tick} is {bytes} bytes, above the {max}-byte limit")]
    Oversize { tick: u64, bytes: usize, max: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
