//! Simulator for a plug-and-play interferometric quantum key distribution
//! link: Jones-calculus fiber optics with Faraday-mirror compensation, a
//! gated photon counter, and BB92/BB84 stations exchanging frames over an
//! in-process or TCP channel.

pub mod analysis;
pub mod config;
pub mod detector;
pub mod error;
pub mod interferometer;
pub mod jones;
pub mod keyfile;
pub mod physics;
pub mod protocol;
pub mod report;
pub mod transport;

pub use error::{Error, Result};
pub use protocol::{run_session, SessionConfig, SessionResult};
