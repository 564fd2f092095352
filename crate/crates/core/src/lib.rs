//! Deterministic digital-twin simulation of a 1:14 Ackermann vehicle and its
//! desk-scale smart-city infrastructure.

pub mod clock;
pub mod config;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod protocol;
pub mod recorder;
pub mod scene;
pub mod scm;
pub mod sensors;
pub mod session;
pub mod transform;
pub mod world;

pub use clock::{Cadence, SimClock};
pub use config::VehicleConfig;
pub use error::CoreError;
pub use scene::Scene;
pub use transform::Transform3;
