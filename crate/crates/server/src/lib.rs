//! Network services around the simulation core: the WebSocket bridge that
//! owns the simulation loop, and the Smart City Manager that mirrors it over
//! HTTP and can drive vehicles through it.

pub mod bridge;
pub mod outbox;
pub mod scm;

pub use bridge::{Bridge, BridgeConfig, Metrics, MetricsSnapshot, Pacing};
pub use scm::{DriveSpec, ScmConfig, ScmService};

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error(transparent)]
    Core(#[from] twinsim_core::CoreError),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("simulation task ended unexpectedly")]
    TaskLost,
}
