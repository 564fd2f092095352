//! Async clients for a running twinsim deployment: [`BridgeClient`] speaks
//! the WebSocket protocol, [`ScmClient`] the SCM's HTTP API.

mod bridge;
mod error;
mod scm;

pub use bridge::BridgeClient;
pub use error::ClientError;
pub use scm::ScmClient;
