use thiserror::Error;
use twinsim_core::protocol::Code;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("websocket: {0}")]
    WebSocket(#[from] tokio_tungstenite::tungstenite::Error),

    #[error("http: {0}")]
    Http(#[from] reqwest::Error),

    #[error("server rejected the request: {code}: {message}")]
    Rejected { code: Code, message: String },

    #[error("SCM API returned {status}: {code}: {message}")]
    Api { status: u16, code: String, message: String },

    #[error("unexpected message: {0}")]
    Protocol(String),

    #[error("timed out waiting for a reply")]
    Timeout,

    #[error("connection closed")]
    Closed,
}
