use reqwest::{Client, Response};
use serde::de::DeserializeOwned;
use serde::Serialize;
use twinsim_core::protocol::Mode;
use twinsim_core::scm::api::{ApiError, ElementWriteAck, Health, ModeAck, ModeBody, StateBody};
use twinsim_core::scm::{ElementRecord, LogEntry, VehicleRecord};

use crate::ClientError;

/// Client for the SCM HTTP API rooted at `base`, e.g. `http://127.0.0.1:7879`.
#[derive(Debug, Clone)]
pub struct ScmClient {
    base: String,
    http: Client,
}

impl ScmClient {
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http: Client::new(),
        }
    }

    async fn decode<T: DeserializeOwned>(resp: Response) -> Result<T, ClientError> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let err = resp.json::<ApiError>().await.unwrap_or_else(|e| ApiError {
            code: "UNKNOWN".into(),
            message: e.to_string(),
        });
        Err(ClientError::Api {
            status: status.as_u16(),
            code: err.code,
            message: err.message,
        })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        Self::decode(self.http.get(format!("{}{path}", self.base)).send().await?).await
    }

    async fn put<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        Self::decode(self.http.put(format!("{}{path}", self.base)).json(body).send().await?).await
    }

    pub async fn health(&self) -> Result<Health, ClientError> {
        self.get("/health").await
    }

    pub async fn vehicles(&self) -> Result<Vec<VehicleRecord>, ClientError> {
        self.get("/vehicles").await
    }

    pub async fn elements(&self) -> Result<Vec<ElementRecord>, ClientError> {
        self.get("/elements").await
    }

    pub async fn element(&self, id: &str) -> Result<ElementRecord, ClientError> {
        self.get(&format!("/elements/{id}")).await
    }

    pub async fn events_since(&self, since: f64) -> Result<Vec<LogEntry>, ClientError> {
        self.get(&format!("/events?since={since}")).await
    }

    /// Returns once the bridge has applied the write.
    pub async fn set_light(&self, id: &str, state: &str) -> Result<ElementWriteAck, ClientError> {
        self.put(&format!("/elements/{id}/state"), &StateBody { state: state.into() })
            .await
    }

    pub async fn set_mode(&self, vehicle: &str, mode: Mode) -> Result<ModeAck, ClientError> {
        let mode = match mode {
            Mode::Manual => "manual",
            Mode::Autonomous => "autonomous",
        };
        self.put(&format!("/vehicles/{vehicle}/mode"), &ModeBody { mode: mode.into() })
            .await
    }
}
