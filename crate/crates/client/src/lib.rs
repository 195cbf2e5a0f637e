//! Thin async client for the zbs HTTP service.

use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use zbs_core::api::{
    CreateSession, ErrorBody, EvaluateRequest, EvaluateResponse, SessionCreated, SessionSummary, SweepRequest,
    SynthRequest, SynthResponse,
};
use zbs_core::bgmodel::BackgroundEntry;
use zbs_core::pipeline::FrameOutput;
use zbs_core::stream::FrameDetections;
use zbs_core::sweep::SweepRow;
use zbs_core::tracker::TrackRecord;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    /// The service answered with an error body.
    #[error("{kind} error ({status}): {message}")]
    Api {
        status: StatusCode,
        kind: String,
        message: String,
    },
}

impl ClientError {
    /// Error class reported by the service, if any.
    pub fn kind(&self) -> Option<&str> {
        match self {
            ClientError::Api { kind, .. } => Some(kind),
            ClientError::Transport(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_owned(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn send<B: Serialize, T: DeserializeOwned>(
        &self,
        method: Method,
        path: &str,
        body: Option<&B>,
    ) -> Result<T, ClientError> {
        let mut req = self.http.request(method, format!("{}{}", self.base, path));
        if let Some(b) = body {
            req = req.json(b);
        }
        let resp = req.send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await?;
        let (kind, message) = match serde_json::from_str::<ErrorBody>(&text) {
            Ok(e) => (e.kind, e.error),
            Err(_) => ("http".to_owned(), text),
        };
        Err(ClientError::Api { status, kind, message })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        self.send::<(), T>(Method::GET, path, None).await
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        self.send(Method::POST, path, Some(body)).await
    }

    pub async fn health(&self) -> Result<(), ClientError> {
        self.get::<serde_json::Value>("/health").await.map(|_| ())
    }

    pub async fn create_session(&self, req: &CreateSession) -> Result<u64, ClientError> {
        let r: SessionCreated = self.post("/v1/sessions", req).await?;
        Ok(r.session_id)
    }

    pub async fn process_frame(&self, session: u64, frame: &FrameDetections) -> Result<FrameOutput, ClientError> {
        self.post(&format!("/v1/sessions/{session}/frames"), frame).await
    }

    pub async fn process_batch(&self, session: u64, frames: &[FrameDetections]) -> Result<Vec<FrameOutput>, ClientError> {
        self.post(&format!("/v1/sessions/{session}/batch"), &frames).await
    }

    pub async fn model(&self, session: u64) -> Result<Vec<BackgroundEntry>, ClientError> {
        self.get(&format!("/v1/sessions/{session}/model")).await
    }

    pub async fn tracks(&self, session: u64) -> Result<Vec<TrackRecord>, ClientError> {
        self.get(&format!("/v1/sessions/{session}/tracks")).await
    }

    pub async fn session(&self, session: u64) -> Result<SessionSummary, ClientError> {
        self.get(&format!("/v1/sessions/{session}")).await
    }

    pub async fn close_session(&self, session: u64) -> Result<SessionSummary, ClientError> {
        self.send::<(), _>(Method::DELETE, &format!("/v1/sessions/{session}"), None).await
    }

    pub async fn evaluate(&self, req: &EvaluateRequest) -> Result<EvaluateResponse, ClientError> {
        self.post("/v1/evaluate", req).await
    }

    pub async fn synth(&self, req: &SynthRequest) -> Result<SynthResponse, ClientError> {
        self.post("/v1/synth", req).await
    }

    pub async fn sweep(&self, req: &SweepRequest) -> Result<Vec<SweepRow>, ClientError> {
        self.post("/v1/sweep", req).await
    }
}
