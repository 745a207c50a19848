//! Thin async client for the fastmks HTTP service.

use fastmks_api as api;
use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request to {url} failed: {source}")]
    Transport { url: String, #[source] source: reqwest::Error },

    /// The service answered with an error body.
    #[error("{kind}: {message}")]
    Api { status: StatusCode, kind: String, message: String },

    #[error("unexpected response from {url} ({status}): {body}")]
    Unexpected { url: String, status: StatusCode, body: String },
}

impl ClientError {
    /// The service's error tag, if the service produced the error.
    pub fn kind(&self) -> Option<&str> {
        match self {
            ClientError::Api { kind, .. } => Some(kind),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the server root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        let base = base.into().trim_end_matches('/').to_string();
        Client { base, http: reqwest::Client::new() }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn call<B: Serialize, T: DeserializeOwned>(&self, method: Method, path: &str, body: Option<&B>) -> Result<T> {
        let url = format!("{}{path}", self.base);
        let mut req = self.http.request(method, &url);
        if let Some(b) = body {
            req = req.json(b);
        }
        let transport = |source| ClientError::Transport { url: url.clone(), source };
        let resp = req.send().await.map_err(transport)?;
        let status = resp.status();
        let bytes = resp.bytes().await.map_err(transport)?;
        if status.is_success() {
            let bytes = if bytes.is_empty() { &b"null"[..] } else { &bytes[..] };
            return decode(bytes).map_err(|e| ClientError::Unexpected { url: url.clone(), status, body: e });
        }
        match decode::<api::ErrorBody>(&bytes) {
            Ok(e) => Err(ClientError::Api { status, kind: e.kind, message: e.error }),
            Err(_) => Err(ClientError::Unexpected { url, status, body: String::from_utf8_lossy(&bytes).into_owned() }),
        }
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        self.call(Method::POST, path, Some(body)).await
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        self.call::<(), T>(Method::GET, path, None).await
    }

    pub async fn health(&self) -> Result<api::Health> {
        self.get("/health").await
    }

    pub async fn generate(&self, req: &api::GenerateRequest) -> Result<api::GenerateResponse> {
        self.post("/v1/generate", req).await
    }

    pub async fn build(&self, spec: &api::BuildSpec) -> Result<api::BuildReport> {
        self.post("/v1/build", spec).await
    }

    pub async fn run(&self, spec: &api::RunSpec) -> Result<api::RunReport> {
        self.post("/v1/run", spec).await
    }

    pub async fn bench(&self, spec: &api::BenchSpec) -> Result<api::BenchReport> {
        self.post("/v1/bench", spec).await
    }

    pub async fn diagnose(&self, spec: &api::DiagnoseSpec) -> Result<api::HardnessReport> {
        self.post("/v1/diagnose", spec).await
    }

    pub async fn create_index(&self, req: &api::CreateIndexRequest) -> Result<api::IndexInfo> {
        self.post("/v1/indexes", req).await
    }

    pub async fn list_indexes(&self) -> Result<Vec<api::IndexInfo>> {
        self.get("/v1/indexes").await
    }

    pub async fn index(&self, id: u64) -> Result<api::IndexInfo> {
        self.get(&format!("/v1/indexes/{id}")).await
    }

    pub async fn delete_index(&self, id: u64) -> Result<()> {
        self.call::<(), ()>(Method::DELETE, &format!("/v1/indexes/{id}"), None).await
    }

    pub async fn search(&self, id: u64, req: &api::SearchRequest) -> Result<api::SearchResponse> {
        self.post(&format!("/v1/indexes/{id}/search"), req).await
    }
}

fn decode<T: DeserializeOwned>(bytes: &[u8]) -> std::result::Result<T, String> {
    serde_json::from_slice(bytes).map_err(|e| e.to_string())
}
