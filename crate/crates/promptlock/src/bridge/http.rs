//! HTTP surface of the decryption bridge, and a blocking client for it.

use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{BridgeError, BridgeService, ChatReply, SessionInfo};
use crate::escrow::EscrowError;
use crate::mockllm::ProviderError;

#[derive(Debug, Serialize, Deserialize)]
pub struct OpenSessionRequest {
    pub envelope: String,
    /// PLKEY1 user-key token (direct protocol). Exactly one of `user_key`
    /// and `bearer_token` must be present.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub user_key: Option<String>,
    /// Escrow bearer-token id (keyed protocol); the key is fetched from the
    /// escrow named in the envelope header.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bearer_token: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ChatRequest {
    pub request: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ChatResponse {
    pub redacted: bool,
    pub response: String,
}

fn error_code(err: &BridgeError) -> (&'static str, StatusCode) {
    match err {
        BridgeError::Parse { .. } => ("PARSE_ERROR", StatusCode::BAD_REQUEST),
        BridgeError::UnsupportedVersion(_) => ("VERSION_ERROR", StatusCode::BAD_REQUEST),
        BridgeError::KeyInvalid => ("KEY_INVALID", StatusCode::UNAUTHORIZED),
        BridgeError::KeyMismatch => ("KEY_MISMATCH", StatusCode::UNAUTHORIZED),
        BridgeError::AuthFailure => ("AUTH_FAILURE", StatusCode::UNAUTHORIZED),
        BridgeError::UnknownPrompt => ("UNKNOWN_PROMPT", StatusCode::UNAUTHORIZED),
        BridgeError::SessionNotReady => ("SESSION_NOT_READY", StatusCode::CONFLICT),
        BridgeError::UnknownSession => ("UNKNOWN_SESSION", StatusCode::NOT_FOUND),
        BridgeError::NegativeDelay => ("NEGATIVE_DELAY", StatusCode::BAD_REQUEST),
        BridgeError::InvalidRequest(_) => ("INVALID_REQUEST", StatusCode::BAD_REQUEST),
        BridgeError::Provider(ProviderError::Unavailable(_)) => {
            ("PROVIDER_UNAVAILABLE", StatusCode::BAD_GATEWAY)
        }
        BridgeError::Provider(ProviderError::Status(_)) => {
            ("PROVIDER_ERROR", StatusCode::BAD_GATEWAY)
        }
        BridgeError::Escrow(e) => match e {
            EscrowError::TokenAlreadyRedeemed | EscrowError::KeyVersionStale { .. } => {
                ("ESCROW_REJECTED", StatusCode::CONFLICT)
            }
            EscrowError::Provider(_) => ("PROVIDER_UNAVAILABLE", StatusCode::BAD_GATEWAY),
            _ => ("ESCROW_REJECTED", StatusCode::UNAUTHORIZED),
        },
    }
}

struct ApiError(BridgeError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (code, status) = error_code(&self.0);
        (
            status,
            Json(json!({ "error": code, "message": self.0.to_string() })),
        )
            .into_response()
    }
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, BridgeError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(BridgeError::InvalidRequest(e.to_string())))?
        .map_err(ApiError)
}

async fn open_session(
    State(svc): State<Arc<BridgeService>>,
    Json(req): Json<OpenSessionRequest>,
) -> Result<Json<SessionInfo>, ApiError> {
    blocking(move || match (&req.user_key, &req.bearer_token) {
        (Some(user_key), None) => svc.open_session(&req.envelope, user_key),
        (None, Some(token)) => {
            // the escrow is wherever the envelope says it is
            let envelope = crate::sealer::parse_sealed(&req.envelope)?;
            let locator = envelope
                .header
                .escrow_locator
                .clone()
                .ok_or_else(|| BridgeError::InvalidRequest("envelope has no escrow locator".into()))?;
            let escrow = crate::escrow::EscrowHttpClient::new(locator);
            svc.open_session_via_escrow(&req.envelope, token, &escrow)
        }
        _ => Err(BridgeError::InvalidRequest(
            "provide exactly one of user_key or bearer_token".into(),
        )),
    })
    .await
    .map(Json)
}

async fn chat(
    State(svc): State<Arc<BridgeService>>,
    Path(session_id): Path<String>,
    Json(req): Json<ChatRequest>,
) -> Result<Json<ChatResponse>, ApiError> {
    let ChatReply { response, redacted } =
        blocking(move || svc.chat(&session_id, &req.request)).await?;
    Ok(Json(ChatResponse { redacted, response }))
}

async fn close_session(
    State(svc): State<Arc<BridgeService>>,
    Path(session_id): Path<String>,
) -> Result<StatusCode, ApiError> {
    blocking(move || svc.close_session(&session_id)).await?;
    Ok(StatusCode::NO_CONTENT)
}

pub fn bridge_router(svc: Arc<BridgeService>) -> Router {
    Router::new()
        .route("/v1/session", post(open_session))
        .route("/v1/session/:id/chat", post(chat))
        .route("/v1/session/:id", delete(close_session))
        .with_state(svc)
}

/// Blocking client for a remote bridge.
pub struct BridgeHttpClient {
    base: String,
    client: reqwest::blocking::Client,
}

#[derive(Debug, thiserror::Error)]
pub enum BridgeClientError {
    #[error("bridge unreachable: {0}")]
    Unreachable(String),
    #[error("bridge rejected the request ({status}): {code}")]
    Rejected { status: u16, code: String },
}

impl BridgeHttpClient {
    pub fn new(base: impl Into<String>) -> Self {
        BridgeHttpClient {
            base: base.into().trim_end_matches('/').to_string(),
            client: reqwest::blocking::Client::new(),
        }
    }

    fn check<T: serde::de::DeserializeOwned>(
        resp: reqwest::blocking::Response,
    ) -> Result<T, BridgeClientError> {
        let status = resp.status().as_u16();
        if !resp.status().is_success() {
            let body: serde_json::Value = resp.json().unwrap_or_default();
            let code = body
                .get("error")
                .and_then(|v| v.as_str())
                .unwrap_or("UNKNOWN")
                .to_string();
            return Err(BridgeClientError::Rejected { status, code });
        }
        resp.json()
            .map_err(|e| BridgeClientError::Unreachable(e.to_string()))
    }

    pub fn open_session(
        &self,
        req: &OpenSessionRequest,
    ) -> Result<SessionInfo, BridgeClientError> {
        let resp = self
            .client
            .post(format!("{}/v1/session", self.base))
            .json(req)
            .send()
            .map_err(|e| BridgeClientError::Unreachable(e.to_string()))?;
        Self::check(resp)
    }

    pub fn chat(&self, session_id: &str, request: &str) -> Result<ChatResponse, BridgeClientError> {
        let resp = self
            .client
            .post(format!("{}/v1/session/{session_id}/chat", self.base))
            .json(&ChatRequest {
                request: request.to_string(),
            })
            .send()
            .map_err(|e| BridgeClientError::Unreachable(e.to_string()))?;
        Self::check(resp)
    }

    pub fn close_session(&self, session_id: &str) -> Result<(), BridgeClientError> {
        let resp = self
            .client
            .delete(format!("{}/v1/session/{session_id}", self.base))
            .send()
            .map_err(|e| BridgeClientError::Unreachable(e.to_string()))?;
        if !resp.status().is_success() {
            let status = resp.status().as_u16();
            let body: serde_json::Value = resp.json().unwrap_or_default();
            let code = body
                .get("error")
                .and_then(|v| v.as_str())
                .unwrap_or("UNKNOWN")
                .to_string();
            return Err(BridgeClientError::Rejected { status, code });
        }
        Ok(())
    }
}

// SessionInfo needs Deserialize for the client side only.
impl<'de> Deserialize<'de> for SessionInfo {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Wire {
            session_id: String,
            state: super::SessionState,
            user_id: String,
        }
        let w = Wire::deserialize(d)?;
        Ok(SessionInfo {
            session_id: w.session_id,
            state: w.state,
            user_id: w.user_id,
        })
    }
}
