//! HTTP surface of the escrow marketplace, and a blocking client for it.

use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{BearerToken, EscrowError, EscrowService, KeyRelease, ListingSummary};
use crate::mockllm::ProviderError;
use crate::sealer::{ContentKey, TaskPrompt};

#[derive(Debug, Serialize, Deserialize)]
pub struct AddListingRequest {
    pub description: String,
    pub preamble: String,
    pub task_body: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PurchaseResponse {
    pub envelope: String,
    pub token: BearerToken,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RedeemKeyRequest {
    pub token: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RedeemFullRequest {
    pub request: String,
    pub token: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ArtifactResponse {
    pub artifact: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TokenStatus {
    pub bound_key_version: u64,
    pub prompt_id: String,
    pub state: super::TokenState,
}

fn error_code(err: &EscrowError) -> (&'static str, StatusCode) {
    match err {
        EscrowError::UnknownPrompt => ("UNKNOWN_PROMPT", StatusCode::NOT_FOUND),
        EscrowError::DescriptionLeaks => ("DESCRIPTION_LEAKS", StatusCode::BAD_REQUEST),
        EscrowError::TokenUnknown => ("TOKEN_UNKNOWN", StatusCode::NOT_FOUND),
        EscrowError::TokenAlreadyRedeemed => ("TOKEN_ALREADY_REDEEMED", StatusCode::CONFLICT),
        EscrowError::TokenExpired => ("TOKEN_EXPIRED", StatusCode::GONE),
        EscrowError::TokenRevoked => ("TOKEN_REVOKED", StatusCode::FORBIDDEN),
        EscrowError::KeyVersionStale { .. } => ("KEY_VERSION_STALE", StatusCode::CONFLICT),
        EscrowError::Provider(ProviderError::Unavailable(_)) => {
            ("PROVIDER_UNAVAILABLE", StatusCode::BAD_GATEWAY)
        }
        EscrowError::Provider(ProviderError::Status(_)) => {
            ("PROVIDER_ERROR", StatusCode::BAD_GATEWAY)
        }
        EscrowError::StoreCorrupt | EscrowError::Store(_) => {
            ("STORE_ERROR", StatusCode::INTERNAL_SERVER_ERROR)
        }
        EscrowError::Sealer(_) => ("SEALER_ERROR", StatusCode::INTERNAL_SERVER_ERROR),
    }
}

struct ApiError(EscrowError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (code, status) = error_code(&self.0);
        let mut body = json!({ "error": code, "message": self.0.to_string() });
        if let EscrowError::KeyVersionStale { replacement } = &self.0 {
            body["replacement"] = serde_json::to_value(replacement).unwrap();
        }
        (status, Json(body)).into_response()
    }
}

impl From<EscrowError> for ApiError {
    fn from(e: EscrowError) -> Self {
        ApiError(e)
    }
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, EscrowError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(EscrowError::Store(crate::store::StoreError::Corrupt(e.to_string()))))?
        .map_err(ApiError)
}

async fn list_listings(
    State(svc): State<Arc<EscrowService>>,
) -> Result<Json<Vec<ListingSummary>>, ApiError> {
    blocking(move || Ok(svc.listings())).await.map(Json)
}

async fn add_listing(
    State(svc): State<Arc<EscrowService>>,
    Json(req): Json<AddListingRequest>,
) -> Result<Json<ListingSummary>, ApiError> {
    blocking(move || {
        svc.register_listing(&TaskPrompt::new(req.task_body), &req.description, &req.preamble)
    })
    .await
    .map(Json)
}

async fn purchase(
    State(svc): State<Arc<EscrowService>>,
    Path(prompt_id): Path<String>,
) -> Result<Json<PurchaseResponse>, ApiError> {
    let (envelope, token) = blocking(move || svc.purchase(&prompt_id)).await?;
    Ok(Json(PurchaseResponse { envelope, token }))
}

async fn redeem_key(
    State(svc): State<Arc<EscrowService>>,
    Json(req): Json<RedeemKeyRequest>,
) -> Result<Json<ContentKey>, ApiError> {
    blocking(move || svc.redeem_key(&req.token)).await.map(Json)
}

async fn redeem_full(
    State(svc): State<Arc<EscrowService>>,
    Json(req): Json<RedeemFullRequest>,
) -> Result<Json<ArtifactResponse>, ApiError> {
    let artifact = blocking(move || svc.redeem_full(&req.token, &req.request)).await?;
    Ok(Json(ArtifactResponse { artifact }))
}

async fn token_status(
    State(svc): State<Arc<EscrowService>>,
    Path(token_id): Path<String>,
) -> Result<Json<TokenStatus>, ApiError> {
    let token = blocking(move || svc.introspect_token(&token_id)).await?;
    Ok(Json(TokenStatus {
        bound_key_version: token.bound_key_version,
        prompt_id: token.prompt_id,
        state: token.state,
    }))
}

pub fn escrow_router(svc: Arc<EscrowService>) -> Router {
    Router::new()
        .route("/v1/listings", get(list_listings).post(add_listing))
        .route("/v1/listings/:id/purchase", post(purchase))
        .route("/v1/redeem/key", post(redeem_key))
        .route("/v1/redeem/full", post(redeem_full))
        .route("/v1/tokens/:id", get(token_status))
        .with_state(svc)
}

/// Blocking client for a remote escrow. Interchangeable with the in-process
/// service wherever [`KeyRelease`] is expected.
pub struct EscrowHttpClient {
    base: String,
    client: reqwest::blocking::Client,
}

impl EscrowHttpClient {
    pub fn new(base: impl Into<String>) -> Self {
        EscrowHttpClient {
            base: base.into().trim_end_matches('/').to_string(),
            client: reqwest::blocking::Client::new(),
        }
    }

    fn api_error(resp: reqwest::blocking::Response) -> EscrowError {
        let status = resp.status().as_u16();
        let body: serde_json::Value = resp.json().unwrap_or_default();
        match body.get("error").and_then(|v| v.as_str()) {
            Some("UNKNOWN_PROMPT") => EscrowError::UnknownPrompt,
            Some("DESCRIPTION_LEAKS") => EscrowError::DescriptionLeaks,
            Some("TOKEN_UNKNOWN") => EscrowError::TokenUnknown,
            Some("TOKEN_ALREADY_REDEEMED") => EscrowError::TokenAlreadyRedeemed,
            Some("TOKEN_EXPIRED") => EscrowError::TokenExpired,
            Some("TOKEN_REVOKED") => EscrowError::TokenRevoked,
            Some("KEY_VERSION_STALE") => {
                match body
                    .get("replacement")
                    .cloned()
                    .and_then(|v| serde_json::from_value(v).ok())
                {
                    Some(replacement) => EscrowError::KeyVersionStale { replacement },
                    None => EscrowError::TokenRevoked,
                }
            }
            Some("PROVIDER_UNAVAILABLE") => {
                EscrowError::Provider(ProviderError::Unavailable("remote".into()))
            }
            _ => EscrowError::Provider(ProviderError::Status(status)),
        }
    }

    fn post_json<B: Serialize, T: serde::de::DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<T, EscrowError> {
        let resp = self
            .client
            .post(format!("{}{}", self.base, path))
            .json(body)
            .send()
            .map_err(|e| EscrowError::Provider(ProviderError::Unavailable(e.to_string())))?;
        if !resp.status().is_success() {
            return Err(Self::api_error(resp));
        }
        resp.json()
            .map_err(|e| EscrowError::Provider(ProviderError::Unavailable(e.to_string())))
    }

    pub fn listings(&self) -> Result<Vec<ListingSummary>, EscrowError> {
        let resp = self
            .client
            .get(format!("{}/v1/listings", self.base))
            .send()
            .map_err(|e| EscrowError::Provider(ProviderError::Unavailable(e.to_string())))?;
        if !resp.status().is_success() {
            return Err(Self::api_error(resp));
        }
        resp.json()
            .map_err(|e| EscrowError::Provider(ProviderError::Unavailable(e.to_string())))
    }

    pub fn add_listing(&self, req: &AddListingRequest) -> Result<ListingSummary, EscrowError> {
        self.post_json("/v1/listings", req)
    }

    pub fn purchase(&self, prompt_id: &str) -> Result<PurchaseResponse, EscrowError> {
        self.post_json(&format!("/v1/listings/{prompt_id}/purchase"), &json!({}))
    }

    pub fn redeem_full(&self, token: &str, request: &str) -> Result<String, EscrowError> {
        let resp: ArtifactResponse = self.post_json(
            "/v1/redeem/full",
            &RedeemFullRequest {
                request: request.to_string(),
                token: token.to_string(),
            },
        )?;
        Ok(resp.artifact)
    }

    pub fn token_status(&self, token_id: &str) -> Result<TokenStatus, EscrowError> {
        let resp = self
            .client
            .get(format!("{}/v1/tokens/{token_id}", self.base))
            .send()
            .map_err(|e| EscrowError::Provider(ProviderError::Unavailable(e.to_string())))?;
        if !resp.status().is_success() {
            return Err(Self::api_error(resp));
        }
        resp.json()
            .map_err(|e| EscrowError::Provider(ProviderError::Unavailable(e.to_string())))
    }
}

impl KeyRelease for EscrowHttpClient {
    fn redeem_key(&self, token_id: &str) -> Result<ContentKey, EscrowError> {
        self.post_json(
            "/v1/redeem/key",
            &RedeemKeyRequest {
                token: token_id.to_string(),
            },
        )
    }
}
