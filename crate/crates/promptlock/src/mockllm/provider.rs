//! Pluggable LLM-provider contract. The mock adapter and any real-provider
//! client are swappable behind [`Provider`] without touching bridge or
//! escrow code.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::AssimilatedContext;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("provider returned status {0}")]
    Status(u16),
}

pub trait Provider: Send + Sync {
    fn complete(&self, ctx: &AssimilatedContext, request: &str) -> Result<String, ProviderError>;
}

/// Adapter over the in-process mock. Identical results to calling
/// [`super::query`] directly.
#[derive(Debug, Default, Clone, Copy)]
pub struct MockProvider;

impl Provider for MockProvider {
    fn complete(&self, ctx: &AssimilatedContext, request: &str) -> Result<String, ProviderError> {
        Ok(super::respond(ctx, request))
    }
}

/// Wire format for HTTP providers: POST `{ behavior, request }`, response
/// body is the completion text.
#[derive(Debug, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub behavior: Vec<crate::sealer::Directive>,
    pub request: String,
}

/// Best-effort client for a real provider endpoint speaking the wire format
/// above. Excluded from the acceptance path, which runs against the mock.
pub struct HttpProvider {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpProvider {
            endpoint: endpoint.into(),
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl Provider for HttpProvider {
    fn complete(&self, ctx: &AssimilatedContext, request: &str) -> Result<String, ProviderError> {
        let body = ProviderRequest {
            behavior: ctx.behavior.clone(),
            request: request.to_string(),
        };
        let resp = self
            .client
            .post(&self.endpoint)
            .json(&body)
            .send()
            .map_err(|e| ProviderError::Unavailable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(ProviderError::Status(status.as_u16()));
        }
        resp.text()
            .map_err(|e| ProviderError::Unavailable(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mockllm::{assimilate, forget, query};
    use crate::sealer::TaskPrompt;

    #[test]
    fn mock_adapter_matches_direct_query() {
        let ctx = forget(&assimilate(&TaskPrompt::new("@directive style=upper")));
        let direct = query(&ctx, "hello").response;
        let via_provider = MockProvider.complete(&ctx, "hello").unwrap();
        assert_eq!(direct, via_provider);
    }

    #[test]
    fn unreachable_endpoint_is_unavailable() {
        // port 9 (discard) on localhost is not listening in this environment
        let p = HttpProvider::new("http://127.0.0.1:9/complete");
        let ctx = forget(&assimilate(&TaskPrompt::new("")));
        match p.complete(&ctx, "hi") {
            Err(ProviderError::Unavailable(_)) => {}
            other => panic!("expected Unavailable, got {other:?}"),
        }
    }
}
