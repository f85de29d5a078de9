//! Client for the embedding sidecar.
//!
//! Wire contract: `POST /embed` with `{"texts": [...]}` answers
//! `{"dim": D, "vectors": [[...], ...]}`; `GET /health` answers
//! `{"status": "ok", "model": "<name>"}`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of texts sent in one request.
pub const MAX_BATCH: usize = 64;

const PROVIDER: &str = "embed-service";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub dim: usize,
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model: String,
}

pub struct EmbedClient {
    base_url: String,
    dim: usize,
    agent: ureq::Agent,
}

impl EmbedClient {
    pub fn new(base_url: &str, dim: usize) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        EmbedClient {
            base_url: base_url.trim_end_matches('/').to_string(),
            dim,
            agent,
        }
    }

    fn network(e: impl std::fmt::Display) -> Error {
        Error::Network {
            provider: PROVIDER.into(),
            message: e.to_string(),
        }
    }

    pub fn health(&self) -> Result<Health> {
        let mut resp = self
            .agent
            .get(&format!("{}/health", self.base_url))
            .call()
            .map_err(Self::network)?;
        let body = resp.body_mut().read_to_string().map_err(Self::network)?;
        if resp.status().as_u16() != 200 {
            return Err(Error::Upstream {
                provider: PROVIDER.into(),
                message: format!("health check returned HTTP {}", resp.status()),
            });
        }
        Ok(serde_json::from_str(&body)?)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let payload = serde_json::to_string(&EmbedRequest {
            texts: texts.to_vec(),
        })?;
        let mut resp = self
            .agent
            .post(&format!("{}/embed", self.base_url))
            .header("Content-Type", "application/json")
            .send(payload.as_str())
            .map_err(Self::network)?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(Self::network)?;
        if status != 200 {
            return Err(Error::Upstream {
                provider: PROVIDER.into(),
                message: format!("HTTP {status}: {body}"),
            });
        }
        let parsed: EmbedResponse = serde_json::from_str(&body).map_err(|e| Error::Upstream {
            provider: PROVIDER.into(),
            message: format!("malformed response: {e}"),
        })?;
        if parsed.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: parsed.dim,
            });
        }
        if parsed.vectors.len() != texts.len() {
            return Err(Error::Upstream {
                provider: PROVIDER.into(),
                message: format!(
                    "sent {} texts, received {} vectors",
                    texts.len(),
                    parsed.vectors.len()
                ),
            });
        }
        for v in &parsed.vectors {
            super::check_vector(v, self.dim)?;
        }
        Ok(parsed.vectors)
    }

    /// Embeds `texts` in batches of at most [`MAX_BATCH`], preserving order.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(MAX_BATCH) {
            out.extend(self.embed_batch(chunk)?);
        }
        Ok(out)
    }
}
