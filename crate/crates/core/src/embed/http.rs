use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::EmbeddingBackend;
use crate::error::{Error, Result};

pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_TOKEN_ENV: &str = "ADAPTIVE_K_EMBED_TOKEN";

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f32>>,
}

/// Embedding server client.
///
/// Sends `{"texts": [...]}` as a JSON POST and expects
/// `{"embeddings": [[...], ...]}` back. When the configured environment
/// variable is set, its value is sent as a bearer token.
pub struct HttpBackend {
    url: String,
    model: String,
    dim: usize,
    batch_size: usize,
    concurrency: usize,
    token: Option<String>,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(url: impl Into<String>, model: impl Into<String>, dim: usize) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        Self {
            url: url.into(),
            model: model.into(),
            dim,
            batch_size: DEFAULT_BATCH_SIZE,
            concurrency: 1,
            token: std::env::var(DEFAULT_TOKEN_ENV).ok(),
            agent,
        }
    }

    pub fn with_batch_size(mut self, n: usize) -> Self {
        self.batch_size = n.max(1);
        self
    }

    /// Number of batches in flight at once.
    pub fn with_concurrency(mut self, n: usize) -> Self {
        self.concurrency = n.max(1);
        self
    }

    /// Reads the bearer token from `var` instead of the default variable.
    pub fn with_token_env(mut self, var: &str) -> Self {
        self.token = std::env::var(var).ok();
        self
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token;
        self
    }

    fn post(&self, texts: &[&str]) -> std::result::Result<Vec<Vec<f32>>, String> {
        let mut req = self.agent.post(&self.url);
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req
            .send_json(EmbedRequest { texts })
            .map_err(|e| e.to_string())?;
        let body: EmbedResponse = resp.body_mut().read_json().map_err(|e| e.to_string())?;
        if body.embeddings.len() != texts.len() {
            return Err(format!(
                "server returned {} embeddings for {} texts",
                body.embeddings.len(),
                texts.len()
            ));
        }
        Ok(body.embeddings)
    }
}

impl EmbeddingBackend for HttpBackend {
    fn model_name(&self) -> &str {
        &self.model
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        let batches: Vec<&[&str]> = texts.chunks(self.batch_size).collect();
        let mut results: Vec<Option<std::result::Result<Vec<Vec<f32>>, String>>> =
            (0..batches.len()).map(|_| None).collect();

        for (wave, slots) in batches
            .chunks(self.concurrency)
            .zip(results.chunks_mut(self.concurrency))
        {
            std::thread::scope(|s| {
                for (batch, slot) in wave.iter().zip(slots.iter_mut()) {
                    s.spawn(move || *slot = Some(self.post(batch)));
                }
            });
        }

        let mut out = Vec::with_capacity(texts.len());
        for (batch, res) in batches.iter().zip(results) {
            match res.expect("every batch ran") {
                Ok(vs) => out.extend(vs),
                Err(message) => {
                    return Err(Error::Backend {
                        ids: batch.iter().map(|s| s.to_string()).collect(),
                        message,
                    })
                }
            }
        }
        Ok(out)
    }
}
