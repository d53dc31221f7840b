//! Remote backend over the JSON-over-HTTP contract in [`super::wire`].

use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::Serialize;

use super::wire::{
    self, AudioEmbedRequest, LabelRequest, TextEmbedRequest, EMBED_AUDIO_PATH, EMBED_TEXT_PATH,
    LABEL_PATH,
};
use super::{BackendDescriptor, GatewayError, Transport};

const BACKOFF_BASE: Duration = Duration::from_millis(50);
const BACKOFF_CAP: Duration = Duration::from_secs(5);
const ERROR_BODY_LIMIT: usize = 512;

#[derive(Debug)]
pub struct HttpTransport {
    base_url: String,
    client: Client,
    max_retries: u32,
    token: Option<String>,
}

impl HttpTransport {
    pub fn new(base_url: &str, descriptor: &BackendDescriptor) -> Result<Self, GatewayError> {
        let token = match &descriptor.auth_token_env {
            None => None,
            Some(var) => Some(std::env::var(var).map_err(|_| {
                GatewayError::Config(format!(
                    "{}: auth token variable {var} is not set",
                    descriptor.backend_id
                ))
            })?),
        };
        let client = Client::builder()
            .timeout(Duration::from_secs_f64(descriptor.timeout_s))
            .build()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            client,
            max_retries: descriptor.max_retries,
            token,
        })
    }

    fn backoff(attempt: u32) -> Duration {
        BACKOFF_BASE
            .saturating_mul(1 << attempt.min(16))
            .min(BACKOFF_CAP)
    }

    fn post<B: Serialize>(&self, path: &str, body: &B) -> Result<Vec<u8>, GatewayError> {
        let url = format!("{}{}", self.base_url, path);
        let attempts = self.max_retries.saturating_add(1);
        let mut last = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(Self::backoff(attempt - 1));
            }
            let mut req = self.client.post(&url).json(body);
            if let Some(token) = &self.token {
                req = req.bearer_auth(token);
            }
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        return resp
                            .bytes()
                            .map(|b| b.to_vec())
                            .map_err(|e| GatewayError::Transport(e.to_string()));
                    }
                    let mut text = resp.text().unwrap_or_default();
                    text.truncate(
                        text.char_indices()
                            .nth(ERROR_BODY_LIMIT)
                            .map_or(text.len(), |(i, _)| i),
                    );
                    let err = GatewayError::Status {
                        code: status.as_u16(),
                        body: text,
                    };
                    if status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS {
                        last = Some(err);
                        continue;
                    }
                    return Err(err);
                }
                Err(e) if e.is_timeout() => last = Some(GatewayError::Timeout),
                Err(e) => last = Some(GatewayError::Transport(e.to_string())),
            }
        }
        Err(GatewayError::RetriesExhausted {
            attempts,
            last: Box::new(last.unwrap_or(GatewayError::Timeout)),
        })
    }
}

impl Transport for HttpTransport {
    fn label(&self, req: &LabelRequest) -> Result<String, GatewayError> {
        let body = self.post(LABEL_PATH, req)?;
        Ok(wire::decode_label_response(&body)?)
    }

    fn embed_audio(&self, req: &AudioEmbedRequest) -> Result<Vec<f64>, GatewayError> {
        let body = self.post(EMBED_AUDIO_PATH, req)?;
        Ok(wire::decode_embedding_response(&body)?)
    }

    fn embed_text(&self, req: &TextEmbedRequest) -> Result<Vec<f64>, GatewayError> {
        let body = self.post(EMBED_TEXT_PATH, req)?;
        Ok(wire::decode_embedding_response(&body)?)
    }
}
