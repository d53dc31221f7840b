//! HTTP wire format shared by remote backends.
//!
//! ```text
//! POST /v1/label       {sample_id, audio, prompt, params} -> {text}
//! POST /v1/embed/audio {sample_id, audio}                 -> {dim, values}
//! POST /v1/embed/text  {text}                             -> {dim, values}
//! ```
//!
//! `audio` is either `{"uri": "..."}` or `{"b64": "..."}`.

use serde::{Deserialize, Serialize};

pub const LABEL_PATH: &str = "/v1/label";
pub const EMBED_AUDIO_PATH: &str = "/v1/embed/audio";
pub const EMBED_TEXT_PATH: &str = "/v1/embed/text";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AudioPayload {
    Uri(String),
    B64(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRequest {
    pub sample_id: Option<String>,
    pub audio: Option<AudioPayload>,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub params: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioEmbedRequest {
    pub sample_id: String,
    pub audio: AudioPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextEmbedRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingResponse {
    pub dim: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("malformed response body: {0}")]
    Malformed(String),
    #[error("declared dim {declared} but {actual} values")]
    DimMismatch { declared: usize, actual: usize },
    #[error("embedding has zero dimensions")]
    Empty,
    #[error("embedding value {index} is not finite")]
    NonFinite { index: usize },
}

pub fn decode_label_response(body: &[u8]) -> Result<String, WireError> {
    let r: LabelResponse =
        serde_json::from_slice(body).map_err(|e| WireError::Malformed(e.to_string()))?;
    Ok(r.text)
}

/// Decodes and checks an embedding body: declared dim matches, values are
/// finite and non-empty.
pub fn decode_embedding_response(body: &[u8]) -> Result<Vec<f64>, WireError> {
    let r: EmbeddingResponse =
        serde_json::from_slice(body).map_err(|e| WireError::Malformed(e.to_string()))?;
    check_embedding(r)
}

pub fn check_embedding(r: EmbeddingResponse) -> Result<Vec<f64>, WireError> {
    if r.values.len() != r.dim {
        return Err(WireError::DimMismatch {
            declared: r.dim,
            actual: r.values.len(),
        });
    }
    if r.dim == 0 {
        return Err(WireError::Empty);
    }
    if let Some(index) = r.values.iter().position(|v| !v.is_finite()) {
        return Err(WireError::NonFinite { index });
    }
    Ok(r.values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn audio_payload_shape() {
        let j = serde_json::to_string(&AudioPayload::Uri("a.wav".into())).unwrap();
        assert_eq!(j, r#"{"uri":"a.wav"}"#);
        let j = serde_json::to_string(&AudioPayload::B64("AAA=".into())).unwrap();
        assert_eq!(j, r#"{"b64":"AAA="}"#);
    }

    #[test]
    fn embedding_checks() {
        assert_eq!(
            decode_embedding_response(br#"{"dim":2,"values":[1.0,0.5]}"#).unwrap(),
            vec![1.0, 0.5]
        );
        assert_eq!(
            decode_embedding_response(br#"{"dim":3,"values":[1.0,0.5]}"#),
            Err(WireError::DimMismatch { declared: 3, actual: 2 })
        );
        assert_eq!(
            decode_embedding_response(br#"{"dim":0,"values":[]}"#),
            Err(WireError::Empty)
        );
        assert!(decode_embedding_response(b"{").is_err());
    }

    #[test]
    fn label_response() {
        assert_eq!(decode_label_response(br#"{"text":"a, b"}"#).unwrap(), "a, b");
        assert!(decode_label_response(br#"{"txt":"a"}"#).is_err());
    }
}
