//! Backend capability traits: chat completion, vision description, and
//! text/image embedding.
//!
//! The pipeline only ever talks to these traits. The `memecmd` crate
//! provides HTTP implementations; [`crate::mock`] provides deterministic
//! offline ones. Handles are `Send + Sync` so sessions can share them
//! across worker threads.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::vector::{Vector, VectorError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Connection-level failure (DNS, refused, timeout).
    #[error("transport error: {0}")]
    Transport(String),
    /// Non-success HTTP status.
    #[error("backend returned status {code}: {body}")]
    Status { code: u16, body: String },
    /// The backend answered but not in the shape the caller asked for.
    #[error("malformed backend response ({reason}); raw response: {raw:?}")]
    Format { reason: String, raw: String },
    /// All retries spent; keeps the attempt count and the final error text.
    #[error("backend failed after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

/// One part of a (possibly multimodal) chat message.
#[derive(Debug, Clone, PartialEq)]
pub enum Part {
    Text(String),
    Image { data: Vec<u8>, mime: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatMessage {
    pub role: Role,
    pub parts: Vec<Part>,
}

impl ChatMessage {
    pub fn text(role: Role, text: impl Into<String>) -> Self {
        ChatMessage {
            role,
            parts: vec![Part::Text(text.into())],
        }
    }

    /// Concatenation of the text parts (images skipped).
    pub fn text_content(&self) -> String {
        let mut out = String::new();
        for part in &self.parts {
            if let Part::Text(t) = part {
                out.push_str(t);
            }
        }
        out
    }
}

pub trait ChatBackend: Send + Sync {
    fn send(&self, messages: &[ChatMessage]) -> Result<String, BackendError>;
}

pub trait VisionBackend: Send + Sync {
    fn describe(&self, image: &[u8], prompt: &str) -> Result<String, BackendError>;
}

pub trait EmbeddingBackend: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vector, BackendError>;
    fn embed_image(&self, image: &[u8]) -> Result<Vector, BackendError>;
    fn dim(&self) -> usize;
}

/// How far from unit norm a backend-returned vector may be.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Embeds `text`, checks the backend kept its unit-norm and dimension
/// contract, and quantizes components to the persisted 9-significant-digit
/// precision so stored vectors survive a save/load cycle unchanged.
pub fn embed_unit(backend: &dyn EmbeddingBackend, text: &str) -> Result<Vector, BackendError> {
    let v = backend.embed(text)?;
    check_unit(&v, backend.dim())?;
    Ok(v.quantized())
}

/// Image-side counterpart of [`embed_unit`].
pub fn embed_image_unit(
    backend: &dyn EmbeddingBackend,
    image: &[u8],
) -> Result<Vector, BackendError> {
    let v = backend.embed_image(image)?;
    check_unit(&v, backend.dim())?;
    Ok(v.quantized())
}

fn check_unit(v: &Vector, dim: usize) -> Result<(), BackendError> {
    if v.len() != dim {
        return Err(BackendError::Other(
            VectorError::DimensionMismatch(v.len(), dim).to_string(),
        ));
    }
    let norm = v.norm();
    if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
        return Err(BackendError::Other(alloc::format!(
            "embedding norm {norm} outside 1 +/- {UNIT_NORM_TOLERANCE}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mock::HashEmbedding;

    #[test]
    fn embed_unit_quantizes_and_keeps_norm() {
        let backend = HashEmbedding::new(64);
        let v = embed_unit(&backend, "任意文本").unwrap();
        assert_eq!(v.len(), 64);
        assert!((v.norm() - 1.0).abs() < 1e-6);
        assert_eq!(v, v.quantized());
    }

    #[test]
    fn text_content_skips_images() {
        let msg = ChatMessage {
            role: Role::User,
            parts: vec![
                Part::Text("a".into()),
                Part::Image {
                    data: vec![1, 2],
                    mime: "image/png".into(),
                },
                Part::Text("b".into()),
            ],
        };
        assert_eq!(msg.text_content(), "ab");
    }
}
