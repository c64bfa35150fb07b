//! Deterministic offline backends.
//!
//! Every mock is a pure function of its inputs: the same request always
//! yields the same reply, so whole pipeline runs are reproducible without
//! network access. The chat and vision mocks inspect the prompt for the
//! structured-reply instructions emitted by [`crate::templates`] and
//! answer in the matching shape.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use crate::backend::{
    BackendError, ChatBackend, ChatMessage, EmbeddingBackend, VisionBackend,
};
use crate::rng::{fnv1a64, DetRng};
use crate::templates::{FIELD_SEPARATOR, ITEM_SEPARATOR};
use crate::vector::{l2_normalize, Vector};

/// Deterministic embedding of arbitrary bytes: a ChaCha stream seeded from
/// the FNV-1a hash of the input draws `dim` standard normals, which are
/// then L2-normalized. Distinct inputs land near-orthogonal for large
/// `dim`.
pub fn mock_embed_bytes(bytes: &[u8], dim: usize) -> Vector {
    assert!(dim > 0, "embedding dimension must be positive");
    let mut rng = DetRng::from_seed(fnv1a64(bytes));
    let components: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
    let raw = Vector::new(components).expect("gaussian draws are finite");
    l2_normalize(&raw).expect("gaussian vector is nonzero")
}

/// Text flavor of [`mock_embed_bytes`].
pub fn mock_embed(text: &str, dim: usize) -> Vector {
    mock_embed_bytes(text.as_bytes(), dim)
}

/// Mock [`EmbeddingBackend`] over [`mock_embed`]. Images hash exactly like
/// text, so a reply whose bytes equal the image bytes embeds identically.
#[derive(Debug, Clone)]
pub struct HashEmbedding {
    dim: usize,
}

impl HashEmbedding {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0);
        HashEmbedding { dim }
    }
}

impl Default for HashEmbedding {
    /// 256 dimensions: large enough for near-orthogonality, cheap in tests.
    fn default() -> Self {
        HashEmbedding::new(256)
    }
}

impl EmbeddingBackend for HashEmbedding {
    fn embed(&self, text: &str) -> Result<Vector, BackendError> {
        Ok(mock_embed(text, self.dim))
    }

    fn embed_image(&self, image: &[u8]) -> Result<Vector, BackendError> {
        Ok(mock_embed_bytes(image, self.dim))
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

/// Short chat-style words the mocks compose pseudo-replies from. Chosen to
/// be generic chat filler so fixtures control any distinctive strings.
const LEXICON: &[&str] = &[
    "哈哈", "真的", "不错", "今天", "感觉", "有点", "厉害", "然后", "确实", "可以", "周末",
    "好看", "放松", "奶茶", "开心", "干饭", "上分", "靠谱", "绝了", "安排", "好家伙", "无语",
    "摸鱼", "下班", "睡觉", "早点", "健身", "跑步", "降温", "火锅", "约吗", "改天", "最近",
    "忙疯", "上线", "稳住", "问题", "不大", "芜湖", "起飞", "离谱", "好累", "加油", "可爱",
];

/// Deterministic pseudo-phrase: `words` lexicon entries picked by a stream
/// seeded from `seed ^ salt`.
fn phrase(seed: u64, salt: u64, words: usize) -> String {
    let mut rng = DetRng::from_seed(seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut out = String::new();
    for _ in 0..words {
        out.push_str(LEXICON[rng.uniform_index(LEXICON.len())]);
    }
    out
}

fn prompt_text(messages: &[ChatMessage]) -> String {
    let mut out = String::new();
    for m in messages {
        out.push_str(&m.text_content());
        out.push('\n');
    }
    out
}

/// Finds the count in an "exactly {n} ..." instruction.
fn requested_count(prompt: &str) -> Option<usize> {
    let idx = prompt.find("exactly ")?;
    let digits: String = prompt[idx + "exactly ".len()..]
        .chars()
        .take_while(char::is_ascii_digit)
        .collect();
    digits.parse().ok()
}

/// Mock [`ChatBackend`]: answers structured requests in the requested
/// shape and everything else with a short pseudo-reply, all as a pure
/// function of the incoming messages.
#[derive(Debug, Clone, Default)]
pub struct HashChat;

impl ChatBackend for HashChat {
    fn send(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        let prompt = prompt_text(messages);
        let seed = fnv1a64(prompt.as_bytes());
        if prompt.contains("exactly three sections") {
            return Ok(format!(
                "{}\n{FIELD_SEPARATOR}\n{}\n{FIELD_SEPARATOR}\n{}",
                phrase(seed, 1, 4),
                phrase(seed, 2, 3),
                phrase(seed, 3, 3),
            ));
        }
        if prompt.contains("scenarios and nothing else") {
            let n = requested_count(&prompt).unwrap_or(1);
            let blocks: Vec<String> = (0..n as u64)
                .map(|i| {
                    format!(
                        "{}\n{FIELD_SEPARATOR}\n{}",
                        phrase(seed, 10 + 2 * i, 4),
                        phrase(seed, 11 + 2 * i, 4)
                    )
                })
                .collect();
            return Ok(blocks.join(&format!("\n{ITEM_SEPARATOR}\n")));
        }
        Ok(phrase(seed, 0, 3 + (seed % 3) as usize))
    }
}

/// Mock [`VisionBackend`]: deterministic per (image, prompt) pair, shaped
/// by the same structured-reply instructions as [`HashChat`].
#[derive(Debug, Clone, Default)]
pub struct HashVision;

impl VisionBackend for HashVision {
    fn describe(&self, image: &[u8], prompt: &str) -> Result<String, BackendError> {
        let seed = fnv1a64(image) ^ fnv1a64(prompt.as_bytes());
        if prompt.contains("exactly four sections") {
            return Ok(format!(
                "{}\n{FIELD_SEPARATOR}\n{}\n{FIELD_SEPARATOR}\n{}\n{FIELD_SEPARATOR}\n{}",
                phrase(seed, 1, 4),
                phrase(seed, 2, 4),
                phrase(seed, 3, 3),
                phrase(seed, 4, 3),
            ));
        }
        if prompt.contains("exactly five integers") {
            let scores: Vec<String> = (0..5)
                .map(|i| ((55 + (seed >> (8 * i)) % 41) as u32).to_string())
                .collect();
            return Ok(scores.join(" "));
        }
        Ok(phrase(seed, 0, 4))
    }
}

/// Chat mock that echoes the last message's text.
#[derive(Debug, Clone, Default)]
pub struct EchoChat;

impl ChatBackend for EchoChat {
    fn send(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        messages
            .last()
            .map(|m| m.text_content())
            .ok_or_else(|| BackendError::Other("no messages to echo".to_string()))
    }
}

/// Chat mock that plays back a fixed list of replies in order.
#[derive(Debug, Default)]
pub struct ScriptedChat {
    replies: Vec<String>,
    cursor: AtomicUsize,
}

impl ScriptedChat {
    pub fn new(replies: impl IntoIterator<Item = impl Into<String>>) -> Self {
        ScriptedChat {
            replies: replies.into_iter().map(Into::into).collect(),
            cursor: AtomicUsize::new(0),
        }
    }
}

impl ChatBackend for ScriptedChat {
    fn send(&self, _messages: &[ChatMessage]) -> Result<String, BackendError> {
        let i = self.cursor.fetch_add(1, Ordering::Relaxed);
        self.replies
            .get(i)
            .cloned()
            .ok_or_else(|| BackendError::Other(format!("scripted chat exhausted after {i} replies")))
    }
}

/// Vision mock that plays back a fixed list of replies in order.
#[derive(Debug, Default)]
pub struct ScriptedVision {
    replies: Vec<String>,
    cursor: AtomicUsize,
}

impl ScriptedVision {
    pub fn new(replies: impl IntoIterator<Item = impl Into<String>>) -> Self {
        ScriptedVision {
            replies: replies.into_iter().map(Into::into).collect(),
            cursor: AtomicUsize::new(0),
        }
    }
}

impl VisionBackend for ScriptedVision {
    fn describe(&self, _image: &[u8], _prompt: &str) -> Result<String, BackendError> {
        let i = self.cursor.fetch_add(1, Ordering::Relaxed);
        self.replies
            .get(i)
            .cloned()
            .ok_or_else(|| {
                BackendError::Other(format!("scripted vision exhausted after {i} replies"))
            })
    }
}

/// Backend that fails every call; implements all three capabilities.
#[derive(Debug, Clone)]
pub struct FailingBackend(pub String);

impl ChatBackend for FailingBackend {
    fn send(&self, _messages: &[ChatMessage]) -> Result<String, BackendError> {
        Err(BackendError::Transport(self.0.clone()))
    }
}

impl VisionBackend for FailingBackend {
    fn describe(&self, _image: &[u8], _prompt: &str) -> Result<String, BackendError> {
        Err(BackendError::Transport(self.0.clone()))
    }
}

impl EmbeddingBackend for FailingBackend {
    fn embed(&self, _text: &str) -> Result<Vector, BackendError> {
        Err(BackendError::Transport(self.0.clone()))
    }

    fn embed_image(&self, _image: &[u8]) -> Result<Vector, BackendError> {
        Err(BackendError::Transport(self.0.clone()))
    }

    fn dim(&self) -> usize {
        1
    }
}
