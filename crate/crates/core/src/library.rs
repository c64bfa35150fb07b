//! The annotated meme library: one record per image, four annotation
//! dimensions per record, and optionally one embedding per dimension.
//!
//! Also holds the vision-driven annotation step and the keyword statistics
//! used to profile a corpus.

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, VisionBackend, UNIT_NORM_TOLERANCE};
use crate::templates;
use crate::vector::Vector;

/// The four annotation dimensions carried by every meme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    SPlus,
    SMinus,
    Emotion,
    Motivation,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [
        Dimension::SPlus,
        Dimension::SMinus,
        Dimension::Emotion,
        Dimension::Motivation,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Dimension::SPlus => "s_plus",
            Dimension::SMinus => "s_minus",
            Dimension::Emotion => "emotion",
            Dimension::Motivation => "motivation",
        }
    }

    pub fn parse(s: &str) -> Option<Dimension> {
        Dimension::ALL.iter().copied().find(|d| d.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LibraryError {
    #[error("duplicate meme id {0:?}")]
    DuplicateId(String),
    #[error("meme {id:?}: empty {field} annotation")]
    EmptyAnnotation { id: String, field: &'static str },
    #[error("meme {id:?}: embedding for {dimension} has dimension {got}, expected {expected}")]
    EmbeddingDim {
        id: String,
        dimension: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("meme {id:?}: embedding for {dimension} has norm {norm} outside 1 +/- 1e-6")]
    EmbeddingNorm {
        id: String,
        dimension: &'static str,
        norm: f64,
    },
    #[error("library is empty")]
    EmptyLibrary,
    #[error("meme {id:?} is not annotated")]
    NotAnnotated { id: String },
    #[error("annotation reply did not split into four sections, got {got}; raw response: {raw:?}")]
    AnnotationFormat { got: usize, raw: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Per-dimension unit embeddings of one record's annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemeEmbeddings {
    pub s_plus: Vector,
    pub s_minus: Vector,
    pub emotion: Vector,
    pub motivation: Vector,
}

impl MemeEmbeddings {
    pub fn get(&self, dimension: Dimension) -> &Vector {
        match dimension {
            Dimension::SPlus => &self.s_plus,
            Dimension::SMinus => &self.s_minus,
            Dimension::Emotion => &self.emotion,
            Dimension::Motivation => &self.motivation,
        }
    }
}

/// One meme image plus its four-dimension annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemeRecord {
    pub id: String,
    pub image_path: String,
    /// Appropriate usage scenarios.
    pub s_plus: String,
    /// Scenarios where the meme should not be used.
    pub s_minus: String,
    /// Implicit emotion and internet-specific meaning.
    pub emotion: String,
    /// Sender's psychological motivation and communicative intent.
    pub motivation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<MemeEmbeddings>,
}

impl MemeRecord {
    pub fn annotation(&self, dimension: Dimension) -> &str {
        match dimension {
            Dimension::SPlus => &self.s_plus,
            Dimension::SMinus => &self.s_minus,
            Dimension::Emotion => &self.emotion,
            Dimension::Motivation => &self.motivation,
        }
    }

    pub fn is_annotated(&self) -> bool {
        Dimension::ALL
            .iter()
            .all(|d| !self.annotation(*d).trim().is_empty())
    }

    fn check_embeddings(&self, expected_dim: Option<usize>) -> Result<Option<usize>, LibraryError> {
        let Some(emb) = &self.embeddings else {
            return Ok(expected_dim);
        };
        let mut dim = expected_dim;
        for d in Dimension::ALL {
            let v = emb.get(d);
            match dim {
                None => dim = Some(v.len()),
                Some(expected) if v.len() != expected => {
                    return Err(LibraryError::EmbeddingDim {
                        id: self.id.clone(),
                        dimension: d.as_str(),
                        got: v.len(),
                        expected,
                    })
                }
                _ => {}
            }
            let norm = v.norm();
            if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(LibraryError::EmbeddingNorm {
                    id: self.id.clone(),
                    dimension: d.as_str(),
                    norm,
                });
            }
        }
        Ok(dim)
    }
}

/// Ordered collection of meme records. Immutable once built; readers can
/// share it freely across threads.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MemeLibrary {
    pub records: Vec<MemeRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub source_manifest: String,
}

impl MemeLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: Vec<MemeRecord>) -> Result<Self, LibraryError> {
        let mut lib = MemeLibrary::new();
        for record in records {
            lib.push(record)?;
        }
        Ok(lib)
    }

    /// Appends a record, rejecting duplicate ids and embedding shapes that
    /// disagree with the library's established dimensionality.
    pub fn push(&mut self, record: MemeRecord) -> Result<(), LibraryError> {
        if self.records.iter().any(|r| r.id == record.id) {
            return Err(LibraryError::DuplicateId(record.id));
        }
        self.embedding_dim = record.check_embeddings(self.embedding_dim)?;
        self.records.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&MemeRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// True when every record carries embeddings.
    pub fn is_embedded(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.embeddings.is_some())
    }

    /// Re-checks every invariant; used after deserializing from disk.
    pub fn validate(&self) -> Result<(), LibraryError> {
        let mut seen = BTreeSet::new();
        let mut dim = self.embedding_dim;
        for record in &self.records {
            if !seen.insert(record.id.as_str()) {
                return Err(LibraryError::DuplicateId(record.id.clone()));
            }
            dim = record.check_embeddings(dim)?;
        }
        Ok(())
    }
}

/// Asks the vision backend for the four annotation dimensions of one image
/// and splits the structured reply.
pub fn annotate_meme(
    image: &[u8],
    vision: &dyn VisionBackend,
) -> Result<(String, String, String, String), LibraryError> {
    let raw = vision.describe(image, templates::ANNOTATION)?;
    parse_annotation(&raw)
}

/// Splits an annotation reply into its four sections.
pub fn parse_annotation(raw: &str) -> Result<(String, String, String, String), LibraryError> {
    let fields = split_sections(raw, templates::FIELD_SEPARATOR);
    if fields.len() != 4 || fields.iter().any(|f| f.is_empty()) {
        return Err(LibraryError::AnnotationFormat {
            got: fields.iter().filter(|f| !f.is_empty()).count(),
            raw: raw.to_string(),
        });
    }
    let mut it = fields.into_iter();
    Ok((
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
    ))
}

/// Splits `raw` on lines equal to `separator`, trimming each section.
pub(crate) fn split_sections(raw: &str, separator: &str) -> Vec<String> {
    let mut sections = Vec::new();
    let mut current = String::new();
    for line in raw.lines() {
        if line.trim() == separator {
            sections.push(core::mem::take(&mut current));
        } else {
            if !current.is_empty() {
                current.push('\n');
            }
            current.push_str(line);
        }
    }
    sections.push(current);
    sections
        .into_iter()
        .map(|s| s.trim().to_string())
        .collect()
}

/// Keyword frequency table for one annotation dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordTable {
    pub dimension: Dimension,
    /// (token, count), count descending, ties by token ascending.
    pub entries: Vec<(String, u64)>,
}

impl KeywordTable {
    pub fn total(&self) -> u64 {
        self.entries.iter().map(|(_, c)| c).sum()
    }
}

fn is_cjk(c: char) -> bool {
    matches!(c,
        '\u{4e00}'..='\u{9fff}'      // unified ideographs
        | '\u{3400}'..='\u{4dbf}'    // extension A
        | '\u{f900}'..='\u{faff}'    // compatibility ideographs
    )
}

/// Tokenizes annotation text: non-CJK alphanumeric runs become lowercased
/// word tokens; CJK runs of length <= 2 are emitted whole, longer runs as
/// overlapping character bigrams. Everything else separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    let mut cjk_run: Vec<char> = Vec::new();

    let flush_word = |word: &mut String, tokens: &mut Vec<String>| {
        if !word.is_empty() {
            tokens.push(word.to_lowercase());
            word.clear();
        }
    };
    fn flush_cjk(run: &mut Vec<char>, tokens: &mut Vec<String>) {
        match run.len() {
            0 => {}
            1 | 2 => tokens.push(run.iter().collect()),
            _ => {
                for pair in run.windows(2) {
                    tokens.push(pair.iter().collect());
                }
            }
        }
        run.clear();
    }

    for c in text.chars() {
        if is_cjk(c) {
            flush_word(&mut word, &mut tokens);
            cjk_run.push(c);
        } else if c.is_alphanumeric() {
            flush_cjk(&mut cjk_run, &mut tokens);
            word.push(c);
        } else {
            flush_word(&mut word, &mut tokens);
            flush_cjk(&mut cjk_run, &mut tokens);
        }
    }
    flush_word(&mut word, &mut tokens);
    flush_cjk(&mut cjk_run, &mut tokens);
    tokens
}

/// The stop-token list baked into the crate. Callers may substitute their
/// own list.
pub fn default_stopwords() -> BTreeSet<String> {
    parse_stopwords(include_str!("../data/stopwords.txt"))
}

/// Parses a stopword list: one token per line, `#` comments skipped.
pub fn parse_stopwords(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(ToString::to_string)
        .collect()
}

/// Aggregated token counts over one annotation dimension of the whole
/// library, stop tokens removed.
pub fn keyword_stats(
    lib: &MemeLibrary,
    dimension: Dimension,
    stopwords: &BTreeSet<String>,
) -> Result<KeywordTable, LibraryError> {
    if lib.is_empty() {
        return Err(LibraryError::EmptyLibrary);
    }
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for record in &lib.records {
        for token in tokenize(record.annotation(dimension)) {
            if !stopwords.contains(&token) {
                *counts.entry(token).or_insert(0) += 1;
            }
        }
    }
    let mut entries: Vec<(String, u64)> = counts.into_iter().collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(KeywordTable { dimension, entries })
}
