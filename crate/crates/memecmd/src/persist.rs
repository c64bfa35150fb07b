//! File formats and round-trip persistence.
//!
//! The library format is line-delimited JSON, UTF-8, one record per line,
//! with an optional leading `{"meta":...}` line carrying library-level
//! fields. Writing is canonical: fixed key order and 9-significant-digit
//! float rendering, so saving the same value twice produces identical
//! bytes. Embedding components are quantized to that same precision when
//! they are produced, which makes save/load the identity.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use memecmd_core::dialogue::{NewsItem, RolePair};
use memecmd_core::library::{LibraryError, MemeLibrary, MemeRecord};
use memecmd_core::vector::{format_sig9, Vector};

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: duplicate meme id {id:?}")]
    DuplicateId {
        path: PathBuf,
        line: usize,
        id: String,
    },
    #[error("{path}: {source}")]
    Library {
        path: PathBuf,
        #[source]
        source: LibraryError,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PersistError + '_ {
    move |source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Library-level fields carried on the first line of a library file.
#[derive(Debug, serde::Serialize, serde::Deserialize)]
struct MetaLine {
    meta: MetaFields,
}

#[derive(Debug, Default, serde::Serialize, serde::Deserialize)]
struct MetaFields {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    source_manifest: String,
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

fn vector_json(v: &Vector) -> String {
    let mut out = String::from("[");
    for (i, c) in v.as_slice().iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&format_sig9(*c));
    }
    out.push(']');
    out
}

fn record_line(r: &MemeRecord) -> String {
    let mut line = format!(
        "{{\"id\":{},\"image_path\":{},\"s_plus\":{},\"s_minus\":{},\"emotion\":{},\"motivation\":{}",
        json_str(&r.id),
        json_str(&r.image_path),
        json_str(&r.s_plus),
        json_str(&r.s_minus),
        json_str(&r.emotion),
        json_str(&r.motivation),
    );
    if let Some(emb) = &r.embeddings {
        line.push_str(&format!(
            ",\"embeddings\":{{\"s_plus\":{},\"s_minus\":{},\"emotion\":{},\"motivation\":{}}}",
            vector_json(&emb.s_plus),
            vector_json(&emb.s_minus),
            vector_json(&emb.emotion),
            vector_json(&emb.motivation),
        ));
    }
    line.push('}');
    line
}

/// Serializes a library to its canonical line format.
pub fn library_to_string(lib: &MemeLibrary) -> String {
    let meta = MetaLine {
        meta: MetaFields {
            embedding_dim: lib.embedding_dim,
            source_manifest: lib.source_manifest.clone(),
        },
    };
    let mut out = serde_json::to_string(&meta).expect("meta serializes");
    out.push('\n');
    for record in &lib.records {
        out.push_str(&record_line(record));
        out.push('\n');
    }
    out
}

pub fn save_library(lib: &MemeLibrary, path: &Path) -> Result<(), PersistError> {
    fs::write(path, library_to_string(lib)).map_err(io_err(path))
}

pub fn load_library(path: &Path) -> Result<MemeLibrary, PersistError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let reader = BufReader::new(file);
    let mut lib = MemeLibrary::new();
    let mut meta_seen = false;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| PersistError::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: e.to_string(),
            })?;
        if value.get("meta").is_some() {
            if meta_seen || !lib.is_empty() {
                return Err(PersistError::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: "meta line allowed only once, before any record".into(),
                });
            }
            let meta: MetaLine = serde_json::from_value(value).map_err(|e| PersistError::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: e.to_string(),
            })?;
            lib.embedding_dim = meta.meta.embedding_dim;
            lib.source_manifest = meta.meta.source_manifest;
            meta_seen = true;
            continue;
        }
        let record: MemeRecord =
            serde_json::from_value(value).map_err(|e| PersistError::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: e.to_string(),
            })?;
        lib.push(record).map_err(|e| match e {
            LibraryError::DuplicateId(id) => PersistError::DuplicateId {
                path: path.to_path_buf(),
                line: line_no,
                id,
            },
            other => PersistError::Library {
                path: path.to_path_buf(),
                source: other,
            },
        })?;
    }
    lib.validate().map_err(|e| PersistError::Library {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(lib)
}

/// JSONL loader for simple record files (news items, role pairs).
pub fn load_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PersistError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let reader = BufReader::new(file);
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(
            serde_json::from_str(&line).map_err(|e| PersistError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(items)
}

pub fn load_news(path: &Path) -> Result<Vec<NewsItem>, PersistError> {
    load_jsonl(path)
}

pub fn load_role_pairs(path: &Path) -> Result<Vec<RolePair>, PersistError> {
    load_jsonl(path)
}

/// Pretty-printed JSON writer used for sessions, manifests, and reports.
pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<(), PersistError> {
    let mut body = serde_json::to_string_pretty(value).map_err(|e| PersistError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    body.push('\n');
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    file.write_all(body.as_bytes()).map_err(io_err(path))
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, PersistError> {
    let body = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&body).map_err(|e| PersistError::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

/// SHA-256 of a file, lowercase hex.
pub fn sha256_file(path: &Path) -> Result<String, PersistError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
