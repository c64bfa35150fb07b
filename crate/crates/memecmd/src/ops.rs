//! Corpus-level operations: directory annotation and library embedding,
//! both with bounded backend concurrency and order-deterministic output.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use memecmd_core::backend::{embed_unit, BackendError, EmbeddingBackend, VisionBackend};
use memecmd_core::library::{
    annotate_meme, Dimension, LibraryError, MemeEmbeddings, MemeLibrary, MemeRecord,
};

use crate::jobs::parallel_map;

pub const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "gif", "webp"];

#[derive(Debug, thiserror::Error)]
pub enum OpsError {
    #[error("no supported image files ({exts}) in {dir}", exts = IMAGE_EXTENSIONS.join("/"))]
    NoImages { dir: PathBuf },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("embedding {dimension} of meme {id:?} failed: {source}")]
    Embed {
        id: String,
        dimension: &'static str,
        #[source]
        source: BackendError,
    },
    #[error(transparent)]
    Library(#[from] LibraryError),
}

/// One image that could not be annotated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotateFailure {
    pub file: String,
    pub error: String,
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>, OpsError> {
    let entries = std::fs::read_dir(dir).map_err(|source| OpsError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| OpsError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        let supported = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            .unwrap_or(false);
        if path.is_file() && supported {
            files.push(path);
        }
    }
    // Sorted file names define both record order and id assignment.
    files.sort();
    if files.is_empty() {
        return Err(OpsError::NoImages {
            dir: dir.to_path_buf(),
        });
    }
    Ok(files)
}

/// Derives record ids from file stems, suffixing `-2`, `-3`, ... on
/// collision (e.g. `a.png` and `a.jpg`).
fn assign_ids(files: &[PathBuf]) -> Vec<String> {
    let mut taken: BTreeSet<String> = BTreeSet::new();
    files
        .iter()
        .map(|path| {
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("meme")
                .to_string();
            let mut id = stem.clone();
            let mut n = 2;
            while !taken.insert(id.clone()) {
                id = format!("{stem}-{n}");
                n += 1;
            }
            id
        })
        .collect()
}

/// Annotates every supported image in `dir` through the vision backend,
/// running at most `concurrency` calls in flight. Per-image failures are
/// collected, not fatal; successful records keep sorted-file-name order.
pub fn annotate_library(
    dir: &Path,
    vision: &dyn VisionBackend,
    concurrency: usize,
) -> Result<(MemeLibrary, Vec<AnnotateFailure>), OpsError> {
    let files = list_images(dir)?;
    let ids = assign_ids(&files);
    let jobs: Vec<(String, PathBuf)> = ids.into_iter().zip(files).collect();

    let outcomes = parallel_map(&jobs, concurrency, |_, (id, path)| {
        let file_name = path
            .file_name()
            .and_then(|f| f.to_str())
            .unwrap_or_default()
            .to_string();
        let image = match std::fs::read(path) {
            Ok(bytes) => bytes,
            Err(e) => return Err(AnnotateFailure { file: file_name, error: e.to_string() }),
        };
        match annotate_meme(&image, vision) {
            Ok((s_plus, s_minus, emotion, motivation)) => Ok(MemeRecord {
                id: id.clone(),
                image_path: file_name,
                s_plus,
                s_minus,
                emotion,
                motivation,
                embeddings: None,
            }),
            Err(e) => Err(AnnotateFailure {
                file: file_name,
                error: e.to_string(),
            }),
        }
    });

    let mut lib = MemeLibrary::new();
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(record) => lib.push(record)?,
            Err(failure) => failures.push(failure),
        }
    }
    Ok((lib, failures))
}

/// Embeds all four annotation dimensions of every record, overwriting any
/// existing embeddings. The whole operation fails on the first record
/// whose backend calls cannot be completed.
pub fn embed_library(
    lib: &MemeLibrary,
    backend: &dyn EmbeddingBackend,
    concurrency: usize,
) -> Result<MemeLibrary, OpsError> {
    for record in &lib.records {
        if !record.is_annotated() {
            return Err(LibraryError::NotAnnotated {
                id: record.id.clone(),
            }
            .into());
        }
    }
    let embedded = parallel_map(&lib.records, concurrency, |_, record| -> Result<MemeRecord, OpsError> {
        let one = |dimension: Dimension| {
            embed_unit(backend, record.annotation(dimension)).map_err(|source| OpsError::Embed {
                id: record.id.clone(),
                dimension: dimension.as_str(),
                source,
            })
        };
        let mut out = record.clone();
        out.embeddings = Some(MemeEmbeddings {
            s_plus: one(Dimension::SPlus)?,
            s_minus: one(Dimension::SMinus)?,
            emotion: one(Dimension::Emotion)?,
            motivation: one(Dimension::Motivation)?,
        });
        Ok(out)
    });

    let mut out = MemeLibrary::new();
    out.source_manifest = lib.source_manifest.clone();
    for record in embedded {
        out.push(record?)?;
    }
    out.embedding_dim = Some(backend.dim());
    Ok(out)
}
