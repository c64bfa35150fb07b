//! Dataset-level evaluation: cross-modal consistency scoring and the
//! five-dimension judge, over a generated dataset directory.
//!
//! Reports are tab-separated tables plus a summary block of per-dataset,
//! per-strategy means, laid out so several datasets and strategies can be
//! compared side by side.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use memecmd_core::backend::{EmbeddingBackend, VisionBackend};
use memecmd_core::eval::{consistency_score, judge_dialogue, EvalError};
use memecmd_core::library::MemeLibrary;

use crate::persist::{load_json, PersistError};
use crate::pipeline::{DatasetManifest, Mode, SessionFile, Strategy, MANIFEST_FILE, SESSIONS_SUBDIR};

#[derive(Debug, thiserror::Error)]
pub enum EvalRunError {
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no scoreable memes in dataset {0}")]
    NoScoreableMemes(PathBuf),
    #[error("meme {id:?} not present in the library")]
    UnknownMeme { id: String },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Identity of one evaluated dataset, read from its manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetLabel {
    pub name: String,
    pub strategy: Strategy,
}

fn dataset_label(manifest: &DatasetManifest) -> DatasetLabel {
    let mode = match manifest.config.pipeline.mode {
        Mode::News => "news",
        Mode::Role => "role",
    };
    DatasetLabel {
        name: format!("{mode}-{}", manifest.config.pipeline.turns),
        strategy: manifest.config.pipeline.aligner.strategy,
    }
}

pub fn strategy_name(strategy: Strategy) -> &'static str {
    match strategy {
        Strategy::Greedy => "greedy",
        Strategy::Sampling => "sampling",
        Strategy::Random => "random",
    }
}

/// Loads all completed sessions of a dataset, in file order.
pub fn load_sessions(dataset_dir: &Path) -> Result<Vec<SessionFile>, EvalRunError> {
    let dir = dataset_dir.join(SESSIONS_SUBDIR);
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|source| EvalRunError::Io {
            path: dir.clone(),
            source,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "json").unwrap_or(false))
        .collect();
    paths.sort();
    let mut sessions = Vec::with_capacity(paths.len());
    for path in paths {
        sessions.push(load_json(&path)?);
    }
    Ok(sessions)
}

pub fn load_manifest(dataset_dir: &Path) -> Result<DatasetManifest, EvalRunError> {
    Ok(load_json(&dataset_dir.join(MANIFEST_FILE))?)
}

fn read_meme_image(
    lib: &MemeLibrary,
    image_root: &Path,
    meme_id: &str,
) -> Result<Vec<u8>, String> {
    let record = lib
        .get(meme_id)
        .ok_or_else(|| format!("meme {meme_id:?} not in library"))?;
    let path = image_root.join(&record.image_path);
    std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))
}

/// One scored meme placement in the consistency report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub session_id: String,
    pub turn: u32,
    pub meme_id: String,
    pub cosine: f64,
    pub scaled: f64,
}

/// A meme that was skipped, with the reason recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedMeme {
    pub session_id: String,
    pub turn: u32,
    pub meme_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub dataset: DatasetLabel,
    pub rows: Vec<ConsistencyRow>,
    pub skipped: Vec<SkippedMeme>,
    pub mean: f64,
    pub count: usize,
}

/// Scores every meme that has a subsequent reply: the meme image
/// embedding against the next turn's text embedding. Memes on the final
/// turn are skipped with a recorded reason, as are memes whose image
/// cannot be read.
pub fn evaluate_dataset_consistency(
    dataset_dir: &Path,
    lib: &MemeLibrary,
    image_root: &Path,
    backend: &dyn EmbeddingBackend,
) -> Result<ConsistencyReport, EvalRunError> {
    let manifest = load_manifest(dataset_dir)?;
    let sessions = load_sessions(dataset_dir)?;
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for file in &sessions {
        let session = &file.session;
        for (i, turn) in session.turns.iter().enumerate() {
            let Some(meme_id) = &turn.meme_id else {
                continue;
            };
            let Some(reply) = session.turns.get(i + 1) else {
                skipped.push(SkippedMeme {
                    session_id: session.session_id.clone(),
                    turn: turn.index,
                    meme_id: meme_id.clone(),
                    reason: "no subsequent reply (final turn)".into(),
                });
                continue;
            };
            let image = match read_meme_image(lib, image_root, meme_id) {
                Ok(bytes) => bytes,
                Err(reason) => {
                    skipped.push(SkippedMeme {
                        session_id: session.session_id.clone(),
                        turn: turn.index,
                        meme_id: meme_id.clone(),
                        reason,
                    });
                    continue;
                }
            };
            let score = consistency_score(&image, &reply.text, backend)?;
            rows.push(ConsistencyRow {
                session_id: session.session_id.clone(),
                turn: turn.index,
                meme_id: meme_id.clone(),
                cosine: score.cosine,
                scaled: score.scaled,
            });
        }
    }
    if rows.is_empty() {
        return Err(EvalRunError::NoScoreableMemes(dataset_dir.to_path_buf()));
    }
    let mean = rows.iter().map(|r| r.scaled).sum::<f64>() / rows.len() as f64;
    Ok(ConsistencyReport {
        dataset: dataset_label(&manifest),
        count: rows.len(),
        mean,
        rows,
        skipped,
    })
}

/// One judged meme placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeRow {
    pub session_id: String,
    pub turn: u32,
    pub meme_id: String,
    pub semantic: f64,
    pub emotional: f64,
    pub contextual: f64,
    pub humor: f64,
    pub coherence: f64,
    pub mean: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeReport {
    pub dataset: DatasetLabel,
    pub rows: Vec<JudgeRow>,
    pub mean: f64,
    pub count: usize,
}

/// Runs the five-dimension judge over every meme in the dataset.
/// Sessions without memes contribute nothing.
pub fn evaluate_dataset_judge(
    dataset_dir: &Path,
    lib: &MemeLibrary,
    image_root: &Path,
    judge: &dyn VisionBackend,
) -> Result<JudgeReport, EvalRunError> {
    let manifest = load_manifest(dataset_dir)?;
    let sessions = load_sessions(dataset_dir)?;
    let mut rows = Vec::new();
    for file in &sessions {
        let session = &file.session;
        if session.meme_count() == 0 {
            continue;
        }
        let judged = judge_dialogue(
            session,
            |id| read_meme_image(lib, image_root, id),
            judge,
        )?;
        for j in judged {
            rows.push(JudgeRow {
                session_id: session.session_id.clone(),
                turn: j.turn,
                meme_id: j.meme_id,
                semantic: j.score.semantic,
                emotional: j.score.emotional,
                contextual: j.score.contextual,
                humor: j.score.humor,
                coherence: j.score.coherence,
                mean: j.score.mean,
                clamped: j.score.clamped,
            });
        }
    }
    if rows.is_empty() {
        return Err(EvalRunError::NoScoreableMemes(dataset_dir.to_path_buf()));
    }
    let mean = rows.iter().map(|r| r.mean).sum::<f64>() / rows.len() as f64;
    Ok(JudgeReport {
        dataset: dataset_label(&manifest),
        count: rows.len(),
        mean,
        rows,
    })
}

fn fmt_score(x: f64) -> String {
    format!("{x:.4}")
}

/// Renders a consistency report as a tab-separated table.
pub fn consistency_tsv(report: &ConsistencyReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# dataset={} strategy={} method=consistency",
        report.dataset.name,
        strategy_name(report.dataset.strategy)
    );
    out.push_str("session\tturn\tmeme_id\tstrategy\tcosine\tscaled\n");
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.session_id,
            r.turn,
            r.meme_id,
            strategy_name(report.dataset.strategy),
            fmt_score(r.cosine),
            fmt_score(r.scaled)
        );
    }
    for s in &report.skipped {
        let _ = writeln!(
            out,
            "# skipped\t{}\t{}\t{}\t{}",
            s.session_id, s.turn, s.meme_id, s.reason
        );
    }
    let _ = writeln!(out, "# mean={} count={}", fmt_score(report.mean), report.count);
    out
}

/// Renders a judge report as a tab-separated table.
pub fn judge_tsv(report: &JudgeReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# dataset={} strategy={} method=judge",
        report.dataset.name,
        strategy_name(report.dataset.strategy)
    );
    out.push_str(
        "session\tturn\tmeme_id\tstrategy\tsemantic\temotional\tcontextual\thumor\tcoherence\tmean\tclamped\n",
    );
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.session_id,
            r.turn,
            r.meme_id,
            strategy_name(report.dataset.strategy),
            fmt_score(r.semantic),
            fmt_score(r.emotional),
            fmt_score(r.contextual),
            fmt_score(r.humor),
            fmt_score(r.coherence),
            fmt_score(r.mean),
            r.clamped
        );
    }
    let _ = writeln!(out, "# mean={} count={}", fmt_score(report.mean), report.count);
    out
}

/// Cross-dataset summary block: one row per dataset, one column per
/// strategy seen, cells holding the mean score.
pub fn summary_block(entries: &[(DatasetLabel, f64)]) -> String {
    let mut strategies: Vec<Strategy> = Vec::new();
    for (label, _) in entries {
        if !strategies.contains(&label.strategy) {
            strategies.push(label.strategy);
        }
    }
    let mut by_dataset: BTreeMap<&str, BTreeMap<&'static str, f64>> = BTreeMap::new();
    for (label, mean) in entries {
        by_dataset
            .entry(label.name.as_str())
            .or_default()
            .insert(strategy_name(label.strategy), *mean);
    }
    let mut out = String::from("# summary: mean score by dataset x strategy\ndataset");
    for s in &strategies {
        let _ = write!(out, "\t{}", strategy_name(*s));
    }
    out.push('\n');
    for (name, cells) in by_dataset {
        out.push_str(name);
        for s in &strategies {
            match cells.get(strategy_name(*s)) {
                Some(mean) => {
                    let _ = write!(out, "\t{}", fmt_score(*mean));
                }
                None => out.push_str("\t-"),
            }
        }
        out.push('\n');
    }
    out
}
