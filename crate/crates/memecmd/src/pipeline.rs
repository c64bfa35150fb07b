//! End-to-end dataset generation: cold start, per-turn generation,
//! summary, retrieval, gating, meme insertion, and persisted sessions.
//!
//! Sessions run in parallel under a worker bound; inside one session the
//! turn loop is strictly sequential. Every gating decision is logged with
//! its full score tuple so a run can be audited and replayed from the
//! persisted files alone.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use memecmd_core::aligner::{
    adaptive_threshold, gate, rank_top_k, select_meme, AlignerError, AlignerWeights, ImplicitSign,
    ScoredMeme, SelectionStrategy, ThresholdState,
};
use memecmd_core::backend::{embed_unit, ChatBackend, EmbeddingBackend};
use memecmd_core::dialogue::{
    build_init_context, generate_scenarios, next_utterance, summarize, DialogueError,
    DialogueSession, InitContext, InitPayload, NewsItem, RolePair, Speaker, Turn, TurnSummary,
};
use memecmd_core::eval::random_baseline;
use memecmd_core::library::MemeLibrary;
use memecmd_core::rng::{split_seed, DetRng};

use crate::jobs::parallel_map;
use crate::persist::{save_json, sha256_file, PersistError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("library is not embedded; run `embed` first")]
    LibraryNotEmbedded,
    #[error("no {0} available for cold starts")]
    NoSources(&'static str),
    #[error("scenario generation failed: {0}")]
    Scenario(#[from] DialogueError),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Cold-start flavor of a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    News,
    Role,
}

/// How memes are chosen: the two retrieval strategies, or the random
/// control baseline that skips retrieval entirely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Greedy,
    Sampling,
    Random,
}

impl Strategy {
    fn selection(&self) -> Option<SelectionStrategy> {
        match self {
            Strategy::Greedy => Some(SelectionStrategy::Greedy),
            Strategy::Sampling => Some(SelectionStrategy::Sampling),
            Strategy::Random => None,
        }
    }
}

/// Retrieval-side parameters of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignerParams {
    pub weights: AlignerWeights,
    pub theta0: f64,
    pub delta: f64,
    pub lambda: f64,
    pub top_k: usize,
    pub implicit_sign: ImplicitSign,
    pub strategy: Strategy,
}

impl Default for AlignerParams {
    fn default() -> Self {
        AlignerParams {
            weights: AlignerWeights::default(),
            theta0: 0.7,
            delta: 0.2,
            lambda: 1.0,
            top_k: 3,
            implicit_sign: ImplicitSign::default(),
            strategy: Strategy::default(),
        }
    }
}

/// Everything a batch needs besides backends and inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub turns: u32,
    pub sessions: u32,
    pub seed: u64,
    pub reply_limit: usize,
    pub scenarios_per_pair: usize,
    pub aligner: AlignerParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: Mode::News,
            turns: 18,
            sessions: 5,
            seed: 0,
            reply_limit: 60,
            scenarios_per_pair: 2,
            aligner: AlignerParams::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: &str| Err(PipelineError::InvalidConfig(msg.into()));
        if self.turns < 1 {
            return bad("turns must be >= 1");
        }
        if self.sessions < 1 {
            return bad("sessions must be >= 1");
        }
        if self.reply_limit < 1 {
            return bad("reply limit must be >= 1");
        }
        if self.scenarios_per_pair < 1 {
            return bad("scenarios per pair must be >= 1");
        }
        if !self.aligner.weights.is_finite() {
            return bad("weights must be finite");
        }
        if !self.aligner.theta0.is_finite() {
            return bad("theta0 must be finite");
        }
        if !(self.aligner.delta >= 0.0) {
            return bad("delta must be >= 0");
        }
        if !(self.aligner.lambda > 0.0) {
            return bad("lambda must be > 0");
        }
        if self.aligner.top_k < 1 {
            return bad("top-k must be >= 1");
        }
        Ok(())
    }
}

/// Backend handles shared by a batch.
#[derive(Clone, Copy)]
pub struct Backends<'a> {
    pub chat: &'a dyn ChatBackend,
    pub embedding: &'a dyn EmbeddingBackend,
}

/// Per-turn retrieval log entry: summary, threshold state, candidate
/// scores, and the gate decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRetrieval {
    pub turn: u32,
    pub summary: TurnSummary,
    /// Turns since the last meme; absent when none was sent yet.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap: Option<u32>,
    pub threshold: f64,
    pub top: Vec<ScoredMeme>,
    pub fired: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected: Option<String>,
}

/// What gets persisted per session: the dialogue plus the retrieval log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionFile {
    pub session: DialogueSession,
    pub retrieval: Vec<TurnRetrieval>,
}

/// A session that aborted mid-run; the partial transcript is persisted
/// under a `.failed` suffix.
#[derive(Debug, Clone)]
pub struct SessionFailure {
    pub error: String,
    pub partial: SessionFile,
}

/// Runs one session: exactly `turns` utterances; from turn 2 on, the
/// summary agent runs, the library is ranked, and the adaptive threshold
/// gates meme insertion. Turn 1 never carries a meme.
pub fn run_session(
    session_id: &str,
    ctx: &InitContext,
    lib: &MemeLibrary,
    cfg: &PipelineConfig,
    seed: u64,
    backends: Backends<'_>,
) -> Result<SessionFile, SessionFailure> {
    let mut rng = DetRng::from_seed(seed);
    let mut state = ThresholdState::new(cfg.aligner.theta0, cfg.aligner.delta, cfg.aligner.lambda);
    let mut turns: Vec<Turn> = Vec::with_capacity(cfg.turns as usize);
    let mut retrieval: Vec<TurnRetrieval> = Vec::new();
    let selection = cfg.aligner.strategy.selection();

    let result = (|| -> Result<(), String> {
        for t in 1..=cfg.turns {
            let mut meme_for_turn = None;
            if t >= 2 {
                if let Some(selection) = selection {
                    let speaker = Speaker::for_turn(t);
                    let mut summary =
                        summarize(&turns, speaker, backends.chat).map_err(|e| e.to_string())?;
                    summary.scenario_vec = Some(
                        embed_unit(backends.embedding, &summary.scenario)
                            .map_err(|e| e.to_string())?,
                    );
                    summary.emotion_vec = Some(
                        embed_unit(backends.embedding, &summary.emotion)
                            .map_err(|e| e.to_string())?,
                    );
                    summary.motivation_vec = Some(
                        embed_unit(backends.embedding, &summary.motivation)
                            .map_err(|e| e.to_string())?,
                    );

                    let top = rank_top_k(
                        &summary,
                        lib,
                        &cfg.aligner.weights,
                        cfg.aligner.implicit_sign,
                        cfg.aligner.top_k,
                    )
                    .map_err(|e: AlignerError| e.to_string())?;
                    let gap = state.gap(t);
                    let threshold = adaptive_threshold(&state, t);
                    // The gate always looks at the top candidate's total;
                    // sampling only spreads the choice once it passes.
                    let fired = gate(top[0].total, threshold);
                    if fired {
                        let chosen = select_meme(&top, selection, &mut rng)
                            .map_err(|e| e.to_string())?;
                        meme_for_turn = Some(chosen.meme_id.clone());
                        state.record_meme(t);
                    }
                    retrieval.push(TurnRetrieval {
                        turn: t,
                        summary,
                        gap,
                        threshold,
                        top,
                        fired,
                        selected: meme_for_turn.clone(),
                    });
                }
            }
            let utterance = next_utterance(ctx, &turns, t, backends.chat, cfg.reply_limit)
                .map_err(|e| e.to_string())?;
            turns.push(Turn {
                index: t,
                speaker: Speaker::for_turn(t),
                text: utterance.text,
                meme_id: meme_for_turn,
                truncated: utterance.truncated,
            });
        }
        Ok(())
    })();

    let session = DialogueSession {
        session_id: session_id.to_string(),
        context: ctx.clone(),
        seed,
        turns,
    };
    let mut file = SessionFile { session, retrieval };

    match result {
        Ok(()) => {
            if cfg.aligner.strategy == Strategy::Random {
                file.session = random_baseline(&file.session, lib, &mut rng)
                    .map_err(|e| SessionFailure {
                        error: e.to_string(),
                        partial: file.clone(),
                    })?;
            }
            Ok(file)
        }
        Err(error) => Err(SessionFailure {
            error,
            partial: file,
        }),
    }
}

/// Cold-start inputs for a batch.
#[derive(Debug, Clone)]
pub enum Sources {
    News(Vec<NewsItem>),
    Roles(Vec<RolePair>),
}

/// Builds the per-session initialization contexts: news items are cycled;
/// role pairs are expanded into (pair, scenario) combinations first.
fn build_contexts(
    cfg: &PipelineConfig,
    sources: &Sources,
    chat: &dyn ChatBackend,
) -> Result<Vec<InitContext>, PipelineError> {
    let pool: Vec<InitContext> = match sources {
        Sources::News(items) => {
            if items.is_empty() {
                return Err(PipelineError::NoSources("news items"));
            }
            items
                .iter()
                .map(|n| build_init_context(InitPayload::News(n.clone())))
                .collect()
        }
        Sources::Roles(pairs) => {
            if pairs.is_empty() {
                return Err(PipelineError::NoSources("role pairs"));
            }
            let mut pool = Vec::new();
            for pair in pairs {
                let scenarios = generate_scenarios(pair, cfg.scenarios_per_pair, chat)?;
                for scenario in scenarios {
                    pool.push(build_init_context(InitPayload::Role(
                        pair.clone(),
                        scenario,
                    )));
                }
            }
            pool
        }
    };
    Ok((0..cfg.sessions as usize)
        .map(|i| pool[i % pool.len()].clone())
        .collect())
}

/// Config snapshot embedded in the manifest. Deliberately excludes
/// anything that does not shape the dataset bytes (worker count, output
/// directory).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestConfig {
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
    pub embedding_dim: usize,
    pub backend: String,
    pub library_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEntry {
    pub id: String,
    pub seed: u64,
    pub ok: bool,
    pub turns: u32,
    pub memes: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ManifestCounts {
    pub sessions_ok: u32,
    pub sessions_failed: u32,
    pub turns: u64,
    pub memes: u64,
}

/// Batch-level record written last, after all sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config: ManifestConfig,
    pub library_checksum: String,
    pub counts: ManifestCounts,
    pub sessions: Vec<SessionEntry>,
}

/// Output layout inside the dataset directory.
pub const SESSIONS_SUBDIR: &str = "sessions";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn session_file_name(id: &str) -> String {
    format!("{id}.json")
}

/// Runs `cfg.sessions` sessions with bounded concurrency, persists each
/// one (`.failed` suffix for aborted sessions), and writes the manifest
/// last. Individual session failures do not abort the batch.
pub fn run_batch(
    cfg: &PipelineConfig,
    lib: &MemeLibrary,
    library_path: &Path,
    sources: &Sources,
    out_dir: &Path,
    backends: Backends<'_>,
    backend_label: &str,
    workers: usize,
) -> Result<DatasetManifest, PipelineError> {
    cfg.validate()?;
    if !lib.is_embedded() {
        return Err(PipelineError::LibraryNotEmbedded);
    }
    let contexts = build_contexts(cfg, sources, backends.chat)?;

    let sessions_dir = out_dir.join(SESSIONS_SUBDIR);
    std::fs::create_dir_all(&sessions_dir).map_err(|source| PipelineError::Io {
        path: sessions_dir.clone(),
        source,
    })?;

    let jobs: Vec<(usize, InitContext)> = contexts.into_iter().enumerate().collect();
    let entries: Vec<Result<SessionEntry, PipelineError>> =
        parallel_map(&jobs, workers, |_, (index, ctx)| {
            let id = format!("session-{index:05}");
            let seed = split_seed(cfg.seed, *index as u64);
            let path = sessions_dir.join(session_file_name(&id));
            match run_session(&id, ctx, lib, cfg, seed, backends) {
                Ok(file) => {
                    save_json(&file, &path)?;
                    log::info!("{id}: {} turns, {} memes", cfg.turns, file.session.meme_count());
                    Ok(SessionEntry {
                        id,
                        seed,
                        ok: true,
                        turns: file.session.turns.len() as u32,
                        memes: file.session.meme_count() as u32,
                        error: None,
                    })
                }
                Err(failure) => {
                    let failed_path = sessions_dir.join(format!("{}.failed", session_file_name(&id)));
                    save_json(&failure.partial, &failed_path)?;
                    log::warn!("{id} failed: {}", failure.error);
                    Ok(SessionEntry {
                        id,
                        seed,
                        ok: false,
                        turns: failure.partial.session.turns.len() as u32,
                        memes: failure.partial.session.meme_count() as u32,
                        error: Some(failure.error),
                    })
                }
            }
        });

    let mut sessions = Vec::with_capacity(entries.len());
    for entry in entries {
        sessions.push(entry?);
    }

    let mut counts = ManifestCounts::default();
    for e in &sessions {
        if e.ok {
            counts.sessions_ok += 1;
            counts.turns += u64::from(e.turns);
            counts.memes += u64::from(e.memes);
        } else {
            counts.sessions_failed += 1;
        }
    }

    let manifest = DatasetManifest {
        config: ManifestConfig {
            pipeline: cfg.clone(),
            embedding_dim: backends.embedding.dim(),
            backend: backend_label.to_string(),
            library_path: library_path.display().to_string(),
        },
        library_checksum: sha256_file(library_path)?,
        counts,
        sessions,
    };
    save_json(&manifest, &out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
