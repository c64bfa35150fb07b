//! Core machinery for generating meme-enhanced multi-turn chat datasets.
//!
//! This crate holds everything that does not need an operating system:
//! vector math, the four-component retrieval score with adaptive threshold
//! gating, the dual-agent dialogue state machine with phase-adaptive
//! prompts, the annotated meme library model, and deterministic mock
//! backends. File formats, HTTP backends, concurrency, and the CLI live in
//! the companion `memecmd` crate.
//!
//! The crate is `no_std`-compatible (`alloc` required). Builds without the
//! `std` feature must enable `libm` for float math.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("memecmd-core needs either the `std` or the `libm` feature");

extern crate alloc;

pub mod aligner;
pub mod backend;
pub mod dialogue;
pub mod eval;
pub mod library;
pub mod mock;
pub mod rng;
pub mod templates;
pub mod vector;

mod math;

pub use aligner::{
    adaptive_threshold, component_scores, gate, rank_top_k, score_distribution, select_meme,
    total_score, AlignerError, AlignerWeights, ComponentScores, Histogram, ImplicitSign,
    ScoredMeme, SelectionStrategy, ThresholdState,
};
pub use backend::{
    embed_unit, BackendError, ChatBackend, ChatMessage, EmbeddingBackend, Part, Role,
    VisionBackend,
};
pub use dialogue::{
    build_init_context, build_prompt, generate_scenarios, next_utterance, phase_for_turn,
    summarize, DialogueError, DialogueSession, InitContext, InitPayload, NewsItem, Phase,
    RolePair, RoleProfile, Scenario, Speaker, Topic, Turn, TurnSummary, Utterance,
};
pub use eval::{
    consistency_score, judge_dialogue, parse_judge_scores, random_baseline, ConsistencyScore,
    EvalError, JudgeScore,
};
pub use library::{
    annotate_meme, keyword_stats, Dimension, KeywordTable, LibraryError, MemeEmbeddings,
    MemeLibrary, MemeRecord,
};
pub use rng::DetRng;
pub use vector::{cosine_similarity, l2_normalize, quantize_sig9, Vector, VectorError};
