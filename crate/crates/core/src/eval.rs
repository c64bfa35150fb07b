//! Evaluation primitives: cross-modal consistency scoring, the
//! five-dimension judge, and the random-insertion control baseline.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::aligner::AlignerError;
use crate::backend::{BackendError, EmbeddingBackend, VisionBackend};
use crate::dialogue::DialogueSession;
use crate::library::MemeLibrary;
use crate::rng::DetRng;
use crate::templates;
use crate::vector::cosine_similarity;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("judge reply did not contain exactly five numbers, got {got}; raw response: {raw:?}")]
    JudgeFormat { got: usize, raw: String },
    #[error("session has no memes to judge")]
    NoMemes,
    #[error("could not load image for meme {id:?}: {reason}")]
    ImageUnavailable { id: String, reason: String },
    #[error("library is empty")]
    EmptyLibrary,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Aligner(#[from] AlignerError),
}

/// Cross-modal consistency between a meme image and the reply that
/// follows it: a cosine, affinely rescaled to [0, 100].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyScore {
    pub cosine: f64,
    pub scaled: f64,
}

impl ConsistencyScore {
    pub fn from_cosine(cosine: f64) -> Self {
        ConsistencyScore {
            cosine,
            scaled: (cosine + 1.0) / 2.0 * 100.0,
        }
    }
}

/// Embeds the meme image and the subsequent reply text and scores their
/// agreement.
pub fn consistency_score(
    meme_image: &[u8],
    reply_text: &str,
    backend: &dyn EmbeddingBackend,
) -> Result<ConsistencyScore, EvalError> {
    let image_vec = backend.embed_image(meme_image)?;
    let text_vec = backend.embed(reply_text)?;
    let cosine = cosine_similarity(&image_vec, &text_vec).map_err(AlignerError::from)?;
    Ok(ConsistencyScore::from_cosine(cosine))
}

/// One meme's judge ratings on the five 0-100 dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JudgeScore {
    pub semantic: f64,
    pub emotional: f64,
    pub contextual: f64,
    pub humor: f64,
    pub coherence: f64,
    pub mean: f64,
    /// True when any raw value fell outside [0, 100] and was clamped.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub clamped: bool,
}

/// Parses a judge reply: exactly five numbers anywhere in the text,
/// clamped into [0, 100] with the clamp flagged.
pub fn parse_judge_scores(raw: &str) -> Result<JudgeScore, EvalError> {
    let numbers: Vec<f64> = raw
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .filter_map(|t| t.parse::<f64>().ok())
        .collect();
    if numbers.len() != 5 {
        return Err(EvalError::JudgeFormat {
            got: numbers.len(),
            raw: raw.to_string(),
        });
    }
    let mut clamped = false;
    let mut vals = [0.0; 5];
    for (slot, n) in vals.iter_mut().zip(&numbers) {
        let c = n.clamp(0.0, 100.0);
        if c != *n {
            clamped = true;
        }
        *slot = c;
    }
    let mean = (vals[0] + vals[1] + vals[2] + vals[3] + vals[4]) / 5.0;
    Ok(JudgeScore {
        semantic: vals[0],
        emotional: vals[1],
        contextual: vals[2],
        humor: vals[3],
        coherence: vals[4],
        mean,
        clamped,
    })
}

/// Renders a session as a text transcript for the judge. Text is inline;
/// meme turns carry a marker, with the meme under evaluation pointed out
/// (its image rides along as the attached image part).
pub fn render_transcript(session: &DialogueSession, focus_turn: u32) -> String {
    let mut out = String::new();
    for turn in &session.turns {
        out.push_str(turn.speaker.label());
        out.push_str(": ");
        out.push_str(&turn.text);
        if let Some(meme_id) = &turn.meme_id {
            if turn.index == focus_turn {
                out.push_str(" [sent the attached meme]");
            } else {
                out.push_str(&alloc::format!(" [sent meme {meme_id}]"));
            }
        }
        out.push('\n');
    }
    out
}

/// A judged meme placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgedMeme {
    pub turn: u32,
    pub meme_id: String,
    pub score: JudgeScore,
}

/// Scores every meme in the session independently: one vision call per
/// meme, with the transcript in the prompt and the meme as the image.
pub fn judge_dialogue(
    session: &DialogueSession,
    mut images: impl FnMut(&str) -> Result<Vec<u8>, String>,
    judge: &dyn VisionBackend,
) -> Result<Vec<JudgedMeme>, EvalError> {
    if session.meme_count() == 0 {
        return Err(EvalError::NoMemes);
    }
    let mut out = Vec::new();
    for turn in &session.turns {
        let Some(meme_id) = &turn.meme_id else {
            continue;
        };
        let image = images(meme_id).map_err(|reason| EvalError::ImageUnavailable {
            id: meme_id.clone(),
            reason,
        })?;
        let prompt = templates::fill(
            templates::JUDGE,
            &[
                ("turn", &turn.index.to_string()),
                ("transcript", render_transcript(session, turn.index).trim_end()),
            ],
        );
        let raw = judge.describe(&image, &prompt)?;
        out.push(JudgedMeme {
            turn: turn.index,
            meme_id: meme_id.clone(),
            score: parse_judge_scores(&raw)?,
        });
    }
    Ok(out)
}

/// Control baseline: for every turn from the second on, a fair coin
/// decides whether to attach a meme drawn uniformly from the library.
/// The input session must carry no memes.
pub fn random_baseline(
    session: &DialogueSession,
    lib: &MemeLibrary,
    rng: &mut DetRng,
) -> Result<DialogueSession, EvalError> {
    if lib.is_empty() {
        return Err(EvalError::EmptyLibrary);
    }
    debug_assert_eq!(session.meme_count(), 0, "baseline expects a meme-free session");
    let mut out = session.clone();
    for turn in out.turns.iter_mut().filter(|t| t.index >= 2) {
        if rng.coin() {
            let pick = rng.uniform_index(lib.len());
            turn.meme_id = Some(lib.records[pick].id.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue::{build_init_context, InitPayload, NewsItem, Speaker, Topic, Turn};
    use crate::library::{MemeLibrary, MemeRecord};
    use crate::mock::{HashEmbedding, ScriptedVision};
    use alloc::format;
    use alloc::vec;

    fn session(turn_count: u32, memes: &[(u32, &str)]) -> DialogueSession {
        let ctx = build_init_context(InitPayload::News(NewsItem {
            topic: Topic::Health,
            title: "T".to_string(),
            text: "B".to_string(),
        }));
        let turns = (1..=turn_count)
            .map(|i| Turn {
                index: i,
                speaker: Speaker::for_turn(i),
                text: format!("回复{i}"),
                meme_id: memes
                    .iter()
                    .find(|(t, _)| *t == i)
                    .map(|(_, id)| id.to_string()),
                truncated: false,
            })
            .collect();
        DialogueSession {
            session_id: "test".to_string(),
            context: ctx,
            seed: 0,
            turns,
        }
    }

    fn tiny_library(n: usize) -> MemeLibrary {
        MemeLibrary::from_records(
            (0..n)
                .map(|i| MemeRecord {
                    id: format!("m{i}"),
                    image_path: format!("m{i}.png"),
                    s_plus: "a".into(),
                    s_minus: "b".into(),
                    emotion: "c".into(),
                    motivation: "d".into(),
                    embeddings: None,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn consistency_endpoints() {
        assert_eq!(ConsistencyScore::from_cosine(1.0).scaled, 100.0);
        assert_eq!(ConsistencyScore::from_cosine(0.0).scaled, 50.0);
        assert_eq!(ConsistencyScore::from_cosine(-1.0).scaled, 0.0);
    }

    #[test]
    fn consistency_equal_embeddings_score_100() {
        // The mock embeds image bytes exactly like text bytes.
        let backend = HashEmbedding::new(64);
        let score = consistency_score("一样".as_bytes(), "一样", &backend).unwrap();
        assert_eq!(score.cosine, 1.0);
        assert_eq!(score.scaled, 100.0);
    }

    #[test]
    fn judge_parse_happy_path() {
        let s = parse_judge_scores("80 80 80 80 80").unwrap();
        assert_eq!(s.mean, 80.0);
        assert!(!s.clamped);
    }

    #[test]
    fn judge_parse_rejects_wrong_count() {
        match parse_judge_scores("80 80 80 80") {
            Err(EvalError::JudgeFormat { got, .. }) => assert_eq!(got, 4),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn judge_parse_clamps_and_flags() {
        let s = parse_judge_scores("105 50 50 50 -3").unwrap();
        assert_eq!(s.semantic, 100.0);
        assert_eq!(s.coherence, 0.0);
        assert!(s.clamped);
        assert_eq!(s.mean, (100.0 + 50.0 + 50.0 + 50.0 + 0.0) / 5.0);
    }

    #[test]
    fn judge_dialogue_scores_each_meme() {
        let session = session(5, &[(2, "m1"), (4, "m2")]);
        let judge = ScriptedVision::new(["90 80 70 60 50", "10 20 30 40 50"]);
        let scores =
            judge_dialogue(&session, |_| Ok(b"img".to_vec()), &judge).unwrap();
        assert_eq!(scores.len(), 2);
        assert_eq!(scores[0].turn, 2);
        assert_eq!(scores[0].score.mean, 70.0);
        assert_eq!(scores[1].meme_id, "m2");
        assert_eq!(scores[1].score.mean, 30.0);
    }

    #[test]
    fn judge_dialogue_requires_memes() {
        let session = session(3, &[]);
        let judge = ScriptedVision::new(["80 80 80 80 80"]);
        assert_eq!(
            judge_dialogue(&session, |_| Ok(vec![]), &judge),
            Err(EvalError::NoMemes)
        );
    }

    #[test]
    fn judge_dialogue_surfaces_image_failures() {
        let session = session(3, &[(2, "m1")]);
        let judge = ScriptedVision::new(["80 80 80 80 80"]);
        match judge_dialogue(&session, |_| Err("missing".to_string()), &judge) {
            Err(EvalError::ImageUnavailable { id, .. }) => assert_eq!(id, "m1"),
            other => panic!("expected image error, got {other:?}"),
        }
    }

    #[test]
    fn transcript_marks_the_focused_meme() {
        let session = session(4, &[(2, "m1"), (3, "m2")]);
        let text = render_transcript(&session, 3);
        assert!(text.contains("[sent meme m1]"));
        assert!(text.contains("[sent the attached meme]"));
        assert!(!text.contains("[sent meme m2]"));
    }

    #[test]
    fn baseline_is_deterministic_under_seed() {
        let base = session(12, &[]);
        let lib = tiny_library(5);
        let a = random_baseline(&base, &lib, &mut DetRng::from_seed(9)).unwrap();
        let b = random_baseline(&base, &lib, &mut DetRng::from_seed(9)).unwrap();
        assert_eq!(a, b);
        // Turn 1 never gets a meme.
        assert!(a.turns[0].meme_id.is_none());
    }

    #[test]
    fn baseline_rate_is_about_half() {
        let base = session(2001, &[]);
        let lib = tiny_library(10);
        let with = random_baseline(&base, &lib, &mut DetRng::from_seed(5)).unwrap();
        let eligible = with.turns.iter().filter(|t| t.index >= 2).count();
        let inserted = with.meme_count();
        let rate = inserted as f64 / eligible as f64;
        assert!((rate - 0.5).abs() < 0.05, "rate {rate}");
    }

    #[test]
    fn baseline_decisions_ignore_meme_content() {
        // Same seed, same library size, different record contents: the
        // set of insertion turns and chosen indices must be identical.
        let base = session(50, &[]);
        let lib_a = tiny_library(7);
        let mut lib_b = tiny_library(7);
        for (i, r) in lib_b.records.iter_mut().enumerate() {
            r.s_plus = format!("other-{i}");
            r.emotion = "completely different".into();
        }
        let a = random_baseline(&base, &lib_a, &mut DetRng::from_seed(3)).unwrap();
        let b = random_baseline(&base, &lib_b, &mut DetRng::from_seed(3)).unwrap();
        let turns_a: Vec<(u32, Option<String>)> = a
            .turns
            .iter()
            .map(|t| (t.index, t.meme_id.clone()))
            .collect();
        let turns_b: Vec<(u32, Option<String>)> = b
            .turns
            .iter()
            .map(|t| (t.index, t.meme_id.clone()))
            .collect();
        assert_eq!(turns_a, turns_b);
    }
}
