//! Dual-agent dialogue state machine: cold starts, phase-adaptive prompt
//! construction, alternating utterance generation, and the per-turn
//! summary agent.
//!
//! A session is strictly sequential; distinct sessions only share
//! immutable config and backend handles.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, ChatBackend, ChatMessage, Role};
use crate::templates;
use crate::vector::Vector;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DialogueError {
    #[error("history has {got} turns but turn {turn} needs {expected}")]
    HistoryLength { turn: u32, expected: u32, got: u32 },
    #[error("turn index must start at 1")]
    ZeroTurn,
    #[error("summaries start at turn 2; history is empty")]
    SummaryTooEarly,
    #[error("expected {expected} {what}, found {got}; raw response: {raw:?}")]
    CountMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
        raw: String,
    },
    #[error("backend reply was empty")]
    EmptyReply,
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// News topics the news-based cold start accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Topic {
    Sports,
    Entertainment,
    Technology,
    Games,
    Education,
    Health,
}

impl Topic {
    pub fn as_str(&self) -> &'static str {
        match self {
            Topic::Sports => "Sports",
            Topic::Entertainment => "Entertainment",
            Topic::Technology => "Technology",
            Topic::Games => "Games",
            Topic::Education => "Education",
            Topic::Health => "Health",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewsItem {
    pub topic: Topic,
    pub title: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleProfile {
    pub name: String,
    pub background: String,
    pub personality: String,
    pub current_state: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intimacy {
    Stranger,
    Acquaintance,
    Close,
    VeryClose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dominance {
    Equal,
    ADominant,
    BDominant,
    MutualDependence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeRelation {
    SameAge,
    AOlder,
    BOlder,
    Generational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimaryScenario {
    Work,
    Study,
    Life,
    Entertainment,
    Special,
}

impl Intimacy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Intimacy::Stranger => "stranger",
            Intimacy::Acquaintance => "acquaintance",
            Intimacy::Close => "close",
            Intimacy::VeryClose => "very close",
        }
    }
}

impl Dominance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Dominance::Equal => "equal",
            Dominance::ADominant => "A dominant",
            Dominance::BDominant => "B dominant",
            Dominance::MutualDependence => "mutual dependence",
        }
    }
}

impl AgeRelation {
    pub fn as_str(&self) -> &'static str {
        match self {
            AgeRelation::SameAge => "same age",
            AgeRelation::AOlder => "A older",
            AgeRelation::BOlder => "B older",
            AgeRelation::Generational => "generational",
        }
    }
}

impl PrimaryScenario {
    pub fn as_str(&self) -> &'static str {
        match self {
            PrimaryScenario::Work => "work",
            PrimaryScenario::Study => "study",
            PrimaryScenario::Life => "life",
            PrimaryScenario::Entertainment => "entertainment",
            PrimaryScenario::Special => "special",
        }
    }
}

/// A pair of characters plus the relationship coordinates that place them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolePair {
    pub role_a: RoleProfile,
    pub role_b: RoleProfile,
    pub intimacy: Intimacy,
    pub dominance: Dominance,
    pub age_relation: AgeRelation,
    pub primary_scenario: PrimaryScenario,
}

/// One concrete setting for a role pair to talk in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub relationship_background: String,
    pub event_context: String,
}

/// What a session was initialized from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum InitPayload {
    News(NewsItem),
    Role(RolePair, Scenario),
}

/// Initialization context: the payload plus the condensed line used by the
/// early and middle prompt phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitContext {
    #[serde(flatten)]
    pub payload: InitPayload,
    pub brief: String,
}

impl InitContext {
    pub fn kind(&self) -> &'static str {
        match self.payload {
            InitPayload::News(_) => "news",
            InitPayload::Role(..) => "role",
        }
    }

    /// Full template rendering of the payload, used only at turn 1.
    pub fn render_full(&self) -> String {
        match &self.payload {
            InitPayload::News(news) => templates::fill(
                templates::CONTEXT_NEWS,
                &[
                    ("topic", news.topic.as_str()),
                    ("title", &news.title),
                    ("text", &news.text),
                ],
            ),
            InitPayload::Role(pair, scenario) => templates::fill(
                templates::CONTEXT_ROLE,
                &[
                    ("a_name", &pair.role_a.name),
                    ("a_background", &pair.role_a.background),
                    ("a_personality", &pair.role_a.personality),
                    ("a_state", &pair.role_a.current_state),
                    ("b_name", &pair.role_b.name),
                    ("b_background", &pair.role_b.background),
                    ("b_personality", &pair.role_b.personality),
                    ("b_state", &pair.role_b.current_state),
                    ("intimacy", pair.intimacy.as_str()),
                    ("dominance", pair.dominance.as_str()),
                    ("age_relation", pair.age_relation.as_str()),
                    ("primary_scenario", pair.primary_scenario.as_str()),
                    ("relationship_background", &scenario.relationship_background),
                    ("event_context", &scenario.event_context),
                ],
            ),
        }
    }

    /// Every distinctive payload string; late-phase prompts must contain
    /// none of these.
    pub fn payload_strings(&self) -> Vec<String> {
        let mut out = vec![self.brief.clone(), self.render_full()];
        match &self.payload {
            InitPayload::News(news) => {
                out.push(news.title.clone());
                out.push(news.text.clone());
            }
            InitPayload::Role(pair, scenario) => {
                for role in [&pair.role_a, &pair.role_b] {
                    out.push(role.name.clone());
                    out.push(role.background.clone());
                    out.push(role.personality.clone());
                    out.push(role.current_state.clone());
                }
                out.push(scenario.relationship_background.clone());
                out.push(scenario.event_context.clone());
            }
        }
        out.retain(|s| !s.trim().is_empty());
        out
    }
}

/// Builds the initialization context. The brief is the news title, or a
/// one-line descriptor naming both characters.
pub fn build_init_context(payload: InitPayload) -> InitContext {
    let brief = match &payload {
        InitPayload::News(news) => news.title.clone(),
        InitPayload::Role(pair, _) => format!(
            "{} x {} ({}, {}, {}, {})",
            pair.role_a.name,
            pair.role_b.name,
            pair.intimacy.as_str(),
            pair.dominance.as_str(),
            pair.age_relation.as_str(),
            pair.primary_scenario.as_str(),
        ),
    };
    let ctx = InitContext { payload, brief };
    debug_assert!(ctx.brief.len() <= ctx.render_full().len());
    ctx
}

/// The two alternating speakers. A opens the session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Speaker {
    A,
    B,
}

impl Speaker {
    /// Odd turns belong to A, even turns to B.
    pub fn for_turn(t: u32) -> Speaker {
        if t % 2 == 1 {
            Speaker::A
        } else {
            Speaker::B
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Speaker::A => "Speaker A",
            Speaker::B => "Speaker B",
        }
    }
}

/// One utterance in a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub index: u32,
    pub speaker: Speaker,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meme_id: Option<String>,
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub truncated: bool,
}

/// A complete multi-turn dialogue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueSession {
    pub session_id: String,
    pub context: InitContext,
    pub seed: u64,
    pub turns: Vec<Turn>,
}

impl DialogueSession {
    /// Checks turn numbering and speaker alternation.
    pub fn validate(&self) -> Result<(), DialogueError> {
        for (i, turn) in self.turns.iter().enumerate() {
            let expected_index = i as u32 + 1;
            if turn.index != expected_index || turn.speaker != Speaker::for_turn(expected_index) {
                return Err(DialogueError::HistoryLength {
                    turn: turn.index,
                    expected: expected_index,
                    got: self.turns.len() as u32,
                });
            }
        }
        Ok(())
    }

    pub fn meme_count(&self) -> usize {
        self.turns.iter().filter(|t| t.meme_id.is_some()).count()
    }
}

/// The summary agent's triple for one upcoming turn, plus embeddings once
/// the texts have been embedded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnSummary {
    pub scenario: String,
    pub emotion: String,
    pub motivation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_vec: Option<Vector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotion_vec: Option<Vector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motivation_vec: Option<Vector>,
}

impl TurnSummary {
    pub fn from_texts(
        scenario: impl Into<String>,
        emotion: impl Into<String>,
        motivation: impl Into<String>,
    ) -> Self {
        TurnSummary {
            scenario: scenario.into(),
            emotion: emotion.into(),
            motivation: motivation.into(),
            scenario_vec: None,
            emotion_vec: None,
            motivation_vec: None,
        }
    }

    pub fn is_embedded(&self) -> bool {
        self.scenario_vec.is_some() && self.emotion_vec.is_some() && self.motivation_vec.is_some()
    }
}

/// Prompt-construction phases over the turn index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// t = 1: the full initialization context.
    Initial,
    /// 2 <= t < 7: condensed context plus history.
    Early,
    /// 7 <= t < 13: condensed context, history, and open-ended steering.
    Middle,
    /// t >= 13: history only; all initialization context removed.
    Late,
}

/// Total over all t >= 1, with breakpoints at t = 2, 7, 13.
pub fn phase_for_turn(t: u32) -> Phase {
    match t {
        0 => Phase::Initial, // unreachable by contract; callers validate t >= 1
        1 => Phase::Initial,
        2..=6 => Phase::Early,
        7..=12 => Phase::Middle,
        _ => Phase::Late,
    }
}

fn render_history(history: &[Turn]) -> String {
    let mut out = String::new();
    for turn in history {
        out.push_str(turn.speaker.label());
        out.push_str(": ");
        out.push_str(&turn.text);
        out.push('\n');
    }
    out
}

/// Builds the message list for turn `t`. The system message carries the
/// phase template (with the global style constraints and the current
/// speaker); prior turns follow as user/assistant messages from the
/// current speaker's point of view.
pub fn build_prompt(
    ctx: &InitContext,
    history: &[Turn],
    t: u32,
    max_reply_chars: usize,
) -> Result<Vec<ChatMessage>, DialogueError> {
    if t == 0 {
        return Err(DialogueError::ZeroTurn);
    }
    if history.len() as u32 != t - 1 {
        return Err(DialogueError::HistoryLength {
            turn: t,
            expected: t - 1,
            got: history.len() as u32,
        });
    }
    let speaker = Speaker::for_turn(t);
    let max_chars = max_reply_chars.to_string();
    let constraints = templates::fill(templates::CONSTRAINTS, &[("max_chars", &max_chars)]);
    let vars: &[(&str, &str)] = &[
        ("speaker", speaker.label()),
        ("constraints", constraints.trim_end()),
        ("context", &ctx.render_full()),
        ("brief", &ctx.brief),
    ];
    let system = match phase_for_turn(t) {
        Phase::Initial => templates::fill(templates::PHASE_INITIAL, vars),
        Phase::Early => templates::fill(templates::PHASE_EARLY, vars),
        Phase::Middle => templates::fill(templates::PHASE_MIDDLE, vars),
        Phase::Late => templates::fill(templates::PHASE_LATE, vars),
    };
    let mut messages = vec![ChatMessage::text(Role::System, system.trim_end())];
    for turn in history {
        let role = if turn.speaker == speaker {
            Role::Assistant
        } else {
            Role::User
        };
        messages.push(ChatMessage::text(role, turn.text.clone()));
    }
    if history.is_empty() {
        messages.push(ChatMessage::text(Role::User, "请开始对话。"));
    }
    Ok(messages)
}

/// A generated reply, with the flag recording whether the backend's text
/// was cut at the length limit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub text: String,
    pub truncated: bool,
}

/// Generates the utterance for turn `t`, trimming and enforcing the reply
/// length limit (counted in characters, not bytes).
pub fn next_utterance(
    ctx: &InitContext,
    history: &[Turn],
    t: u32,
    chat: &dyn ChatBackend,
    max_reply_chars: usize,
) -> Result<Utterance, DialogueError> {
    let prompt = build_prompt(ctx, history, t, max_reply_chars)?;
    let raw = chat.send(&prompt)?;
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(DialogueError::EmptyReply);
    }
    let mut text: String = trimmed.chars().take(max_reply_chars).collect();
    let truncated = text.chars().count() < trimmed.chars().count();
    if truncated {
        text = text.trim_end().to_string();
    }
    Ok(Utterance { text, truncated })
}

/// Asks the summary agent for the (scenario, emotion, motivation) triple
/// describing the dialogue so far, from `next_speaker`'s perspective.
/// Valid from turn 2 on, i.e. once history is non-empty.
pub fn summarize(
    history: &[Turn],
    next_speaker: Speaker,
    chat: &dyn ChatBackend,
) -> Result<TurnSummary, DialogueError> {
    if history.is_empty() {
        return Err(DialogueError::SummaryTooEarly);
    }
    let prompt = templates::fill(
        templates::SUMMARY,
        &[
            ("speaker", next_speaker.label()),
            ("history", render_history(history).trim_end()),
        ],
    );
    let raw = chat.send(&[ChatMessage::text(Role::User, prompt)])?;
    let sections = crate::library::split_sections(&raw, templates::FIELD_SEPARATOR);
    if sections.len() != 3 || sections.iter().any(|s| s.is_empty()) {
        return Err(DialogueError::CountMismatch {
            what: "summary sections",
            expected: 3,
            got: sections.iter().filter(|s| !s.is_empty()).count(),
            raw,
        });
    }
    let mut it = sections.into_iter();
    Ok(TurnSummary::from_texts(
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
    ))
}

/// Asks the chat backend for `n` mutually dissimilar scenarios for a role
/// pair.
pub fn generate_scenarios(
    pair: &RolePair,
    n: usize,
    chat: &dyn ChatBackend,
) -> Result<Vec<Scenario>, DialogueError> {
    assert!(n >= 1, "scenario count must be positive");
    let roles = format!(
        "{}: {} / {}\n{}: {} / {}",
        pair.role_a.name,
        pair.role_a.background,
        pair.role_a.personality,
        pair.role_b.name,
        pair.role_b.background,
        pair.role_b.personality,
    );
    let prompt = templates::fill(
        templates::SCENARIO,
        &[("roles", &roles), ("n", &n.to_string())],
    );
    let raw = chat.send(&[ChatMessage::text(Role::User, prompt)])?;
    let items = crate::library::split_sections(&raw, templates::ITEM_SEPARATOR);
    let items: Vec<&String> = items.iter().filter(|s| !s.is_empty()).collect();
    if items.len() != n {
        return Err(DialogueError::CountMismatch {
            what: "scenarios",
            expected: n,
            got: items.len(),
            raw,
        });
    }
    let mut scenarios = Vec::with_capacity(n);
    for item in items {
        let fields = crate::library::split_sections(item, templates::FIELD_SEPARATOR);
        if fields.len() != 2 || fields.iter().any(|f| f.is_empty()) {
            return Err(DialogueError::CountMismatch {
                what: "scenario fields",
                expected: 2,
                got: fields.iter().filter(|f| !f.is_empty()).count(),
                raw,
            });
        }
        let mut it = fields.into_iter();
        scenarios.push(Scenario {
            relationship_background: it.next().unwrap(),
            event_context: it.next().unwrap(),
        });
    }
    Ok(scenarios)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mock::{EchoChat, HashChat, ScriptedChat};

    pub(crate) fn news_ctx() -> InitContext {
        build_init_context(InitPayload::News(NewsItem {
            topic: Topic::Sports,
            title: "NEWS-TITLE-MARKER".to_string(),
            text: "NEWS-BODY-MARKER".to_string(),
        }))
    }

    pub(crate) fn role_pair() -> RolePair {
        RolePair {
            role_a: RoleProfile {
                name: "ROLE-NAME-ALPHA".to_string(),
                background: "BACKGROUND-ALPHA".to_string(),
                personality: "PERSONALITY-ALPHA".to_string(),
                current_state: "STATE-ALPHA".to_string(),
            },
            role_b: RoleProfile {
                name: "ROLE-NAME-BETA".to_string(),
                background: "BACKGROUND-BETA".to_string(),
                personality: "PERSONALITY-BETA".to_string(),
                current_state: "STATE-BETA".to_string(),
            },
            intimacy: Intimacy::Acquaintance,
            dominance: Dominance::Equal,
            age_relation: AgeRelation::SameAge,
            primary_scenario: PrimaryScenario::Work,
        }
    }

    fn turns(n: u32) -> Vec<Turn> {
        (1..=n)
            .map(|i| Turn {
                index: i,
                speaker: Speaker::for_turn(i),
                text: format!("消息{i}"),
                meme_id: None,
                truncated: false,
            })
            .collect()
    }

    #[test]
    fn news_brief_is_the_title() {
        let ctx = news_ctx();
        assert_eq!(ctx.kind(), "news");
        assert_eq!(ctx.brief, "NEWS-TITLE-MARKER");
    }

    #[test]
    fn role_brief_names_both_characters() {
        let ctx = build_init_context(InitPayload::Role(
            role_pair(),
            Scenario {
                relationship_background: "RB".to_string(),
                event_context: "EC".to_string(),
            },
        ));
        assert!(ctx.brief.contains("ROLE-NAME-ALPHA"));
        assert!(ctx.brief.contains("ROLE-NAME-BETA"));
        assert!(ctx.brief.len() <= ctx.render_full().len());
    }

    #[test]
    fn init_context_is_deterministic() {
        assert_eq!(news_ctx(), news_ctx());
    }

    #[test]
    fn speaker_parity_follows_turn_index() {
        for t in [1u32, 3, 5, 17] {
            assert_eq!(Speaker::for_turn(t), Speaker::A);
        }
        for t in [2u32, 4, 18] {
            assert_eq!(Speaker::for_turn(t), Speaker::B);
        }
    }

    #[test]
    fn phase_breakpoints_are_exact() {
        assert_eq!(phase_for_turn(1), Phase::Initial);
        assert_eq!(phase_for_turn(2), Phase::Early);
        assert_eq!(phase_for_turn(6), Phase::Early);
        assert_eq!(phase_for_turn(7), Phase::Middle);
        assert_eq!(phase_for_turn(12), Phase::Middle);
        assert_eq!(phase_for_turn(13), Phase::Late);
        assert_eq!(phase_for_turn(100), Phase::Late);
    }

    #[test]
    fn initial_prompt_contains_full_context_and_no_history() {
        let ctx = news_ctx();
        let messages = build_prompt(&ctx, &[], 1, 60).unwrap();
        let all: String = messages.iter().map(|m| m.text_content()).collect();
        assert!(all.contains("NEWS-TITLE-MARKER"));
        assert!(all.contains("NEWS-BODY-MARKER"));
        assert!(all.contains("Speaker A"));
    }

    #[test]
    fn early_and_middle_prompts_differ_by_template() {
        let ctx = news_ctx();
        let early: String = build_prompt(&ctx, &turns(5), 6, 60)
            .unwrap()
            .iter()
            .map(|m| m.text_content())
            .collect();
        let middle: String = build_prompt(&ctx, &turns(6), 7, 60)
            .unwrap()
            .iter()
            .map(|m| m.text_content())
            .collect();
        assert!(!early.contains("open-ended"));
        assert!(middle.contains("open-ended"));
        // Both carry the brief but not the full article.
        assert!(early.contains("NEWS-TITLE-MARKER"));
        assert!(middle.contains("NEWS-TITLE-MARKER"));
        assert!(!early.contains("NEWS-BODY-MARKER"));
    }

    #[test]
    fn late_prompt_carries_no_initialization_payload() {
        let ctx = news_ctx();
        let messages = build_prompt(&ctx, &turns(12), 13, 60).unwrap();
        let all: String = messages.iter().map(|m| m.text_content()).collect();
        for needle in ctx.payload_strings() {
            assert!(!all.contains(&needle), "late prompt leaked {needle:?}");
        }
    }

    #[test]
    fn build_prompt_checks_history_length() {
        let ctx = news_ctx();
        assert!(matches!(
            build_prompt(&ctx, &turns(3), 3, 60),
            Err(DialogueError::HistoryLength { .. })
        ));
    }

    #[test]
    fn next_utterance_truncates_and_flags() {
        let long = "好".repeat(100);
        let chat = ScriptedChat::new([long]);
        let got = next_utterance(&news_ctx(), &[], 1, &chat, 60).unwrap();
        assert_eq!(got.text.chars().count(), 60);
        assert!(got.truncated);

        let chat = ScriptedChat::new(["  短消息  "]);
        let got = next_utterance(&news_ctx(), &[], 1, &chat, 60).unwrap();
        assert_eq!(got.text, "短消息");
        assert!(!got.truncated);
    }

    #[test]
    fn next_utterance_rejects_empty_reply() {
        let chat = ScriptedChat::new(["   "]);
        assert_eq!(
            next_utterance(&news_ctx(), &[], 1, &chat, 60),
            Err(DialogueError::EmptyReply)
        );
    }

    #[test]
    fn echo_chat_yields_deterministic_transcript() {
        let ctx = news_ctx();
        let chat = EchoChat;
        let mut history = Vec::new();
        for t in 1..=4 {
            let utt = next_utterance(&ctx, &history, t, &chat, 200).unwrap();
            history.push(Turn {
                index: t,
                speaker: Speaker::for_turn(t),
                text: utt.text,
                meme_id: None,
                truncated: utt.truncated,
            });
        }
        let again: Vec<String> = {
            let mut h = Vec::new();
            for t in 1..=4 {
                let utt = next_utterance(&ctx, &h, t, &chat, 200).unwrap();
                h.push(Turn {
                    index: t,
                    speaker: Speaker::for_turn(t),
                    text: utt.text.clone(),
                    meme_id: None,
                    truncated: false,
                });
            }
            h.into_iter().map(|t| t.text).collect()
        };
        assert_eq!(
            history.into_iter().map(|t| t.text).collect::<Vec<_>>(),
            again
        );
    }

    #[test]
    fn summarize_parses_three_sections() {
        let chat = ScriptedChat::new(["场景描述\n---\n开心\n---\n想逗对方笑"]);
        let summary = summarize(&turns(3), Speaker::B, &chat).unwrap();
        assert_eq!(summary.scenario, "场景描述");
        assert_eq!(summary.emotion, "开心");
        assert_eq!(summary.motivation, "想逗对方笑");
        assert!(!summary.is_embedded());
    }

    #[test]
    fn summarize_rejects_missing_section() {
        let chat = ScriptedChat::new(["只有一段\n---\n两段"]);
        match summarize(&turns(2), Speaker::A, &chat) {
            Err(DialogueError::CountMismatch { expected, got, .. }) => {
                assert_eq!((expected, got), (3, 2));
            }
            other => panic!("expected count mismatch, got {other:?}"),
        }
    }

    #[test]
    fn summarize_requires_history() {
        assert_eq!(
            summarize(&[], Speaker::A, &HashChat),
            Err(DialogueError::SummaryTooEarly)
        );
    }

    #[test]
    fn summarize_is_deterministic_under_hash_mock() {
        let a = summarize(&turns(4), Speaker::A, &HashChat).unwrap();
        let b = summarize(&turns(4), Speaker::A, &HashChat).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generate_scenarios_parses_requested_count() {
        let reply = "背景一\n---\n事件一\n===\n背景二\n---\n事件二\n===\n背景三\n---\n事件三";
        let chat = ScriptedChat::new([reply]);
        let scenarios = generate_scenarios(&role_pair(), 3, &chat).unwrap();
        assert_eq!(scenarios.len(), 3);
        assert_eq!(scenarios[1].relationship_background, "背景二");
        assert_eq!(scenarios[2].event_context, "事件三");
    }

    #[test]
    fn generate_scenarios_rejects_count_mismatch() {
        let reply = "背景一\n---\n事件一\n===\n背景二\n---\n事件二";
        let chat = ScriptedChat::new([reply]);
        match generate_scenarios(&role_pair(), 3, &chat) {
            Err(DialogueError::CountMismatch { expected, got, .. }) => {
                assert_eq!((expected, got), (3, 2));
            }
            other => panic!("expected count mismatch, got {other:?}"),
        }
    }

    #[test]
    fn generate_scenarios_deterministic_under_hash_mock() {
        let a = generate_scenarios(&role_pair(), 2, &HashChat).unwrap();
        let b = generate_scenarios(&role_pair(), 2, &HashChat).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn session_validate_checks_alternation() {
        let mut session = DialogueSession {
            session_id: "s".to_string(),
            context: news_ctx(),
            seed: 0,
            turns: turns(4),
        };
        session.validate().unwrap();
        session.turns[2].speaker = Speaker::B;
        assert!(session.validate().is_err());
    }
}
