//! The retrieval core: four-component similarity scoring, weighted
//! totals, exact Top-K ranking, turn-aware adaptive threshold gating, and
//! the greedy/sampling selector.
//!
//! Scoring is pure; at ~6k memes exact scoring over the whole library is
//! cheap, so there is no approximate index.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dialogue::TurnSummary;
use crate::library::{MemeLibrary, MemeRecord};
use crate::math;
use crate::rng::DetRng;
use crate::vector::{cosine_similarity, Vector, VectorError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AlignerError {
    #[error("missing embedding: {0}")]
    MissingEmbedding(String),
    #[error("library is empty")]
    EmptyLibrary,
    #[error("no summaries to score")]
    NoSummaries,
    #[error("no candidates to select from")]
    EmptyCandidates,
    #[error(transparent)]
    Vector(#[from] VectorError),
}

/// Weights of the four score components. Defaults make the total a plain
/// mean of the bounded components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignerWeights {
    pub w_scenario: f64,
    pub w_penalty: f64,
    pub w_implicit: f64,
    pub w_motivation: f64,
}

impl Default for AlignerWeights {
    fn default() -> Self {
        AlignerWeights {
            w_scenario: 0.25,
            w_penalty: 0.25,
            w_implicit: 0.25,
            w_motivation: 0.25,
        }
    }
}

impl AlignerWeights {
    pub fn is_finite(&self) -> bool {
        [
            self.w_scenario,
            self.w_penalty,
            self.w_implicit,
            self.w_motivation,
        ]
        .iter()
        .all(|w| w.is_finite())
    }
}

/// Sign applied to the implicit (emotion) component. `Positive` treats it
/// as a matching score like the scenario and motivation components;
/// `Negative` turns it into a penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImplicitSign {
    #[default]
    Positive,
    Negative,
}

/// The four per-candidate component scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentScores {
    /// Scenario match: cos(summary scenario, appropriate scenarios).
    pub alpha: f64,
    /// Scenario penalty: -cos(summary scenario, inappropriate scenarios).
    pub delta: f64,
    /// Implicit semantic match on the emotion dimension.
    pub beta: f64,
    /// Motivation alignment.
    pub gamma: f64,
}

/// One scored candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredMeme {
    pub meme_id: String,
    pub alpha: f64,
    pub delta: f64,
    pub beta: f64,
    pub gamma: f64,
    pub total: f64,
}

fn summary_vec<'a>(
    v: &'a Option<Vector>,
    field: &'static str,
) -> Result<&'a Vector, AlignerError> {
    v.as_ref()
        .ok_or_else(|| AlignerError::MissingEmbedding(alloc::format!("summary {field}")))
}

/// Computes the four component scores for one (summary, meme) pair.
pub fn component_scores(
    summary: &TurnSummary,
    record: &MemeRecord,
    sign: ImplicitSign,
) -> Result<ComponentScores, AlignerError> {
    let scenario = summary_vec(&summary.scenario_vec, "scenario_vec")?;
    let emotion = summary_vec(&summary.emotion_vec, "emotion_vec")?;
    let motivation = summary_vec(&summary.motivation_vec, "motivation_vec")?;
    let emb = record.embeddings.as_ref().ok_or_else(|| {
        AlignerError::MissingEmbedding(alloc::format!("meme {:?} embeddings", record.id))
    })?;

    let alpha = cosine_similarity(scenario, &emb.s_plus)?;
    let delta = -cosine_similarity(scenario, &emb.s_minus)?;
    let beta = match sign {
        ImplicitSign::Positive => cosine_similarity(emotion, &emb.emotion)?,
        ImplicitSign::Negative => -cosine_similarity(emotion, &emb.emotion)?,
    };
    let gamma = cosine_similarity(motivation, &emb.motivation)?;
    Ok(ComponentScores {
        alpha,
        delta,
        beta,
        gamma,
    })
}

/// Weighted sum of the components, accumulated in the fixed order
/// alpha, delta, beta, gamma.
pub fn total_score(components: &ComponentScores, weights: &AlignerWeights) -> f64 {
    weights.w_scenario * components.alpha
        + weights.w_penalty * components.delta
        + weights.w_implicit * components.beta
        + weights.w_motivation * components.gamma
}

/// Scores every record and returns the `min(k, len)` best, total
/// descending, ties broken by meme id ascending.
pub fn rank_top_k(
    summary: &TurnSummary,
    lib: &MemeLibrary,
    weights: &AlignerWeights,
    sign: ImplicitSign,
    k: usize,
) -> Result<Vec<ScoredMeme>, AlignerError> {
    assert!(k >= 1, "k must be positive");
    if lib.is_empty() {
        return Err(AlignerError::EmptyLibrary);
    }
    let mut scored = Vec::with_capacity(lib.len());
    for record in &lib.records {
        let c = component_scores(summary, record, sign)?;
        scored.push(ScoredMeme {
            meme_id: record.id.clone(),
            alpha: c.alpha,
            delta: c.delta,
            beta: c.beta,
            gamma: c.gamma,
            total: total_score(&c, weights),
        });
    }
    scored.sort_by(|a, b| {
        b.total
            .partial_cmp(&a.total)
            .expect("scores are finite")
            .then_with(|| a.meme_id.cmp(&b.meme_id))
    });
    scored.truncate(k);
    Ok(scored)
}

/// Threshold parameters plus the per-session memory of the most recent
/// meme turn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdState {
    pub theta0: f64,
    pub delta_pen: f64,
    pub lambda: f64,
    pub last_meme_turn: Option<u32>,
}

impl ThresholdState {
    pub fn new(theta0: f64, delta_pen: f64, lambda: f64) -> Self {
        assert!(theta0.is_finite());
        assert!(delta_pen >= 0.0, "penalty must be nonnegative");
        assert!(lambda > 0.0, "decay rate must be positive");
        ThresholdState {
            theta0,
            delta_pen,
            lambda,
            last_meme_turn: None,
        }
    }

    /// Turns since the most recent meme, if any was sent before `t`.
    pub fn gap(&self, t: u32) -> Option<u32> {
        self.last_meme_turn.map(|last| {
            debug_assert!(last < t, "last meme turn must precede t");
            t - last
        })
    }

    pub fn record_meme(&mut self, t: u32) {
        self.last_meme_turn = Some(t);
    }
}

/// The meme-sending threshold at turn `t`: the base threshold plus a
/// penalty that decays exponentially with the number of turns since the
/// last meme. With no prior meme the penalty term is zero and the result
/// is exactly the base threshold.
pub fn adaptive_threshold(state: &ThresholdState, t: u32) -> f64 {
    match state.gap(t) {
        None => state.theta0,
        Some(k) => state.theta0 + state.delta_pen * math::exp(-state.lambda * k as f64),
    }
}

/// True iff the top score strictly exceeds the threshold.
pub fn gate(top_total: f64, threshold: f64) -> bool {
    top_total > threshold
}

/// How the final meme is picked from the Top-K candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStrategy {
    /// Always the highest-scoring candidate.
    #[default]
    Greedy,
    /// A uniform draw over the candidate list, for output diversity.
    Sampling,
}

/// Picks the meme to send from a non-empty ranked candidate list.
pub fn select_meme<'a>(
    top_k: &'a [ScoredMeme],
    strategy: SelectionStrategy,
    rng: &mut DetRng,
) -> Result<&'a ScoredMeme, AlignerError> {
    if top_k.is_empty() {
        return Err(AlignerError::EmptyCandidates);
    }
    Ok(match strategy {
        SelectionStrategy::Greedy => &top_k[0],
        SelectionStrategy::Sampling => &top_k[rng.uniform_index(top_k.len())],
    })
}

/// Fixed-width histogram of retrieval totals with exact summary
/// statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges spanning the observed range.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub mean: f64,
    /// Population standard deviation.
    pub stddev: f64,
    pub n: u64,
}

pub const HISTOGRAM_BINS: usize = 50;

impl Histogram {
    fn from_values(values: &[f64], bins: usize) -> Histogram {
        assert!(!values.is_empty() && bins >= 1);
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for v in values {
            min = min.min(*v);
            max = max.max(*v);
            sum += v;
        }
        let n = values.len() as u64;
        let mean = sum / n as f64;
        let mut var_acc = 0.0;
        for v in values {
            let d = v - mean;
            var_acc += d * d;
        }
        let stddev = math::sqrt(var_acc / n as f64);

        let width = max - min;
        let edges: Vec<f64> = (0..=bins)
            .map(|i| min + width * i as f64 / bins as f64)
            .collect();
        let mut counts = vec![0u64; bins];
        for v in values {
            let bin = if width == 0.0 {
                0
            } else {
                (((v - min) / width) * bins as f64) as usize
            };
            counts[bin.min(bins - 1)] += 1;
        }
        Histogram {
            edges,
            counts,
            mean,
            stddev,
            n,
        }
    }

    /// Indices of peaks in the smoothed count profile: bins that strictly
    /// dominate their neighborhood and reach at least `floor_frac` of the
    /// global maximum. A clean single-mode profile yields exactly one.
    pub fn peaks(&self, window: usize, floor_frac: f64) -> Vec<usize> {
        let smoothed = moving_average(&self.counts, window);
        let max = smoothed.iter().cloned().fold(0.0f64, f64::max);
        if max == 0.0 {
            return Vec::new();
        }
        let floor = max * floor_frac;
        let radius = 2;
        let mut peaks = Vec::new();
        for i in 0..smoothed.len() {
            if smoothed[i] < floor {
                continue;
            }
            let lo = i.saturating_sub(radius);
            let hi = (i + radius).min(smoothed.len() - 1);
            let dominates = (lo..=hi).all(|j| j == i || smoothed[j] < smoothed[i]);
            if dominates {
                peaks.push(i);
            }
        }
        peaks
    }
}

fn moving_average(counts: &[u64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let half = window / 2;
    (0..counts.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(counts.len() - 1);
            let sum: u64 = counts[lo..=hi].iter().sum();
            sum as f64 / (hi - lo + 1) as f64
        })
        .collect()
}

/// Scores every (summary, meme) pair and bins the totals into
/// [`HISTOGRAM_BINS`] equal-width bins over the observed range.
pub fn score_distribution(
    lib: &MemeLibrary,
    summaries: &[TurnSummary],
    weights: &AlignerWeights,
    sign: ImplicitSign,
) -> Result<Histogram, AlignerError> {
    if lib.is_empty() {
        return Err(AlignerError::EmptyLibrary);
    }
    if summaries.is_empty() {
        return Err(AlignerError::NoSummaries);
    }
    let mut totals = Vec::with_capacity(lib.len() * summaries.len());
    for summary in summaries {
        for record in &lib.records {
            let c = component_scores(summary, record, sign)?;
            totals.push(total_score(&c, weights));
        }
    }
    Ok(Histogram::from_values(&totals, HISTOGRAM_BINS))
}
