//! Property tests for the scoring core.

use memecmd_core::aligner::{
    adaptive_threshold, component_scores, gate, rank_top_k, total_score, AlignerWeights,
    ImplicitSign, ScoredMeme, ThresholdState,
};
use memecmd_core::dialogue::TurnSummary;
use memecmd_core::library::{MemeEmbeddings, MemeLibrary, MemeRecord};
use memecmd_core::mock::mock_embed;
use memecmd_core::vector::{cosine_similarity, l2_normalize, Vector};
use proptest::prelude::*;

fn arb_vector(dim: usize) -> impl Strategy<Value = Vector> {
    proptest::collection::vec(-1.0f64..1.0, dim..=dim)
        .prop_filter_map("needs nonzero norm", |c| {
            let v = Vector::new(c).ok()?;
            (v.norm() > 1e-6).then_some(v)
        })
}

fn embedded_summary(dim: usize, tag: u64) -> TurnSummary {
    let mut s = TurnSummary::from_texts("scn", "emo", "mot");
    s.scenario_vec = Some(mock_embed(&format!("q{tag}-s"), dim));
    s.emotion_vec = Some(mock_embed(&format!("q{tag}-e"), dim));
    s.motivation_vec = Some(mock_embed(&format!("q{tag}-m"), dim));
    s
}

fn mock_library(n: usize, dim: usize, tag: u64) -> MemeLibrary {
    let records = (0..n)
        .map(|i| MemeRecord {
            id: format!("m{i:05}"),
            image_path: format!("m{i:05}.png"),
            s_plus: "a".into(),
            s_minus: "b".into(),
            emotion: "c".into(),
            motivation: "d".into(),
            embeddings: Some(MemeEmbeddings {
                s_plus: mock_embed(&format!("{tag}/{i}-sp"), dim),
                s_minus: mock_embed(&format!("{tag}/{i}-sm"), dim),
                emotion: mock_embed(&format!("{tag}/{i}-em"), dim),
                motivation: mock_embed(&format!("{tag}/{i}-mo"), dim),
            }),
        })
        .collect();
    MemeLibrary::from_records(records).unwrap()
}

fn oracle_rank(
    summary: &TurnSummary,
    lib: &MemeLibrary,
    weights: &AlignerWeights,
    k: usize,
) -> Vec<String> {
    let mut all: Vec<(String, f64)> = lib
        .records
        .iter()
        .map(|r| {
            let c = component_scores(summary, r, ImplicitSign::Positive).unwrap();
            (r.id.clone(), total_score(&c, weights))
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all.into_iter().map(|(id, _)| id).collect()
}

proptest! {
    #[test]
    fn cosine_is_symmetric_and_bounded(a in arb_vector(24), b in arb_vector(24)) {
        let ab = cosine_similarity(&a, &b).unwrap();
        let ba = cosine_similarity(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((-1.0..=1.0).contains(&ab));
    }

    #[test]
    fn cosine_is_scale_invariant(a in arb_vector(16), s in 1e-3f64..1e3) {
        let scaled = a.scaled(s);
        let cos = cosine_similarity(&a, &scaled).unwrap();
        prop_assert!((cos - 1.0).abs() < 1e-12, "cos {cos}");
        // Power-of-two scales round nothing, so equality is exact there.
        prop_assert_eq!(cosine_similarity(&a, &a.scaled(2.0)).unwrap(), 1.0);
        prop_assert_eq!(cosine_similarity(&a, &a.scaled(0.5)).unwrap(), 1.0);
    }

    #[test]
    fn normalized_vectors_have_unit_norm(a in arb_vector(16)) {
        let n = l2_normalize(&a).unwrap();
        prop_assert!((n.norm() - 1.0).abs() < 1e-9);
        let cos = cosine_similarity(&a, &n).unwrap();
        prop_assert!((cos - 1.0).abs() < 1e-12, "cos {cos}");
    }

    #[test]
    fn top_k_matches_exhaustive_oracle(
        n in 1usize..120,
        k in 1usize..20,
        tag in 0u64..1000,
    ) {
        let lib = mock_library(n, 16, tag);
        let summary = embedded_summary(16, tag);
        let w = AlignerWeights::default();
        let got = rank_top_k(&summary, &lib, &w, ImplicitSign::Positive, k).unwrap();
        prop_assert_eq!(got.len(), k.min(n));
        let got_ids: Vec<String> = got.iter().map(|s| s.meme_id.clone()).collect();
        prop_assert_eq!(got_ids, oracle_rank(&summary, &lib, &w, k));
    }

    #[test]
    fn components_and_default_total_are_bounded(tag in 0u64..2000) {
        let lib = mock_library(1, 48, tag);
        let summary = embedded_summary(48, tag.wrapping_add(1));
        let c = component_scores(&summary, &lib.records[0], ImplicitSign::Positive).unwrap();
        for x in [c.alpha, c.delta, c.beta, c.gamma] {
            prop_assert!((-1.0..=1.0).contains(&x));
        }
        let t = total_score(&c, &AlignerWeights::default());
        prop_assert!((-1.0..=1.0).contains(&t));
    }

    #[test]
    fn scaling_summary_vectors_never_moves_the_ranking(
        n in 2usize..40,
        tag in 0u64..500,
        scale in prop::sample::select(vec![0.5f64, 2.0, 10.0]),
    ) {
        let lib = mock_library(n, 16, tag);
        let summary = embedded_summary(16, tag);
        let mut scaled = summary.clone();
        scaled.scenario_vec = Some(summary.scenario_vec.as_ref().unwrap().scaled(scale));
        scaled.emotion_vec = Some(summary.emotion_vec.as_ref().unwrap().scaled(scale));
        scaled.motivation_vec = Some(summary.motivation_vec.as_ref().unwrap().scaled(scale));

        let w = AlignerWeights::default();
        let base = rank_top_k(&summary, &lib, &w, ImplicitSign::Positive, n).unwrap();
        let moved = rank_top_k(&scaled, &lib, &w, ImplicitSign::Positive, n).unwrap();
        let ids = |v: &[ScoredMeme]| v.iter().map(|s| s.meme_id.clone()).collect::<Vec<_>>();
        prop_assert_eq!(ids(&base), ids(&moved));
        for (a, b) in base.iter().zip(&moved) {
            prop_assert!((a.alpha - b.alpha).abs() < 1e-9);
            prop_assert!((a.delta - b.delta).abs() < 1e-9);
            prop_assert!((a.beta - b.beta).abs() < 1e-9);
            prop_assert!((a.gamma - b.gamma).abs() < 1e-9);
        }
        // Gate decisions agree at any threshold between the extremes.
        let theta = (base[0].total + base[n - 1].total) / 2.0;
        prop_assert_eq!(gate(base[0].total, theta), gate(moved[0].total, theta));
    }

    #[test]
    fn threshold_decays_strictly_toward_the_base(
        theta0 in -1.0f64..1.0,
        delta in 1e-3f64..2.0,
        lambda in 0.05f64..1.0,
    ) {
        // Ranges keep the penalty term well above f64 resolution over the
        // probed gaps, so the mathematical strictness is observable.
        let mut state = ThresholdState::new(theta0, delta, lambda);
        state.record_meme(1);
        let mut prev = f64::INFINITY;
        for k in 1u32..=12 {
            let theta = adaptive_threshold(&state, 1 + k);
            prop_assert!(theta < prev, "not strictly decreasing at k={k}");
            prop_assert!(theta > theta0, "fell to the base at k={k}");
            prev = theta;
        }
        // One turn after a meme the full decayed penalty applies, computed
        // as the same expression bit for bit.
        let at_one = adaptive_threshold(&state, 2);
        prop_assert_eq!(at_one, theta0 + delta * (-lambda).exp());
    }

    #[test]
    fn unreachable_gate_never_fires(tag in 0u64..300) {
        let lib = mock_library(30, 16, tag);
        let summary = embedded_summary(16, tag);
        let ranked =
            rank_top_k(&summary, &lib, &AlignerWeights::default(), ImplicitSign::Positive, 1)
                .unwrap();
        // Components are bounded by 1, so a base threshold above 1 is
        // unreachable under default weights.
        prop_assert!(!gate(ranked[0].total, 1.5));
    }
}
