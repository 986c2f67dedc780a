//! Invariants of the metrics, the answer parser, the rubric and the sampler.

mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use syncog::evaluate::{compute_metrics, parse_label, MetricsReport, ParseRules, Parsed, Prediction};
use syncog::label::{Label, LabelScheme, Language};
use syncog::persona::{StyleDimension, StyleSamplerParams};
use syncog::rubric::{analyze, score, Lexicons};

const TERNARY: [Label; 3] = [Label::Hc, Label::Mci, Label::Ad];

fn label() -> impl Strategy<Value = Label> {
    prop::sample::select(TERNARY.to_vec())
}

fn answer() -> impl Strategy<Value = Option<Label>> {
    prop_oneof![4 => label().prop_map(Some), 1 => Just(None)]
}

/// Truths plus `[rollout][sample]` answers.
fn instance() -> impl Strategy<Value = (Vec<Label>, Vec<Vec<Option<Label>>>)> {
    (1usize..25, 1usize..6).prop_flat_map(|(n, r)| {
        (
            prop::collection::vec(label(), n),
            prop::collection::vec(prop::collection::vec(answer(), n), r),
        )
    })
}

fn report(ids: &[String], truth: &[Label], rollouts: &[Vec<Option<Label>>]) -> MetricsReport {
    let truths: BTreeMap<String, Label> = ids.iter().cloned().zip(truth.iter().copied()).collect();
    let preds: Vec<Prediction> = rollouts
        .iter()
        .enumerate()
        .flat_map(|(r, row)| {
            row.iter().zip(ids).map(move |(p, id)| Prediction {
                sample_id: id.clone(),
                rollout_idx: r,
                raw_text: String::new(),
                parsed: p.map_or(Parsed::Unparseable, Parsed::Label),
                error: None,
            })
        })
        .collect();
    compute_metrics(&preds, &truths, rollouts.len()).unwrap()
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("s{i:03}")).collect()
}

proptest! {
    #[test]
    fn metrics_match_oracle((truth, rollouts) in instance()) {
        let m = report(&ids(truth.len()), &truth, &rollouts);
        let o = common::oracle_metrics(&truth, &rollouts);
        prop_assert!((m.macro_f1.mean - o.f1_mean).abs() < 1e-9);
        prop_assert!((m.macro_f1.sd - o.f1_sd).abs() < 1e-9);
        prop_assert!((m.avs.mean - o.avs_mean).abs() < 1e-9);
        prop_assert!((m.bon - o.bon).abs() < 1e-9);
    }

    #[test]
    fn metrics_are_bounded((truth, rollouts) in instance()) {
        let m = report(&ids(truth.len()), &truth, &rollouts);
        for v in [m.macro_f1.mean, m.avs.mean, m.bon] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(m.bon + 1e-12 >= m.avs.mean);
        prop_assert!(m.macro_f1.sd >= 0.0 && m.avs.sd >= 0.0);
    }

    #[test]
    fn metrics_ignore_sample_and_rollout_order((truth, rollouts) in instance(), seed in any::<u64>()) {
        let n = truth.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let truth2: Vec<Label> = perm.iter().map(|&i| truth[i]).collect();
        let mut rollouts2: Vec<Vec<Option<Label>>> =
            rollouts.iter().map(|row| perm.iter().map(|&i| row[i]).collect()).collect();
        rollouts2.reverse();
        let ids2: Vec<String> = ids(n).into_iter().rev().collect();
        let a = report(&ids(n), &truth, &rollouts);
        let b = report(&ids2, &truth2, &rollouts2);
        prop_assert!((a.macro_f1.mean - b.macro_f1.mean).abs() < 1e-12);
        prop_assert!((a.macro_f1.sd - b.macro_f1.sd).abs() < 1e-12);
        prop_assert!((a.avs.mean - b.avs.mean).abs() < 1e-12);
        prop_assert_eq!(a.bon, b.bon);
        prop_assert_eq!(a.unparseable_count, b.unparseable_count);
    }

    #[test]
    fn final_tag_ignores_case_and_spacing(l in label(), pre in "[ \t]{0,3}", mid in "[ \t]{0,3}", upper in any::<bool>()) {
        let rules = ParseRules::default_for(LabelScheme::Ternary, Language::En);
        let tag = if upper { "FINAL" } else { "final" };
        let name = if upper { l.canonical().to_string() } else { l.canonical().to_lowercase() };
        let text = format!("Some reasoning.\n{pre}{tag}{mid}:{mid}{name}{pre}");
        prop_assert_eq!(parse_label(&text, LabelScheme::Ternary, &rules), Parsed::Label(l));
    }

    #[test]
    fn fillers_never_raise_fluency(extra in 0usize..6) {
        let lex = Lexicons::builtin(Language::En);
        let words = ["The", "mother", "dries", "a", "dish", "while", "the", "sink", "overflows."];
        let text = |n: usize| {
            let mut out = Vec::new();
            for (i, w) in words.iter().enumerate() {
                if i < n { out.push("uh"); }
                out.push(*w);
            }
            out.join(" ")
        };
        let f = |n| score(&analyze(&text(n), &lex)).get(StyleDimension::Fluency);
        prop_assert!(f(extra + 1) <= f(extra));
    }

    #[test]
    fn more_text_never_shortens(n in 0usize..40) {
        let lex = Lexicons::builtin(Language::En);
        let s = "The boy takes a cookie. ";
        let f = |k: usize| score(&analyze(&s.repeat(k), &lex)).get(StyleDimension::NarrativeLength);
        prop_assert!(f(n + 1) >= f(n));
    }

    #[test]
    fn quantized_levels_are_ordinal(a in -5.0f64..8.0, b in -5.0f64..8.0) {
        let p = StyleSamplerParams::default();
        let (qa, qb) = (p.quantize(a), p.quantize(b));
        prop_assert!((1..=3).contains(&qa));
        if a <= b { prop_assert!(qa <= qb); }
    }
}

#[test]
fn chance_accuracy_is_one_over_classes() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 3000;
    let truth: Vec<Label> = (0..n).map(|_| TERNARY[rng.random_range(0..3)]).collect();
    let rollouts: Vec<Vec<Option<Label>>> = (0..4)
        .map(|_| (0..n).map(|_| Some(TERNARY[rng.random_range(0..3)])).collect())
        .collect();
    let m = report(&ids(n), &truth, &rollouts);
    assert!((m.avs.mean - 1.0 / 3.0).abs() < 0.02, "{}", m.avs.mean);
    assert!((m.macro_f1.mean - 1.0 / 3.0).abs() < 0.02);
}
