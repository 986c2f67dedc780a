//! Hand-annotated transcripts with their expected counts and band scores.

mod common;

use std::fs;

use serde::Deserialize;
use syncog::label::Language;
use syncog::persona::StyleDimension;
use syncog::rubric::{analyze, score, FeatureProfile, Lexicons};

#[derive(Debug, Deserialize, PartialEq)]
pub struct Counts {
    total_words: usize,
    sentence_count: usize,
    filler_count: usize,
    vague_count: usize,
    spatial_count: usize,
    key_noun_count: usize,
    conjunction_count: usize,
    subordinate_marker_count: usize,
    repetition_count: usize,
    repair_count: usize,
    disfluency_events: usize,
}

#[derive(Debug, Deserialize)]
struct Golden {
    language: Language,
    counts: Counts,
    scores: [u8; 5],
}

fn counts(p: &FeatureProfile) -> Counts {
    Counts {
        total_words: p.total_words,
        sentence_count: p.sentence_count,
        filler_count: p.filler_count,
        vague_count: p.vague_count,
        spatial_count: p.spatial_count,
        key_noun_count: p.key_noun_count,
        conjunction_count: p.conjunction_count,
        subordinate_marker_count: p.subordinate_marker_count,
        repetition_count: p.repetition_count,
        repair_count: p.repair_count,
        disfluency_events: p.disfluency_events,
    }
}

#[test]
fn golden_transcripts() {
    let dir = common::fixtures().join("rubric");
    let mut names: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    names.sort();
    assert_eq!(names.len(), 15);
    let mut failures = Vec::new();
    for txt in names {
        let golden: Golden = serde_json::from_str(&fs::read_to_string(txt.with_extension("json")).unwrap()).unwrap();
        let text = fs::read_to_string(&txt).unwrap();
        let p = analyze(&text, &Lexicons::builtin(golden.language));
        let got = counts(&p);
        let scores = score(&p).as_vector().levels();
        if got != golden.counts || scores != golden.scores {
            failures.push(format!(
                "{}: counts {got:?} scores {scores:?}, expected {:?} {:?}",
                txt.display(),
                golden.counts,
                golden.scores
            ));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

fn level(text: &str, dim: StyleDimension) -> u8 {
    score(&analyze(text, &Lexicons::builtin(Language::En))).get(dim)
}

#[test]
fn fluency_band_edges() {
    // fillers kept apart so they never count as repetitions
    let words = ["The", "boy", "takes", "a", "cookie", "from", "the", "jar."];
    let with = |n: usize| {
        let mut out = Vec::new();
        for (i, w) in words.iter().enumerate() {
            if i < n {
                out.push("um");
            }
            out.push(w);
        }
        out.join(" ")
    };
    let got: Vec<u8> = [1, 2, 3, 4]
        .iter()
        .map(|&n| level(&with(n), StyleDimension::Fluency))
        .collect();
    assert_eq!(got, [3, 2, 2, 1]);
}

#[test]
fn spatial_band_edges() {
    let phrases = ["under the window", "near the sink", "behind the curtain"];
    let got: Vec<u8> = (0..=3)
        .map(|n| {
            let text = format!("The boy stands {}.", phrases[..n].join(" and "));
            level(&text, StyleDimension::SpatialReference)
        })
        .collect();
    assert_eq!(got, [1, 1, 2, 3]);
}
