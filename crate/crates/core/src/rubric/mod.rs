//! Lexicon-based linguistic biomarkers and the 1–3 ordinal scoring rubric.
//!
//! Band edges used by [`score`]:
//!
//! | dimension            | 1                         | 2            | 3                               |
//! |----------------------|---------------------------|--------------|---------------------------------|
//! | narrative length     | ≤ 100 words               | 101–135      | ≥ 136                           |
//! | spatial reference    | 0–1 terms                 | 2            | ≥ 3                             |
//! | fluency              | ≥ 4 disfluency events     | 2–3          | ≤ 1                             |
//! | clarity (min of two) | ≥ 4 vague / ≤ 1 key noun  | 2–3 / 2      | ≤ 1 / ≥ 3                       |
//! | syntactic complexity | no subordinators, mean ≤ 8| otherwise    | subordinators ≥ ⌈S/3⌉, sd ≥ 3   |

mod lexicon;
mod tokenize;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lexicon::{parse_list, Lexicons, LEXICON_FILES};
pub use tokenize::{tokenize, tokenize_en, tokenize_zh, Tokenized};

use crate::label::Language;
use crate::persona::{StyleDimension, StyleVector};

#[derive(Debug, Error)]
pub enum RubricError {
    #[error("lexicon list `{list}` for {language} is empty")]
    EmptyLexicon { language: Language, list: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid validation policy: {0}")]
    InvalidPolicy(String),
}

/// Lexicon counts for one transcript.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureProfile {
    pub total_words: usize,
    pub sentence_count: usize,
    pub mean_sentence_len: f64,
    /// Population standard deviation of sentence lengths in tokens.
    pub sentence_len_sd: f64,
    pub filler_count: usize,
    pub vague_count: usize,
    pub spatial_count: usize,
    /// Distinct key nouns mentioned.
    pub key_noun_count: usize,
    pub conjunction_count: usize,
    pub subordinate_marker_count: usize,
    pub repetition_count: usize,
    pub repair_count: usize,
    /// fillers + immediate repetitions + repair markers (incl. ellipses).
    pub disfluency_events: usize,
}

impl FeatureProfile {
    /// `count / total_words`, zero for an empty transcript.
    pub fn rate(&self, count: usize) -> f64 {
        if self.total_words == 0 {
            0.0
        } else {
            count as f64 / self.total_words as f64
        }
    }

    pub fn filler_frequency(&self) -> f64 {
        self.rate(self.filler_count)
    }

    pub fn spatial_frequency(&self) -> f64 {
        self.rate(self.spatial_count)
    }

    pub fn vague_frequency(&self) -> f64 {
        self.rate(self.vague_count)
    }
}

/// Greedy longest-match phrase counter over one token list.
struct PhraseMatcher<'a> {
    entries: Vec<(Vec<&'a str>, &'a str)>,
}

impl<'a> PhraseMatcher<'a> {
    fn new(list: &'a [String]) -> Self {
        let mut entries: Vec<(Vec<&str>, &str)> = list
            .iter()
            .map(|e| (e.split_whitespace().collect::<Vec<_>>(), e.as_str()))
            .filter(|(t, _)| !t.is_empty())
            .collect();
        entries.sort_by_key(|e| std::cmp::Reverse(e.0.len()));
        Self { entries }
    }

    fn matches(&self, sentence: &[String]) -> Vec<&'a str> {
        let mut found = Vec::new();
        let mut i = 0;
        while i < sentence.len() {
            let hit = self.entries.iter().find(|(toks, _)| {
                toks.len() <= sentence.len() - i && toks.iter().zip(&sentence[i..]).all(|(a, b)| *a == b.as_str())
            });
            match hit {
                Some((toks, entry)) => {
                    found.push(*entry);
                    i += toks.len();
                }
                None => i += 1,
            }
        }
        found
    }
}

/// Counts lexicon hits over the tokenized text.
pub fn analyze(text: &str, lexicons: &Lexicons) -> FeatureProfile {
    analyze_tokens(&tokenize(text, lexicons), lexicons)
}

pub fn analyze_tokens(tok: &Tokenized, lexicons: &Lexicons) -> FeatureProfile {
    let fillers = PhraseMatcher::new(&lexicons.fillers);
    let vague = PhraseMatcher::new(&lexicons.vague_terms);
    let spatial = PhraseMatcher::new(&lexicons.spatial_terms);
    let keys = PhraseMatcher::new(&lexicons.key_nouns);
    let subs = PhraseMatcher::new(&lexicons.subordinators);
    let conj = PhraseMatcher::new(&lexicons.conjunctions);
    let repairs = PhraseMatcher::new(&lexicons.repair_markers);

    let mut p = FeatureProfile::default();
    let mut distinct_keys = HashSet::new();
    let mut lengths = Vec::with_capacity(tok.sentences.len());
    for sentence in tok.sentence_tokens() {
        lengths.push(sentence.len() as f64);
        p.filler_count += fillers.matches(sentence).len();
        p.vague_count += vague.matches(sentence).len();
        p.spatial_count += spatial.matches(sentence).len();
        for k in keys.matches(sentence) {
            distinct_keys.insert(lexicons.canonical_key_noun(k));
        }
        p.subordinate_marker_count += subs.matches(sentence).len();
        p.conjunction_count += conj.matches(sentence).len();
        p.repair_count += repairs.matches(sentence).len();
        p.repetition_count += sentence.windows(2).filter(|w| w[0] == w[1]).count();
    }
    p.repair_count += tok.ellipses;
    p.key_noun_count = distinct_keys.len();
    p.total_words = tok.tokens.len();
    p.sentence_count = tok.sentences.len();
    p.mean_sentence_len = p.total_words as f64 / p.sentence_count.max(1) as f64;
    if !lengths.is_empty() {
        let mean = lengths.iter().sum::<f64>() / lengths.len() as f64;
        let var = lengths.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / lengths.len() as f64;
        p.sentence_len_sd = var.sqrt();
    }
    p.disfluency_events = p.filler_count + p.repetition_count + p.repair_count;
    p
}

/// Rubric levels for the five style dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StyleScores(pub StyleVector);

impl StyleScores {
    pub fn get(&self, dim: StyleDimension) -> u8 {
        self.0.get(dim)
    }

    pub fn as_vector(&self) -> StyleVector {
        self.0
    }
}

fn narrative_length_score(words: usize) -> u8 {
    match words {
        0..=100 => 1,
        101..=135 => 2,
        _ => 3,
    }
}

fn spatial_score(n: usize) -> u8 {
    match n {
        0 | 1 => 1,
        2 => 2,
        _ => 3,
    }
}

fn fluency_score(events: usize) -> u8 {
    match events {
        0 | 1 => 3,
        2 | 3 => 2,
        _ => 1,
    }
}

fn clarity_score(vague: usize, key_nouns: usize) -> u8 {
    let from_vague = match vague {
        0 | 1 => 3,
        2 | 3 => 2,
        _ => 1,
    };
    let from_nouns = match key_nouns {
        0 | 1 => 1,
        2 => 2,
        _ => 3,
    };
    from_vague.min(from_nouns)
}

fn syntactic_score(p: &FeatureProfile) -> u8 {
    let needed = p.sentence_count.div_ceil(3);
    if p.sentence_count > 0 && p.subordinate_marker_count >= needed && p.sentence_len_sd >= 3.0 {
        3
    } else if p.subordinate_marker_count == 0 && p.mean_sentence_len <= 8.0 {
        1
    } else {
        2
    }
}

pub fn score(p: &FeatureProfile) -> StyleScores {
    let mut levels = [0u8; 5];
    levels[StyleDimension::NarrativeLength.index()] = narrative_length_score(p.total_words);
    levels[StyleDimension::SyntacticComplexity.index()] = syntactic_score(p);
    levels[StyleDimension::SpatialReference.index()] = spatial_score(p.spatial_count);
    levels[StyleDimension::Fluency.index()] = fluency_score(p.disfluency_events);
    levels[StyleDimension::Clarity.index()] = clarity_score(p.vague_count, p.key_noun_count);
    StyleScores(StyleVector::new(levels).expect("band scores are within 1..=3"))
}

/// How many dimensions must match the target for a narrative to be accepted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationPolicy {
    pub min_matching_dims: usize,
    pub dims_considered: BTreeSet<StyleDimension>,
    pub max_retries: u32,
}

impl ValidationPolicy {
    pub fn new(min_matching_dims: usize, max_retries: u32) -> Result<Self, RubricError> {
        let p = Self {
            min_matching_dims,
            dims_considered: StyleDimension::ALL.into_iter().collect(),
            max_retries,
        };
        p.check()?;
        Ok(p)
    }

    /// Exact 5/5 match, the setting for deterministic stub generators.
    pub fn strict() -> Self {
        Self::new(5, 4).expect("5 of 5 is valid")
    }

    /// 4/5 match, the default for live generators.
    pub fn live() -> Self {
        Self::new(4, 4).expect("4 of 5 is valid")
    }

    pub fn check(&self) -> Result<(), RubricError> {
        if self.min_matching_dims > self.dims_considered.len() {
            return Err(RubricError::InvalidPolicy(format!(
                "min_matching_dims {} exceeds the {} dimensions considered",
                self.min_matching_dims,
                self.dims_considered.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationResult {
    pub pass: bool,
    /// target − scored, for every dimension.
    pub per_dim_delta: BTreeMap<StyleDimension, i8>,
    pub matched_dims: usize,
}

pub fn validate(scores: &StyleScores, target: &StyleVector, policy: &ValidationPolicy) -> ValidationResult {
    let per_dim_delta: BTreeMap<_, _> = StyleDimension::ALL
        .iter()
        .map(|&d| (d, target.get(d) as i8 - scores.get(d) as i8))
        .collect();
    let matched_dims = policy.dims_considered.iter().filter(|d| per_dim_delta[d] == 0).count();
    ValidationResult {
        pass: matched_dims >= policy.min_matching_dims,
        per_dim_delta,
        matched_dims,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn en() -> Lexicons {
        Lexicons::builtin(Language::En)
    }

    fn profile() -> FeatureProfile {
        FeatureProfile::default()
    }

    #[test]
    fn four_ums_are_four_disfluencies() {
        let p = analyze("um the boy um reaches um for it um", &en());
        assert_eq!(p.filler_count, 4);
        assert_eq!(p.disfluency_events, 4);
    }

    #[test]
    fn empty_text_profile_is_zero() {
        assert_eq!(analyze("", &en()), FeatureProfile::default());
        assert_eq!(analyze("   \n ", &en()), FeatureProfile::default());
    }

    #[test]
    fn multiword_entries_and_repairs() {
        let p = analyze(
            "The stool is next to the sink, I mean the the cupboard... Cookies!",
            &en(),
        );
        assert_eq!(p.spatial_count, 1);
        assert_eq!(p.repair_count, 2);
        assert_eq!(p.repetition_count, 1);
        assert_eq!(p.key_noun_count, 3);
        assert_eq!(p.disfluency_events, 3);
        assert_eq!(p.sentence_count, 1);
    }

    #[test]
    fn plural_and_singular_count_once() {
        let p = analyze("A cookie. Two cookies. The jar.", &en());
        assert_eq!(p.key_noun_count, 2);
    }

    #[test]
    fn fluency_band_edges() {
        let levels: Vec<u8> = (0..=5)
            .map(|n| {
                score(&FeatureProfile {
                    disfluency_events: n,
                    ..profile()
                })
                .get(StyleDimension::Fluency)
            })
            .collect();
        assert_eq!(levels, [3, 3, 2, 2, 1, 1]);
    }

    #[test]
    fn spatial_band_edges() {
        let levels: Vec<u8> = (0..=4)
            .map(|n| {
                score(&FeatureProfile {
                    spatial_count: n,
                    ..profile()
                })
                .get(StyleDimension::SpatialReference)
            })
            .collect();
        assert_eq!(levels, [1, 1, 2, 3, 3]);
    }

    #[test]
    fn length_band_edges() {
        let at = |w| {
            score(&FeatureProfile {
                total_words: w,
                ..profile()
            })
            .get(StyleDimension::NarrativeLength)
        };
        assert_eq!((at(100), at(101), at(135), at(136)), (1, 2, 2, 3));
    }

    #[test]
    fn clarity_takes_the_minimum() {
        let c = |v, k| {
            score(&FeatureProfile {
                vague_count: v,
                key_noun_count: k,
                ..profile()
            })
            .get(StyleDimension::Clarity)
        };
        assert_eq!(c(1, 3), 3);
        assert_eq!(c(1, 2), 2);
        assert_eq!(c(3, 5), 2);
        assert_eq!(c(4, 5), 1);
        assert_eq!(c(0, 1), 1);
    }

    #[test]
    fn syntactic_levels() {
        let s = |sub, n, mean, sd| {
            score(&FeatureProfile {
                subordinate_marker_count: sub,
                sentence_count: n,
                mean_sentence_len: mean,
                sentence_len_sd: sd,
                ..profile()
            })
            .get(StyleDimension::SyntacticComplexity)
        };
        assert_eq!(s(0, 10, 6.0, 1.0), 1);
        assert_eq!(s(0, 10, 11.0, 1.0), 2);
        assert_eq!(s(4, 10, 11.0, 3.5), 3);
        assert_eq!(s(3, 10, 11.0, 3.5), 2);
        assert_eq!(s(4, 10, 11.0, 2.9), 2);
    }

    #[test]
    fn validation_examples() {
        let target = StyleVector::new([1, 2, 3, 2, 1]).unwrap();
        let exact = StyleScores(target);
        let r = validate(&exact, &target, &ValidationPolicy::strict());
        assert!(r.pass);
        assert!(r.per_dim_delta.values().all(|d| *d == 0));

        let one_off = StyleScores(StyleVector::new([1, 2, 3, 3, 1]).unwrap());
        let r = validate(&one_off, &target, &ValidationPolicy::new(4, 0).unwrap());
        assert!(r.pass);
        assert_eq!(r.matched_dims, 4);
        assert_eq!(r.per_dim_delta[&StyleDimension::Fluency], -1);

        let all_off = StyleScores(StyleVector::new([2, 3, 1, 1, 3]).unwrap());
        assert!(!validate(&all_off, &target, &ValidationPolicy::new(3, 0).unwrap()).pass);
    }

    #[test]
    fn policy_cannot_require_more_than_considered() {
        let mut p = ValidationPolicy::strict();
        p.dims_considered.remove(&StyleDimension::Clarity);
        assert!(p.check().is_err());
    }

    #[test]
    fn case_and_outer_whitespace_do_not_matter() {
        let a = analyze("The boy is on the stool. Um, the water!", &en());
        let b = analyze("   THE BOY IS ON THE STOOL. UM, THE WATER!\n\n", &en());
        assert_eq!(a, b);
    }
}
