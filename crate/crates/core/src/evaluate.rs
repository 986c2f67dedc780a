//! N-rollout classification, label parsing and the metrics layer:
//! macro-F1, average accuracy (AVS), best-of-N, stratified
//! sensitivity/specificity and Mann–Whitney group comparisons.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::corpus::{derive_seed, CohortManifest, DatasetSplit};
use crate::label::{Label, LabelScheme, Language};
use crate::prompts::{cls_bindings, render, PromptError, PromptTemplate};
use crate::rubric::FeatureProfile;
use crate::services::{ChatModel, DecodeParams, ServiceError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{predictions} predictions for {expected} (sample, rollout) pairs")]
    LengthMismatch { predictions: usize, expected: usize },
    #[error("sample {sample_id} rollout {rollout}: {problem}")]
    Coverage {
        sample_id: String,
        rollout: usize,
        problem: &'static str,
    },
    #[error("no samples in stratum {0:?}")]
    EmptyStratum(Transition),
    #[error("stratification needs ternary labels, found {0}")]
    NotTernary(Label),
    #[error("all values identical in both groups")]
    DegenerateGroup,
    #[error("group comparison needs at least two nonempty groups")]
    InsufficientGroups,
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("n_rollouts must be at least 1")]
    NoRollouts,
    #[error("sample {0} is not in the manifest")]
    UnresolvedSample(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("endpoint unreachable: {0}")]
    Unreachable(ServiceError),
}

/// A parsed answer; `Unparseable` acts as a reject pseudo-class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parsed {
    Label(Label),
    Unparseable,
}

impl Parsed {
    pub fn label(self) -> Option<Label> {
        match self {
            Parsed::Label(l) => Some(l),
            Parsed::Unparseable => None,
        }
    }
}

/// Final-answer tag and synonym table (lowercase) for one scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseRules {
    pub tag: String,
    pub synonyms: Vec<(String, Label)>,
}

const EN_TERNARY: &[(&str, Label)] = &[
    ("hc", Label::Hc),
    ("healthy control", Label::Hc),
    ("healthy", Label::Hc),
    ("normal", Label::Hc),
    ("cognitively normal", Label::Hc),
    ("cognitively intact", Label::Hc),
    ("mci", Label::Mci),
    ("mild cognitive impairment", Label::Mci),
    ("ad", Label::Ad),
    ("alzheimer's disease", Label::Ad),
    ("alzheimer's", Label::Ad),
    ("alzheimer", Label::Ad),
    ("dementia", Label::Ad),
];

const EN_BINARY: &[(&str, Label)] = &[
    ("non-ad", Label::NonAd),
    ("non ad", Label::NonAd),
    ("nonad", Label::NonAd),
    ("not ad", Label::NonAd),
    ("no alzheimer's disease", Label::NonAd),
    ("non-alzheimer's", Label::NonAd),
    ("no dementia", Label::NonAd),
    ("hc", Label::NonAd),
    ("healthy", Label::NonAd),
    ("normal", Label::NonAd),
    ("cognitively normal", Label::NonAd),
    ("mci", Label::NonAd),
    ("mild cognitive impairment", Label::NonAd),
    ("ad", Label::Ad),
    ("alzheimer's disease", Label::Ad),
    ("alzheimer's", Label::Ad),
    ("alzheimer", Label::Ad),
    ("dementia", Label::Ad),
];

const ZH_TERNARY: &[(&str, Label)] = &[
    ("健康对照", Label::Hc),
    ("健康", Label::Hc),
    ("正常", Label::Hc),
    ("认知正常", Label::Hc),
    ("轻度认知障碍", Label::Mci),
    ("轻度认知损害", Label::Mci),
    ("轻度认知功能障碍", Label::Mci),
    ("阿尔茨海默病", Label::Ad),
    ("阿尔茨海默症", Label::Ad),
    ("痴呆", Label::Ad),
];

const ZH_BINARY: &[(&str, Label)] = &[
    ("非阿尔茨海默病", Label::NonAd),
    ("健康", Label::NonAd),
    ("正常", Label::NonAd),
    ("轻度认知障碍", Label::NonAd),
    ("阿尔茨海默病", Label::Ad),
    ("阿尔茨海默症", Label::Ad),
    ("痴呆", Label::Ad),
];

impl ParseRules {
    /// English synonyms always apply; Mandarin ones are added for `Zh`.
    pub fn default_for(scheme: LabelScheme, language: Language) -> Self {
        let (en, zh) = match scheme {
            LabelScheme::Ternary => (EN_TERNARY, ZH_TERNARY),
            LabelScheme::Binary => (EN_BINARY, ZH_BINARY),
        };
        let mut synonyms: Vec<(String, Label)> = en.iter().map(|(s, l)| (s.to_string(), *l)).collect();
        if language == Language::Zh {
            synonyms.extend(zh.iter().map(|(s, l)| (s.to_string(), *l)));
        }
        Self {
            tag: "FINAL".into(),
            synonyms,
        }
    }
}

fn normalize(text: &str) -> String {
    text.replace(['\u{2019}', '\u{2018}'], "'").to_lowercase()
}

fn is_word_char(c: Option<char>) -> bool {
    c.is_some_and(|c| c.is_alphanumeric())
}

/// Non-overlapping synonym hits, leftmost first and longest at each start.
fn scan(text: &str, rules: &ParseRules) -> Vec<Label> {
    let mut hits: Vec<(usize, usize, Label)> = Vec::new();
    for (syn, label) in &rules.synonyms {
        let ascii = syn.is_ascii();
        for (start, m) in text.match_indices(syn.as_str()) {
            let end = start + m.len();
            if ascii && (is_word_char(text[..start].chars().next_back()) || is_word_char(text[end..].chars().next())) {
                continue;
            }
            hits.push((start, end, *label));
        }
    }
    hits.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
    let mut out = Vec::new();
    let mut covered = 0;
    for (start, end, label) in hits {
        if start >= covered {
            out.push(label);
            covered = end;
        }
    }
    out
}

/// Tag first (`FINAL: <label>`, last occurrence); a tag naming nothing
/// recognizable is `Unparseable`. Without a tag, the last synonym in the
/// text decides.
pub fn parse_label(text: &str, scheme: LabelScheme, rules: &ParseRules) -> Parsed {
    let text = normalize(text);
    let tag = Regex::new(&format!(
        r"(?m)\b{}[*\s]*[:：][*\s]*(.*)$",
        regex::escape(&normalize(&rules.tag))
    ))
    .expect("tag pattern compiles");
    let in_scheme = |l: &Label| scheme.contains(*l);
    if let Some(c) = tag.captures_iter(&text).last() {
        let token = c[1].trim().trim_matches(|ch: char| "*`\"'.[]()<>".contains(ch)).trim();
        if let Some((_, l)) = rules.synonyms.iter().find(|(s, l)| s == token && in_scheme(l)) {
            return Parsed::Label(*l);
        }
        if let Ok(l) = token.parse::<Label>() {
            if in_scheme(&l) {
                return Parsed::Label(l);
            }
        }
        return scan(token, rules)
            .into_iter()
            .find(in_scheme)
            .map_or(Parsed::Unparseable, Parsed::Label);
    }
    scan(&text, rules)
        .into_iter()
        .rev()
        .find(in_scheme)
        .map_or(Parsed::Unparseable, Parsed::Label)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub n_rollouts: usize,
    pub decode: DecodeParams,
    pub scheme: LabelScheme,
    pub language: Language,
    pub parse_rules: ParseRules,
    pub master_seed: u64,
}

impl EvalConfig {
    pub fn new(scheme: LabelScheme, language: Language) -> Self {
        Self {
            n_rollouts: 8,
            decode: DecodeParams::evaluation(),
            scheme,
            language,
            parse_rules: ParseRules::default_for(scheme, language),
            master_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: String,
    pub rollout_idx: usize,
    pub raw_text: String,
    pub parsed: Parsed,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// What the classifier sees for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSample {
    pub sample_id: String,
    pub transcript: String,
    pub label: Label,
    pub audio_path: Option<PathBuf>,
}

/// Resolves a split against its manifest; audio paths are joined to `run_dir`.
pub fn eval_samples(
    split: &DatasetSplit,
    manifest: &CohortManifest,
    run_dir: &std::path::Path,
) -> Result<Vec<EvalSample>, EvalError> {
    let index = manifest.index();
    split
        .samples
        .iter()
        .map(|e| {
            let r = index
                .get(e.sample_id.as_str())
                .ok_or_else(|| EvalError::UnresolvedSample(e.sample_id.clone()))?;
            Ok(EvalSample {
                sample_id: r.sample_id.clone(),
                transcript: r.transcript.clone(),
                label: r.label.label(),
                audio_path: r.audio_ref.as_ref().map(|a| run_dir.join(&a.path)),
            })
        })
        .collect()
}

/// `n_rollouts` passes over `samples`, one prediction per (sample, rollout),
/// ordered by rollout then sample. Service failures become `Unparseable`
/// with the error recorded, except an unreachable endpoint, which aborts.
pub fn run_rollouts(
    samples: &[EvalSample],
    model: &dyn ChatModel,
    template: &PromptTemplate,
    stimulus: &str,
    cfg: &EvalConfig,
) -> Result<Vec<Prediction>, EvalError> {
    if cfg.n_rollouts == 0 {
        return Err(EvalError::NoRollouts);
    }
    let mut prompts = Vec::with_capacity(samples.len());
    for s in samples {
        let mut b = cls_bindings(&s.transcript, cfg.scheme, cfg.language, stimulus);
        b.insert("sample_id".into(), s.sample_id.clone());
        let mut p = render(template, &b)?;
        if let Some(a) = &s.audio_path {
            p = p.with_attachment(a);
        }
        prompts.push(p);
    }
    let jobs: Vec<(usize, usize)> = (0..cfg.n_rollouts)
        .flat_map(|r| (0..samples.len()).map(move |i| (r, i)))
        .collect();
    let out: Vec<Prediction> = jobs
        .par_iter()
        .map(|&(r, i)| {
            let s = &samples[i];
            let seed = derive_seed(cfg.master_seed, &format!("eval/{}", s.sample_id), r as u64);
            match model.complete(&prompts[i], &cfg.decode.with_seed(seed)) {
                Ok(resp) => Prediction {
                    sample_id: s.sample_id.clone(),
                    rollout_idx: r,
                    parsed: parse_label(&resp.text, cfg.scheme, &cfg.parse_rules),
                    raw_text: resp.text,
                    error: None,
                },
                Err(e) => Prediction {
                    sample_id: s.sample_id.clone(),
                    rollout_idx: r,
                    raw_text: String::new(),
                    parsed: Parsed::Unparseable,
                    error: Some(serde_json::to_string(&e).expect("error serializes")),
                },
            }
        })
        .collect();
    if let Some(e) = out.iter().filter_map(|p| p.error.as_deref()).find_map(|e| {
        serde_json::from_str::<ServiceError>(e)
            .ok()
            .filter(ServiceError::is_unreachable)
    }) {
        return Err(EvalError::Unreachable(e));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Sample standard deviation over rollouts (N − 1); 0 for one rollout.
    pub sd: f64,
}

impl MeanSd {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: 0.0, sd: 0.0 };
        }
        if xs.iter().all(|&x| x == xs[0]) {
            return Self { mean: xs[0], sd: 0.0 };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = if n < 2 {
            0.0
        } else {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, sd }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Rows are true classes, columns predicted classes plus a final
/// `unparseable` column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub labels: Vec<Label>,
    pub matrix: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutMetrics {
    pub rollout_idx: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: BTreeMap<Label, ClassMetrics>,
    pub confusion: Confusion,
    pub unparseable: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_samples: usize,
    pub n_rollouts: usize,
    pub macro_f1: MeanSd,
    pub avs: MeanSd,
    pub bon: f64,
    pub rollouts: Vec<RolloutMetrics>,
    pub unparseable_count: usize,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Arranges predictions as `[rollout][sample]` in `truths` order, checking
/// that every pair appears exactly once.
fn grid(
    predictions: &[Prediction],
    truths: &BTreeMap<String, Label>,
    n_rollouts: usize,
) -> Result<Vec<Vec<Parsed>>, EvalError> {
    let expected = truths.len() * n_rollouts;
    if predictions.len() != expected {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            expected,
        });
    }
    let pos: HashMap<&str, usize> = truths.keys().enumerate().map(|(i, k)| (k.as_str(), i)).collect();
    let mut g: Vec<Vec<Option<Parsed>>> = vec![vec![None; truths.len()]; n_rollouts];
    for p in predictions {
        let cov = |problem| EvalError::Coverage {
            sample_id: p.sample_id.clone(),
            rollout: p.rollout_idx,
            problem,
        };
        let &i = pos.get(p.sample_id.as_str()).ok_or_else(|| cov("unknown sample"))?;
        let row = g
            .get_mut(p.rollout_idx)
            .ok_or_else(|| cov("rollout index out of range"))?;
        if row[i].replace(p.parsed).is_some() {
            return Err(cov("duplicate prediction"));
        }
    }
    Ok(g.into_iter()
        .map(|row| {
            row.into_iter()
                .map(|p| p.expect("count check leaves no gaps"))
                .collect()
        })
        .collect())
}

/// Macro-F1, AVS and BoN over `n_rollouts` passes. The class set is every
/// scheme label occurring among truths or parsed predictions.
pub fn compute_metrics(
    predictions: &[Prediction],
    truths: &BTreeMap<String, Label>,
    n_rollouts: usize,
) -> Result<MetricsReport, EvalError> {
    if n_rollouts == 0 {
        return Err(EvalError::NoRollouts);
    }
    let g = grid(predictions, truths, n_rollouts)?;
    let truth: Vec<Label> = truths.values().copied().collect();
    let labels: Vec<Label> = truth
        .iter()
        .copied()
        .chain(predictions.iter().filter_map(|p| p.parsed.label()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let col: HashMap<Label, usize> = labels.iter().enumerate().map(|(i, l)| (*l, i)).collect();
    let c = labels.len();

    let mut rollouts = Vec::with_capacity(n_rollouts);
    for (r, row) in g.iter().enumerate() {
        let mut matrix = vec![vec![0usize; c + 1]; c];
        for (t, p) in truth.iter().zip(row) {
            let j = p.label().map_or(c, |l| col[&l]);
            matrix[col[t]][j] += 1;
        }
        let correct: usize = (0..c).map(|i| matrix[i][i]).sum();
        let mut per_class = BTreeMap::new();
        for (i, l) in labels.iter().enumerate() {
            let tp = matrix[i][i];
            let predicted: usize = (0..c).map(|k| matrix[k][i]).sum();
            let support: usize = matrix[i].iter().sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            per_class.insert(
                *l,
                ClassMetrics {
                    precision,
                    recall,
                    f1: f1(precision, recall),
                    support,
                },
            );
        }
        let macro_f1 = if c == 0 {
            0.0
        } else {
            per_class.values().map(|m| m.f1).sum::<f64>() / c as f64
        };
        let unparseable = matrix.iter().map(|row| row[c]).sum();
        rollouts.push(RolloutMetrics {
            rollout_idx: r,
            accuracy: ratio(correct, truth.len()),
            macro_f1,
            per_class,
            confusion: Confusion {
                labels: labels.clone(),
                matrix,
            },
            unparseable,
        });
    }
    let accs: Vec<f64> = rollouts.iter().map(|r| r.accuracy).collect();
    let f1s: Vec<f64> = rollouts.iter().map(|r| r.macro_f1).collect();
    Ok(MetricsReport {
        n_samples: truth.len(),
        n_rollouts,
        macro_f1: MeanSd::of(&f1s),
        avs: MeanSd::of(&accs),
        bon: accs.iter().copied().fold(0.0, f64::max),
        unparseable_count: rollouts.iter().map(|r| r.unparseable).sum(),
        rollouts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transition {
    #[serde(rename = "MCI_vs_HC")]
    MciVsHc,
    #[serde(rename = "AD_vs_HC")]
    AdVsHc,
    #[serde(rename = "Impaired_vs_HC")]
    ImpairedVsHc,
}

impl Transition {
    pub const ALL: [Transition; 3] = [Transition::MciVsHc, Transition::AdVsHc, Transition::ImpairedVsHc];

    pub fn name(self) -> &'static str {
        match self {
            Transition::MciVsHc => "MCI_vs_HC",
            Transition::AdVsHc => "AD_vs_HC",
            Transition::ImpairedVsHc => "Impaired_vs_HC",
        }
    }

    /// Impaired-side membership; `None` for labels outside the pair.
    fn side(self, label: Label) -> Option<bool> {
        match (self, label) {
            (_, Label::Hc) => Some(false),
            (Transition::MciVsHc, Label::Mci) | (Transition::AdVsHc, Label::Ad) => Some(true),
            (Transition::ImpairedVsHc, Label::Mci | Label::Ad) => Some(true),
            _ => None,
        }
    }
}

impl std::str::FromStr for Transition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Transition::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown transition `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedReport {
    pub transition: Transition,
    pub n_samples: usize,
    pub sensitivity: MeanSd,
    pub specificity: MeanSd,
    pub f1: MeanSd,
}

/// Sensitivity (impaired recall), specificity (HC recall) and impaired-class
/// F1 on the samples whose truth lies in the transition's pair.
pub fn stratify(
    predictions: &[Prediction],
    truths: &BTreeMap<String, Label>,
    transition: Transition,
    n_rollouts: usize,
) -> Result<StratifiedReport, EvalError> {
    if let Some(l) = truths.values().find(|l| !LabelScheme::Ternary.contains(**l)) {
        return Err(EvalError::NotTernary(*l));
    }
    let g = grid(predictions, truths, n_rollouts)?;
    let truth: Vec<Option<bool>> = truths.values().map(|l| transition.side(*l)).collect();
    let n_samples = truth.iter().filter(|t| t.is_some()).count();
    if n_samples == 0 {
        return Err(EvalError::EmptyStratum(transition));
    }
    let (mut sens, mut spec, mut f1s) = (Vec::new(), Vec::new(), Vec::new());
    for row in &g {
        let (mut tp, mut fp, mut tn, mut pos, mut neg) = (0, 0, 0, 0, 0);
        for (t, p) in truth.iter().zip(row) {
            let Some(t) = t else { continue };
            let p = p.label().and_then(|l| transition.side(l));
            if *t {
                pos += 1;
                tp += (p == Some(true)) as usize;
            } else {
                neg += 1;
                tn += (p == Some(false)) as usize;
                fp += (p == Some(true)) as usize;
            }
        }
        let recall = ratio(tp, pos);
        sens.push(recall);
        spec.push(ratio(tn, neg));
        f1s.push(f1(ratio(tp, tp + fp), recall));
    }
    Ok(StratifiedReport {
        transition,
        n_samples,
        sensitivity: MeanSd::of(&sens),
        specificity: MeanSd::of(&spec),
        f1: MeanSd::of(&f1s),
    })
}

/// Feature names accepted by [`feature_value`].
pub const FEATURES: [&str; 16] = [
    "total_words",
    "sentence_count",
    "mean_sentence_len",
    "sentence_len_sd",
    "filler_count",
    "filler_frequency",
    "vague_count",
    "vague_frequency",
    "spatial_count",
    "spatial_frequency",
    "key_noun_count",
    "conjunction_count",
    "subordinate_marker_count",
    "repetition_count",
    "repair_count",
    "disfluency_events",
];

pub fn feature_value(p: &FeatureProfile, name: &str) -> Result<f64, EvalError> {
    Ok(match name {
        "total_words" => p.total_words as f64,
        "sentence_count" => p.sentence_count as f64,
        "mean_sentence_len" => p.mean_sentence_len,
        "sentence_len_sd" => p.sentence_len_sd,
        "filler_count" => p.filler_count as f64,
        "filler_frequency" => p.filler_frequency(),
        "vague_count" => p.vague_count as f64,
        "vague_frequency" => p.vague_frequency(),
        "spatial_count" => p.spatial_count as f64,
        "spatial_frequency" => p.spatial_frequency(),
        "key_noun_count" => p.key_noun_count as f64,
        "conjunction_count" => p.conjunction_count as f64,
        "subordinate_marker_count" => p.subordinate_marker_count as f64,
        "repetition_count" => p.repetition_count as f64,
        "repair_count" => p.repair_count as f64,
        "disfluency_events" => p.disfluency_events as f64,
        other => return Err(EvalError::UnknownFeature(other.to_string())),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U for the first sample.
    pub u: f64,
    pub z: f64,
    /// Two-sided.
    pub p_value: f64,
}

/// Two-sided Mann–Whitney U, normal approximation with tie and continuity
/// correction.
pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> Result<MannWhitney, EvalError> {
    if x.is_empty() || y.is_empty() {
        return Err(EvalError::InsufficientGroups);
    }
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    let mut all: Vec<(f64, bool)> = x
        .iter()
        .map(|&v| (v, true))
        .chain(y.iter().map(|&v| (v, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = all.len();
    let mut r1 = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        let rank = (i + j) as f64 / 2.0 + 1.0;
        r1 += all[i..=j].iter().filter(|(_, first)| *first).count() as f64 * rank;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let u = r1 - n1 * (n1 + 1.0) / 2.0;
    let nf = n as f64;
    let var = n1 * n2 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    if var <= 0.0 {
        return Err(EvalError::DegenerateGroup);
    }
    let mu = n1 * n2 / 2.0;
    let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
    let p_value = erfc(z / std::f64::consts::SQRT_2).min(1.0);
    Ok(MannWhitney {
        u,
        z: z * (u - mu).signum(),
        p_value,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub feature: String,
    pub group_a: Label,
    pub group_b: Label,
    pub n_a: usize,
    pub n_b: usize,
    pub median_a: f64,
    pub median_b: f64,
    pub test: MannWhitney,
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Mann–Whitney on `feature` for every label pair.
pub fn group_compare(
    profiles: &BTreeMap<Label, Vec<FeatureProfile>>,
    feature: &str,
) -> Result<Vec<GroupComparison>, EvalError> {
    if profiles.len() < 2 || profiles.values().any(Vec::is_empty) {
        return Err(EvalError::InsufficientGroups);
    }
    let values: Vec<(Label, Vec<f64>)> = profiles
        .iter()
        .map(|(l, ps)| {
            Ok((
                *l,
                ps.iter().map(|p| feature_value(p, feature)).collect::<Result<_, _>>()?,
            ))
        })
        .collect::<Result<_, EvalError>>()?;
    let mut out = Vec::new();
    for (i, (a, xa)) in values.iter().enumerate() {
        for (b, xb) in &values[i + 1..] {
            out.push(GroupComparison {
                feature: feature.to_string(),
                group_a: *a,
                group_b: *b,
                n_a: xa.len(),
                n_b: xb.len(),
                median_a: median(xa),
                median_b: median(xb),
                test: mann_whitney_u(xa, xb)?,
            });
        }
    }
    Ok(out)
}
