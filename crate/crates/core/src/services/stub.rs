//! Deterministic offline doubles for every service. None of them touch the
//! network.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::audio::{AudioBlob, PIPELINE_RATE};
use super::narrator::generate_for_style;
use super::{ChatModel, DecodeParams, ModelResponse, NarrativeGenerator, ServiceError, SpeechSynthesizer, Transcriber};
use crate::hashing::{hash64, sha256_hex};
use crate::label::{Label, LabelScheme, Language};
use crate::persona::{Persona, StyleDimension, StyleVector};
use crate::prompts::RenderedPrompt;
use crate::rubric::{analyze, score, Lexicons};
use crate::timbre::TimbreEntry;

/// Stub speech runs at 0.4 s per word.
pub const STUB_SECONDS_PER_WORD: f64 = 0.4;

fn response(text: String) -> ModelResponse {
    ModelResponse {
        raw_payload_hash: sha256_hex(text.as_bytes()),
        text,
        finish_reason: "stop".into(),
        latency_ms: 0,
        attempts: 1,
    }
}

fn rng_for(seed: u64, key: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ hash64(key.as_bytes()))
}

/// Narrates from fragment banks so the text scores at the persona's style.
#[derive(Debug, Clone)]
pub struct StubNarrator {
    lexicons: BTreeMap<Language, Lexicons>,
    /// Push this dimension off target (3 when the target is 1, else 1).
    pub mismatch: Option<StyleDimension>,
}

impl Default for StubNarrator {
    fn default() -> Self {
        Self::new()
    }
}

impl StubNarrator {
    pub fn new() -> Self {
        let lexicons = [Language::En, Language::Zh]
            .into_iter()
            .map(|l| (l, Lexicons::builtin(l)))
            .collect();
        Self {
            lexicons,
            mismatch: None,
        }
    }

    pub fn with_lexicons(mut self, lexicons: Lexicons) -> Self {
        self.lexicons.insert(lexicons.language, lexicons);
        self
    }

    pub fn with_mismatch(mut self, dim: StyleDimension) -> Self {
        self.mismatch = Some(dim);
        self
    }

    fn effective_style(&self, style: &StyleVector) -> StyleVector {
        let mut levels = style.levels();
        if let Some(d) = self.mismatch {
            levels[d.index()] = if levels[d.index()] == 1 { 3 } else { 1 };
        }
        StyleVector::new(levels).expect("levels stay within 1..=3")
    }
}

impl NarrativeGenerator for StubNarrator {
    fn narrate(&self, persona: &Persona, _prompt: &RenderedPrompt, seed: u64) -> Result<ModelResponse, ServiceError> {
        let lex = &self.lexicons[&persona.language];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let text = generate_for_style(&self.effective_style(&persona.style), lex, &mut rng);
        Ok(response(text))
    }
}

/// Label-conditioned rationale writer. Reads the `label` and `transcript`
/// bindings, cites counted evidence and closes with `FINAL: <label>`.
#[derive(Debug, Clone)]
pub struct StubRationaleModel {
    lexicons: Lexicons,
    scheme: LabelScheme,
    /// Sample ids (binding `sample_id`) that always get a wrong conclusion.
    pub inconsistent: HashSet<String>,
}

impl StubRationaleModel {
    pub fn new(lexicons: Lexicons, scheme: LabelScheme) -> Self {
        Self {
            lexicons,
            scheme,
            inconsistent: HashSet::new(),
        }
    }

    pub fn with_inconsistent(mut self, ids: impl IntoIterator<Item = String>) -> Self {
        self.inconsistent.extend(ids);
        self
    }

    fn wrong(&self, label: Label) -> Label {
        let labels = self.scheme.labels();
        let i = labels.iter().position(|l| *l == label).unwrap_or(0);
        labels[(i + 1) % labels.len()]
    }
}

impl ChatModel for StubRationaleModel {
    fn complete(&self, prompt: &RenderedPrompt, _decode: &DecodeParams) -> Result<ModelResponse, ServiceError> {
        let label: Label = prompt
            .binding("label")
            .ok_or_else(|| ServiceError::Protocol("rationale prompt carries no label".into()))?
            .parse()
            .map_err(|e| ServiceError::Protocol(format!("{e}")))?;
        let transcript = prompt.binding("transcript").unwrap_or("");
        let p = analyze(transcript, &self.lexicons);
        let s = score(&p);
        let concluded = match prompt.binding("sample_id") {
            Some(id) if self.inconsistent.contains(id) => self.wrong(label),
            _ => label,
        };
        let text = match self.lexicons.language {
            Language::En => format!(
                "The description runs to {} words over {} sentences (length level {}). \
                 It contains {} hesitation events, {} vague terms and {} distinct picture elements; \
                 spatial relations are named {} times. Sentence structure scores at level {}. \
                 Taken together the pattern fits {}.\nFINAL: {}",
                p.total_words,
                p.sentence_count,
                s.get(StyleDimension::NarrativeLength),
                p.disfluency_events,
                p.vague_count,
                p.key_noun_count,
                p.spatial_count,
                s.get(StyleDimension::SyntacticComplexity),
                concluded.description(Language::En),
                concluded.canonical(),
            ),
            Language::Zh => format!(
                "描述共{}个词，{}个句子（长度等级{}）。其中有{}次犹豫，{}个模糊词，提到{}个画面元素，\
                 空间关系出现{}次。句法复杂度等级为{}。综合来看符合{}的表现。\nFINAL: {}",
                p.total_words,
                p.sentence_count,
                s.get(StyleDimension::NarrativeLength),
                p.disfluency_events,
                p.vague_count,
                p.key_noun_count,
                p.spatial_count,
                s.get(StyleDimension::SyntacticComplexity),
                concluded.description(Language::Zh),
                concluded.canonical(),
            ),
        };
        Ok(response(text))
    }
}

/// How the stub classifier answers.
#[derive(Debug, Clone)]
pub enum ClassifierMode {
    /// Always the ground truth for the sample.
    Echo(HashMap<String, Label>),
    Fixed(Label),
    /// Ground truth with probability `accuracy`, otherwise a uniformly
    /// chosen wrong label.
    Random {
        truth: HashMap<String, Label>,
        accuracy: f64,
    },
    /// Thresholds the mean rubric level of the transcript.
    Rubric(Lexicons),
    /// Never names a label.
    Unparseable,
}

/// Offline classification endpoint keyed on the `sample_id` binding. The
/// per-request seed (`decode.seed`) makes rollouts differ reproducibly.
#[derive(Debug, Clone)]
pub struct StubClassifier {
    pub scheme: LabelScheme,
    pub mode: ClassifierMode,
}

impl StubClassifier {
    pub fn new(scheme: LabelScheme, mode: ClassifierMode) -> Self {
        Self { scheme, mode }
    }

    fn rubric_label(&self, transcript: &str, lex: &Lexicons) -> Label {
        let levels = score(&analyze(transcript, lex)).as_vector().levels();
        let mean = levels.iter().map(|&l| l as f64).sum::<f64>() / levels.len() as f64;
        match self.scheme {
            LabelScheme::Binary if mean < 1.9 => Label::Ad,
            LabelScheme::Binary => Label::NonAd,
            LabelScheme::Ternary if mean < 1.7 => Label::Ad,
            LabelScheme::Ternary if mean < 2.3 => Label::Mci,
            LabelScheme::Ternary => Label::Hc,
        }
    }
}

impl ChatModel for StubClassifier {
    fn complete(&self, prompt: &RenderedPrompt, decode: &DecodeParams) -> Result<ModelResponse, ServiceError> {
        let id = prompt.binding("sample_id").unwrap_or("");
        let truth_of = |m: &HashMap<String, Label>| {
            m.get(id)
                .copied()
                .ok_or_else(|| ServiceError::Protocol(format!("stub has no ground truth for `{id}`")))
        };
        let label = match &self.mode {
            ClassifierMode::Echo(m) => truth_of(m)?,
            ClassifierMode::Fixed(l) => *l,
            ClassifierMode::Random { truth, accuracy } => {
                let t = truth_of(truth)?;
                let mut rng = rng_for(decode.seed.unwrap_or(0), id);
                if rng.random_bool(accuracy.clamp(0.0, 1.0)) {
                    t
                } else {
                    let others: Vec<Label> = self.scheme.labels().iter().copied().filter(|l| *l != t).collect();
                    others[rng.random_range(0..others.len())]
                }
            }
            ClassifierMode::Rubric(lex) => self.rubric_label(prompt.binding("transcript").unwrap_or(""), lex),
            ClassifierMode::Unparseable => return Ok(response("The evidence is inconclusive.".into())),
        };
        Ok(response(format!("Assessment complete.\nFINAL: {}", label.canonical())))
    }
}

/// Words for timing: whitespace-separated runs, with every CJK character
/// counted on its own.
pub fn spoken_word_count(text: &str) -> usize {
    text.split_whitespace()
        .map(|w| {
            let cjk = w.chars().filter(|c| c.is_alphabetic() && !c.is_ascii()).count();
            let rest = w.chars().any(|c| c.is_ascii_alphanumeric()) as usize;
            cjk + rest
        })
        .sum()
}

/// Placeholder speech: one Hann-enveloped noise burst per word.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubTts;

impl SpeechSynthesizer for StubTts {
    fn synthesize(&self, text: &str, reference: &TimbreEntry, seed: u64) -> Result<AudioBlob, ServiceError> {
        let words = spoken_word_count(text);
        if words == 0 {
            return Err(ServiceError::EmptyInput("text to synthesize".into()));
        }
        let per_word = (STUB_SECONDS_PER_WORD * PIPELINE_RATE as f64).round() as usize;
        let mut rng = rng_for(seed, &reference.timbre_id);
        let mut samples = Vec::with_capacity(words * per_word);
        for _ in 0..words {
            let gain = rng.random_range(2000.0..6000.0);
            for k in 0..per_word {
                let env = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / (per_word - 1) as f64).cos();
                samples.push((rng.random_range(-1.0..1.0) * gain * env) as i16);
            }
        }
        Ok(AudioBlob::mono16k(samples))
    }
}

/// Echoes the transcript sidecar (`<audio>.txt`) stored beside the audio.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubTranscriber;

impl Transcriber for StubTranscriber {
    fn transcribe(&self, audio: &AudioBlob, source: Option<&Path>) -> Result<String, ServiceError> {
        if audio.is_empty() {
            return Err(ServiceError::EmptyInput("zero-length audio".into()));
        }
        let source = source.ok_or_else(|| ServiceError::Config("stub transcriber needs the audio path".into()))?;
        let sidecar = source.with_extension("txt");
        let text = std::fs::read_to_string(&sidecar)
            .map_err(|e| ServiceError::Protocol(format!("sidecar {}: {e}", sidecar.display())))?;
        Ok(text.trim_end_matches(['\n', '\r']).to_string())
    }
}
