//! Run orchestration: persona-conditioned synthesis with rubric validation,
//! label-conditioned rationale distillation and SFT export.
//!
//! Run directory layout: `manifest.jsonl`, `audio/`, `sft/train.jsonl`,
//! `reports/`.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    content_sample_id, derive_seed, failed_sample_id, AudioRef, CohortManifest, CorpusError, CotRecord, GenerationMeta,
    ManifestHeader, ManifestWriter, Provenance, RecordFlag, SampleRecord,
};
use crate::evaluate::{parse_label, EvalSample, ParseRules};
use crate::hashing::sha256_hex;
use crate::label::{Label, LabelScheme, Language};
use crate::persona::{sample_persona, CohortPlan, PersonaError, PersonaSlot, Sex, StyleSamplerParams};
use crate::prompts::{
    cls_bindings, cot_bindings, label_tokens_in, render, syn_bindings, PromptError, PromptTemplate, TemplateId,
    TemplateSet,
};
use crate::rubric::{analyze, score, validate, FeatureProfile, Lexicons, ValidationPolicy};
use crate::services::{
    normalize_transcript, ChatModel, DecodeParams, NarrativeGenerator, ServiceError, SpeechSynthesizer,
};
use crate::timbre::{AgeBucket, TimbreError, TimbreLibrary};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const AUDIO_DIR: &str = "audio";
pub const SFT_FILE: &str = "sft/train.jsonl";
pub const REPORTS_DIR: &str = "reports";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Persona(#[from] PersonaError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Timbre(#[from] TimbreError),
    #[error("synthesis prompt mentions labels {0:?}")]
    LabelLeak(Vec<Label>),
    #[error("endpoint unreachable: {0}")]
    Unreachable(ServiceError),
    #[error("{failed} of {total} slots failed, above the {threshold:.0}% threshold")]
    FailureThreshold {
        failed: usize,
        total: usize,
        threshold: f64,
        report: Box<CohortReport>,
    },
    #[error("sample {0} is not in the manifest")]
    UnresolvedSample(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Rejection-sampling protocol for narratives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationPolicy {
    pub max_retries: u32,
    pub validation: ValidationPolicy,
    pub keep_best_on_exhaustion: bool,
    /// A cohort run fails when more than this fraction of slots fail.
    pub failure_threshold: f64,
}

impl GenerationPolicy {
    /// 5/5 matching, for the deterministic stub narrator.
    pub fn stub() -> Self {
        Self {
            max_retries: 4,
            validation: ValidationPolicy::strict(),
            keep_best_on_exhaustion: true,
            failure_threshold: 0.10,
        }
    }

    /// 4/5 matching, for live models.
    pub fn live() -> Self {
        Self {
            validation: ValidationPolicy::live(),
            ..Self::stub()
        }
    }
}

/// Everything a synthesis run needs, configured for one language.
#[derive(Clone)]
pub struct PipelineDeps {
    pub narrator: Arc<dyn NarrativeGenerator>,
    pub tts: Arc<dyn SpeechSynthesizer>,
    pub lexicons: Lexicons,
    pub templates: TemplateSet,
    pub timbres: Arc<TimbreLibrary>,
    pub sampler: StyleSamplerParams,
    pub stimulus: String,
    pub run_dir: PathBuf,
}

struct Attempt {
    text: String,
    profile: FeatureProfile,
    matched: usize,
    pass: bool,
}

/// One slot through persona sampling, narration with validation retries,
/// timbre selection and speech synthesis. Service failures are recorded on
/// the returned record (and echoed as the second value).
pub fn generate_sample(
    slot: &PersonaSlot,
    deps: &PipelineDeps,
    policy: &GenerationPolicy,
    cohort_id: &str,
) -> Result<(SampleRecord, Option<ServiceError>), PipelineError> {
    let persona = sample_persona(slot, &deps.sampler)?;
    let template = deps.templates.get(TemplateId::Syn);
    let prompt = render(template, &syn_bindings(&persona, &deps.stimulus))?;
    let leaked = label_tokens_in(&prompt.full_text(), slot.status.scheme());
    if !leaked.is_empty() {
        return Err(PipelineError::LabelLeak(leaked));
    }

    let mut meta = GenerationMeta {
        template_version: template.version_hash,
        timbre_id: None,
        attempts: 0,
        matched_dims: 0,
        flags: Vec::new(),
        error: None,
    };
    let failed = |mut meta: GenerationMeta, flag, e: &ServiceError| {
        meta.flags.push(flag);
        meta.error = Some(e.to_string());
        SampleRecord {
            sample_id: failed_sample_id(&persona.persona_id),
            cohort_id: cohort_id.to_string(),
            language: persona.language,
            label: persona.status,
            persona: Some(persona.clone()),
            audio_ref: None,
            transcript: String::new(),
            transcript_hash: sha256_hex(b""),
            feature_profile: None,
            provenance: Provenance::Synthetic,
            generation_meta: Some(meta),
            seed: Some(slot.seed),
        }
    };

    let mut best: Option<Attempt> = None;
    for k in 0..=policy.max_retries {
        meta.attempts = k + 1;
        let seed = derive_seed(slot.seed, "narrate", k as u64);
        let text = match deps.narrator.narrate(&persona, &prompt, seed) {
            Ok(r) => normalize_transcript(&r.text),
            Err(e) => return Ok((failed(meta, RecordFlag::GenerationFailed, &e), Some(e))),
        };
        let profile = analyze(&text, &deps.lexicons);
        let v = validate(&score(&profile), &persona.style, &policy.validation);
        let attempt = Attempt {
            text,
            profile,
            matched: v.matched_dims,
            pass: v.pass,
        };
        if best.as_ref().is_none_or(|b| attempt.matched > b.matched) {
            best = Some(attempt);
        }
        if v.pass {
            break;
        }
    }
    let best = best.expect("at least one attempt runs");
    meta.matched_dims = best.matched;
    let transcript_hash = sha256_hex(best.text.as_bytes());
    let mut record = SampleRecord {
        sample_id: content_sample_id(&transcript_hash, None, persona.status.label()),
        cohort_id: cohort_id.to_string(),
        language: persona.language,
        label: persona.status,
        persona: Some(persona.clone()),
        audio_ref: None,
        transcript: best.text,
        transcript_hash,
        feature_profile: Some(best.profile),
        provenance: Provenance::Synthetic,
        generation_meta: None,
        seed: Some(slot.seed),
    };
    if !best.pass {
        if !policy.keep_best_on_exhaustion {
            meta.flags.push(RecordFlag::Rejected);
            record.generation_meta = Some(meta);
            return Ok((record, None));
        }
        meta.flags.push(RecordFlag::ValidationExhausted);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(slot.seed, "timbre", 0));
    let bucket = AgeBucket::from_age(persona.demographics.age);
    let timbre = deps.timbres.select(persona.demographics.sex, Some(bucket), &mut rng)?;
    meta.timbre_id = Some(timbre.timbre_id.clone());
    let audio = match deps
        .tts
        .synthesize(&record.transcript, timbre, derive_seed(slot.seed, "speech", 0))
    {
        Ok(a) => a.standardize(Default::default()),
        Err(e) => return Ok((failed(meta, RecordFlag::SpeechFailed, &e), Some(e))),
    };
    let wav = audio.to_wav_bytes();
    let checksum = sha256_hex(&wav);
    record.sample_id = content_sample_id(&record.transcript_hash, Some(&checksum), persona.status.label());
    let rel = format!("{AUDIO_DIR}/{}.wav", record.sample_id);
    let path = deps.run_dir.join(&rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(&path, &wav).map_err(io_err(&path))?;
    let sidecar = path.with_extension("txt");
    fs::write(&sidecar, format!("{}\n", record.transcript)).map_err(io_err(&sidecar))?;
    record.audio_ref = Some(AudioRef {
        path: rel,
        checksum,
        duration_s: audio.duration_s(),
    });
    record.generation_meta = Some(meta);
    Ok((record, None))
}

/// Controls for [`generate_cohort`].
#[derive(Debug, Clone, Default)]
pub struct CohortRunOptions {
    /// Stop after this many new records without sealing (an interruption).
    pub max_new: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    pub total_slots: usize,
    pub new_records: usize,
    pub skipped: usize,
    pub failed: usize,
    pub flagged: usize,
    pub seal: Option<String>,
}

/// Generates every pending slot of `plan` into `<run_dir>/manifest.jsonl`.
///
/// Slots already present in an unsealed manifest (by persona id) are
/// skipped. Work runs on the current rayon pool; records are appended in
/// slot order, so the manifest does not depend on the worker count.
pub fn generate_cohort(
    plan: &CohortPlan,
    deps: &PipelineDeps,
    policy: &GenerationPolicy,
    options: &CohortRunOptions,
) -> Result<(CohortManifest, CohortReport), PipelineError> {
    for sex in [Sex::Female, Sex::Male] {
        if plan.slots.iter().any(|s| s.sex == sex) && !deps.timbres.entries().iter().any(|e| e.sex == sex) {
            return Err(TimbreError::NoMatch(sex).into());
        }
    }
    let path = deps.run_dir.join(MANIFEST_FILE);
    let mut writer = if path.exists() {
        ManifestWriter::resume(&path)?.0
    } else {
        let header = ManifestHeader::new(plan.cohort_id.clone(), plan.master_seed, Some(plan.spec.clone()));
        ManifestWriter::create(&path, &header)?
    };
    let done: HashSet<String> = writer
        .records()
        .iter()
        .filter_map(|r| r.persona_id().map(str::to_string))
        .collect();
    let pending: Vec<&PersonaSlot> = plan.slots.iter().filter(|s| !done.contains(&s.persona_id)).collect();
    let mut report = CohortReport {
        total_slots: plan.len(),
        skipped: plan.len() - pending.len(),
        ..Default::default()
    };
    let limit = options.max_new.unwrap_or(usize::MAX).min(pending.len());
    let chunk = rayon::current_num_threads().max(1) * 4;
    for batch in pending[..limit].chunks(chunk) {
        let results: Vec<_> = batch
            .par_iter()
            .map(|slot| generate_sample(slot, deps, policy, &plan.cohort_id))
            .collect();
        for result in results {
            let (record, error) = result?;
            if let Some(e) = error.filter(ServiceError::is_unreachable) {
                return Err(PipelineError::Unreachable(e));
            }
            report.new_records += 1;
            report.failed += record.is_failed() as usize;
            report.flagged += record.is_flagged() as usize;
            writer.append(record)?;
        }
    }
    if limit < pending.len() {
        let manifest = crate::corpus::read_manifest(&path)?;
        return Ok((manifest, report));
    }
    let failed_total = writer.records().iter().filter(|r| r.is_failed()).count();
    report.seal = Some(writer.seal()?);
    let manifest = crate::corpus::read_manifest(&path)?;
    if failed_total as f64 > policy.failure_threshold * plan.len() as f64 {
        return Err(PipelineError::FailureThreshold {
            failed: failed_total,
            total: plan.len(),
            threshold: policy.failure_threshold * 100.0,
            report: Box::new(report),
        });
    }
    Ok((manifest, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    pub scheme: LabelScheme,
    pub language: Language,
    pub parse_rules: ParseRules,
    pub decode: DecodeParams,
    pub master_seed: u64,
    pub stimulus: String,
}

impl DistillConfig {
    pub fn new(scheme: LabelScheme, language: Language, stimulus: impl Into<String>) -> Self {
        Self {
            scheme,
            language,
            parse_rules: ParseRules::default_for(scheme, language),
            decode: DecodeParams::evaluation(),
            master_seed: 0,
            stimulus: stimulus.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistillReport {
    pub records: Vec<CotRecord>,
    /// (sample_id, reason) for rationales whose conclusion never matched.
    pub dropped: Vec<(String, String)>,
    /// (sample_id, error) for service failures.
    pub failed: Vec<(String, String)>,
}

impl DistillReport {
    pub fn dropped_inconsistent(&self) -> usize {
        self.dropped.len()
    }
}

enum CotOutcome {
    Kept(CotRecord),
    Dropped(String),
    Failed(ServiceError),
}

/// Label-conditioned rationales. A rationale whose parsed conclusion differs
/// from the ground truth is retried once with a fresh seed, then dropped.
pub fn distill_cot(
    samples: &[EvalSample],
    model: &dyn ChatModel,
    template: &PromptTemplate,
    cfg: &DistillConfig,
) -> Result<DistillReport, PipelineError> {
    let outcomes: Vec<Result<CotOutcome, PipelineError>> = samples
        .par_iter()
        .map(|s| {
            let mut b = cot_bindings(&s.transcript, s.label, cfg.language, &cfg.stimulus);
            b.insert("sample_id".into(), s.sample_id.clone());
            let mut prompt = render(template, &b)?;
            if let Some(a) = &s.audio_path {
                prompt = prompt.with_attachment(a);
            }
            let mut last = None;
            for attempt in 0..2u64 {
                let seed = derive_seed(cfg.master_seed, &format!("cot/{}", s.sample_id), attempt);
                let resp = match model.complete(&prompt, &cfg.decode.with_seed(seed)) {
                    Ok(r) => r,
                    Err(e) => return Ok(CotOutcome::Failed(e)),
                };
                let parsed = parse_label(&resp.text, cfg.scheme, &cfg.parse_rules);
                if parsed.label() == Some(s.label) {
                    return Ok(CotOutcome::Kept(CotRecord {
                        sample_id: s.sample_id.clone(),
                        rationale: resp.text,
                        label: s.label,
                        prompt_version: template.version_hash,
                        parsed_conclusion: s.label,
                    }));
                }
                last = Some(parsed);
            }
            Ok(CotOutcome::Dropped(format!(
                "conclusion {:?} does not match label {} after 2 attempts",
                last.expect("two attempts ran"),
                s.label
            )))
        })
        .collect();
    let mut report = DistillReport::default();
    for (s, outcome) in samples.iter().zip(outcomes) {
        match outcome? {
            CotOutcome::Kept(r) => report.records.push(r),
            CotOutcome::Dropped(reason) => {
                log::info!("dropping rationale for {}: {reason}", s.sample_id);
                report.dropped.push((s.sample_id.clone(), reason));
            }
            CotOutcome::Failed(e) if e.is_unreachable() => return Err(PipelineError::Unreachable(e)),
            CotOutcome::Failed(e) => report.failed.push((s.sample_id.clone(), e.to_string())),
        }
    }
    Ok(report)
}

#[derive(Serialize)]
struct SftAudio<'a> {
    path: &'a str,
    checksum: &'a str,
}

#[derive(Serialize)]
struct SftMessage<'a> {
    role: &'static str,
    content: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    audio_ref: Option<SftAudio<'a>>,
}

#[derive(Serialize)]
struct SftExample<'a> {
    sample_id: &'a str,
    messages: Vec<SftMessage<'a>>,
}

/// Rationale text with any final-answer lines removed and one canonical
/// `FINAL: <label>` appended.
pub fn assistant_target(rationale: &str, label: Label) -> String {
    let tag = Regex::new(r"(?im)^\W*final\W*[:：].*$").expect("pattern compiles");
    let body = tag.replace_all(rationale, "");
    format!("{}\n\nFINAL: {}", body.trim(), label.canonical())
}

/// One chat example per rationale: the classification prompt as system and
/// user turns (with the audio reference) and the rationale as the answer.
pub fn export_sft(
    cot: &[CotRecord],
    manifest: &CohortManifest,
    cls_template: &PromptTemplate,
    stimulus: &str,
    path: &Path,
) -> Result<usize, PipelineError> {
    let index = manifest.index();
    let mut body = String::new();
    for c in cot {
        let r = index
            .get(c.sample_id.as_str())
            .ok_or_else(|| PipelineError::UnresolvedSample(c.sample_id.clone()))?;
        let prompt = render(
            cls_template,
            &cls_bindings(&r.transcript, r.label.scheme(), r.language, stimulus),
        )?;
        let mut messages: Vec<SftMessage> = prompt
            .messages
            .iter()
            .map(|m| SftMessage {
                role: match m.role {
                    crate::prompts::Role::System => "system",
                    crate::prompts::Role::User => "user",
                },
                content: m.content.clone(),
                audio_ref: None,
            })
            .collect();
        if let Some(user) = messages.iter_mut().rev().find(|m| m.role == "user") {
            user.audio_ref = r.audio_ref.as_ref().map(|a| SftAudio {
                path: &a.path,
                checksum: &a.checksum,
            });
        }
        messages.push(SftMessage {
            role: "assistant",
            content: assistant_target(&c.rationale, c.label),
            audio_ref: None,
        });
        let line = SftExample {
            sample_id: &c.sample_id,
            messages,
        };
        body.push_str(&serde_json::to_string(&line).expect("example serializes"));
        body.push('\n');
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, body).map_err(io_err(path))?;
    Ok(cot.len())
}
