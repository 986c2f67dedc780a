//! Raw recordings to model-ready (audio, transcript) pairs.
//!
//! Diarization and transcripts may come from sidecar files next to each
//! recording: `<stem>.segments` (`speaker start_s end_s` per line),
//! `<stem>.txt` (verbatim transcript) and `<stem>.label` (e.g. `AD`).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    content_sample_id, AudioRef, CorpusError, ManifestHeader, ManifestWriter, Provenance, SampleRecord,
};
use crate::hashing::sha256_hex;
use crate::label::{CognitiveStatus, LabelScheme, Language};
use crate::rubric::{analyze, Lexicons};
use crate::services::{AudioBlob, AudioError, ResampleQuality, ServiceError, Transcriber};

/// Participant speech is capped at 90 s.
pub const MAX_PARTICIPANT_S: f64 = 90.0;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error(transparent)]
    Decode(#[from] AudioError),
    #[error("no segments for speaker `{0}`")]
    NoSegments(String),
    #[error("segment {speaker} {start_s}-{end_s} s lies outside the {duration_s:.2} s recording")]
    SegmentOutOfRange {
        speaker: String,
        start_s: f64,
        end_s: f64,
        duration_s: f64,
    },
    #[error("{path}:{line}: {message}")]
    BadSegments { path: String, line: usize, message: String },
    #[error("transcript is empty")]
    EmptyTranscript,
    #[error("{path}: {message}")]
    MissingSidecar { path: PathBuf, message: String },
    #[error("transcription failed: {0}")]
    Transcription(#[from] ServiceError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub speaker: String,
    pub start_s: f64,
    pub end_s: f64,
}

impl Segment {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Speaker turns sorted by start time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiarizationSegments {
    segments: Vec<Segment>,
}

impl DiarizationSegments {
    pub fn new(mut segments: Vec<Segment>) -> Result<Self, PreprocessError> {
        for (i, s) in segments.iter().enumerate() {
            if !(s.start_s >= 0.0 && s.start_s < s.end_s) {
                return Err(PreprocessError::BadSegments {
                    path: "<memory>".into(),
                    line: i + 1,
                    message: format!("need 0 <= start < end, got {} {}", s.start_s, s.end_s),
                });
            }
        }
        segments.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Parses the sidecar format; `#` starts a comment.
    pub fn parse(text: &str, origin: &str) -> Result<Self, PreprocessError> {
        let mut segments = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |message: String| PreprocessError::BadSegments {
                path: origin.to_string(),
                line: i + 1,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [speaker, start, end] = fields[..] else {
                return Err(bad(format!("expected `speaker start end`, got `{line}`")));
            };
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
            let (start_s, end_s) = (num(start)?, num(end)?);
            if !(start_s >= 0.0 && start_s < end_s) {
                return Err(bad(format!("need 0 <= start < end, got {start_s} {end_s}")));
            }
            segments.push(Segment {
                speaker: speaker.to_string(),
                start_s,
                end_s,
            });
        }
        segments.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        Ok(Self { segments })
    }

    pub fn load(path: &Path) -> Result<Self, PreprocessError> {
        let text = fs::read_to_string(path).map_err(|source| PreprocessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn totals(&self) -> BTreeMap<&str, f64> {
        let mut t = BTreeMap::new();
        for s in &self.segments {
            *t.entry(s.speaker.as_str()).or_insert(0.0) += s.duration_s();
        }
        t
    }

    /// Speaker with the greatest total duration; ties go to the first name
    /// in sort order.
    pub fn majority_speaker(&self) -> Option<&str> {
        self.totals()
            .into_iter()
            .fold(None, |best: Option<(&str, f64)>, (k, v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((k, v)),
            })
            .map(|(k, _)| k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecording {
    pub path: PathBuf,
    pub sample_rate_hz: u32,
    pub channels: u16,
    pub duration_s: f64,
}

impl RawRecording {
    /// Reads the WAV header only.
    pub fn probe(path: &Path) -> Result<Self, PreprocessError> {
        let reader =
            hound::WavReader::open(path).map_err(|e| AudioError::Decode(format!("{}: {e}", path.display())))?;
        let spec = reader.spec();
        let duration_s = reader.duration() as f64 / spec.sample_rate as f64;
        if duration_s <= 0.0 {
            return Err(AudioError::Invalid(format!("{}: recording is empty", path.display())).into());
        }
        Ok(Self {
            path: path.to_path_buf(),
            sample_rate_hz: spec.sample_rate,
            channels: spec.channels,
            duration_s,
        })
    }
}

/// Channel average then resampling to 16 kHz.
pub fn standardize(raw: &RawRecording, quality: ResampleQuality) -> Result<AudioBlob, PreprocessError> {
    Ok(AudioBlob::read_wav(&raw.path)?.standardize(quality))
}

/// Concatenates the participant's turns in order, capped at 90 s.
///
/// Without `participant`, the speaker with the most total speech is used.
/// Overlapping turns of the same speaker are merged so no frame repeats.
pub fn isolate_participant(
    audio: &AudioBlob,
    segments: &DiarizationSegments,
    participant: Option<&str>,
) -> Result<AudioBlob, PreprocessError> {
    let who = match participant {
        Some(p) => p.to_string(),
        None => segments
            .majority_speaker()
            .ok_or_else(|| PreprocessError::NoSegments("<any>".into()))?
            .to_string(),
    };
    let rate = audio.sample_rate_hz as f64;
    let frames = audio.frames();
    let tolerance = 0.01;
    let mut spans: Vec<(usize, usize)> = Vec::new();
    for s in segments.segments().iter().filter(|s| s.speaker == who) {
        if s.end_s > audio.duration_s() + tolerance {
            return Err(PreprocessError::SegmentOutOfRange {
                speaker: s.speaker.clone(),
                start_s: s.start_s,
                end_s: s.end_s,
                duration_s: audio.duration_s(),
            });
        }
        let a = ((s.start_s * rate).round() as usize).min(frames);
        let b = ((s.end_s * rate).round() as usize).min(frames);
        match spans.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => spans.push((a, b)),
        }
    }
    if spans.is_empty() {
        return Err(PreprocessError::NoSegments(who));
    }
    let cap = (MAX_PARTICIPANT_S * rate).round() as usize;
    let c = audio.channels as usize;
    let mut out = Vec::with_capacity(cap.min(frames) * c);
    for (a, b) in spans {
        let taken = out.len() / c;
        if taken >= cap {
            break;
        }
        let b = b.min(a + (cap - taken));
        out.extend_from_slice(&audio.samples[a * c..b * c]);
    }
    Ok(AudioBlob::new(out, audio.sample_rate_hz, audio.channels)?)
}

/// Where a real pair lands in the run directory.
#[derive(Debug, Clone, PartialEq)]
pub struct PairContext {
    pub cohort_id: String,
    pub language: Language,
    /// Directory under the run dir for audio files.
    pub audio_dir: String,
    pub lexicons: Option<Lexicons>,
}

/// A real sample; the id is derived from the content so identical inputs
/// produce the same record.
pub fn build_pair(
    audio: &AudioBlob,
    transcript: &str,
    label: CognitiveStatus,
    ctx: &PairContext,
) -> Result<SampleRecord, PreprocessError> {
    if transcript.trim().is_empty() {
        return Err(PreprocessError::EmptyTranscript);
    }
    let wav = audio.to_wav_bytes();
    let checksum = sha256_hex(&wav);
    let transcript_hash = sha256_hex(transcript.as_bytes());
    let sample_id = content_sample_id(&transcript_hash, Some(&checksum), label.label());
    Ok(SampleRecord {
        audio_ref: Some(AudioRef {
            path: format!("{}/{sample_id}.wav", ctx.audio_dir),
            checksum,
            duration_s: audio.duration_s(),
        }),
        sample_id,
        cohort_id: ctx.cohort_id.clone(),
        language: ctx.language,
        label,
        persona: None,
        transcript: transcript.to_string(),
        transcript_hash,
        feature_profile: ctx.lexicons.as_ref().map(|l| analyze(transcript, l)),
        provenance: Provenance::Real,
        generation_meta: None,
        seed: None,
    })
}

#[derive(Debug, Clone)]
pub struct BatchConfig {
    pub cohort_id: String,
    pub language: Language,
    pub scheme: LabelScheme,
    pub quality: ResampleQuality,
    /// Participant speaker id; majority speaker when absent.
    pub participant: Option<String>,
    pub lexicons: Option<Lexicons>,
    pub master_seed: u64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct BatchReport {
    pub processed: usize,
    pub failures: Vec<(String, String)>,
    pub seal: Option<String>,
}

fn sidecar(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

fn process_one(
    path: &Path,
    cfg: &BatchConfig,
    transcriber: &dyn Transcriber,
) -> Result<(SampleRecord, AudioBlob), PreprocessError> {
    let raw = RawRecording::probe(path)?;
    let audio = standardize(&raw, cfg.quality)?;
    let seg_path = sidecar(path, "segments");
    let audio = if seg_path.exists() {
        isolate_participant(
            &audio,
            &DiarizationSegments::load(&seg_path)?,
            cfg.participant.as_deref(),
        )?
    } else {
        let whole = DiarizationSegments::new(vec![Segment {
            speaker: "participant".into(),
            start_s: 0.0,
            end_s: audio.duration_s(),
        }])?;
        isolate_participant(&audio, &whole, None)?
    };
    let transcript = transcriber.transcribe(&audio, Some(path))?;
    let label_path = sidecar(path, "label");
    let label_text = fs::read_to_string(&label_path).map_err(|e| PreprocessError::MissingSidecar {
        path: label_path.clone(),
        message: e.to_string(),
    })?;
    let label = label_text
        .trim()
        .parse()
        .and_then(|l| cfg.scheme.status(l))
        .map_err(|e| PreprocessError::MissingSidecar {
            path: label_path,
            message: e.to_string(),
        })?;
    let ctx = PairContext {
        cohort_id: cfg.cohort_id.clone(),
        language: cfg.language,
        audio_dir: "audio".into(),
        lexicons: cfg.lexicons.clone(),
    };
    Ok((build_pair(&audio, &transcript, label, &ctx)?, audio))
}

/// Preprocesses every `*.wav` under `input_dir` into `run_dir`, writing
/// `manifest.jsonl` and `audio/`. Per-file failures are reported, not fatal.
pub fn run_batch(
    input_dir: &Path,
    run_dir: &Path,
    cfg: &BatchConfig,
    transcriber: &dyn Transcriber,
) -> Result<BatchReport, PreprocessError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| PreprocessError::Io { path, source }
    };
    let mut inputs: Vec<PathBuf> = fs::read_dir(input_dir)
        .map_err(io(input_dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        .collect();
    inputs.sort();
    let results: Vec<_> = inputs.par_iter().map(|p| process_one(p, cfg, transcriber)).collect();

    let header = ManifestHeader::new(cfg.cohort_id.clone(), cfg.master_seed, None);
    let mut writer = ManifestWriter::create(&run_dir.join("manifest.jsonl"), &header)?;
    let mut report = BatchReport::default();
    let mut seen = std::collections::HashSet::new();
    for (path, result) in inputs.iter().zip(results) {
        match result {
            Ok((record, audio)) => {
                if !seen.insert(record.sample_id.clone()) {
                    report.failures.push((
                        path.display().to_string(),
                        format!("duplicate of sample {}", record.sample_id),
                    ));
                    continue;
                }
                let rel = &record.audio_ref.as_ref().expect("real pairs carry audio").path;
                audio.write_wav(&run_dir.join(rel))?;
                writer.append(record)?;
                report.processed += 1;
            }
            Err(e) => {
                log::warn!("{}: {e}", path.display());
                report.failures.push((path.display().to_string(), e.to_string()));
            }
        }
    }
    report.seal = Some(writer.seal()?);
    Ok(report)
}
