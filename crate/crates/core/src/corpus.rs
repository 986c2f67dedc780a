//! Sample records, cohort manifests, dataset splits and real/synthetic mixing.
//!
//! A manifest is JSONL: a header line whose first key is
//! `"schema":"syncog-manifest/1"`, one [`SampleRecord`] per line, and, once the
//! run completes, a trailing seal line `{"seal":"<sha256>","records":n}` over
//! the record lines.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::hashing::{hash_parts, sha256_hex, VersionHash};
use crate::label::{CognitiveStatus, Label, Language};
use crate::persona::{CohortSpec, Persona};
use crate::rubric::FeatureProfile;

pub const MANIFEST_SCHEMA: &str = "syncog-manifest/1";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("manifest schema `{found}` is not supported (expected `{MANIFEST_SCHEMA}`)")]
    SchemaVersionMismatch { found: String },
    #[error("checksum mismatch for samples: {}", .0.join(", "))]
    ChecksumMismatch(Vec<String>),
    #[error("manifest {0} is sealed; records can no longer be appended")]
    AlreadySealed(PathBuf),
    #[error("class {class}: need {needed} synthetic samples, only {available} available")]
    InsufficientSynthetic {
        class: Label,
        needed: usize,
        available: usize,
    },
    #[error("splits overlap on sample {0}")]
    Overlap(String),
    #[error("split `{split}` references unknown sample {sample_id}")]
    UnknownSample { split: String, sample_id: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Stable 64-bit seed for `(master_seed, namespace, index)`, identical across
/// platforms.
pub fn derive_seed(master_seed: u64, namespace: &str, index: u64) -> u64 {
    let d = hash_parts(&[&master_seed.to_le_bytes(), namespace.as_bytes(), &index.to_le_bytes()]);
    u64::from_le_bytes(d[..8].try_into().expect("32-byte digest"))
}

/// Content-derived id: hash of (transcript hash, audio checksum, label).
pub fn content_sample_id(transcript_hash: &str, audio_checksum: Option<&str>, label: Label) -> String {
    let d = hash_parts(&[
        transcript_hash.as_bytes(),
        audio_checksum.unwrap_or("").as_bytes(),
        label.canonical().as_bytes(),
    ]);
    hex::encode(&d[..8])
}

/// Id for a synthetic slot that produced no usable content.
pub fn failed_sample_id(persona_id: &str) -> String {
    let d = hash_parts(&[b"failed", persona_id.as_bytes()]);
    hex::encode(&d[..8])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Real,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioRef {
    /// Relative to the run directory.
    pub path: String,
    pub checksum: String,
    pub duration_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordFlag {
    /// Retries exhausted; the best-matching attempt was kept.
    ValidationExhausted,
    /// Retries exhausted and keep-best disabled; no audio synthesized.
    Rejected,
    GenerationFailed,
    SpeechFailed,
}

impl RecordFlag {
    /// Flags that make a record unusable for training or evaluation.
    pub fn is_failure(self) -> bool {
        !matches!(self, RecordFlag::ValidationExhausted)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationMeta {
    pub template_version: VersionHash,
    pub timbre_id: Option<String>,
    pub attempts: u32,
    pub matched_dims: usize,
    #[serde(default)]
    pub flags: Vec<RecordFlag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// One multimodal sample `(audio, transcript)` with its label and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub cohort_id: String,
    pub language: Language,
    pub label: CognitiveStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persona: Option<Persona>,
    pub audio_ref: Option<AudioRef>,
    pub transcript: String,
    pub transcript_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_profile: Option<FeatureProfile>,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation_meta: Option<GenerationMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SampleRecord {
    pub fn flags(&self) -> &[RecordFlag] {
        self.generation_meta.as_ref().map(|m| m.flags.as_slice()).unwrap_or(&[])
    }

    pub fn is_failed(&self) -> bool {
        self.flags().iter().any(|f| f.is_failure())
    }

    pub fn is_flagged(&self) -> bool {
        !self.flags().is_empty()
    }

    pub fn persona_id(&self) -> Option<&str> {
        self.persona.as_ref().map(|p| p.persona_id.as_str())
    }

    pub fn expected_sample_id(&self) -> String {
        if self.is_failed() && self.audio_ref.is_none() && self.transcript.is_empty() {
            if let Some(pid) = self.persona_id() {
                return failed_sample_id(pid);
            }
        }
        content_sample_id(
            &self.transcript_hash,
            self.audio_ref.as_ref().map(|a| a.checksum.as_str()),
            self.label.label(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub schema: String,
    pub cohort_id: String,
    pub created_at: String,
    pub tool_version: String,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<CohortSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl ManifestHeader {
    pub fn new(cohort_id: impl Into<String>, master_seed: u64, spec: Option<CohortSpec>) -> Self {
        Self {
            schema: MANIFEST_SCHEMA.to_string(),
            cohort_id: cohort_id.into(),
            created_at: now_rfc3339(),
            tool_version: TOOL_VERSION.to_string(),
            master_seed,
            spec,
            config_hash: None,
        }
    }
}

pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortManifest {
    pub header: ManifestHeader,
    pub records: Vec<SampleRecord>,
    /// Seal digest when the manifest was completed.
    pub seal: Option<String>,
}

impl CohortManifest {
    pub fn new(header: ManifestHeader) -> Self {
        Self {
            header,
            records: Vec::new(),
            seal: None,
        }
    }

    pub fn get(&self, sample_id: &str) -> Option<&SampleRecord> {
        self.records.iter().find(|r| r.sample_id == sample_id)
    }

    pub fn index(&self) -> BTreeMap<&str, &SampleRecord> {
        self.records.iter().map(|r| (r.sample_id.as_str(), r)).collect()
    }

    /// Labels partition: count per label among unfailed records.
    pub fn label_counts(&self) -> BTreeMap<Label, usize> {
        let mut out = BTreeMap::new();
        for r in self.records.iter().filter(|r| !r.is_failed()) {
            *out.entry(r.label.label()).or_insert(0) += 1;
        }
        out
    }

    /// All usable records as a split.
    pub fn split(&self, name: &str) -> DatasetSplit {
        DatasetSplit::new(
            name,
            self.records.iter().filter(|r| !r.is_failed()).map(|r| SplitEntry {
                sample_id: r.sample_id.clone(),
                label: r.label.label(),
            }),
        )
    }

    pub fn compute_seal(&self) -> String {
        seal_of(
            self.records
                .iter()
                .map(|r| serde_json::to_string(r).expect("record serializes")),
        )
    }
}

fn seal_of(lines: impl Iterator<Item = String>) -> String {
    let mut h = Sha256::new();
    for line in lines {
        h.update(line.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

#[derive(Serialize, Deserialize)]
struct SealLine {
    seal: String,
    records: usize,
}

pub fn write_manifest(manifest: &CohortManifest, path: &Path) -> Result<(), CorpusError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let mut write_line = |v: String| -> Result<(), CorpusError> {
        w.write_all(v.as_bytes()).map_err(io_err(path))?;
        w.write_all(b"\n").map_err(io_err(path))
    };
    write_line(serde_json::to_string(&manifest.header).expect("header serializes"))?;
    for r in &manifest.records {
        write_line(serde_json::to_string(r).expect("record serializes"))?;
    }
    if manifest.seal.is_some() {
        let seal = SealLine {
            seal: manifest.compute_seal(),
            records: manifest.records.len(),
        };
        write_line(serde_json::to_string(&seal).expect("seal serializes"))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_manifest(path: &Path) -> Result<CohortManifest, CorpusError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let parse_err = |line: usize, message: String| CorpusError::Parse {
        path: path.to_path_buf(),
        line: line + 1,
        message,
    };
    let (_, first) = lines.next().ok_or_else(|| parse_err(0, "empty manifest".into()))?;
    let first = first.map_err(io_err(path))?;
    let head: Value = serde_json::from_str(&first).map_err(|e| parse_err(0, e.to_string()))?;
    let schema = head.get("schema").and_then(Value::as_str).unwrap_or("");
    if schema != MANIFEST_SCHEMA {
        return Err(CorpusError::SchemaVersionMismatch {
            found: schema.to_string(),
        });
    }
    let header: ManifestHeader = serde_json::from_value(head).map_err(|e| parse_err(0, e.to_string()))?;
    let mut manifest = CohortManifest::new(header);
    for (n, line) in lines {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        if manifest.seal.is_some() {
            return Err(parse_err(n, "content after seal line".into()));
        }
        let v: Value = serde_json::from_str(&line).map_err(|e| parse_err(n, e.to_string()))?;
        if v.get("seal").is_some() {
            let seal: SealLine = serde_json::from_value(v).map_err(|e| parse_err(n, e.to_string()))?;
            manifest.seal = Some(seal.seal);
        } else {
            let r: SampleRecord = serde_json::from_value(v).map_err(|e| parse_err(n, e.to_string()))?;
            manifest.records.push(r);
        }
    }
    Ok(manifest)
}

/// Incremental single-writer appender used during generation.
pub struct ManifestWriter {
    path: PathBuf,
    out: BufWriter<File>,
    records: Vec<SampleRecord>,
}

impl ManifestWriter {
    pub fn create(path: &Path, header: &ManifestHeader) -> Result<Self, CorpusError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        let file = File::create(path).map_err(io_err(path))?;
        let mut out = BufWriter::new(file);
        let line = serde_json::to_string(header).expect("header serializes");
        writeln!(out, "{line}").map_err(io_err(path))?;
        out.flush().map_err(io_err(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            out,
            records: Vec::new(),
        })
    }

    /// Reopens an unsealed manifest for appending.
    pub fn resume(path: &Path) -> Result<(Self, ManifestHeader), CorpusError> {
        let existing = read_manifest(path)?;
        if existing.seal.is_some() {
            return Err(CorpusError::AlreadySealed(path.to_path_buf()));
        }
        let file = OpenOptions::new().append(true).open(path).map_err(io_err(path))?;
        Ok((
            Self {
                path: path.to_path_buf(),
                out: BufWriter::new(file),
                records: existing.records,
            },
            existing.header,
        ))
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn append(&mut self, record: SampleRecord) -> Result<(), CorpusError> {
        let line = serde_json::to_string(&record).expect("record serializes");
        writeln!(self.out, "{line}").map_err(io_err(&self.path))?;
        self.out.flush().map_err(io_err(&self.path))?;
        self.records.push(record);
        Ok(())
    }

    pub fn seal(mut self) -> Result<String, CorpusError> {
        let seal = seal_of(
            self.records
                .iter()
                .map(|r| serde_json::to_string(r).expect("record serializes")),
        );
        let line = serde_json::to_string(&SealLine {
            seal: seal.clone(),
            records: self.records.len(),
        })
        .expect("seal serializes");
        writeln!(self.out, "{line}").map_err(io_err(&self.path))?;
        self.out.flush().map_err(io_err(&self.path))?;
        Ok(seal)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "snake_case")]
pub enum IntegrityProblem {
    TranscriptHashMismatch,
    SampleIdMismatch,
    AudioMissing { path: String },
    AudioChecksumMismatch { path: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegrityReport {
    /// `None` for unsealed manifests.
    pub seal_ok: Option<bool>,
    pub problems: Vec<(String, IntegrityProblem)>,
}

impl IntegrityReport {
    pub fn is_clean(&self) -> bool {
        self.seal_ok != Some(false) && self.problems.is_empty()
    }

    pub fn into_result(self) -> Result<(), CorpusError> {
        if self.is_clean() {
            return Ok(());
        }
        let mut ids: Vec<String> = self.problems.into_iter().map(|(id, _)| id).collect();
        ids.dedup();
        if ids.is_empty() {
            ids.push("<seal>".into());
        }
        Err(CorpusError::ChecksumMismatch(ids))
    }
}

/// Verifies the seal, every transcript hash and sample id, and (when
/// `run_dir` is given) the audio checksums on disk.
pub fn integrity_check(manifest: &CohortManifest, run_dir: Option<&Path>) -> IntegrityReport {
    let mut report = IntegrityReport {
        seal_ok: manifest.seal.as_ref().map(|s| *s == manifest.compute_seal()),
        problems: Vec::new(),
    };
    for r in &manifest.records {
        if sha256_hex(r.transcript.as_bytes()) != r.transcript_hash {
            report
                .problems
                .push((r.sample_id.clone(), IntegrityProblem::TranscriptHashMismatch));
        }
        if r.expected_sample_id() != r.sample_id {
            report
                .problems
                .push((r.sample_id.clone(), IntegrityProblem::SampleIdMismatch));
        }
        if let (Some(dir), Some(audio)) = (run_dir, &r.audio_ref) {
            match fs::read(dir.join(&audio.path)) {
                Err(_) => report.problems.push((
                    r.sample_id.clone(),
                    IntegrityProblem::AudioMissing {
                        path: audio.path.clone(),
                    },
                )),
                Ok(bytes) if sha256_hex(&bytes) != audio.checksum => report.problems.push((
                    r.sample_id.clone(),
                    IntegrityProblem::AudioChecksumMismatch {
                        path: audio.path.clone(),
                    },
                )),
                Ok(_) => {}
            }
        }
    }
    report
}

/// A distilled rationale paired with its sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotRecord {
    pub sample_id: String,
    pub rationale: String,
    pub label: Label,
    pub prompt_version: VersionHash,
    pub parsed_conclusion: Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub sample_id: String,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub name: String,
    pub samples: Vec<SplitEntry>,
    pub class_histogram: BTreeMap<Label, usize>,
}

impl DatasetSplit {
    pub fn new(name: impl Into<String>, samples: impl IntoIterator<Item = SplitEntry>) -> Self {
        let samples: Vec<SplitEntry> = samples.into_iter().collect();
        let mut class_histogram = BTreeMap::new();
        for s in &samples {
            *class_histogram.entry(s.label).or_insert(0) += 1;
        }
        Self {
            name: name.into(),
            samples,
            class_histogram,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_ids(&self) -> impl Iterator<Item = &str> {
        self.samples.iter().map(|s| s.sample_id.as_str())
    }

    pub fn of_class(&self, label: Label) -> impl Iterator<Item = &SplitEntry> {
        self.samples.iter().filter(move |s| s.label == label)
    }

    /// Every id must resolve in `manifest`.
    pub fn check_against(&self, manifest: &CohortManifest) -> Result<(), CorpusError> {
        let index = manifest.index();
        for id in self.sample_ids() {
            if !index.contains_key(id) {
                return Err(CorpusError::UnknownSample {
                    split: self.name.clone(),
                    sample_id: id.to_string(),
                });
            }
        }
        Ok(())
    }
}

/// Fails on the first id present in both splits.
pub fn check_disjoint(a: &DatasetSplit, b: &DatasetSplit) -> Result<(), CorpusError> {
    let ids: HashSet<&str> = a.sample_ids().collect();
    match b.sample_ids().find(|id| ids.contains(id)) {
        Some(id) => Err(CorpusError::Overlap(id.to_string())),
        None => Ok(()),
    }
}

/// All real samples plus, per class, a seeded uniform draw of
/// `ratio × |real_c|` synthetic samples of that class.
pub fn mix<R: Rng + ?Sized>(
    real: &DatasetSplit,
    synthetic: &DatasetSplit,
    ratio: usize,
    rng: &mut R,
) -> Result<DatasetSplit, CorpusError> {
    check_disjoint(real, synthetic)?;
    let mut out: Vec<SplitEntry> = real.samples.clone();
    for (&class, &n_real) in &real.class_histogram {
        let needed = ratio * n_real;
        let pool: Vec<&SplitEntry> = synthetic.of_class(class).collect();
        if pool.len() < needed {
            return Err(CorpusError::InsufficientSynthetic {
                class,
                needed,
                available: pool.len(),
            });
        }
        let mut picked = rand::seq::index::sample(rng, pool.len(), needed).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| pool[i].clone()));
    }
    Ok(DatasetSplit::new(format!("{}+syn_x{ratio}", real.name), out))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CorpusError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut body = serde_json::to_string_pretty(value).expect("value serializes");
    body.push('\n');
    fs::write(path, body).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CorpusError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| CorpusError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn write_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<(), CorpusError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut body = String::new();
    for item in items {
        body.push_str(&serde_json::to_string(item).expect("item serializes"));
        body.push('\n');
    }
    fs::write(path, body).map_err(io_err(path))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CorpusError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
