//! Registry of reference voices for sex- and age-matched voice cloning.
//!
//! Persisted as `index.jsonl` beside the audio files; paths inside the
//! library directory are stored relative to it.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::sha256_hex;
use crate::persona::Sex;
use crate::services::audio::{AudioBlob, PIPELINE_RATE};

pub const MIN_REFERENCE_S: f64 = 3.0;
pub const INDEX_FILE: &str = "index.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgeBucket {
    #[serde(rename = "60s")]
    Sixties,
    #[serde(rename = "70s")]
    Seventies,
    #[serde(rename = "80s")]
    Eighties,
    #[serde(rename = "unknown")]
    Unknown,
}

impl AgeBucket {
    /// Decade bucket; 90 and over shares the oldest bucket.
    pub fn from_age(age: u8) -> Self {
        match age {
            60..=69 => AgeBucket::Sixties,
            70..=79 => AgeBucket::Seventies,
            80.. => AgeBucket::Eighties,
            _ => AgeBucket::Unknown,
        }
    }
}

impl fmt::Display for AgeBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgeBucket::Sixties => "60s",
            AgeBucket::Seventies => "70s",
            AgeBucket::Eighties => "80s",
            AgeBucket::Unknown => "unknown",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditReason {
    NotMono,
    WrongRate,
    TooShort,
    Unreadable,
    ChecksumMismatch,
}

impl fmt::Display for AuditReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AuditReason::NotMono => "not_mono",
            AuditReason::WrongRate => "wrong_rate",
            AuditReason::TooShort => "too_short",
            AuditReason::Unreadable => "unreadable",
            AuditReason::ChecksumMismatch => "checksum_mismatch",
        })
    }
}

#[derive(Debug, Error)]
pub enum TimbreError {
    #[error("audit failed for {path} ({reason}): {detail}")]
    AuditFailed {
        path: PathBuf,
        reason: AuditReason,
        detail: String,
    },
    #[error("no reference voice for sex {0}")]
    NoMatch(Sex),
    #[error("timbre id {0} is already registered")]
    DuplicateId(String),
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
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimbreEntry {
    pub timbre_id: String,
    pub file_path: PathBuf,
    pub sex: Sex,
    pub age_bucket: AgeBucket,
    pub duration_s: f64,
    pub sample_rate_hz: u32,
    pub channels: u16,
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimbreMetadata {
    /// Defaults to the file stem.
    #[serde(default)]
    pub timbre_id: Option<String>,
    pub sex: Sex,
    #[serde(default = "unknown_bucket")]
    pub age_bucket: AgeBucket,
}

fn unknown_bucket() -> AgeBucket {
    AgeBucket::Unknown
}

/// Checks the format end state: readable, mono, 16 kHz, at least 3 s.
pub fn audit_file(path: &Path) -> Result<(AudioBlob, String), TimbreError> {
    let fail = |reason, detail: String| TimbreError::AuditFailed {
        path: path.to_path_buf(),
        reason,
        detail,
    };
    let bytes = fs::read(path).map_err(|e| fail(AuditReason::Unreadable, e.to_string()))?;
    let audio = AudioBlob::from_wav_bytes(&bytes).map_err(|e| fail(AuditReason::Unreadable, e.to_string()))?;
    if audio.channels != 1 {
        return Err(fail(AuditReason::NotMono, format!("{} channels", audio.channels)));
    }
    if audio.sample_rate_hz != PIPELINE_RATE {
        return Err(fail(AuditReason::WrongRate, format!("{} Hz", audio.sample_rate_hz)));
    }
    if audio.duration_s() < MIN_REFERENCE_S {
        return Err(fail(
            AuditReason::TooShort,
            format!("{:.2} s < {MIN_REFERENCE_S} s", audio.duration_s()),
        ));
    }
    Ok((audio, sha256_hex(&bytes)))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub checked: usize,
    pub passed: usize,
    pub failures: Vec<(String, AuditReason, String)>,
    pub by_sex: BTreeMap<Sex, usize>,
    pub by_bucket: BTreeMap<AgeBucket, usize>,
}

#[derive(Debug, Clone, Default)]
pub struct TimbreLibrary {
    root: PathBuf,
    entries: Vec<TimbreEntry>,
    index: BTreeMap<(Sex, AgeBucket), Vec<usize>>,
}

impl TimbreLibrary {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            ..Default::default()
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entries(&self) -> &[TimbreEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, timbre_id: &str) -> Option<&TimbreEntry> {
        self.entries.iter().find(|e| e.timbre_id == timbre_id)
    }

    fn insert(&mut self, entry: TimbreEntry) -> Result<(), TimbreError> {
        if self.get(&entry.timbre_id).is_some() {
            return Err(TimbreError::DuplicateId(entry.timbre_id));
        }
        self.index
            .entry((entry.sex, entry.age_bucket))
            .or_default()
            .push(self.entries.len());
        self.entries.push(entry);
        Ok(())
    }

    /// Audits `path` and adds it on success.
    pub fn register(&mut self, path: &Path, meta: &TimbreMetadata) -> Result<TimbreEntry, TimbreError> {
        let (audio, checksum) = audit_file(path)?;
        let timbre_id = meta.timbre_id.clone().unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| checksum[..12].to_string())
        });
        let entry = TimbreEntry {
            timbre_id,
            file_path: path.to_path_buf(),
            sex: meta.sex,
            age_bucket: meta.age_bucket,
            duration_s: audio.duration_s(),
            sample_rate_hz: audio.sample_rate_hz,
            channels: audio.channels,
            checksum,
        };
        self.insert(entry.clone())?;
        Ok(entry)
    }

    /// Uniform seeded choice among sex matches in the preferred bucket,
    /// falling back to any sex match.
    pub fn select<R: Rng + ?Sized>(
        &self,
        sex: Sex,
        preferred: Option<AgeBucket>,
        rng: &mut R,
    ) -> Result<&TimbreEntry, TimbreError> {
        let in_bucket: Vec<usize> = preferred
            .and_then(|b| self.index.get(&(sex, b)))
            .cloned()
            .unwrap_or_default();
        let pool = if in_bucket.is_empty() {
            self.entries
                .iter()
                .enumerate()
                .filter(|(_, e)| e.sex == sex)
                .map(|(i, _)| i)
                .collect()
        } else {
            in_bucket
        };
        if pool.is_empty() {
            return Err(TimbreError::NoMatch(sex));
        }
        Ok(&self.entries[pool[rng.random_range(0..pool.len())]])
    }

    pub fn load(dir: &Path) -> Result<Self, TimbreError> {
        let path = dir.join(INDEX_FILE);
        let text = fs::read_to_string(&path).map_err(|source| TimbreError::Io {
            path: path.clone(),
            source,
        })?;
        let mut lib = Self::new(dir);
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let mut e: TimbreEntry = serde_json::from_str(line).map_err(|e| TimbreError::Parse {
                path: path.clone(),
                line: i + 1,
                message: e.to_string(),
            })?;
            if e.file_path.is_relative() {
                e.file_path = dir.join(&e.file_path);
            }
            lib.insert(e)?;
        }
        Ok(lib)
    }

    pub fn save(&self) -> Result<(), TimbreError> {
        fs::create_dir_all(&self.root).map_err(|source| TimbreError::Io {
            path: self.root.clone(),
            source,
        })?;
        let mut body = String::new();
        for e in &self.entries {
            let mut e = e.clone();
            if let Ok(rel) = e.file_path.strip_prefix(&self.root) {
                e.file_path = rel.to_path_buf();
            }
            body.push_str(&serde_json::to_string(&e).expect("entry serializes"));
            body.push('\n');
        }
        let path = self.root.join(INDEX_FILE);
        fs::write(&path, body).map_err(|source| TimbreError::Io { path, source })
    }

    /// Re-audits every entry and verifies its checksum.
    pub fn audit(&self) -> AuditReport {
        let mut report = AuditReport::default();
        let mut seen = HashSet::new();
        for e in &self.entries {
            report.checked += 1;
            *report.by_sex.entry(e.sex).or_insert(0) += 1;
            *report.by_bucket.entry(e.age_bucket).or_insert(0) += 1;
            let outcome = audit_file(&e.file_path).and_then(|(_, sum)| {
                if sum == e.checksum {
                    Ok(())
                } else {
                    Err(TimbreError::AuditFailed {
                        path: e.file_path.clone(),
                        reason: AuditReason::ChecksumMismatch,
                        detail: "file changed since registration".into(),
                    })
                }
            });
            match outcome {
                Ok(()) if seen.insert(e.timbre_id.clone()) => report.passed += 1,
                Ok(()) => report
                    .failures
                    .push((e.timbre_id.clone(), AuditReason::Unreadable, "duplicate id".into())),
                Err(TimbreError::AuditFailed { reason, detail, .. }) => {
                    report.failures.push((e.timbre_id.clone(), reason, detail))
                }
                Err(other) => report
                    .failures
                    .push((e.timbre_id.clone(), AuditReason::Unreadable, other.to_string())),
            }
        }
        report
    }

    /// Writes a small library of synthetic voiced references (a harmonic
    /// buzz at a sex-typical pitch) for offline runs.
    pub fn build_stub(dir: &Path, per_sex: usize, seed: u64) -> Result<Self, TimbreError> {
        let mut lib = Self::new(dir);
        let buckets = [AgeBucket::Sixties, AgeBucket::Seventies, AgeBucket::Eighties];
        for sex in [Sex::Female, Sex::Male] {
            for i in 0..per_sex {
                let id = format!("stub-{}-{i:02}", if sex == Sex::Female { "f" } else { "m" });
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ crate::hashing::hash64(id.as_bytes()));
                let f0 = match sex {
                    Sex::Female => rng.random_range(180.0..230.0),
                    Sex::Male => rng.random_range(100.0..140.0),
                };
                let n = (PIPELINE_RATE as f64 * 4.0) as usize;
                let samples = (0..n)
                    .map(|k| {
                        let t = k as f64 / PIPELINE_RATE as f64;
                        let v: f64 = (1..=5)
                            .map(|h| (2.0 * std::f64::consts::PI * f0 * h as f64 * t).sin() / h as f64)
                            .sum();
                        (v * 3000.0 + rng.random_range(-200.0..200.0)) as i16
                    })
                    .collect();
                let path = dir.join(format!("{id}.wav"));
                AudioBlob::mono16k(samples)
                    .write_wav(&path)
                    .map_err(|e| TimbreError::Io {
                        path: path.clone(),
                        source: std::io::Error::other(e.to_string()),
                    })?;
                lib.register(
                    &path,
                    &TimbreMetadata {
                        timbre_id: Some(id),
                        sex,
                        age_bucket: buckets[i % buckets.len()],
                    },
                )?;
            }
        }
        lib.save()?;
        Ok(lib)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, secs: f64, rate: u32, channels: u16) -> PathBuf {
        let n = (secs * rate as f64) as usize * channels as usize;
        let a = AudioBlob::new((0..n).map(|i| (i % 100) as i16).collect(), rate, channels).unwrap();
        let p = dir.join(name);
        a.write_wav(&p).unwrap();
        p
    }

    fn meta(sex: Sex) -> TimbreMetadata {
        TimbreMetadata {
            timbre_id: None,
            sex,
            age_bucket: AgeBucket::Seventies,
        }
    }

    #[test]
    fn register_and_audit_failures() {
        let dir = tempfile::tempdir().unwrap();
        let mut lib = TimbreLibrary::new(dir.path());
        let ok = write(dir.path(), "ok.wav", 10.0, 16_000, 1);
        let e = lib.register(&ok, &meta(Sex::Female)).unwrap();
        assert_eq!(e.timbre_id, "ok");
        assert!((e.duration_s - 10.0).abs() < 1e-9);
        let reason = |p: &Path| match lib.clone().register(p, &meta(Sex::Female)) {
            Err(TimbreError::AuditFailed { reason, .. }) => reason,
            other => panic!("{other:?}"),
        };
        assert_eq!(
            reason(&write(dir.path(), "st.wav", 5.0, 16_000, 2)),
            AuditReason::NotMono
        );
        assert_eq!(
            reason(&write(dir.path(), "r.wav", 5.0, 44_100, 1)),
            AuditReason::WrongRate
        );
        assert_eq!(
            reason(&write(dir.path(), "short.wav", 1.0, 16_000, 1)),
            AuditReason::TooShort
        );
        fs::write(dir.path().join("junk.wav"), b"junk").unwrap();
        assert_eq!(reason(&dir.path().join("junk.wav")), AuditReason::Unreadable);
        assert!(matches!(
            lib.register(&ok, &meta(Sex::Female)),
            Err(TimbreError::DuplicateId(_))
        ));
    }

    #[test]
    fn select_respects_sex_and_falls_back() {
        let dir = tempfile::tempdir().unwrap();
        let mut lib = TimbreLibrary::new(dir.path());
        for (name, sex) in [("f1.wav", Sex::Female), ("f2.wav", Sex::Female), ("m1.wav", Sex::Male)] {
            let p = write(dir.path(), name, 4.0, 16_000, 1);
            lib.register(&p, &meta(sex)).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert_eq!(
                lib.select(Sex::Male, Some(AgeBucket::Eighties), &mut rng)
                    .unwrap()
                    .timbre_id,
                "m1"
            );
            assert_eq!(lib.select(Sex::Female, None, &mut rng).unwrap().sex, Sex::Female);
        }
        let empty = TimbreLibrary::new(dir.path());
        assert!(matches!(
            empty.select(Sex::Female, None, &mut rng),
            Err(TimbreError::NoMatch(Sex::Female))
        ));
    }

    #[test]
    fn save_load_round_trip_and_checksum_audit() {
        let dir = tempfile::tempdir().unwrap();
        let lib = TimbreLibrary::build_stub(dir.path(), 2, 9).unwrap();
        assert_eq!(lib.len(), 4);
        let back = TimbreLibrary::load(dir.path()).unwrap();
        assert_eq!(back.entries(), lib.entries());
        let index = fs::read_to_string(dir.path().join(INDEX_FILE)).unwrap();
        assert!(index.contains("\"file_path\":\"stub-f-00.wav\""));
        let report = back.audit();
        assert_eq!(report.passed, 4);
        write(dir.path(), "stub-m-01.wav", 5.0, 16_000, 1);
        let report = back.audit();
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].1, AuditReason::ChecksumMismatch);
    }

    #[test]
    fn seeded_selection_is_uniform() {
        let dir = tempfile::tempdir().unwrap();
        let mut lib = TimbreLibrary::new(dir.path());
        for i in 0..4 {
            let p = write(dir.path(), &format!("f{i}.wav"), 3.5, 16_000, 1);
            lib.register(&p, &meta(Sex::Female)).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = BTreeMap::new();
        for _ in 0..10_000 {
            *counts
                .entry(lib.select(Sex::Female, None, &mut rng).unwrap().timbre_id.clone())
                .or_insert(0) += 1;
        }
        // binomial(10000, 1/4): sd ~43, so 150 is about 3.5 sd
        assert_eq!(counts.len(), 4);
        assert!(counts.values().all(|&c| (2350..=2650).contains(&c)), "{counts:?}");
    }

    #[test]
    fn age_buckets() {
        assert_eq!(AgeBucket::from_age(60), AgeBucket::Sixties);
        assert_eq!(AgeBucket::from_age(79), AgeBucket::Seventies);
        assert_eq!(AgeBucket::from_age(90), AgeBucket::Eighties);
        assert_eq!(AgeBucket::from_age(55), AgeBucket::Unknown);
    }
}
