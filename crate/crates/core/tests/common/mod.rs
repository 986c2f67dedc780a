//! Independent oracles and fixtures shared by the integration tests and the
//! acceptance runner.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use syncog::evaluate::{EvalConfig, EvalSample};
use syncog::label::{Label, LabelScheme, Language};
use syncog::persona::Sex;
use syncog::services::{AudioBlob, EndpointClient, EndpointConfig, HttpTransport, RecordingSleeper};
use syncog::timbre::{AgeBucket, TimbreEntry};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

// ---- metrics -------------------------------------------------------------

/// Accuracy and macro-F1 per rollout by direct counting, then mean, sample
/// sd and best-of-N. `None` is an unparseable answer: a miss for its true
/// class and a prediction for nobody. Classes are every label seen anywhere.
pub fn oracle_metrics(truth: &[Label], rollouts: &[Vec<Option<Label>>]) -> OracleReport {
    let mut classes: Vec<Label> = truth
        .iter()
        .copied()
        .chain(rollouts.iter().flatten().flatten().copied())
        .collect();
    classes.sort();
    classes.dedup();
    let mut accs = Vec::new();
    let mut f1s = Vec::new();
    for pred in rollouts {
        let n = truth.len();
        let correct = truth.iter().zip(pred).filter(|(t, p)| Some(**t) == **p).count();
        accs.push(correct as f64 / n as f64);
        let mut sum = 0.0;
        for c in &classes {
            let tp = truth
                .iter()
                .zip(pred)
                .filter(|(t, p)| *t == c && **p == Some(*c))
                .count() as f64;
            let fp = truth
                .iter()
                .zip(pred)
                .filter(|(t, p)| *t != c && **p == Some(*c))
                .count() as f64;
            let fnn = truth
                .iter()
                .zip(pred)
                .filter(|(t, p)| *t == c && **p != Some(*c))
                .count() as f64;
            let d = 2.0 * tp + fp + fnn;
            sum += if d == 0.0 { 0.0 } else { 2.0 * tp / d };
        }
        f1s.push(sum / classes.len() as f64);
    }
    OracleReport {
        f1_mean: mean(&f1s),
        f1_sd: sample_sd(&f1s),
        avs_mean: mean(&accs),
        avs_sd: sample_sd(&accs),
        bon: accs.iter().copied().fold(f64::MIN, f64::max),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OracleReport {
    pub f1_mean: f64,
    pub f1_sd: f64,
    pub avs_mean: f64,
    pub avs_sd: f64,
    pub bon: f64,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

// ---- sampler -------------------------------------------------------------

fn normal_pdf(x: f64, m: f64, s: f64) -> f64 {
    (-(x - m) * (x - m) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
}

/// Normal mass on [a, b] by composite Simpson.
fn normal_mass(a: f64, b: f64, m: f64, s: f64) -> f64 {
    let n = 20_000;
    let h = (b - a) / n as f64;
    let mut acc = normal_pdf(a, m, s) + normal_pdf(b, m, s);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * normal_pdf(a + i as f64 * h, m, s);
    }
    acc * h / 3.0
}

/// Probability of each level 1..=3 when a Normal(m, s) draw is clipped to
/// [1, 3] and rounded half up: cut points at 1.5 and 2.5.
pub fn level_probabilities(m: f64, s: f64) -> [f64; 3] {
    let lo = m - 12.0 * s;
    let hi = m + 12.0 * s;
    let p1 = if lo < 1.5 { normal_mass(lo, 1.5, m, s) } else { 0.0 };
    let p3 = if hi > 2.5 { normal_mass(2.5, hi, m, s) } else { 0.0 };
    [p1, 1.0 - p1 - p3, p3]
}

// ---- wire fixtures -------------------------------------------------------

pub const WIRE_BASE: &str = "http://replay.invalid/v1";

pub fn wire_dir() -> PathBuf {
    fixtures().join("wire")
}

pub fn wire_endpoint(transport: Arc<dyn HttpTransport>, sleeper: Arc<RecordingSleeper>) -> EndpointClient {
    let mut cfg = EndpointConfig::new(WIRE_BASE, "fixture-model");
    cfg.retry.max_attempts = 3;
    cfg.retry.base_backoff_ms = 200;
    EndpointClient::new(cfg, transport).unwrap().with_sleeper(sleeper)
}

pub fn wire_samples() -> Vec<EvalSample> {
    let s = |id: &str, text: &str, label| EvalSample {
        sample_id: id.into(),
        transcript: text.into(),
        label,
        audio_path: None,
    };
    vec![
        s(
            "w1",
            "The boy is standing on a stool that is tipping over while he reaches for the cookie jar.",
            Label::Hc,
        ),
        s(
            "w2",
            "Um the the boy is uh... the thing is there. Um the water.",
            Label::Ad,
        ),
        s(
            "w3",
            "The mother is drying a plate and the sink is overflowing onto the floor.",
            Label::Mci,
        ),
    ]
}

pub fn wire_eval_config() -> EvalConfig {
    let mut cfg = EvalConfig::new(LabelScheme::Ternary, Language::En);
    cfg.n_rollouts = 2;
    cfg.master_seed = 7;
    cfg
}

/// Reference clip for the speech fixtures: 50 ms of a 220 Hz tone.
pub fn wire_reference_audio() -> AudioBlob {
    let samples = (0..800)
        .map(|i| ((i as f64 * 220.0 * std::f64::consts::TAU / 16_000.0).sin() * 8000.0) as i16)
        .collect();
    AudioBlob::mono16k(samples)
}

pub fn wire_reference(dir: &Path) -> TimbreEntry {
    TimbreEntry {
        timbre_id: "fixture_voice".into(),
        file_path: dir.join("reference.wav"),
        sex: Sex::Female,
        age_bucket: AgeBucket::Seventies,
        duration_s: 0.05,
        sample_rate_hz: 16_000,
        channels: 1,
        checksum: String::new(),
    }
}

pub const WIRE_SPEECH: [(&str, u64); 3] = [
    ("The boy reaches for the jar.", 11),
    ("The water spills over the sink.", 12),
    ("Nothing else happens.", 13),
];
