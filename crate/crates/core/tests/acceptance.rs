//! Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use syncog::corpus::{read_manifest, CohortManifest, DatasetSplit};
use syncog::evaluate::{compute_metrics, group_compare, run_rollouts, EvalSample, MetricsReport, Parsed, Prediction};
use syncog::figures::profiles_by_label;
use syncog::label::{CognitiveStatus, Label, LabelScheme, Language};
use syncog::persona::{sample_style, Demographics, Education, Sex, StyleDimension, StyleSamplerParams};
use syncog::pipeline::{distill_cot, export_sft, DistillConfig};
use syncog::preprocess::{isolate_participant, DiarizationSegments, Segment, MAX_PARTICIPANT_S};
use syncog::prompts::{default_stimulus, PromptTemplate, TemplateId};
use syncog::rubric::Lexicons;
use syncog::services::{
    AudioBlob, ChatClient, RecordingSleeper, ReplayTransport, ResampleQuality, ServiceError, SpeechSynthesizer,
    StubRationaleModel, TtsClient,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("metric oracle equivalence", metric_oracle),
        ("metric worked examples", worked_examples),
        ("sampler fidelity", sampler_fidelity),
        ("rubric golden corpus", rubric_golden),
        ("stub end-to-end generation", stub_end_to_end),
        ("phenotype separation", phenotype_separation),
        ("mixing arithmetic", mixing_arithmetic),
        ("reasoning dataset invariant", cot_invariant),
        ("preprocessing contract", preprocessing_contract),
        ("wire conformance", wire_conformance),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.2} s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.2} s): {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---- helpers -------------------------------------------------------------

fn predictions(ids: &[String], rollouts: &[Vec<Option<Label>>]) -> Vec<Prediction> {
    rollouts
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
        .collect()
}

fn metrics(truth: &[Label], rollouts: &[Vec<Option<Label>>]) -> MetricsReport {
    let ids: Vec<String> = (0..truth.len()).map(|i| format!("s{i:03}")).collect();
    let truths: BTreeMap<String, Label> = ids.iter().cloned().zip(truth.iter().copied()).collect();
    compute_metrics(&predictions(&ids, rollouts), &truths, rollouts.len()).unwrap()
}

fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<Label>, Vec<Vec<Option<Label>>>) {
    let classes: &[Label] = if rng.random_bool(0.5) {
        &[Label::Ad, Label::NonAd]
    } else {
        &[Label::Hc, Label::Mci, Label::Ad]
    };
    let m = rng.random_range(1..=50);
    let n = rng.random_range(1..=8);
    let truth: Vec<Label> = (0..m).map(|_| classes[rng.random_range(0..classes.len())]).collect();
    let rollouts = (0..n)
        .map(|_| {
            (0..m)
                .map(|_| {
                    if rng.random_bool(0.1) {
                        None
                    } else {
                        Some(classes[rng.random_range(0..classes.len())])
                    }
                })
                .collect()
        })
        .collect();
    (truth, rollouts)
}

fn syncog(run_dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_syncog"))
        .arg("--stub")
        .arg("--run-dir")
        .arg(run_dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "syncog {args:?} exited {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(())
}

fn write_config(dir: &Path, name: &str, counts: &[(&str, usize)], seed: u64) -> PathBuf {
    let counts: BTreeMap<&str, usize> = counts.iter().copied().collect();
    let cfg = serde_json::json!({
        "master_seed": seed,
        "cohort": {
            "cohort_id": name,
            "scheme": "ternary",
            "counts": counts,
            "language": "en",
            "master_seed": seed,
        }
    });
    let path = dir.join(format!("{name}.json"));
    fs::write(&path, cfg.to_string()).unwrap();
    path
}

/// Manifest lines with the creation timestamp removed.
fn manifest_without_timestamps(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|line| {
            let mut v: serde_json::Value = serde_json::from_str(line).unwrap();
            strip_key(&mut v, "created_at");
            v.to_string()
        })
        .collect()
}

fn strip_key(v: &mut serde_json::Value, key: &str) {
    match v {
        serde_json::Value::Object(map) => {
            map.remove(key);
            map.values_mut().for_each(|x| strip_key(x, key));
        }
        serde_json::Value::Array(xs) => xs.iter_mut().for_each(|x| strip_key(x, key)),
        _ => {}
    }
}

fn stub_cohort(dir: &Path, name: &str, counts: &[(&str, usize)], seed: u64) -> Result<CohortManifest, String> {
    let cfg = write_config(dir, name, counts, seed);
    let run = dir.join(name);
    let cfg = cfg.to_str().unwrap();
    syncog(&run, &["--config", cfg, "cohort", "plan"])?;
    syncog(&run, &["--config", cfg, "cohort", "generate"])?;
    read_manifest(&run.join("manifest.jsonl")).map_err(|e| e.to_string())
}

// ---- criteria ------------------------------------------------------------

fn metric_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for k in 0..200 {
        let (truth, rollouts) = random_instance(&mut rng);
        let m = metrics(&truth, &rollouts);
        let o = common::oracle_metrics(&truth, &rollouts);
        for (a, b) in [(m.macro_f1.mean, o.f1_mean), (m.avs.mean, o.avs_mean), (m.bon, o.bon)] {
            worst = worst.max((a - b).abs());
        }
        ensure!(worst <= 1e-9, "instance {k}: deviation {worst:e}");
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 5.0, "took {secs:.2} s");
    Ok(format!("200 instances, max deviation {worst:e}"))
}

fn worked_examples() -> Outcome {
    use Label::{Ad as A, Hc as B};
    let m = metrics(&[A, B, B, B], &[vec![Some(A), Some(A), Some(B), Some(B)]]);
    ensure!(
        (m.macro_f1.mean - 11.0 / 15.0).abs() < 1e-12,
        "macro-F1 {} != 0.7333",
        m.macro_f1.mean
    );
    ensure!((m.avs.mean - 0.75).abs() < 1e-12, "accuracy {}", m.avs.mean);

    // 20 samples; rollouts with 10, 15 and 12 correct give 0.5, 0.75, 0.6
    let truth = vec![A; 20];
    let rollouts: Vec<Vec<Option<Label>>> = [10, 15, 12]
        .iter()
        .map(|&k| (0..20).map(|i| Some(if i < k { A } else { B })).collect())
        .collect();
    let m = metrics(&truth, &rollouts);
    ensure!((m.avs.mean - 0.6167).abs() <= 1e-4, "AVS {}", m.avs.mean);
    ensure!(m.bon == 0.75, "BoN {}", m.bon);

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for k in 0..1000 {
        let (truth, rollouts) = random_instance(&mut rng);
        let m = metrics(&truth, &rollouts);
        ensure!(
            m.bon + 1e-12 >= m.avs.mean,
            "set {k}: BoN {} < AVS {}",
            m.bon,
            m.avs.mean
        );
    }
    Ok(format!(
        "macro-F1 {:.4}, AVS 0.6167, BoN 0.75; BoN >= AVS on 1000 sets",
        11.0 / 15.0
    ))
}

fn sampler_fidelity() -> Outcome {
    let start = Instant::now();
    // (mu, sigma, age, education): g = (age - 60) / 30, h = education / 3
    let settings: [(f64, f64, u8, Education); 9] = [
        (2.6, 0.6, 60, Education::UniversityOrAbove),
        (2.0, 0.6, 75, Education::JuniorHigh),
        (1.4, 0.6, 90, Education::PrimaryOrBelow),
        (1.4, 0.6, 68, Education::HighSchool),
        (2.0, 0.1, 75, Education::HighSchool),
        (1.5, 1.5, 60, Education::PrimaryOrBelow),
        (5.0, 0.3, 60, Education::UniversityOrAbove),
        (-2.0, 0.3, 90, Education::PrimaryOrBelow),
        (3.0, 0.05, 95, Education::PrimaryOrBelow),
    ];
    let draws = 100_000;
    let mut worst = 0.0f64;
    for (k, &(mu, sigma, age, edu)) in settings.iter().enumerate() {
        let mut params = StyleSamplerParams::default();
        for table in params.mu.values_mut() {
            table.values_mut().for_each(|v| *v = mu);
        }
        params.sigma.values_mut().for_each(|v| *v = sigma);
        let demo = Demographics::new(Sex::Female, age, edu).map_err(|e| e.to_string())?;
        let status = CognitiveStatus::new(LabelScheme::Ternary, Label::Hc).unwrap();
        let g = ((age as f64 - 60.0) / 30.0).clamp(0.0, 1.0);
        let h = edu.index() as f64 / 3.0;
        let mean = mu - 0.5 * g + 0.3 * h;
        let expected = common::level_probabilities(mean, sigma);
        let mut counts = [[0usize; 3]; 5];
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        for _ in 0..draws {
            let s = sample_style(status, &demo, &params, &mut rng).map_err(|e| e.to_string())?;
            for d in StyleDimension::ALL {
                counts[d.index()][(s.get(d) - 1) as usize] += 1;
            }
        }
        for dim in counts {
            for lvl in 0..3 {
                let dev = (dim[lvl] as f64 / draws as f64 - expected[lvl]).abs();
                worst = worst.max(dev);
                ensure!(
                    dev <= 0.01,
                    "setting {k} (mean {mean:.3}, sigma {sigma}): level {} off by {dev:.4}",
                    lvl + 1
                );
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 10.0, "took {secs:.2} s");
    Ok(format!("9 settings x {draws} draws, max deviation {worst:.4}"))
}

fn rubric_golden() -> Outcome {
    use syncog::rubric::{analyze, score};
    let dir = common::fixtures().join("rubric");
    let mut n = 0;
    for i in 1..=15 {
        let text = fs::read_to_string(dir.join(format!("g{i:02}.txt"))).map_err(|e| e.to_string())?;
        let golden: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.join(format!("g{i:02}.json"))).unwrap()).unwrap();
        let language: Language = serde_json::from_value(golden["language"].clone()).unwrap();
        let p = analyze(&text, &Lexicons::builtin(language));
        let got = serde_json::to_value(&p).unwrap();
        for (key, want) in golden["counts"].as_object().unwrap() {
            ensure!(&got[key] == want, "g{i:02} {key}: got {} want {want}", got[key]);
        }
        let scores: Vec<u8> = serde_json::from_value(golden["scores"].clone()).unwrap();
        let levels = score(&p).as_vector().levels();
        ensure!(levels[..] == scores[..], "g{i:02} scores {levels:?} want {scores:?}");
        n += 1;
    }

    let lex = Lexicons::builtin(Language::En);
    let level = |text: &str, dim| score(&analyze(text, &lex)).get(dim);
    let words = ["The", "boy", "takes", "a", "cookie", "from", "the", "jar."];
    let fluency: Vec<u8> = (1..=4)
        .map(|k| {
            let mut out = Vec::new();
            for (i, w) in words.iter().enumerate() {
                if i < k {
                    out.push("um");
                }
                out.push(w);
            }
            level(&out.join(" "), StyleDimension::Fluency)
        })
        .collect();
    ensure!(fluency == [3, 2, 2, 1], "fluency sweep {fluency:?}");
    let phrases = ["under the window", "near the sink", "behind the curtain"];
    let spatial: Vec<u8> = (0..=3)
        .map(|k| {
            level(
                &format!("The boy stands {}.", phrases[..k].join(" and ")),
                StyleDimension::SpatialReference,
            )
        })
        .collect();
    ensure!(spatial == [1, 1, 2, 3], "spatial sweep {spatial:?}");
    Ok(format!("{n} fixtures exact; fluency {fluency:?}; spatial {spatial:?}"))
}

fn stub_end_to_end() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut bodies = Vec::new();
    let mut slowest = 0.0f64;
    for (name, jobs) in [("a", "8"), ("b", "8"), ("c", "1")] {
        let run = dir.path().join(name);
        let base = ["--seed", "17", "--jobs", jobs];
        syncog(&run, &[&base[..], &["cohort", "plan"]].concat())?;
        let start = Instant::now();
        syncog(&run, &[&base[..], &["cohort", "generate"]].concat())?;
        slowest = slowest.max(start.elapsed().as_secs_f64());
        bodies.push(manifest_without_timestamps(&run.join("manifest.jsonl")));
    }
    ensure!(slowest < 30.0, "generation took {slowest:.1} s");
    let m = read_manifest(&dir.path().join("a/manifest.jsonl")).map_err(|e| e.to_string())?;
    ensure!(m.records.len() == 60, "{} records", m.records.len());
    let flagged = m.records.iter().filter(|r| r.is_flagged() || r.is_failed()).count();
    ensure!(flagged == 0, "{flagged} flagged records");
    let labels = m.label_counts();
    ensure!(
        labels.values().all(|&n| n == 20) && labels.len() == 3,
        "label counts {labels:?}"
    );
    let mut sexes: BTreeMap<(Label, Sex), usize> = BTreeMap::new();
    for r in &m.records {
        let p = r.persona.as_ref().ok_or("record without persona")?;
        *sexes.entry((r.label.label(), p.demographics.sex)).or_default() += 1;
    }
    ensure!(
        sexes.len() == 6 && sexes.values().all(|&n| n == 10),
        "sex split {sexes:?}"
    );
    ensure!(bodies[0] == bodies[1], "rerun with the same seed differs");
    ensure!(bodies[0] == bodies[2], "--jobs 1 and --jobs 8 differ");
    Ok(format!(
        "60 records, 0 flagged, 20/20/20, 10/10 per label, identical on rerun and across jobs ({slowest:.2} s)"
    ))
}

fn phenotype_separation() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let m = stub_cohort(dir.path(), "sep", &[("AD", 50), ("HC", 50)], 23)?;
    let profiles = profiles_by_label(&m);
    ensure!(
        profiles.get(&Label::Ad).map(Vec::len) == Some(50) && profiles.get(&Label::Hc).map(Vec::len) == Some(50),
        "expected 50 + 50 profiles"
    );
    let mut detail = Vec::new();
    for (feature, ad_lower) in [("total_words", true), ("filler_frequency", false)] {
        let rows = group_compare(&profiles, feature).map_err(|e| e.to_string())?;
        let row = rows.first().ok_or("no comparison")?;
        let (ad, hc) = if row.group_a == Label::Ad {
            (row.median_a, row.median_b)
        } else {
            (row.median_b, row.median_a)
        };
        ensure!(row.test.p_value < 0.001, "{feature}: p = {:.2e}", row.test.p_value);
        ensure!(
            if ad_lower { ad < hc } else { ad > hc },
            "{feature}: AD median {ad} vs HC median {hc}"
        );
        detail.push(format!("{feature} p={:.1e} (AD {ad:.3}, HC {hc:.3})", row.test.p_value));
    }
    Ok(detail.join("; "))
}

fn mixing_arithmetic() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let real = stub_cohort(dir.path(), "real", &[("HC", 3), ("MCI", 3), ("AD", 3)], 101)?;
    let _ = stub_cohort(dir.path(), "syn", &[("HC", 20), ("MCI", 20), ("AD", 20)], 202)?;
    let run = dir.path().join("syn");
    let real_path = dir.path().join("real/manifest.jsonl");
    syncog(&run, &["mix", "--real", real_path.to_str().unwrap()])?;
    let real_split = real.split("real");
    let real_ids: BTreeSet<&str> = real_split.sample_ids().collect();
    for k in 0..=5usize {
        let path = run.join(format!("splits/mix_r{k}.json"));
        let split: DatasetSplit =
            serde_json::from_str(&fs::read_to_string(&path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let ids: BTreeSet<&str> = split.sample_ids().collect();
        ensure!(ids.len() == split.len(), "ratio {k}: duplicate ids");
        ensure!(real_ids.is_subset(&ids), "ratio {k}: real samples missing");
        for (label, &n_real) in &real_split.class_histogram {
            let total = split.class_histogram.get(label).copied().unwrap_or(0);
            ensure!(
                total - n_real == k * n_real,
                "ratio {k} {label}: {} synthetic",
                total - n_real
            );
        }
        if k == 0 {
            ensure!(ids == real_ids, "ratio 0 differs from the real split");
        }
    }
    Ok("ratios 0..5 give k x real synthetic per class; ratio 0 is the real split".into())
}

fn cot_invariant() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let m = stub_cohort(dir.path(), "cot", &[("HC", 7), ("MCI", 7), ("AD", 6)], 31)?;
    let samples: Vec<EvalSample> = m
        .records
        .iter()
        .map(|r| EvalSample {
            sample_id: r.sample_id.clone(),
            transcript: r.transcript.clone(),
            label: r.label.label(),
            audio_path: None,
        })
        .collect();
    ensure!(samples.len() == 20, "{} samples", samples.len());
    let stimulus = default_stimulus(Language::En);
    let cfg = DistillConfig::new(LabelScheme::Ternary, Language::En, stimulus);
    let cot = PromptTemplate::builtin(TemplateId::Cot, Language::En);
    let cls = PromptTemplate::builtin(TemplateId::Cls, Language::En);
    let model = StubRationaleModel::new(Lexicons::builtin(Language::En), LabelScheme::Ternary);

    let clean = distill_cot(&samples, &model, &cot, &cfg).map_err(|e| e.to_string())?;
    let out = dir.path().join("sft.jsonl");
    let n = export_sft(&clean.records, &m, &cls, stimulus, &out).map_err(|e| e.to_string())?;
    ensure!(n == 20, "{n} exported");
    let truth: BTreeMap<&str, Label> = samples.iter().map(|s| (s.sample_id.as_str(), s.label)).collect();
    let text = fs::read_to_string(&out).unwrap();
    let mut matched = 0;
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let id = v["sample_id"].as_str().unwrap_or_default();
        let answer = v["messages"][2]["content"].as_str().unwrap_or_default();
        let label = truth.get(id).ok_or("unknown sample in export")?;
        ensure!(
            answer.ends_with(&format!("FINAL: {}", label.canonical())),
            "{id}: assistant message does not end in FINAL: {label}"
        );
        matched += 1;
    }

    let injected: Vec<String> = samples.iter().step_by(10).map(|s| s.sample_id.clone()).collect();
    let bad = model.with_inconsistent(injected.clone());
    let rep = distill_cot(&samples, &bad, &cot, &cfg).map_err(|e| e.to_string())?;
    ensure!(
        rep.dropped_inconsistent() == injected.len(),
        "{} dropped for {} injected",
        rep.dropped_inconsistent(),
        injected.len()
    );
    ensure!(rep.records.len() == 20 - injected.len(), "{} kept", rep.records.len());
    Ok(format!(
        "{matched}/20 FINAL tags match; {} of 20 injected, {} dropped",
        injected.len(),
        rep.dropped_inconsistent()
    ))
}

fn preprocessing_contract() -> Outcome {
    let rate = 16_000usize;
    let ramp = |secs: usize| AudioBlob::mono16k((0..secs * rate).map(|i| (i % 30_000) as i16).collect());
    let seg = |s: &str, a: f64, b: f64| Segment {
        speaker: s.into(),
        start_s: a,
        end_s: b,
    };

    // 120 s of participant speech across two turns
    let audio = ramp(130);
    let segs = DiarizationSegments::new(vec![
        seg("PAR", 0.0, 70.0),
        seg("INV", 70.0, 80.0),
        seg("PAR", 80.0, 130.0),
    ])
    .map_err(|e| e.to_string())?;
    let out = isolate_participant(&audio, &segs, Some("PAR")).map_err(|e| e.to_string())?;
    ensure!(
        out.frames() == (MAX_PARTICIPANT_S as usize) * rate,
        "capped output has {} frames",
        out.frames()
    );
    ensure!(out.duration_s() == 90.0, "duration {}", out.duration_s());
    ensure!(
        out.samples[70 * rate..] == audio.samples[80 * rate..100 * rate],
        "second turn not spliced in order"
    );

    // majority speaker: INV talks more in total despite PAR's first turn
    let segs = DiarizationSegments::new(vec![
        seg("PAR", 0.0, 6.0),
        seg("INV", 6.0, 10.0),
        seg("PAR", 10.0, 11.0),
        seg("INV", 11.0, 15.0),
    ])
    .map_err(|e| e.to_string())?;
    ensure!(
        segs.majority_speaker() == Some("INV"),
        "majority {:?}",
        segs.majority_speaker()
    );
    let short = ramp(15);
    let out = isolate_participant(&short, &segs, None).map_err(|e| e.to_string())?;
    ensure!(out.frames() == 8 * rate, "majority output has {} frames", out.frames());

    // standardization is the identity on mono 16 kHz and idempotent otherwise
    let conformant = ramp(3);
    for q in [ResampleQuality::Linear, ResampleQuality::Sinc] {
        ensure!(
            conformant.standardize(q) == conformant,
            "{q:?} changed conformant audio"
        );
    }
    let stereo = AudioBlob::new((0..44_100 * 2 * 2).map(|i| ((i / 2) % 500) as i16).collect(), 44_100, 2)
        .map_err(|e| e.to_string())?;
    let once = stereo.standardize(ResampleQuality::Sinc);
    ensure!(once.is_pipeline_format(), "not mono 16 kHz");
    ensure!(
        once.standardize(ResampleQuality::Sinc) == once,
        "second pass changed the audio"
    );
    Ok("90.0 s cap, majority speaker, mono/16 kHz idempotence".into())
}

fn wire_conformance() -> Outcome {
    let dir = common::wire_dir();
    let run = || -> Result<(Vec<Prediction>, Vec<Duration>), String> {
        let transport = Arc::new(ReplayTransport::load(&dir).map_err(|e| e.to_string())?);
        let sleeper = Arc::new(RecordingSleeper::default());
        let chat = ChatClient::from_client(common::wire_endpoint(transport, sleeper.clone()));
        let template = PromptTemplate::builtin(TemplateId::Cls, Language::En);
        let preds = run_rollouts(
            &common::wire_samples(),
            &chat,
            &template,
            default_stimulus(Language::En),
            &common::wire_eval_config(),
        )
        .map_err(|e| e.to_string())?;
        let mut d = sleeper.delays();
        d.sort();
        Ok((preds, d))
    };
    let (a, da) = run()?;
    let (b, db) = run()?;
    ensure!(
        serde_json::to_string(&a).unwrap() == serde_json::to_string(&b).unwrap() && da == db,
        "replay is not stable"
    );
    ensure!(a.len() == 6, "{} predictions", a.len());
    let errors: Vec<String> = a
        .iter()
        .filter_map(|p| p.error.as_deref())
        .map(|e| serde_json::from_str::<ServiceError>(e).unwrap().kind().to_string())
        .collect();
    ensure!(
        errors.contains(&"timeout".to_string()) && errors.contains(&"protocol".to_string()),
        "error kinds {errors:?}"
    );
    let parsed = a.iter().filter(|p| matches!(p.parsed, Parsed::Label(_))).count();
    ensure!(parsed == 3, "{parsed} parsed answers");
    ensure!(da.len() == 4, "{} backoff sleeps", da.len());

    let transport = Arc::new(ReplayTransport::load(&dir).map_err(|e| e.to_string())?);
    let sleeper = Arc::new(RecordingSleeper::default());
    let tts = TtsClient::from_client(common::wire_endpoint(transport, sleeper.clone()));
    let reference = common::wire_reference(&dir);
    let mut speech = Vec::new();
    for (text, seed) in common::WIRE_SPEECH {
        speech.push(tts.synthesize(text, &reference, seed));
    }
    ensure!(
        speech[0].as_ref().is_ok_and(|a| a.is_pipeline_format()) && speech[1].is_ok(),
        "speech replies not decoded"
    );
    ensure!(
        speech[2] == Err(ServiceError::Auth { status: 401 }),
        "expected auth failure, got {:?}",
        speech[2].as_ref().err()
    );
    ensure!(sleeper.delays().len() == 1, "speech backoff {:?}", sleeper.delays());
    Ok(format!(
        "6 chat exchanges stable, errors {errors:?}, {} backoffs; speech ok/5xx-retry/401",
        da.len()
    ))
}
