//! Turns a two-speaker interview recording into a model-ready pair.
//!
//! cargo run --example preprocess

use std::fs;

use syncog::label::{LabelScheme, Language};
use syncog::preprocess::{run_batch, BatchConfig};
use syncog::rubric::Lexicons;
use syncog::services::{AudioBlob, ResampleQuality, StubTranscriber};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let input = dir.path().join("raw");
    fs::create_dir_all(&input)?;

    // 20 s of 44.1 kHz stereo: interviewer 0-4 s and 12-14 s, participant otherwise
    let rate = 44_100;
    let samples: Vec<i16> = (0..rate * 20 * 2)
        .map(|i| (((i / 2) as f64 * 0.05).sin() * 5000.0) as i16)
        .collect();
    AudioBlob::new(samples, rate as u32, 2)?.write_wav(&input.join("s001.wav"))?;
    fs::write(input.join("s001.segments"), "INV 0 4\nPAR 4 12\nINV 12 14\nPAR 14 20\n")?;
    fs::write(
        input.join("s001.txt"),
        "Well the boy is up on the stool and um the water is running over.\n",
    )?;
    fs::write(input.join("s001.label"), "MCI\n")?;

    let cfg = BatchConfig {
        cohort_id: "clinic".into(),
        language: Language::En,
        scheme: LabelScheme::Ternary,
        quality: ResampleQuality::Sinc,
        participant: None,
        lexicons: Some(Lexicons::builtin(Language::En)),
        master_seed: 0,
    };
    let out = dir.path().join("run");
    let report = run_batch(&input, &out, &cfg, &StubTranscriber)?;
    println!("processed {}, failures {:?}", report.processed, report.failures);
    let manifest = syncog::corpus::read_manifest(&out.join("manifest.jsonl"))?;
    for r in &manifest.records {
        let audio = r.audio_ref.as_ref().expect("real pairs carry audio");
        println!(
            "{} {} {:.1} s -> {}",
            r.sample_id,
            r.label.label(),
            audio.duration_s,
            r.transcript
        );
    }
    Ok(())
}
