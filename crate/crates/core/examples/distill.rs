//! Label-conditioned rationales for a stub cohort, exported as chat-format
//! fine-tuning records.
//!
//! cargo run --example distill

use std::sync::Arc;

use syncog::evaluate::EvalSample;
use syncog::label::{LabelScheme, Language};
use syncog::persona::{plan_cohort, CohortSpec, StyleSamplerParams};
use syncog::pipeline::{distill_cot, export_sft, generate_cohort, DistillConfig, GenerationPolicy, PipelineDeps};
use syncog::prompts::{default_stimulus, PromptTemplate, TemplateId, TemplateSet};
use syncog::rubric::Lexicons;
use syncog::services::{StubNarrator, StubRationaleModel, StubTts};
use syncog::timbre::TimbreLibrary;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let run = tempfile::tempdir()?;
    let stimulus = default_stimulus(Language::En);
    let deps = PipelineDeps {
        narrator: Arc::new(StubNarrator::new()),
        tts: Arc::new(StubTts),
        lexicons: Lexicons::builtin(Language::En),
        templates: TemplateSet::builtin(Language::En),
        timbres: Arc::new(TimbreLibrary::build_stub(&run.path().join("timbres"), 2, 1)?),
        sampler: StyleSamplerParams::default(),
        stimulus: stimulus.to_string(),
        run_dir: run.path().to_path_buf(),
    };
    let plan = plan_cohort(&CohortSpec::balanced("cot", LabelScheme::Ternary, 4, Language::En, 9))?;
    let (manifest, _) = generate_cohort(&plan, &deps, &GenerationPolicy::stub(), &Default::default())?;

    let samples: Vec<EvalSample> = manifest
        .records
        .iter()
        .map(|r| EvalSample {
            sample_id: r.sample_id.clone(),
            transcript: r.transcript.clone(),
            label: r.label.label(),
            audio_path: r.audio_ref.as_ref().map(|a| run.path().join(&a.path)),
        })
        .collect();
    // one rationale argues for the wrong label and is dropped
    let model = StubRationaleModel::new(Lexicons::builtin(Language::En), LabelScheme::Ternary)
        .with_inconsistent([samples[0].sample_id.clone()]);
    let cfg = DistillConfig::new(LabelScheme::Ternary, Language::En, stimulus);
    let report = distill_cot(
        &samples,
        &model,
        &PromptTemplate::builtin(TemplateId::Cot, Language::En),
        &cfg,
    )?;
    println!("kept {}, dropped {:?}", report.records.len(), report.dropped);

    let out = run.path().join("sft/train.jsonl");
    let cls = PromptTemplate::builtin(TemplateId::Cls, Language::En);
    let n = export_sft(&report.records, &manifest, &cls, stimulus, &out)?;
    println!("{n} training records; first:");
    let text = std::fs::read_to_string(&out)?;
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap_or("{}"))?;
    println!("{}", serde_json::to_string_pretty(&first["messages"][2])?);
    Ok(())
}
