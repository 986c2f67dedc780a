//! Plans a small ternary cohort and generates it with the offline doubles.
//!
//! cargo run --example cohort

use std::sync::Arc;

use syncog::figures::{cohort_stats, profiles_by_label};
use syncog::label::{LabelScheme, Language};
use syncog::persona::{plan_cohort, CohortSpec, StyleSamplerParams};
use syncog::pipeline::{generate_cohort, GenerationPolicy, PipelineDeps};
use syncog::prompts::{default_stimulus, TemplateSet};
use syncog::rubric::Lexicons;
use syncog::services::{StubNarrator, StubTts};
use syncog::timbre::TimbreLibrary;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let run = tempfile::tempdir()?;
    let timbres = TimbreLibrary::build_stub(&run.path().join("timbres"), 2, 7)?;
    let deps = PipelineDeps {
        narrator: Arc::new(StubNarrator::new()),
        tts: Arc::new(StubTts),
        lexicons: Lexicons::builtin(Language::En),
        templates: TemplateSet::builtin(Language::En),
        timbres: Arc::new(timbres),
        sampler: StyleSamplerParams::default(),
        stimulus: default_stimulus(Language::En).to_string(),
        run_dir: run.path().to_path_buf(),
    };
    let plan = plan_cohort(&CohortSpec::balanced("demo", LabelScheme::Ternary, 6, Language::En, 42))?;
    let (manifest, report) = generate_cohort(&plan, &deps, &GenerationPolicy::stub(), &Default::default())?;
    println!(
        "{} records, {} flagged, seal {}",
        report.new_records,
        report.flagged,
        report.seal.as_deref().unwrap_or("-")
    );
    println!("labels: {:?}", manifest.label_counts());

    let first = &manifest.records[0];
    let persona = first.persona.as_ref().expect("synthetic records carry a persona");
    println!(
        "\n{} ({}, style {:?})",
        first.sample_id,
        first.label.label(),
        persona.style.levels()
    );
    println!("{}", first.transcript);

    let stats = cohort_stats(&profiles_by_label(&manifest))?;
    for row in stats.comparisons.iter().filter(|r| r.feature == "total_words") {
        println!(
            "\ntotal_words {} vs {}: medians {} / {}, p = {:.4}",
            row.group_a, row.group_b, row.median_a, row.median_b, row.p_value
        );
    }
    Ok(())
}
