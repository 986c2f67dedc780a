//! Multi-rollout evaluation of a noisy offline classifier.
//!
//! cargo run --example evaluate

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use syncog::evaluate::{compute_metrics, run_rollouts, stratify, EvalConfig, EvalSample, Transition};
use syncog::label::{Label, LabelScheme, Language};
use syncog::prompts::{default_stimulus, PromptTemplate, TemplateId};
use syncog::services::{ClassifierMode, StubClassifier};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let labels = [Label::Hc, Label::Mci, Label::Ad];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let samples: Vec<EvalSample> = (0..60)
        .map(|i| EvalSample {
            sample_id: format!("s{i:02}"),
            transcript: format!("Transcript number {i}."),
            label: labels[rng.random_range(0..3)],
            audio_path: None,
        })
        .collect();
    let truth: HashMap<String, Label> = samples.iter().map(|s| (s.sample_id.clone(), s.label)).collect();
    let model = StubClassifier::new(LabelScheme::Ternary, ClassifierMode::Random { truth, accuracy: 0.7 });

    let cfg = EvalConfig::new(LabelScheme::Ternary, Language::En);
    let template = PromptTemplate::builtin(TemplateId::Cls, Language::En);
    let preds = run_rollouts(&samples, &model, &template, default_stimulus(Language::En), &cfg)?;

    let truths: BTreeMap<String, Label> = samples.iter().map(|s| (s.sample_id.clone(), s.label)).collect();
    let m = compute_metrics(&preds, &truths, cfg.n_rollouts)?;
    println!(
        "macro-F1 {:.3} ± {:.3}   AVS {:.3}   BoN {:.3}   over {} rollouts",
        m.macro_f1.mean, m.macro_f1.sd, m.avs.mean, m.bon, m.n_rollouts
    );
    for t in Transition::ALL {
        let s = stratify(&preds, &truths, t, cfg.n_rollouts)?;
        println!("{:<16} {}", t.name(), serde_json::to_string(&s)?);
    }
    Ok(())
}
