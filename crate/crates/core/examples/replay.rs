//! Drives the chat client against recorded exchanges, including a rate
//! limit, a timeout and a malformed reply.
//!
//! cargo run --example replay

#[path = "../tests/common/mod.rs"]
mod common;

use std::sync::Arc;

use syncog::evaluate::run_rollouts;
use syncog::label::Language;
use syncog::prompts::{default_stimulus, PromptTemplate, TemplateId};
use syncog::services::{ChatClient, RecordingSleeper, ReplayTransport};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let transport = Arc::new(ReplayTransport::load(&common::wire_dir())?);
    let sleeper = Arc::new(RecordingSleeper::default());
    let chat = ChatClient::from_client(common::wire_endpoint(transport, sleeper.clone()));
    let preds = run_rollouts(
        &common::wire_samples(),
        &chat,
        &PromptTemplate::builtin(TemplateId::Cls, Language::En),
        default_stimulus(Language::En),
        &common::wire_eval_config(),
    )?;
    for p in &preds {
        println!(
            "{} r{} {:?} {}",
            p.sample_id,
            p.rollout_idx,
            p.parsed,
            p.error.as_deref().unwrap_or("")
        );
    }
    println!("backoff sleeps: {:?}", sleeper.delays());
    Ok(())
}
