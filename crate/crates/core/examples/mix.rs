//! Real-plus-synthetic training splits along the augmentation ladder.
//!
//! cargo run --example mix

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use syncog::corpus::{derive_seed, mix, DatasetSplit, SplitEntry};
use syncog::label::Label;

fn split(name: &str, prefix: &str, per_class: usize) -> DatasetSplit {
    let entries = [Label::Hc, Label::Mci, Label::Ad].into_iter().flat_map(|label| {
        (0..per_class).map(move |i| SplitEntry {
            sample_id: format!("{prefix}-{}-{i}", label.canonical()),
            label,
        })
    });
    DatasetSplit::new(name, entries)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let real = split("real", "r", 4);
    let synthetic = split("synthetic", "s", 20);
    println!("ratio  HC  MCI  AD  total");
    for k in 0..=5 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(1, "mix", k as u64));
        let m = mix(&real, &synthetic, k, &mut rng)?;
        let h = &m.class_histogram;
        let n = |l| h.get(&l).copied().unwrap_or(0);
        println!(
            "{k:>5} {:>3} {:>4} {:>3} {:>6}",
            n(Label::Hc),
            n(Label::Mci),
            n(Label::Ad),
            m.len()
        );
    }
    Ok(())
}
