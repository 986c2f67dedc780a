//! Scores a transcript on the five style axes.
//!
//! cargo run --example rubric -- "Um the boy is uh on the thing..."

use syncog::label::Language;
use syncog::persona::StyleDimension;
use syncog::rubric::{analyze, score, Lexicons};

fn main() {
    let text = std::env::args().nth(1).unwrap_or_else(|| {
        "The mother is drying a plate while the sink overflows. Um the boy, the boy is on the stool \
         behind her and he is uh reaching for the cookie jar. The thing is... the girl wants one too."
            .to_string()
    });
    let language = if text.chars().any(|c| ('\u{4e00}'..='\u{9fff}').contains(&c)) {
        Language::Zh
    } else {
        Language::En
    };
    let profile = analyze(&text, &Lexicons::builtin(language));
    println!("{}", serde_json::to_string_pretty(&profile).unwrap());
    let scores = score(&profile);
    for dim in StyleDimension::ALL {
        println!("{:<22} {}", dim.name(), scores.get(dim));
    }
}
