use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RubricError;
use crate::label::Language;

/// The word lists one lexicon directory provides, by file stem.
pub const LEXICON_FILES: [&str; 7] = [
    "fillers",
    "vague_terms",
    "spatial_terms",
    "key_nouns",
    "subordinators",
    "conjunctions",
    "repair_markers",
];

/// Per-language word lists driving feature extraction.
///
/// English entries may span several words (`next to`); Mandarin entries are
/// contiguous character strings that also seed the greedy segmenter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicons {
    pub language: Language,
    pub fillers: Vec<String>,
    pub vague_terms: Vec<String>,
    pub spatial_terms: Vec<String>,
    pub key_nouns: Vec<String>,
    pub subordinators: Vec<String>,
    pub conjunctions: Vec<String>,
    pub repair_markers: Vec<String>,
}

/// Parses the one-entry-per-line format: UTF-8, `#` comments, blank lines
/// ignored. English entries are lowercased and whitespace-collapsed.
pub fn parse_list(text: &str, language: Language) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let entry = match language {
            Language::En => line
                .split_whitespace()
                .map(|w| w.to_lowercase())
                .collect::<Vec<_>>()
                .join(" "),
            Language::Zh => line.chars().filter(|c| !c.is_whitespace()).collect(),
        };
        if !out.contains(&entry) {
            out.push(entry);
        }
    }
    out
}

macro_rules! embedded {
    ($lang:literal) => {
        [
            include_str!(concat!("../../data/lexicons/", $lang, "/fillers.txt")),
            include_str!(concat!("../../data/lexicons/", $lang, "/vague_terms.txt")),
            include_str!(concat!("../../data/lexicons/", $lang, "/spatial_terms.txt")),
            include_str!(concat!("../../data/lexicons/", $lang, "/key_nouns.txt")),
            include_str!(concat!("../../data/lexicons/", $lang, "/subordinators.txt")),
            include_str!(concat!("../../data/lexicons/", $lang, "/conjunctions.txt")),
            include_str!(concat!("../../data/lexicons/", $lang, "/repair_markers.txt")),
        ]
    };
}

impl Lexicons {
    /// The lexicons shipped with the crate.
    pub fn builtin(language: Language) -> Self {
        let texts = match language {
            Language::En => embedded!("en"),
            Language::Zh => embedded!("zh"),
        };
        Self::from_texts(language, texts).expect("shipped lexicons are nonempty")
    }

    fn from_texts(language: Language, texts: [&str; 7]) -> Result<Self, RubricError> {
        let lists: Vec<Vec<String>> = texts.iter().map(|t| parse_list(t, language)).collect();
        for (name, list) in LEXICON_FILES.iter().zip(&lists) {
            if list.is_empty() {
                return Err(RubricError::EmptyLexicon {
                    language,
                    list: name.to_string(),
                });
            }
        }
        let mut it = lists.into_iter();
        let mut next = || it.next().expect("seven lists");
        Ok(Self {
            language,
            fillers: next(),
            vague_terms: next(),
            spatial_terms: next(),
            key_nouns: next(),
            subordinators: next(),
            conjunctions: next(),
            repair_markers: next(),
        })
    }

    /// Loads `<dir>/<language tag>/<list>.txt` for every list.
    pub fn load(dir: &Path, language: Language) -> Result<Self, RubricError> {
        let base = dir.join(language.tag());
        let mut texts = Vec::with_capacity(LEXICON_FILES.len());
        for name in LEXICON_FILES {
            let path = base.join(format!("{name}.txt"));
            let text = fs::read_to_string(&path).map_err(|source| RubricError::Io {
                path: path.display().to_string(),
                source,
            })?;
            texts.push(text);
        }
        let arr: [&str; 7] = std::array::from_fn(|i| texts[i].as_str());
        Self::from_texts(language, arr)
    }

    /// Writes the lists back out in the on-disk format.
    pub fn write(&self, dir: &Path) -> Result<(), RubricError> {
        let base = dir.join(self.language.tag());
        fs::create_dir_all(&base).map_err(|source| RubricError::Io {
            path: base.display().to_string(),
            source,
        })?;
        for (name, list) in LEXICON_FILES.iter().zip(self.lists()) {
            let path = base.join(format!("{name}.txt"));
            let mut body = list.join("\n");
            body.push('\n');
            fs::write(&path, body).map_err(|source| RubricError::Io {
                path: path.display().to_string(),
                source,
            })?;
        }
        Ok(())
    }

    pub fn lists(&self) -> [&Vec<String>; 7] {
        [
            &self.fillers,
            &self.vague_terms,
            &self.spatial_terms,
            &self.key_nouns,
            &self.subordinators,
            &self.conjunctions,
            &self.repair_markers,
        ]
    }

    /// All entries across lists; the Mandarin segmenter's dictionary.
    pub fn all_entries(&self) -> impl Iterator<Item = &String> {
        self.lists().into_iter().flatten()
    }

    /// Folds a plural key noun onto its singular when both are listed.
    pub fn canonical_key_noun<'a>(&'a self, entry: &'a str) -> &'a str {
        if self.language == Language::En {
            if let Some(stem) = entry.strip_suffix('s') {
                if self.key_nouns.iter().any(|k| k == stem) {
                    return stem;
                }
            }
        }
        entry
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_skips_comments_and_normalizes() {
        let l = parse_list("# header\nUm\n\n  Next   To # inline\num\n", Language::En);
        assert_eq!(l, vec!["um".to_string(), "next to".to_string()]);
    }

    #[test]
    fn builtin_lists_are_nonempty_for_both_languages() {
        for lang in [Language::En, Language::Zh] {
            let lex = Lexicons::builtin(lang);
            assert!(lex.lists().iter().all(|l| !l.is_empty()));
        }
    }

    #[test]
    fn english_defaults_include_documented_words() {
        let lex = Lexicons::builtin(Language::En);
        for w in ["um", "uh", "er", "hmm", "well", "like"] {
            assert!(lex.fillers.contains(&w.to_string()), "{w}");
        }
        for w in ["thing", "stuff", "something", "someone", "whatchamacallit"] {
            assert!(lex.vague_terms.contains(&w.to_string()), "{w}");
        }
        for w in [
            "boy", "girl", "mother", "cookie", "jar", "stool", "sink", "water", "plate", "curtain", "window",
        ] {
            assert!(lex.key_nouns.contains(&w.to_string()), "{w}");
        }
    }

    #[test]
    fn write_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let lex = Lexicons::builtin(Language::Zh);
        lex.write(dir.path()).unwrap();
        assert_eq!(Lexicons::load(dir.path(), Language::Zh).unwrap(), lex);
    }

    #[test]
    fn plural_key_nouns_fold() {
        let lex = Lexicons::builtin(Language::En);
        assert_eq!(lex.canonical_key_noun("cookies"), "cookie");
        assert_eq!(lex.canonical_key_noun("water"), "water");
    }
}
