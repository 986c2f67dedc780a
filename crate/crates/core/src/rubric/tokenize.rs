use std::collections::HashSet;
use std::ops::Range;

use super::Lexicons;
use crate::label::Language;

/// Word tokens plus sentence spans over them.
///
/// Ellipses (`...`, `…`, `……`) are not sentence boundaries; they are counted
/// separately as hesitation/repair events.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Tokenized {
    pub tokens: Vec<String>,
    pub sentences: Vec<Range<usize>>,
    pub ellipses: usize,
}

impl Tokenized {
    pub fn sentence_tokens(&self) -> impl Iterator<Item = &[String]> {
        self.sentences.iter().map(|r| &self.tokens[r.clone()])
    }
}

struct Builder {
    out: Tokenized,
    sentence_start: usize,
}

impl Builder {
    fn new() -> Self {
        Self {
            out: Tokenized::default(),
            sentence_start: 0,
        }
    }

    fn push(&mut self, token: String) {
        if !token.is_empty() {
            self.out.tokens.push(token);
        }
    }

    fn boundary(&mut self) {
        let end = self.out.tokens.len();
        if end > self.sentence_start {
            self.out.sentences.push(self.sentence_start..end);
        }
        self.sentence_start = end;
    }

    fn finish(mut self) -> Tokenized {
        self.boundary();
        self.out
    }
}

/// Splits `text` into lowercase word tokens and sentences.
///
/// English: whitespace and punctuation split words, `.`/`!`/`?` and line
/// breaks end sentences. Mandarin: greedy longest match against every
/// lexicon entry with a per-character fallback, `。`/`！`/`？` and line
/// breaks end sentences.
pub fn tokenize(text: &str, lexicons: &Lexicons) -> Tokenized {
    match lexicons.language {
        Language::En => tokenize_en(text),
        Language::Zh => tokenize_zh(text, lexicons),
    }
}

fn normalize_char(c: char) -> char {
    match c {
        '\u{2019}' | '\u{2018}' | '`' => '\'',
        '\u{2010}' | '\u{2011}' => '-',
        _ => c,
    }
}

pub fn tokenize_en(text: &str) -> Tokenized {
    let mut b = Builder::new();
    let chars: Vec<char> = text.chars().map(normalize_char).collect();
    let mut word = String::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let prev_alnum = i > 0 && chars[i - 1].is_alphanumeric();
        let next_alnum = chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
        if c.is_alphanumeric() {
            word.extend(c.to_lowercase());
            i += 1;
        } else if (c == '\'' || c == '-') && prev_alnum && next_alnum && !word.is_empty() {
            word.push(c);
            i += 1;
        } else if c == '.' && prev_alnum && next_alnum && chars[i - 1].is_ascii_digit() {
            // decimal point
            word.push(c);
            i += 1;
        } else if c == '.' || c == '…' {
            let start = i;
            while i < chars.len() && (chars[i] == '.' || chars[i] == '…') {
                i += 1;
            }
            let run = &chars[start..i];
            b.push(std::mem::take(&mut word));
            if run.len() >= 3 || run.contains(&'…') {
                b.out.ellipses += 1;
            } else {
                b.boundary();
            }
        } else if c == '!' || c == '?' || c == '\n' || c == '\r' {
            b.push(std::mem::take(&mut word));
            b.boundary();
            i += 1;
        } else {
            b.push(std::mem::take(&mut word));
            i += 1;
        }
    }
    b.push(word);
    b.finish()
}

fn is_cjk(c: char) -> bool {
    c.is_alphabetic() && !c.is_ascii()
}

pub fn tokenize_zh(text: &str, lexicons: &Lexicons) -> Tokenized {
    let dict: HashSet<Vec<char>> = lexicons
        .all_entries()
        .map(|e| e.chars().collect::<Vec<_>>())
        .filter(|e| e.len() > 1)
        .collect();
    let max_len = dict.iter().map(Vec::len).max().unwrap_or(1);
    let chars: Vec<char> = text.chars().collect();
    let mut b = Builder::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_ascii_alphanumeric() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            b.push(chars[start..i].iter().collect::<String>().to_lowercase());
        } else if is_cjk(c) {
            let mut run_end = i;
            while run_end < chars.len() && is_cjk(chars[run_end]) && run_end - i < max_len {
                run_end += 1;
            }
            let mut len = run_end - i;
            while len > 1 && !dict.contains(&chars[i..i + len]) {
                len -= 1;
            }
            b.push(chars[i..i + len].iter().collect());
            i += len;
        } else if c == '.' || c == '…' {
            let start = i;
            while i < chars.len() && (chars[i] == '.' || chars[i] == '…') {
                i += 1;
            }
            let run = &chars[start..i];
            if run.len() >= 3 || run.contains(&'…') {
                b.out.ellipses += 1;
            } else {
                b.boundary();
            }
        } else if matches!(c, '。' | '！' | '？' | '!' | '?' | '\n' | '\r') {
            b.boundary();
            i += 1;
        } else {
            i += 1;
        }
    }
    b.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(t: &Tokenized) -> Vec<&str> {
        t.tokens.iter().map(String::as_str).collect()
    }

    #[test]
    fn simple_sentence() {
        let t = tokenize_en("The boy falls.");
        assert_eq!(words(&t), ["the", "boy", "falls"]);
        assert_eq!(t.sentences.len(), 1);
    }

    #[test]
    fn empty_text() {
        let t = tokenize_en("");
        assert!(t.tokens.is_empty());
        assert!(t.sentences.is_empty());
    }

    #[test]
    fn ellipsis_is_not_a_boundary() {
        let t = tokenize_en("Um... the, um, sink overflows! Water everywhere.");
        assert_eq!(t.sentences.len(), 2);
        assert_eq!(t.ellipses, 1);
        assert_eq!(
            words(&t),
            ["um", "the", "um", "sink", "overflows", "water", "everywhere"]
        );
    }

    #[test]
    fn contractions_and_line_breaks() {
        let t = tokenize_en("She doesn't see it\nThe mother\u{2019}s busy");
        assert_eq!(words(&t), ["she", "doesn't", "see", "it", "the", "mother's", "busy"]);
        assert_eq!(t.sentences.len(), 2);
    }

    #[test]
    fn mandarin_greedy_longest_match() {
        let lex = Lexicons::builtin(Language::Zh);
        let t = tokenize_zh("嗯，小男孩在凳子上面。水槽里的水……流出来了！", &lex);
        assert_eq!(
            words(&t),
            [
                "嗯", "小", "男孩", "在", "凳子", "上面", "水槽", "里", "的", "水", "流", "出", "来", "了"
            ]
        );
        assert_eq!(t.sentences.len(), 2);
        assert_eq!(t.ellipses, 1);
    }
}
