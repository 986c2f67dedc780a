//! Prompt templates for persona synthesis (`syn`), label-conditioned
//! reasoning (`cot`) and diagnostic inference (`cls`).
//!
//! File format:
//!
//! ```text
//! # comment
//! id: syn
//! language: en
//! placeholders: age, sex, ...
//! hash: 0123456789abcdef        (optional; verified on load)
//! --- system
//! ...
//! --- user
//! ... {age} ... {{literal braces}} ...
//! ```
//!
//! The version hash covers everything from the first `---` line on.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::VersionHash;
use crate::label::{Label, LabelScheme, Language};
use crate::persona::{Persona, Sex, StyleDimension, StyleVector};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("template line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("placeholder `{0}` is not declared in the template header")]
    UndeclaredPlaceholder(String),
    #[error("no binding for placeholder `{0}`")]
    MissingBinding(String),
    #[error("stored hash {stored} does not match body hash {computed}")]
    HashMismatch { stored: VersionHash, computed: VersionHash },
    #[error("expected template {expected}/{expected_lang}, file declares {found}/{found_lang}")]
    WrongTemplate {
        expected: TemplateId,
        expected_lang: Language,
        found: TemplateId,
        found_lang: Language,
    },
    #[error("inference prompts must not be given a `label` binding")]
    LabelBinding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateId {
    Syn,
    Cot,
    Cls,
}

impl TemplateId {
    pub const ALL: [TemplateId; 3] = [TemplateId::Syn, TemplateId::Cot, TemplateId::Cls];

    pub fn tag(self) -> &'static str {
        match self {
            TemplateId::Syn => "syn",
            TemplateId::Cot => "cot",
            TemplateId::Cls => "cls",
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for TemplateId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "syn" => Ok(TemplateId::Syn),
            "cot" => Ok(TemplateId::Cot),
            "cls" => Ok(TemplateId::Cls),
            other => Err(format!("unknown template id `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct MessageTemplate {
    role: Role,
    segments: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub template_id: TemplateId,
    pub language: Language,
    pub placeholders: BTreeSet<String>,
    pub version_hash: VersionHash,
    messages: Vec<MessageTemplate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub template_id: TemplateId,
    pub messages: Vec<Message>,
    pub bindings: BTreeMap<String, String>,
    pub template_version: VersionHash,
    /// WAV files sent alongside the last user message.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attachments: Vec<PathBuf>,
}

impl RenderedPrompt {
    pub fn with_attachment(mut self, path: impl Into<PathBuf>) -> Self {
        self.attachments.push(path.into());
        self
    }

    pub fn binding(&self, name: &str) -> Option<&str> {
        self.bindings.get(name).map(String::as_str)
    }

    pub fn full_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn parse_segments(content: &str, line: usize) -> Result<Vec<Segment>, PromptError> {
    let mut out = Vec::new();
    let mut text = String::new();
    let mut chars = content.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '{' if chars.peek() == Some(&'{') => {
                chars.next();
                text.push('{');
            }
            '}' if chars.peek() == Some(&'}') => {
                chars.next();
                text.push('}');
            }
            '{' => {
                let mut name = String::new();
                loop {
                    match chars.next() {
                        Some('}') => break,
                        Some(ch) if ch.is_ascii_alphanumeric() || ch == '_' => name.push(ch),
                        _ => {
                            return Err(PromptError::Parse {
                                line,
                                message: "unterminated or malformed placeholder (use {{ for a literal brace)".into(),
                            })
                        }
                    }
                }
                if name.is_empty() {
                    return Err(PromptError::Parse {
                        line,
                        message: "empty placeholder {}".into(),
                    });
                }
                if !text.is_empty() {
                    out.push(Segment::Text(std::mem::take(&mut text)));
                }
                out.push(Segment::Slot(name));
            }
            '}' => {
                return Err(PromptError::Parse {
                    line,
                    message: "stray `}` (use }} for a literal brace)".into(),
                })
            }
            _ => text.push(c),
        }
    }
    if !text.is_empty() {
        out.push(Segment::Text(text));
    }
    Ok(out)
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let text = text.replace("\r\n", "\n");
        let mut id = None;
        let mut language = None;
        let mut placeholders = None;
        let mut stored_hash = None;
        let lines: Vec<&str> = text.split('\n').collect();
        let mut i = 0;
        while i < lines.len() && !lines[i].starts_with("---") {
            let line = lines[i].trim();
            i += 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once(':').ok_or_else(|| PromptError::Parse {
                line: i,
                message: format!("expected `key: value`, got `{line}`"),
            })?;
            let value = value.trim();
            let bad = |message: String| PromptError::Parse { line: i, message };
            match key.trim() {
                "id" => id = Some(value.parse::<TemplateId>().map_err(bad)?),
                "language" => language = Some(value.parse::<Language>().map_err(|e| bad(e.to_string()))?),
                "placeholders" => {
                    placeholders = Some(
                        value
                            .split(',')
                            .map(str::trim)
                            .filter(|p| !p.is_empty())
                            .map(String::from)
                            .collect::<BTreeSet<_>>(),
                    )
                }
                "hash" => stored_hash = Some(value.parse::<VersionHash>().map_err(|e| bad(e.to_string()))?),
                other => return Err(bad(format!("unknown header key `{other}`"))),
            }
        }
        let header_err = |what: &str| PromptError::Parse {
            line: i,
            message: format!("header is missing `{what}`"),
        };
        let template_id = id.ok_or_else(|| header_err("id"))?;
        let language = language.ok_or_else(|| header_err("language"))?;
        let placeholders = placeholders.ok_or_else(|| header_err("placeholders"))?;

        let body = lines[i..].join("\n");
        let version_hash = VersionHash::of(body.as_bytes());
        if let Some(stored) = stored_hash {
            if stored != version_hash {
                return Err(PromptError::HashMismatch {
                    stored,
                    computed: version_hash,
                });
            }
        }

        let mut messages = Vec::new();
        while i < lines.len() {
            let marker = lines[i];
            let start_line = i + 1;
            let role = match marker.trim_start_matches('-').trim() {
                "system" => Role::System,
                "user" => Role::User,
                other => {
                    return Err(PromptError::Parse {
                        line: start_line,
                        message: format!("unknown role `{other}`"),
                    })
                }
            };
            i += 1;
            let begin = i;
            while i < lines.len() && !lines[i].starts_with("---") {
                i += 1;
            }
            let content = lines[begin..i].join("\n");
            let content = content.trim_end_matches('\n');
            let segments = parse_segments(content, start_line)?;
            for s in &segments {
                if let Segment::Slot(name) = s {
                    if !placeholders.contains(name) {
                        return Err(PromptError::UndeclaredPlaceholder(name.clone()));
                    }
                }
            }
            messages.push(MessageTemplate { role, segments });
        }
        if messages.is_empty() {
            return Err(PromptError::Parse {
                line: i,
                message: "template has no message blocks".into(),
            });
        }
        Ok(Self {
            template_id,
            language,
            placeholders,
            version_hash,
            messages,
        })
    }

    /// The shipped default for `(id, language)`.
    pub fn builtin(id: TemplateId, language: Language) -> Self {
        let text = match (id, language) {
            (TemplateId::Syn, Language::En) => include_str!("../data/templates/syn.en.txt"),
            (TemplateId::Syn, Language::Zh) => include_str!("../data/templates/syn.zh.txt"),
            (TemplateId::Cot, Language::En) => include_str!("../data/templates/cot.en.txt"),
            (TemplateId::Cot, Language::Zh) => include_str!("../data/templates/cot.zh.txt"),
            (TemplateId::Cls, Language::En) => include_str!("../data/templates/cls.en.txt"),
            (TemplateId::Cls, Language::Zh) => include_str!("../data/templates/cls.zh.txt"),
        };
        Self::parse(text).expect("shipped templates parse")
    }

    /// Placeholders actually referenced by the body.
    pub fn used_placeholders(&self) -> BTreeSet<&str> {
        self.messages
            .iter()
            .flat_map(|m| &m.segments)
            .filter_map(|s| match s {
                Segment::Slot(n) => Some(n.as_str()),
                Segment::Text(_) => None,
            })
            .collect()
    }
}

pub fn load_template(path: &Path, template_id: TemplateId, language: Language) -> Result<PromptTemplate, PromptError> {
    let text = fs::read_to_string(path).map_err(|source| PromptError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let t = PromptTemplate::parse(&text)?;
    if t.template_id != template_id || t.language != language {
        return Err(PromptError::WrongTemplate {
            expected: template_id,
            expected_lang: language,
            found: t.template_id,
            found_lang: t.language,
        });
    }
    Ok(t)
}

/// Single-pass substitution; bound values are inserted verbatim. Extra
/// bindings are kept on the result for downstream consumers.
pub fn render(template: &PromptTemplate, bindings: &BTreeMap<String, String>) -> Result<RenderedPrompt, PromptError> {
    if template.template_id == TemplateId::Cls && bindings.contains_key("label") {
        return Err(PromptError::LabelBinding);
    }
    for name in &template.placeholders {
        if !bindings.contains_key(name) {
            return Err(PromptError::MissingBinding(name.clone()));
        }
    }
    let messages = template
        .messages
        .iter()
        .map(|m| {
            let mut content = String::new();
            for s in &m.segments {
                match s {
                    Segment::Text(t) => content.push_str(t),
                    Segment::Slot(n) => content.push_str(&bindings[n]),
                }
            }
            Message { role: m.role, content }
        })
        .collect();
    Ok(RenderedPrompt {
        template_id: template.template_id,
        messages,
        bindings: bindings.clone(),
        template_version: template.version_hash,
        attachments: Vec::new(),
    })
}

/// One template per id for a language, from a directory of
/// `<id>.<lang>.txt` files or the shipped defaults.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub language: Language,
    pub syn: PromptTemplate,
    pub cot: PromptTemplate,
    pub cls: PromptTemplate,
}

impl TemplateSet {
    pub fn builtin(language: Language) -> Self {
        Self {
            language,
            syn: PromptTemplate::builtin(TemplateId::Syn, language),
            cot: PromptTemplate::builtin(TemplateId::Cot, language),
            cls: PromptTemplate::builtin(TemplateId::Cls, language),
        }
    }

    /// Files missing from `dir` fall back to the shipped default.
    pub fn load(dir: Option<&Path>, language: Language) -> Result<Self, PromptError> {
        let get = |id: TemplateId| -> Result<PromptTemplate, PromptError> {
            match dir.map(|d| d.join(format!("{}.{}.txt", id.tag(), language.tag()))) {
                Some(path) if path.exists() => load_template(&path, id, language),
                _ => Ok(PromptTemplate::builtin(id, language)),
            }
        };
        Ok(Self {
            language,
            syn: get(TemplateId::Syn)?,
            cot: get(TemplateId::Cot)?,
            cls: get(TemplateId::Cls)?,
        })
    }

    pub fn get(&self, id: TemplateId) -> &PromptTemplate {
        match id {
            TemplateId::Syn => &self.syn,
            TemplateId::Cot => &self.cot,
            TemplateId::Cls => &self.cls,
        }
    }
}

pub fn default_stimulus(language: Language) -> &'static str {
    match language {
        Language::En => "a kitchen scene. A boy standing on a wobbling stool reaches into a cookie jar on a high shelf and hands a cookie to a girl. Their mother dries a plate at the sink while the sink overflows and water spills onto the floor. Through the window with curtains you can see the garden.",
        Language::Zh => "一个厨房场景。小男孩站在摇晃的凳子上，从高处柜子里的饼干罐拿饼干递给小女孩。妈妈在水槽边擦盘子，水槽里的水溢出来流到地上。透过挂着窗帘的窗户可以看到花园。",
    }
}

pub fn default_register_note(language: Language) -> &'static str {
    match language {
        Language::En => "Speak in a colloquial, spontaneous oral register, the way an older adult talks, not a written or structured summary.",
        Language::Zh => "请使用口语化、自然随意的表达方式，像老年人平时说话那样，不要写成书面语或条理化的总结。",
    }
}

pub fn language_name(language: Language) -> &'static str {
    match language {
        Language::En => "English",
        Language::Zh => "Mandarin Chinese",
    }
}

fn level_name(level: u8, language: Language) -> &'static str {
    match (level, language) {
        (1, Language::En) => "poor",
        (2, Language::En) => "normal",
        (_, Language::En) => "good",
        (1, Language::Zh) => "差",
        (2, Language::Zh) => "一般",
        (_, Language::Zh) => "好",
    }
}

fn dimension_name(dim: StyleDimension, language: Language) -> &'static str {
    match (dim, language) {
        (StyleDimension::NarrativeLength, Language::En) => "Narrative length",
        (StyleDimension::SyntacticComplexity, Language::En) => "Syntactic complexity",
        (StyleDimension::SpatialReference, Language::En) => "Spatial reference",
        (StyleDimension::Fluency, Language::En) => "Fluency",
        (StyleDimension::Clarity, Language::En) => "Clarity of expression",
        (StyleDimension::NarrativeLength, Language::Zh) => "叙述长度",
        (StyleDimension::SyntacticComplexity, Language::Zh) => "句法复杂度",
        (StyleDimension::SpatialReference, Language::Zh) => "空间指代",
        (StyleDimension::Fluency, Language::Zh) => "流利度",
        (StyleDimension::Clarity, Language::Zh) => "表达清晰度",
    }
}

/// The scoring band for one level, phrased as an instruction.
pub fn band_description(dim: StyleDimension, level: u8, language: Language) -> &'static str {
    use StyleDimension::*;
    match (language, dim, level) {
        (Language::En, NarrativeLength, 1) => "no more than 100 words in total",
        (Language::En, NarrativeLength, 2) => "between 101 and 135 words in total",
        (Language::En, NarrativeLength, _) => "at least 136 words in total",
        (Language::En, SyntacticComplexity, 1) => "short simple sentences of about eight words or fewer, with no subordinate clauses",
        (Language::En, SyntacticComplexity, 2) => "mostly simple sentences of moderate length",
        (Language::En, SyntacticComplexity, _) => "sentences of clearly varied length, with a subordinate clause (because, when, while) in at least one sentence out of three",
        (Language::En, SpatialReference, 1) => "at most one spatial expression such as left, next to or behind",
        (Language::En, SpatialReference, 2) => "exactly two spatial expressions",
        (Language::En, SpatialReference, _) => "three or more spatial expressions locating things in the picture",
        (Language::En, Fluency, 1) => "four or more hesitations, fillers (um, uh), self-corrections or repeated words",
        (Language::En, Fluency, 2) => "two or three hesitations or fillers",
        (Language::En, Fluency, _) => "at most one hesitation",
        (Language::En, Clarity, 1) => "vague words (thing, stuff, something) four or more times and at most one object named precisely",
        (Language::En, Clarity, 2) => "two or three vague words and two objects named precisely",
        (Language::En, Clarity, _) => "precise wording with at most one vague word, naming at least three objects such as the boy, the cookie jar or the sink",
        (Language::Zh, NarrativeLength, 1) => "总共不超过100个字",
        (Language::Zh, NarrativeLength, 2) => "总共101到135个字",
        (Language::Zh, NarrativeLength, _) => "总共至少136个字",
        (Language::Zh, SyntacticComplexity, 1) => "只用短小的简单句，每句大约八个字以内，不用从句",
        (Language::Zh, SyntacticComplexity, 2) => "以中等长度的简单句为主",
        (Language::Zh, SyntacticComplexity, _) => "句子长短明显变化，至少三分之一的句子带有因为、虽然、如果等从句",
        (Language::Zh, SpatialReference, 1) => "最多一个方位词，比如左边、旁边、后面",
        (Language::Zh, SpatialReference, 2) => "恰好两个方位词",
        (Language::Zh, SpatialReference, _) => "三个或更多方位词来说明东西的位置",
        (Language::Zh, Fluency, 1) => "四次或更多停顿、语气词（嗯、呃）、自我纠正或重复",
        (Language::Zh, Fluency, 2) => "两到三次停顿或语气词",
        (Language::Zh, Fluency, _) => "最多一次停顿",
        (Language::Zh, Clarity, 1) => "四次或更多含糊的词（东西、那个），最多准确说出一样东西",
        (Language::Zh, Clarity, 2) => "两到三个含糊的词，准确说出两样东西",
        (Language::Zh, Clarity, _) => "用词准确，最多一个含糊的词，至少准确说出三样东西，比如男孩、饼干罐、水槽",
    }
}

/// The five style levels as a bulleted block for the synthesis prompt.
pub fn style_profile(style: &StyleVector, language: Language) -> String {
    style
        .iter()
        .map(|(dim, level)| {
            format!(
                "- {}: {} ({}), {}",
                dimension_name(dim, language),
                level,
                level_name(level, language),
                band_description(dim, level, language)
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn sex_name(sex: Sex, language: Language) -> &'static str {
    match (sex, language) {
        (Sex::Female, Language::En) => "woman",
        (Sex::Male, Language::En) => "man",
        (Sex::Female, Language::Zh) => "女性",
        (Sex::Male, Language::Zh) => "男性",
    }
}

fn bindings<const N: usize>(pairs: [(&str, String); N]) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

pub fn syn_bindings(persona: &Persona, stimulus: &str) -> BTreeMap<String, String> {
    let lang = persona.language;
    bindings([
        ("age", persona.demographics.age.to_string()),
        ("sex", sex_name(persona.demographics.sex, lang).to_string()),
        ("education", persona.demographics.education.describe(lang).to_string()),
        ("style_profile", style_profile(&persona.style, lang)),
        ("stimulus", stimulus.to_string()),
        ("language", language_name(lang).to_string()),
        ("register_note", default_register_note(lang).to_string()),
    ])
}

pub fn cot_bindings(transcript: &str, label: Label, language: Language, stimulus: &str) -> BTreeMap<String, String> {
    bindings([
        ("transcript", transcript.to_string()),
        ("label", label.canonical().to_string()),
        ("label_description", label.description(language).to_string()),
        ("stimulus", stimulus.to_string()),
        ("language", language_name(language).to_string()),
    ])
}

/// Answer options line, e.g. `HC (healthy control), MCI (...), AD (...)`.
pub fn label_options(scheme: LabelScheme, language: Language) -> String {
    let sep = match language {
        Language::En => ", ",
        Language::Zh => "，",
    };
    scheme
        .labels()
        .iter()
        .map(|l| match language {
            Language::En => format!("{} ({})", l.canonical(), l.description(language)),
            Language::Zh => format!("{}（{}）", l.canonical(), l.description(language)),
        })
        .collect::<Vec<_>>()
        .join(sep)
}

pub fn cls_bindings(
    transcript: &str,
    scheme: LabelScheme,
    language: Language,
    stimulus: &str,
) -> BTreeMap<String, String> {
    bindings([
        ("transcript", transcript.to_string()),
        ("label_options", label_options(scheme, language)),
        ("stimulus", stimulus.to_string()),
        ("language", language_name(language).to_string()),
    ])
}

/// Labels of `scheme` whose canonical token occurs in `text` as a whole word.
pub fn label_tokens_in(text: &str, scheme: LabelScheme) -> Vec<Label> {
    let is_word = |c: char| c.is_ascii_alphanumeric() || c == '-' || c == '_';
    let mut found = Vec::new();
    for &label in scheme.labels() {
        let tok = label.canonical();
        let hit = text.match_indices(tok).any(|(i, _)| {
            let before = text[..i].chars().next_back();
            let after = text[i + tok.len()..].chars().next();
            !before.is_some_and(is_word) && !after.is_some_and(is_word)
        });
        if hit {
            found.push(label);
        }
    }
    found
}
