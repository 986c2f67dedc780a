//! Diagnostic label schemes, cognitive status and run language.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Language of a cohort, lexicon set or prompt template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    Zh,
}

impl Language {
    pub fn tag(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::Zh => "zh",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Language {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "en" | "english" => Ok(Language::En),
            "zh" | "mandarin" | "chinese" => Ok(Language::Zh),
            other => Err(LabelError::UnknownLanguage(other.to_string())),
        }
    }
}

/// Binary (AD vs non-AD) or ternary (HC / MCI / AD) labelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelScheme {
    Binary,
    Ternary,
}

impl LabelScheme {
    /// Labels of the scheme in canonical order.
    pub fn labels(self) -> &'static [Label] {
        match self {
            LabelScheme::Binary => &[Label::NonAd, Label::Ad],
            LabelScheme::Ternary => &[Label::Hc, Label::Mci, Label::Ad],
        }
    }

    pub fn contains(self, label: Label) -> bool {
        self.labels().contains(&label)
    }

    pub fn status(self, label: Label) -> Result<CognitiveStatus, LabelError> {
        CognitiveStatus::new(self, label)
    }
}

impl FromStr for LabelScheme {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "binary" => Ok(LabelScheme::Binary),
            "ternary" => Ok(LabelScheme::Ternary),
            other => Err(LabelError::UnknownScheme(other.to_string())),
        }
    }
}

/// A diagnostic label. `Ad` is shared by both schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "HC")]
    Hc,
    #[serde(rename = "MCI")]
    Mci,
    #[serde(rename = "AD")]
    Ad,
    #[serde(rename = "non-AD")]
    NonAd,
}

impl Label {
    /// Canonical string used in prompts, final-answer tags and reports.
    pub fn canonical(self) -> &'static str {
        match self {
            Label::Hc => "HC",
            Label::Mci => "MCI",
            Label::Ad => "AD",
            Label::NonAd => "non-AD",
        }
    }

    /// Whether the label denotes cognitive impairment.
    pub fn is_impaired(self) -> bool {
        matches!(self, Label::Mci | Label::Ad)
    }

    pub fn description(self, language: Language) -> &'static str {
        match (self, language) {
            (Label::Hc, Language::En) => "healthy control",
            (Label::Mci, Language::En) => "mild cognitive impairment",
            (Label::Ad, Language::En) => "Alzheimer's disease",
            (Label::NonAd, Language::En) => "no Alzheimer's disease",
            (Label::Hc, Language::Zh) => "健康对照",
            (Label::Mci, Language::Zh) => "轻度认知障碍",
            (Label::Ad, Language::Zh) => "阿尔茨海默病",
            (Label::NonAd, Language::Zh) => "非阿尔茨海默病",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical())
    }
}

impl FromStr for Label {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hc" => Ok(Label::Hc),
            "mci" => Ok(Label::Mci),
            "ad" => Ok(Label::Ad),
            "non-ad" | "nonad" | "non_ad" => Ok(Label::NonAd),
            other => Err(LabelError::UnknownLabel(other.to_string())),
        }
    }
}

/// A label together with the scheme it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawStatus", into = "RawStatus")]
pub struct CognitiveStatus {
    scheme: LabelScheme,
    label: Label,
}

impl CognitiveStatus {
    pub fn new(scheme: LabelScheme, label: Label) -> Result<Self, LabelError> {
        if scheme.contains(label) {
            Ok(Self { scheme, label })
        } else {
            Err(LabelError::NotInScheme { label, scheme })
        }
    }

    pub fn scheme(&self) -> LabelScheme {
        self.scheme
    }

    pub fn label(&self) -> Label {
        self.label
    }
}

#[derive(Serialize, Deserialize)]
struct RawStatus {
    scheme: LabelScheme,
    label: Label,
}

impl TryFrom<RawStatus> for CognitiveStatus {
    type Error = LabelError;

    fn try_from(raw: RawStatus) -> Result<Self, Self::Error> {
        CognitiveStatus::new(raw.scheme, raw.label)
    }
}

impl From<CognitiveStatus> for RawStatus {
    fn from(s: CognitiveStatus) -> Self {
        RawStatus {
            scheme: s.scheme,
            label: s.label,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LabelError {
    #[error("label {label} is not part of the {scheme:?} scheme")]
    NotInScheme { label: Label, scheme: LabelScheme },
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("unknown label scheme `{0}`")]
    UnknownScheme(String),
    #[error("unknown language `{0}`")]
    UnknownLanguage(String),
}
