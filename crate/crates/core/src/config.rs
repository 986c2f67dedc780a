//! Run configuration: one JSON document, `${VAR}` interpolation for secrets.

use std::fs;
use std::path::{Path, PathBuf};

use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::sha256_hex;
use crate::label::{LabelScheme, Language};
use crate::persona::{CohortSpec, StyleSamplerParams};
use crate::pipeline::GenerationPolicy;
use crate::services::EndpointConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("environment variable {0} is not set")]
    MissingEnv(String),
    #[error("{0}")]
    Invalid(String),
}

/// Either the offline double or a live endpoint; never both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EndpointMode {
    #[default]
    Stub,
    Live(EndpointConfig),
}

impl EndpointMode {
    pub fn is_stub(&self) -> bool {
        matches!(self, EndpointMode::Stub)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Endpoints {
    pub generator: EndpointMode,
    pub tts: EndpointMode,
    pub asr: EndpointMode,
    pub eval: EndpointMode,
    /// Rationale model; the eval endpoint when absent.
    pub cot: Option<EndpointMode>,
}

impl Endpoints {
    pub fn cot(&self) -> &EndpointMode {
        self.cot.as_ref().unwrap_or(&self.eval)
    }

    pub fn force_stub(&mut self) {
        *self = Endpoints::default();
    }

    pub fn all_stub(&self) -> bool {
        [&self.generator, &self.tts, &self.asr, &self.eval, self.cot()]
            .iter()
            .all(|e| e.is_stub())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_language")]
    pub language: Language,
    #[serde(default = "default_scheme")]
    pub scheme: LabelScheme,
    #[serde(default)]
    pub sampler: StyleSamplerParams,
    /// Cohort to plan; a balanced cohort of 20 per label when absent.
    #[serde(default)]
    pub cohort: Option<CohortSpec>,
    #[serde(default)]
    pub endpoints: Endpoints,
    #[serde(default)]
    pub lexicon_dir: Option<PathBuf>,
    #[serde(default)]
    pub template_dir: Option<PathBuf>,
    /// Defaults to `<run_dir>/timbres`.
    #[serde(default)]
    pub timbre_dir: Option<PathBuf>,
    /// Defaults to the stub policy for a stub generator, live otherwise.
    #[serde(default)]
    pub generation: Option<GenerationPolicy>,
    #[serde(default = "default_rollouts")]
    pub n_rollouts: usize,
    #[serde(default)]
    pub stimulus: Option<String>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_run_dir")]
    pub run_dir: PathBuf,
}

fn default_language() -> Language {
    Language::En
}

fn default_scheme() -> LabelScheme {
    LabelScheme::Ternary
}

fn default_rollouts() -> usize {
    8
}

fn default_run_dir() -> PathBuf {
    PathBuf::from("run")
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every field has a default")
    }
}

/// Replaces `${NAME}` with the JSON-escaped value of the environment
/// variable `NAME`.
pub fn interpolate(text: &str, lookup: impl Fn(&str) -> Option<String>) -> Result<String, ConfigError> {
    let re = Regex::new(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}").expect("pattern compiles");
    let mut missing = None;
    let out = re.replace_all(text, |c: &Captures| match lookup(&c[1]) {
        Some(v) => {
            let quoted = serde_json::to_string(&v).expect("strings serialize");
            quoted[1..quoted.len() - 1].to_string()
        }
        None => {
            missing.get_or_insert_with(|| c[1].to_string());
            String::new()
        }
    });
    match missing {
        Some(name) => Err(ConfigError::MissingEnv(name)),
        None => Ok(out.into_owned()),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let text = interpolate(text, |k| std::env::var(k).ok())?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn cohort_spec(&self) -> CohortSpec {
        self.cohort
            .clone()
            .unwrap_or_else(|| CohortSpec::balanced("cohort", self.scheme, 20, self.language, self.master_seed))
    }

    pub fn generation_policy(&self) -> GenerationPolicy {
        self.generation.clone().unwrap_or_else(|| {
            if self.endpoints.generator.is_stub() {
                GenerationPolicy::stub()
            } else {
                GenerationPolicy::live()
            }
        })
    }

    pub fn timbre_dir(&self) -> PathBuf {
        self.timbre_dir.clone().unwrap_or_else(|| self.run_dir.join("timbres"))
    }

    pub fn stimulus(&self) -> String {
        self.stimulus
            .clone()
            .unwrap_or_else(|| crate::prompts::default_stimulus(self.language).to_string())
    }

    /// SHA-256 of the resolved configuration's canonical JSON.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        sha256_hex(value.to_string().as_bytes())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        for (name, dir) in [("lexicon_dir", &self.lexicon_dir), ("template_dir", &self.template_dir)] {
            if let Some(d) = dir {
                if !d.is_dir() {
                    return bad(format!("{name} {} does not exist", d.display()));
                }
            }
        }
        if !self.endpoints.tts.is_stub() && !self.timbre_dir().is_dir() {
            return bad(format!("timbre_dir {} does not exist", self.timbre_dir().display()));
        }
        if self.n_rollouts == 0 {
            return bad("n_rollouts must be at least 1".into());
        }
        let policy = self.generation_policy();
        if !(0.0..=1.0).contains(&policy.failure_threshold) {
            return bad("generation.failure_threshold must lie in [0, 1]".into());
        }
        if let Some(c) = &self.cohort {
            if c.scheme != self.scheme || c.language != self.language {
                return bad("cohort scheme and language must match the run".into());
            }
        }
        let e = &self.endpoints;
        for mode in [&e.generator, &e.tts, &e.asr, &e.eval, e.cot()] {
            if let EndpointMode::Live(cfg) = mode {
                cfg.validate().map_err(|err| ConfigError::Invalid(err.to_string()))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_all_defaults() {
        let c = RunConfig::parse("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        assert!(c.endpoints.all_stub());
        assert_eq!(c.n_rollouts, 8);
        assert_eq!(c.generation_policy(), GenerationPolicy::stub());
        c.validate().unwrap();
    }

    #[test]
    fn interpolation_escapes_and_reports_missing() {
        let env = |k: &str| (k == "TOKEN").then(|| "a\"b".to_string());
        assert_eq!(interpolate(r#"{"x":"${TOKEN}"}"#, env).unwrap(), r#"{"x":"a\"b"}"#);
        assert!(matches!(
            interpolate("${NOPE} ${TOKEN}", env),
            Err(ConfigError::MissingEnv(n)) if n == "NOPE"
        ));
        assert_eq!(interpolate("$HOME {x}", env).unwrap(), "$HOME {x}");
    }

    #[test]
    fn live_endpoint_and_validation() {
        let c = RunConfig::parse(
            r#"{"endpoints": {"eval": {"live": {"base_url": "http://localhost:1/v1", "model": "m"}}}}"#,
        )
        .unwrap();
        assert!(!c.endpoints.all_stub());
        assert!(!c.endpoints.cot().is_stub());
        c.validate().unwrap();
        let mut forced = c.clone();
        forced.endpoints.force_stub();
        assert!(forced.endpoints.all_stub());
        assert_ne!(forced.hash(), c.hash());

        assert!(RunConfig::parse(r#"{"endpoints": {"eval": "live"}}"#).is_err());
        assert!(RunConfig::parse(r#"{"bogus": 1}"#).is_err());
        assert!(RunConfig::parse(
            r#"{"endpoints": {"eval": {"live": {"base_url": "http://h/v1", "model": "m", "api_key": "k"}}}}"#
        )
        .is_err());
        let missing = RunConfig {
            lexicon_dir: Some("/definitely/not/here".into()),
            ..Default::default()
        };
        assert!(matches!(missing.validate(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn hash_is_stable() {
        let a = RunConfig::default();
        assert_eq!(a.hash(), RunConfig::parse("{}").unwrap().hash());
        let b = RunConfig {
            master_seed: 1,
            ..Default::default()
        };
        assert_ne!(a.hash(), b.hash());
    }
}
