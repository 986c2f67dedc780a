//! Persona sampling: demographics, the five-dimensional ordinal style vector,
//! and class/sex-balanced cohort planning.
//!
//! The latent style for dimension `k` is drawn from
//! `Normal(mu[label][k] - alpha[k] * g(age) + beta[k] * h(edu), sigma[k]^2)`,
//! clipped to `[1, 3]` and rounded half-up to a level in `{1, 2, 3}`.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::derive_seed;
use crate::label::{CognitiveStatus, Label, LabelScheme, Language};

pub const MIN_AGE: u8 = 55;
pub const MAX_AGE: u8 = 95;

#[derive(Debug, Error, PartialEq)]
pub enum PersonaError {
    #[error("sampler parameters have no mean for ({label}, {dimension})")]
    MissingMean { label: Label, dimension: StyleDimension },
    #[error("sampler parameters have no {table} entry for {dimension}")]
    MissingCoefficient {
        table: &'static str,
        dimension: StyleDimension,
    },
    #[error("invalid sampler parameters: {0}")]
    InvalidParams(String),
    #[error("invalid cohort spec: {0}")]
    InvalidSpec(String),
    #[error("invalid demographics: {0}")]
    InvalidDemographics(String),
    #[error("style level {0} outside 1..=3")]
    InvalidLevel(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sex {
    Female,
    Male,
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sex::Female => "female",
            Sex::Male => "male",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Education {
    PrimaryOrBelow,
    JuniorHigh,
    HighSchool,
    UniversityOrAbove,
}

impl Education {
    pub const ALL: [Education; 4] = [
        Education::PrimaryOrBelow,
        Education::JuniorHigh,
        Education::HighSchool,
        Education::UniversityOrAbove,
    ];

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(i: u8) -> Option<Self> {
        Self::ALL.get(i as usize).copied()
    }

    pub fn describe(self, language: Language) -> &'static str {
        match (self, language) {
            (Education::PrimaryOrBelow, Language::En) => "primary school or below",
            (Education::JuniorHigh, Language::En) => "junior high school",
            (Education::HighSchool, Language::En) => "high school",
            (Education::UniversityOrAbove, Language::En) => "university or above",
            (Education::PrimaryOrBelow, Language::Zh) => "小学及以下",
            (Education::JuniorHigh, Language::Zh) => "初中",
            (Education::HighSchool, Language::Zh) => "高中",
            (Education::UniversityOrAbove, Language::Zh) => "大学及以上",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawDemographics")]
pub struct Demographics {
    pub sex: Sex,
    pub age: u8,
    pub education: Education,
}

#[derive(Deserialize)]
struct RawDemographics {
    sex: Sex,
    age: u8,
    education: Education,
}

impl TryFrom<RawDemographics> for Demographics {
    type Error = PersonaError;

    fn try_from(r: RawDemographics) -> Result<Self, Self::Error> {
        Demographics::new(r.sex, r.age, r.education)
    }
}

impl Demographics {
    pub fn new(sex: Sex, age: u8, education: Education) -> Result<Self, PersonaError> {
        if !(MIN_AGE..=MAX_AGE).contains(&age) {
            return Err(PersonaError::InvalidDemographics(format!(
                "age {age} outside [{MIN_AGE}, {MAX_AGE}]"
            )));
        }
        Ok(Self { sex, age, education })
    }
}

/// The five linguistic style axes, in their fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StyleDimension {
    NarrativeLength,
    SyntacticComplexity,
    SpatialReference,
    Fluency,
    Clarity,
}

impl StyleDimension {
    pub const ALL: [StyleDimension; 5] = [
        StyleDimension::NarrativeLength,
        StyleDimension::SyntacticComplexity,
        StyleDimension::SpatialReference,
        StyleDimension::Fluency,
        StyleDimension::Clarity,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            StyleDimension::NarrativeLength => "narrative_length",
            StyleDimension::SyntacticComplexity => "syntactic_complexity",
            StyleDimension::SpatialReference => "spatial_reference",
            StyleDimension::Fluency => "fluency",
            StyleDimension::Clarity => "clarity",
        }
    }
}

impl fmt::Display for StyleDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Five ordinal levels in `{1, 2, 3}` indexed by [`StyleDimension`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<StyleDimension, u8>", into = "BTreeMap<StyleDimension, u8>")]
pub struct StyleVector([u8; 5]);

impl StyleVector {
    pub fn new(levels: [u8; 5]) -> Result<Self, PersonaError> {
        for l in levels {
            if !(1..=3).contains(&l) {
                return Err(PersonaError::InvalidLevel(l));
            }
        }
        Ok(Self(levels))
    }

    pub fn uniform(level: u8) -> Result<Self, PersonaError> {
        Self::new([level; 5])
    }

    pub fn get(&self, dim: StyleDimension) -> u8 {
        self.0[dim.index()]
    }

    pub fn levels(&self) -> [u8; 5] {
        self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = (StyleDimension, u8)> + '_ {
        StyleDimension::ALL.iter().map(|&d| (d, self.get(d)))
    }
}

impl TryFrom<BTreeMap<StyleDimension, u8>> for StyleVector {
    type Error = PersonaError;

    fn try_from(map: BTreeMap<StyleDimension, u8>) -> Result<Self, Self::Error> {
        let mut levels = [0u8; 5];
        for d in StyleDimension::ALL {
            levels[d.index()] = *map
                .get(&d)
                .ok_or_else(|| PersonaError::InvalidParams(format!("style vector is missing {d}")))?;
        }
        StyleVector::new(levels)
    }
}

impl From<StyleVector> for BTreeMap<StyleDimension, u8> {
    fn from(v: StyleVector) -> Self {
        v.iter().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    #[default]
    HalfUp,
}

impl Rounding {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Rounding::HalfUp => (x + 0.5).floor(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeBounds {
    pub low: f64,
    pub high: f64,
}

pub type DimensionTable = BTreeMap<StyleDimension, f64>;

/// Parameters of the status-conditioned style sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleSamplerParams {
    pub mu: BTreeMap<Label, DimensionTable>,
    pub alpha: DimensionTable,
    pub beta: DimensionTable,
    pub sigma: DimensionTable,
    pub age_bounds: AgeBounds,
    #[serde(default)]
    pub rounding: Rounding,
}

fn constant_table(v: f64) -> DimensionTable {
    StyleDimension::ALL.iter().map(|&d| (d, v)).collect()
}

impl Default for StyleSamplerParams {
    /// HC / non-AD 2.6, MCI 2.0, AD 1.4 on every axis; alpha 0.5, beta 0.3,
    /// sigma 0.6; ages normalized over [60, 90].
    fn default() -> Self {
        let mu = [
            (Label::Hc, 2.6),
            (Label::NonAd, 2.6),
            (Label::Mci, 2.0),
            (Label::Ad, 1.4),
        ]
        .into_iter()
        .map(|(l, m)| (l, constant_table(m)))
        .collect();
        Self {
            mu,
            alpha: constant_table(0.5),
            beta: constant_table(0.3),
            sigma: constant_table(0.6),
            age_bounds: AgeBounds { low: 60.0, high: 90.0 },
            rounding: Rounding::HalfUp,
        }
    }
}

impl StyleSamplerParams {
    /// Same mean for every label and dimension, no covariate effect.
    pub fn constant(mu: f64, sigma: f64) -> Self {
        let mut p = Self::default();
        for table in p.mu.values_mut() {
            *table = constant_table(mu);
        }
        p.alpha = constant_table(0.0);
        p.beta = constant_table(0.0);
        p.sigma = constant_table(sigma);
        p
    }

    pub fn validate(&self) -> Result<(), PersonaError> {
        if !(self.age_bounds.low < self.age_bounds.high) {
            return Err(PersonaError::InvalidParams(format!(
                "age bounds ({}, {}) are not increasing",
                self.age_bounds.low, self.age_bounds.high
            )));
        }
        for table in self.mu.values() {
            if table.values().any(|v| !v.is_finite()) {
                return Err(PersonaError::InvalidParams("non-finite mean".into()));
            }
        }
        for (name, table) in [("alpha", &self.alpha), ("beta", &self.beta), ("sigma", &self.sigma)] {
            for d in StyleDimension::ALL {
                match table.get(&d) {
                    None => {
                        return Err(PersonaError::MissingCoefficient {
                            table: name,
                            dimension: d,
                        })
                    }
                    Some(v) if !v.is_finite() || *v < 0.0 => {
                        return Err(PersonaError::InvalidParams(format!(
                            "{name}[{d}] = {v} must be finite and >= 0"
                        )))
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(())
    }

    fn coefficient(table: &DimensionTable, name: &'static str, dim: StyleDimension) -> Result<f64, PersonaError> {
        table.get(&dim).copied().ok_or(PersonaError::MissingCoefficient {
            table: name,
            dimension: dim,
        })
    }

    /// Mean of the latent Gaussian for one dimension.
    pub fn latent_mean(&self, label: Label, dim: StyleDimension, g: f64, h: f64) -> Result<f64, PersonaError> {
        let mu = self
            .mu
            .get(&label)
            .and_then(|t| t.get(&dim))
            .copied()
            .ok_or(PersonaError::MissingMean { label, dimension: dim })?;
        let alpha = Self::coefficient(&self.alpha, "alpha", dim)?;
        let beta = Self::coefficient(&self.beta, "beta", dim)?;
        Ok(mu - alpha * g + beta * h)
    }

    /// Maps a latent draw to its ordinal level.
    pub fn quantize(&self, latent: f64) -> u8 {
        self.rounding.apply(latent.clamp(1.0, 3.0)) as u8
    }
}

/// Age and education normalized to `[0, 1]`.
pub fn normalize_covariates(demographics: &Demographics, params: &StyleSamplerParams) -> (f64, f64) {
    let AgeBounds { low, high } = params.age_bounds;
    let g = ((demographics.age as f64 - low) / (high - low)).clamp(0.0, 1.0);
    let h = demographics.education.index() as f64 / 3.0;
    (g, h)
}

pub fn sample_style<R: Rng + ?Sized>(
    status: CognitiveStatus,
    demographics: &Demographics,
    params: &StyleSamplerParams,
    rng: &mut R,
) -> Result<StyleVector, PersonaError> {
    let (g, h) = normalize_covariates(demographics, params);
    let mut levels = [0u8; 5];
    for dim in StyleDimension::ALL {
        let mean = params.latent_mean(status.label(), dim, g, h)?;
        let sigma = StyleSamplerParams::coefficient(&params.sigma, "sigma", dim)?;
        let normal = Normal::new(mean, sigma).map_err(|e| PersonaError::InvalidParams(format!("sigma[{dim}]: {e}")))?;
        levels[dim.index()] = params.quantize(normal.sample(rng));
    }
    StyleVector::new(levels)
}

/// A simulated subject conditioning text generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Persona {
    pub persona_id: String,
    pub demographics: Demographics,
    pub status: CognitiveStatus,
    pub style: StyleVector,
    pub language: Language,
    pub seed: u64,
}

/// Normal age prior clipped to `[low, high]` and rounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgePrior {
    pub mean: f64,
    pub sd: f64,
    pub low: f64,
    pub high: f64,
}

impl Default for AgePrior {
    fn default() -> Self {
        Self {
            mean: 73.0,
            sd: 7.0,
            low: 60.0,
            high: 90.0,
        }
    }
}

pub const DEFAULT_EDUCATION_PRIOR: [f64; 4] = [0.40, 0.31, 0.20, 0.09];

fn default_female_fraction() -> f64 {
    0.5
}

fn default_education_prior() -> [f64; 4] {
    DEFAULT_EDUCATION_PRIOR
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub cohort_id: String,
    pub scheme: LabelScheme,
    pub counts: BTreeMap<Label, usize>,
    #[serde(default = "default_female_fraction")]
    pub female_fraction: f64,
    #[serde(default)]
    pub age_prior: AgePrior,
    #[serde(default = "default_education_prior")]
    pub education_prior: [f64; 4],
    pub language: Language,
    pub master_seed: u64,
}

impl CohortSpec {
    /// Equal count per label of `scheme`, default priors.
    pub fn balanced(
        cohort_id: impl Into<String>,
        scheme: LabelScheme,
        per_label: usize,
        language: Language,
        master_seed: u64,
    ) -> Self {
        Self {
            cohort_id: cohort_id.into(),
            scheme,
            counts: scheme.labels().iter().map(|&l| (l, per_label)).collect(),
            female_fraction: 0.5,
            age_prior: AgePrior::default(),
            education_prior: DEFAULT_EDUCATION_PRIOR,
            language,
            master_seed,
        }
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn validate(&self) -> Result<(), PersonaError> {
        let sum: f64 = self.education_prior.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.education_prior.iter().any(|p| *p < 0.0) {
            return Err(PersonaError::InvalidSpec(format!(
                "education prior must be a probability vector (sums to {sum})"
            )));
        }
        for label in self.counts.keys() {
            if !self.scheme.contains(*label) {
                return Err(PersonaError::InvalidSpec(format!(
                    "label {label} not in the {:?} scheme",
                    self.scheme
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.female_fraction) {
            return Err(PersonaError::InvalidSpec("female_fraction outside [0, 1]".into()));
        }
        let a = &self.age_prior;
        if !(a.low < a.high) || a.low < MIN_AGE as f64 || a.high > MAX_AGE as f64 || a.sd < 0.0 {
            return Err(PersonaError::InvalidSpec(format!(
                "age prior bounds must satisfy {MIN_AGE} <= low < high <= {MAX_AGE} and sd >= 0"
            )));
        }
        Ok(())
    }
}

/// One planned subject: label, sex and seed fixed; age, education and style
/// are drawn by [`sample_persona`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaSlot {
    pub index: usize,
    pub persona_id: String,
    pub status: CognitiveStatus,
    pub sex: Sex,
    pub age_prior: AgePrior,
    pub education_prior: [f64; 4],
    pub language: Language,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortPlan {
    pub cohort_id: String,
    pub master_seed: u64,
    pub spec: CohortSpec,
    pub slots: Vec<PersonaSlot>,
}

impl CohortPlan {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

pub fn persona_id(cohort_id: &str, index: usize) -> String {
    format!("{cohort_id}-{index:05}")
}

/// Lays out slots label by label (scheme order), females first within a label.
pub fn plan_cohort(spec: &CohortSpec) -> Result<CohortPlan, PersonaError> {
    spec.validate()?;
    let mut slots = Vec::with_capacity(spec.total());
    for &label in spec.scheme.labels() {
        let n = spec.counts.get(&label).copied().unwrap_or(0);
        let females = (n as f64 * spec.female_fraction + 0.5).floor() as usize;
        let status = CognitiveStatus::new(spec.scheme, label).map_err(|e| PersonaError::InvalidSpec(e.to_string()))?;
        for j in 0..n {
            let index = slots.len();
            slots.push(PersonaSlot {
                index,
                persona_id: persona_id(&spec.cohort_id, index),
                status,
                sex: if j < females { Sex::Female } else { Sex::Male },
                age_prior: spec.age_prior,
                education_prior: spec.education_prior,
                language: spec.language,
                seed: derive_seed(spec.master_seed, "persona", index as u64),
            });
        }
    }
    Ok(CohortPlan {
        cohort_id: spec.cohort_id.clone(),
        master_seed: spec.master_seed,
        spec: spec.clone(),
        slots,
    })
}

fn sample_age<R: Rng + ?Sized>(prior: &AgePrior, rng: &mut R) -> Result<u8, PersonaError> {
    let normal = Normal::new(prior.mean, prior.sd).map_err(|e| PersonaError::InvalidSpec(format!("age prior: {e}")))?;
    let age = Rounding::HalfUp.apply(normal.sample(rng).clamp(prior.low, prior.high));
    Ok(age as u8)
}

fn sample_education<R: Rng + ?Sized>(prior: &[f64; 4], rng: &mut R) -> Education {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in prior.iter().enumerate() {
        acc += p;
        if u < acc {
            return Education::ALL[i];
        }
    }
    // u landed in the rounding slack above the cumulative sum
    Education::ALL
        .iter()
        .rev()
        .zip(prior.iter().rev())
        .find(|(_, p)| **p > 0.0)
        .map(|(e, _)| *e)
        .unwrap_or(Education::UniversityOrAbove)
}

pub fn sample_persona(slot: &PersonaSlot, params: &StyleSamplerParams) -> Result<Persona, PersonaError> {
    let mut rng = ChaCha8Rng::seed_from_u64(slot.seed);
    let age = sample_age(&slot.age_prior, &mut rng)?;
    let education = sample_education(&slot.education_prior, &mut rng);
    let demographics = Demographics::new(slot.sex, age, education)?;
    let style = sample_style(slot.status, &demographics, params, &mut rng)?;
    Ok(Persona {
        persona_id: slot.persona_id.clone(),
        demographics,
        status: slot.status,
        style,
        language: slot.language,
        seed: slot.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo(age: u8, edu: Education) -> Demographics {
        Demographics::new(Sex::Female, age, edu).unwrap()
    }

    fn bounds_60_90() -> StyleSamplerParams {
        StyleSamplerParams::default()
    }

    #[test]
    fn covariates_at_bounds() {
        let p = bounds_60_90();
        assert_eq!(normalize_covariates(&demo(60, Education::PrimaryOrBelow), &p).0, 0.0);
        assert_eq!(normalize_covariates(&demo(90, Education::PrimaryOrBelow), &p).0, 1.0);
        assert_eq!(normalize_covariates(&demo(95, Education::PrimaryOrBelow), &p).0, 1.0);
        assert_eq!(normalize_covariates(&demo(55, Education::PrimaryOrBelow), &p).0, 0.0);
        let (_, h) = normalize_covariates(&demo(70, Education::JuniorHigh), &p);
        assert!((h - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_gaussian_gives_constant_levels() {
        let status = LabelScheme::Ternary.status(Label::Mci).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = sample_style(
            status,
            &demo(70, Education::HighSchool),
            &StyleSamplerParams::constant(2.0, 0.0),
            &mut rng,
        )
        .unwrap();
        assert_eq!(v.levels(), [2; 5]);
        let v = sample_style(
            status,
            &demo(70, Education::HighSchool),
            &StyleSamplerParams::constant(3.6, 0.0),
            &mut rng,
        )
        .unwrap();
        assert_eq!(v.levels(), [3; 5]);
    }

    #[test]
    fn half_up_rounding_at_cell_edges() {
        let p = StyleSamplerParams::default();
        assert_eq!(p.quantize(1.4999), 1);
        assert_eq!(p.quantize(1.5), 2);
        assert_eq!(p.quantize(2.5), 3);
        assert_eq!(p.quantize(-4.0), 1);
        assert_eq!(p.quantize(9.0), 3);
    }

    #[test]
    fn missing_mean_is_a_configuration_error() {
        let mut p = StyleSamplerParams::default();
        p.mu.remove(&Label::Mci);
        let status = LabelScheme::Ternary.status(Label::Mci).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = sample_style(status, &demo(70, Education::HighSchool), &p, &mut rng).unwrap_err();
        assert!(matches!(err, PersonaError::MissingMean { label: Label::Mci, .. }));
    }

    #[test]
    fn binary_plan_balances_sex() {
        let spec = CohortSpec::balanced("syn-en", LabelScheme::Binary, 500, Language::En, 7);
        let plan = plan_cohort(&spec).unwrap();
        assert_eq!(plan.len(), 1000);
        for label in [Label::Ad, Label::NonAd] {
            let of_label: Vec<_> = plan.slots.iter().filter(|s| s.status.label() == label).collect();
            assert_eq!(of_label.len(), 500);
            assert_eq!(of_label.iter().filter(|s| s.sex == Sex::Female).count(), 250);
            assert_eq!(of_label.iter().filter(|s| s.sex == Sex::Male).count(), 250);
        }
    }

    #[test]
    fn ternary_plan_arithmetic_and_odd_split() {
        let spec = CohortSpec::balanced("syn-zh", LabelScheme::Ternary, 50, Language::Zh, 7);
        let plan = plan_cohort(&spec).unwrap();
        assert_eq!(plan.len(), 150);
        for &label in LabelScheme::Ternary.labels() {
            let f = plan
                .slots
                .iter()
                .filter(|s| s.status.label() == label && s.sex == Sex::Female)
                .count();
            assert_eq!(f, 25);
        }
        let mut odd = CohortSpec::balanced("odd", LabelScheme::Binary, 5, Language::En, 7);
        odd.counts.insert(Label::NonAd, 0);
        let plan = plan_cohort(&odd).unwrap();
        assert_eq!(plan.slots.iter().filter(|s| s.sex == Sex::Female).count(), 3);
        assert_eq!(plan.slots.iter().filter(|s| s.sex == Sex::Male).count(), 2);
    }

    #[test]
    fn empty_plan() {
        let spec = CohortSpec::balanced("none", LabelScheme::Binary, 0, Language::En, 7);
        assert!(plan_cohort(&spec).unwrap().is_empty());
    }

    #[test]
    fn education_prior_must_sum_to_one() {
        let mut spec = CohortSpec::balanced("x", LabelScheme::Binary, 1, Language::En, 7);
        spec.education_prior = [0.5, 0.5, 0.1, 0.0];
        assert!(matches!(plan_cohort(&spec), Err(PersonaError::InvalidSpec(_))));
    }

    #[test]
    fn persona_is_reproducible_and_keeps_slot_sex() {
        let spec = CohortSpec::balanced("c", LabelScheme::Ternary, 4, Language::En, 99);
        let plan = plan_cohort(&spec).unwrap();
        let params = StyleSamplerParams::default();
        for slot in &plan.slots {
            let a = sample_persona(slot, &params).unwrap();
            let b = sample_persona(slot, &params).unwrap();
            assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
            assert_eq!(a.demographics.sex, slot.sex);
            assert!((60..=90).contains(&a.demographics.age));
        }
        let female = plan.slots.iter().find(|s| s.sex == Sex::Female).unwrap();
        assert_eq!(sample_persona(female, &params).unwrap().demographics.sex, Sex::Female);
    }

    #[test]
    fn style_vector_json_is_a_full_map() {
        let v = StyleVector::new([1, 2, 3, 2, 1]).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        assert!(json.contains("\"fluency\":2"));
        assert_eq!(serde_json::from_str::<StyleVector>(&json).unwrap(), v);
        assert!(serde_json::from_str::<StyleVector>(r#"{"fluency":2}"#).is_err());
        assert!(StyleVector::new([0, 2, 3, 2, 1]).is_err());
    }
}
