//! Command-line surface. Exit codes: 0 ok, 1 usage or runtime error,
//! 2 invalid config, 3 partial failure above threshold, 4 unreachable
//! endpoint.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::{ConfigError, EndpointMode, RunConfig};
use crate::corpus::{
    derive_seed, mix, read_jsonl, read_manifest, write_jsonl, CohortManifest, CotRecord, DatasetSplit,
};
use crate::evaluate::{
    compute_metrics, eval_samples, run_rollouts, stratify, EvalConfig, EvalError, EvalSample, Prediction, Transition,
};
use crate::figures::{
    box_plot_svg, cohort_stats, confusion_rows, profiles_by_label, rollout_rows, scaling_rows, write_csv,
};
use crate::label::Label;
use crate::persona::{plan_cohort, CohortPlan, Sex};
use crate::pipeline::{
    distill_cot, export_sft, generate_cohort, CohortRunOptions, DistillConfig, PipelineDeps, PipelineError,
    MANIFEST_FILE, REPORTS_DIR, SFT_FILE,
};
use crate::preprocess::{run_batch, BatchConfig, PreprocessError};
use crate::prompts::{TemplateId, TemplateSet};
use crate::rubric::{analyze, score, Lexicons};
use crate::services::{
    AsrClient, ChatClient, ChatModel, ChatNarrator, ClassifierMode, DecodeParams, NarrativeGenerator, ResampleQuality,
    ServiceError, SpeechSynthesizer, StubClassifier, StubNarrator, StubRationaleModel, StubTranscriber, StubTts,
    Transcriber, TtsClient,
};
use crate::timbre::{AgeBucket, TimbreLibrary, TimbreMetadata, INDEX_FILE};

const PLAN_FILE: &str = "plan.json";
const COT_FILE: &str = "cot.jsonl";
const PREDICTIONS_FILE: &str = "eval/predictions.jsonl";
const STUB_TIMBRES_PER_SEX: usize = 4;

#[derive(Debug, Parser)]
#[command(
    name = "syncog",
    version,
    about = "Synthetic cognitive-screening speech cohorts and evaluation"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Use the offline doubles for every endpoint.
    #[arg(long, global = true)]
    pub stub: bool,
    /// Run directory; overrides the configured one.
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan, generate and summarize a synthetic cohort.
    #[command(subcommand)]
    Cohort(CohortCmd),
    /// Linguistic feature profiles of transcripts.
    #[command(subcommand)]
    Rubric(RubricCmd),
    /// Normalize real recordings into manifest records.
    #[command(subcommand)]
    Preprocess(PreprocessCmd),
    /// Label-conditioned rationales for the run's samples.
    Distill {
        /// DatasetSplit JSON; every usable record when absent.
        #[arg(long)]
        split: Option<PathBuf>,
    },
    /// Supervised fine-tuning data.
    #[command(subcommand)]
    Sft(SftCmd),
    /// Classifier rollouts and metrics.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Real plus k-times synthetic splits for each ratio.
    Mix {
        #[arg(long)]
        real: PathBuf,
        /// Defaults to the run manifest.
        #[arg(long)]
        synthetic: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5")]
        ratios: Vec<usize>,
    },
    /// Reference voice library.
    #[command(subcommand)]
    Timbre(TimbreCmd),
}

#[derive(Debug, Subcommand)]
pub enum CohortCmd {
    /// Sample personas and write the plan.
    Plan,
    /// Synthesize transcripts and audio for the plan.
    Generate {
        /// Stop after this many new records, leaving the manifest resumable.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Per-label feature summaries and group tests.
    Stats {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        svg: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum RubricCmd {
    /// Print the feature profile of a transcript file.
    Analyze { file: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum PreprocessCmd {
    /// Process one recording or a directory of recordings.
    Run {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        participant: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum SftCmd {
    /// Write chat-format training records.
    Export,
}

#[derive(Debug, Subcommand)]
pub enum EvalCmd {
    /// Query the classifier for every sample and rollout.
    Run {
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Metrics, per-rollout and confusion tables.
    Report {
        #[arg(long)]
        predictions: Vec<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Ladder position of each predictions file, for the scaling table.
        #[arg(long, value_delimiter = ',')]
        ratios: Vec<usize>,
    },
    /// Metrics broken down by persona attributes.
    Stratify {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SexArg {
    Female,
    Male,
}

#[derive(Debug, Subcommand)]
pub enum TimbreCmd {
    /// Verify every reference clip against the index.
    Audit,
    /// Add a reference clip to the library.
    Register {
        file: PathBuf,
        #[arg(long, value_enum)]
        sex: SexArg,
        /// 60s, 70s, 80s or unknown.
        #[arg(long, default_value = "unknown")]
        age_bucket: String,
        #[arg(long)]
        id: Option<String>,
    },
    /// Writes a synthetic reference library for offline runs.
    Stub {
        #[arg(long, default_value_t = STUB_TIMBRES_PER_SEX)]
        per_sex: usize,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("partial failure: {0}")]
    Partial(String),
    #[error("service unreachable: {0}")]
    Unreachable(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Runtime(_) => 1,
            CliError::Config(_) => 2,
            CliError::Partial(_) => 3,
            CliError::Unreachable(_) => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Config(m) => CliError::Config(m),
            e if e.is_unreachable() => CliError::Unreachable(e.to_string()),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Unreachable(e) => CliError::Unreachable(e.to_string()),
            e @ PipelineError::FailureThreshold { .. } => CliError::Partial(e.to_string()),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Unreachable(e) => CliError::Unreachable(e.to_string()),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Resolved configuration plus the provenance echoed into every report.
struct Ctx {
    cfg: RunConfig,
    hash: String,
}

impl Ctx {
    fn new(global: &GlobalArgs) -> Result<Self, CliError> {
        let mut cfg = match &global.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = global.seed {
            cfg.master_seed = seed;
            if let Some(c) = cfg.cohort.as_mut() {
                c.master_seed = seed;
            }
        }
        if let Some(dir) = &global.run_dir {
            cfg.run_dir = dir.clone();
        }
        if global.stub {
            cfg.endpoints.force_stub();
        }
        cfg.validate()?;
        let hash = cfg.hash();
        Ok(Self { cfg, hash })
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.cfg.run_dir.join(rel)
    }

    fn lexicons(&self) -> Result<Lexicons, CliError> {
        match &self.cfg.lexicon_dir {
            Some(d) => Lexicons::load(d, self.cfg.language).map_err(|e| CliError::Config(e.to_string())),
            None => Ok(Lexicons::builtin(self.cfg.language)),
        }
    }

    fn templates(&self) -> Result<TemplateSet, CliError> {
        TemplateSet::load(self.cfg.template_dir.as_deref(), self.cfg.language)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    fn manifest(&self, path: Option<&Path>) -> Result<CohortManifest, CliError> {
        let p = path.map_or_else(|| self.path(MANIFEST_FILE), Path::to_path_buf);
        read_manifest(&p).map_err(runtime)
    }

    fn chat(&self, mode: &EndpointMode) -> Result<Option<Arc<dyn ChatModel>>, CliError> {
        Ok(match mode {
            EndpointMode::Stub => None,
            EndpointMode::Live(c) => Some(Arc::new(ChatClient::live(c.clone())?)),
        })
    }

    /// Writes `reports/<name>.json` with provenance and prints it.
    fn report<T: Serialize>(&self, command: &str, name: &str, body: &T) -> Result<(), CliError> {
        let doc = json!({
            "command": command,
            "config_hash": self.hash,
            "master_seed": self.cfg.master_seed,
            "report": body,
        });
        let text = serde_json::to_string_pretty(&doc).expect("report serializes");
        let path = self.path(&format!("{REPORTS_DIR}/{name}.json"));
        fs::create_dir_all(path.parent().expect("report path has a parent")).map_err(runtime)?;
        fs::write(&path, format!("{text}\n")).map_err(runtime)?;
        println!("{text}");
        Ok(())
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Entry point for the binary.
pub fn main() -> i32 {
    run(std::env::args_os())
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let ctx = Ctx::new(&cli.global)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.global.jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(runtime)?;
    pool.install(|| dispatch(&ctx, cli.command))
}

fn dispatch(ctx: &Ctx, command: Command) -> Result<(), CliError> {
    match command {
        Command::Cohort(CohortCmd::Plan) => cohort_plan(ctx).map(|_| ()),
        Command::Cohort(CohortCmd::Generate { limit }) => cohort_generate(ctx, limit),
        Command::Cohort(CohortCmd::Stats { manifest, svg }) => cohort_stats_cmd(ctx, manifest.as_deref(), svg),
        Command::Rubric(RubricCmd::Analyze { file }) => rubric_analyze(ctx, &file),
        Command::Preprocess(PreprocessCmd::Run { input, participant }) => preprocess_run(ctx, &input, participant),
        Command::Distill { split } => distill(ctx, split.as_deref()),
        Command::Sft(SftCmd::Export) => sft_export(ctx),
        Command::Eval(EvalCmd::Run { split, manifest, out }) => {
            eval_run(ctx, split.as_deref(), manifest.as_deref(), out)
        }
        Command::Eval(EvalCmd::Report {
            predictions,
            manifest,
            ratios,
        }) => eval_report(ctx, predictions, manifest.as_deref(), &ratios),
        Command::Eval(EvalCmd::Stratify { predictions, manifest }) => {
            eval_stratify(ctx, predictions, manifest.as_deref())
        }
        Command::Mix {
            real,
            synthetic,
            ratios,
        } => mix_cmd(ctx, &real, synthetic.as_deref(), &ratios),
        Command::Timbre(cmd) => timbre_cmd(ctx, cmd),
    }
}

fn cohort_plan(ctx: &Ctx) -> Result<CohortPlan, CliError> {
    let path = ctx.path(PLAN_FILE);
    if path.exists() {
        let plan: CohortPlan = serde_json::from_str(&fs::read_to_string(&path).map_err(runtime)?).map_err(runtime)?;
        return Ok(plan);
    }
    let plan = plan_cohort(&ctx.cfg.cohort_spec()).map_err(|e| CliError::Config(e.to_string()))?;
    fs::create_dir_all(&ctx.cfg.run_dir).map_err(runtime)?;
    fs::write(&path, serde_json::to_string_pretty(&plan).expect("plan serializes")).map_err(runtime)?;
    let mut by_label: BTreeMap<Label, usize> = BTreeMap::new();
    let mut by_sex: BTreeMap<Sex, usize> = BTreeMap::new();
    for s in &plan.slots {
        *by_label.entry(s.status.label()).or_default() += 1;
        *by_sex.entry(s.sex).or_default() += 1;
    }
    ctx.report(
        "cohort plan",
        "plan",
        &json!({"cohort_id": plan.cohort_id, "slots": plan.len(), "by_label": by_label, "by_sex": by_sex}),
    )?;
    Ok(plan)
}

fn timbre_library(ctx: &Ctx) -> Result<TimbreLibrary, CliError> {
    let dir = ctx.cfg.timbre_dir();
    if dir.join(INDEX_FILE).exists() {
        return TimbreLibrary::load(&dir).map_err(|e| CliError::Config(e.to_string()));
    }
    if ctx.cfg.endpoints.tts.is_stub() {
        return TimbreLibrary::build_stub(&dir, STUB_TIMBRES_PER_SEX, ctx.cfg.master_seed).map_err(runtime);
    }
    Err(CliError::Config(format!("no timbre index under {}", dir.display())))
}

fn cohort_generate(ctx: &Ctx, limit: Option<usize>) -> Result<(), CliError> {
    let plan = cohort_plan(ctx)?;
    let lexicons = ctx.lexicons()?;
    let e = &ctx.cfg.endpoints;
    let narrator: Arc<dyn NarrativeGenerator> = match ctx.chat(&e.generator)? {
        None => Arc::new(StubNarrator::new().with_lexicons(lexicons.clone())),
        Some(model) => Arc::new(ChatNarrator {
            model,
            decode: DecodeParams::synthesis(),
        }),
    };
    let tts: Arc<dyn SpeechSynthesizer> = match &e.tts {
        EndpointMode::Stub => Arc::new(StubTts),
        EndpointMode::Live(c) => Arc::new(TtsClient::live(c.clone())?),
    };
    let deps = PipelineDeps {
        narrator,
        tts,
        lexicons,
        templates: ctx.templates()?,
        timbres: Arc::new(timbre_library(ctx)?),
        sampler: ctx.cfg.sampler.clone(),
        stimulus: ctx.cfg.stimulus(),
        run_dir: ctx.cfg.run_dir.clone(),
    };
    let options = CohortRunOptions { max_new: limit };
    let (manifest, report) = match generate_cohort(&plan, &deps, &ctx.cfg.generation_policy(), &options) {
        Ok(r) => r,
        Err(PipelineError::FailureThreshold { report, .. }) => {
            ctx.report("cohort generate", "generate", &report)?;
            return Err(CliError::Partial(format!(
                "{} of {} slots failed",
                report.failed, report.total_slots
            )));
        }
        Err(e) => return Err(e.into()),
    };
    ctx.report(
        "cohort generate",
        "generate",
        &json!({"run": report, "records": manifest.records.len()}),
    )
}

fn cohort_stats_cmd(ctx: &Ctx, manifest: Option<&Path>, svg: bool) -> Result<(), CliError> {
    let m = ctx.manifest(manifest)?;
    let profiles = profiles_by_label(&m);
    let stats = cohort_stats(&profiles)?;
    write_csv(&stats.summaries, &ctx.path(&format!("{REPORTS_DIR}/cohort_stats.csv"))).map_err(runtime)?;
    write_csv(
        &stats.comparisons,
        &ctx.path(&format!("{REPORTS_DIR}/group_compare.csv")),
    )
    .map_err(runtime)?;
    if svg {
        let dir = ctx.path(&format!("{REPORTS_DIR}/figures"));
        fs::create_dir_all(&dir).map_err(runtime)?;
        let features: BTreeSet<&str> = stats.summaries.iter().map(|r| r.feature.as_str()).collect();
        for f in features {
            let rows: Vec<_> = stats.summaries.iter().filter(|r| r.feature == f).collect();
            fs::write(dir.join(format!("{f}.svg")), box_plot_svg(f, &rows)).map_err(runtime)?;
        }
    }
    ctx.report("cohort stats", "cohort_stats", &stats)
}

fn rubric_analyze(ctx: &Ctx, file: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(file).map_err(runtime)?;
    let lexicons = ctx.lexicons()?;
    let profile = analyze(&text, &lexicons);
    let scores = score(&profile);
    let doc = json!({
        "config_hash": ctx.hash,
        "master_seed": ctx.cfg.master_seed,
        "profile": profile,
        "scores": scores,
    });
    println!("{}", serde_json::to_string_pretty(&doc).expect("profile serializes"));
    Ok(())
}

fn preprocess_run(ctx: &Ctx, input: &Path, participant: Option<String>) -> Result<(), CliError> {
    let transcriber: Box<dyn Transcriber> = match &ctx.cfg.endpoints.asr {
        EndpointMode::Stub => Box::new(StubTranscriber),
        EndpointMode::Live(c) => Box::new(AsrClient::live(c.clone())?),
    };
    let cfg = BatchConfig {
        cohort_id: ctx.cfg.cohort_spec().cohort_id,
        language: ctx.cfg.language,
        scheme: ctx.cfg.scheme,
        quality: ResampleQuality::default(),
        participant,
        lexicons: Some(ctx.lexicons()?),
        master_seed: ctx.cfg.master_seed,
    };
    let report = match run_batch(input, &ctx.cfg.run_dir, &cfg, transcriber.as_ref()) {
        Ok(r) => r,
        Err(PreprocessError::Transcription(e)) => return Err(e.into()),
        Err(e) => return Err(runtime(e)),
    };
    ctx.report("preprocess run", "preprocess", &report)?;
    let total = report.processed + report.failures.len();
    if report.failures.len() as f64 > ctx.cfg.generation_policy().failure_threshold * total as f64 {
        return Err(CliError::Partial(format!(
            "{} of {total} recordings failed",
            report.failures.len()
        )));
    }
    Ok(())
}

fn load_split(ctx: &Ctx, split: Option<&Path>, manifest: &CohortManifest) -> Result<DatasetSplit, CliError> {
    match split {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).map_err(runtime)?).map_err(runtime),
        None => Ok(manifest.split(&ctx.cfg.cohort_spec().cohort_id)),
    }
}

fn distill(ctx: &Ctx, split: Option<&Path>) -> Result<(), CliError> {
    let m = ctx.manifest(None)?;
    let samples = eval_samples(&load_split(ctx, split, &m)?, &m, &ctx.cfg.run_dir)?;
    let model: Arc<dyn ChatModel> = match ctx.chat(ctx.cfg.endpoints.cot())? {
        None => Arc::new(StubRationaleModel::new(ctx.lexicons()?, ctx.cfg.scheme)),
        Some(m) => m,
    };
    let mut cfg = DistillConfig::new(ctx.cfg.scheme, ctx.cfg.language, ctx.cfg.stimulus());
    cfg.master_seed = ctx.cfg.master_seed;
    let templates = ctx.templates()?;
    let report = distill_cot(&samples, model.as_ref(), templates.get(TemplateId::Cot), &cfg)?;
    write_jsonl(&report.records, &ctx.path(COT_FILE)).map_err(runtime)?;
    ctx.report(
        "distill",
        "distill",
        &json!({
            "kept": report.records.len(),
            "dropped_inconsistent": report.dropped_inconsistent(),
            "dropped": report.dropped,
            "failed": report.failed,
        }),
    )
}

fn sft_export(ctx: &Ctx) -> Result<(), CliError> {
    let m = ctx.manifest(None)?;
    let cot: Vec<CotRecord> = read_jsonl(&ctx.path(COT_FILE)).map_err(runtime)?;
    let templates = ctx.templates()?;
    let n = export_sft(
        &cot,
        &m,
        templates.get(TemplateId::Cls),
        &ctx.cfg.stimulus(),
        &ctx.path(SFT_FILE),
    )?;
    ctx.report("sft export", "sft", &json!({"examples": n, "path": SFT_FILE}))
}

fn eval_run(ctx: &Ctx, split: Option<&Path>, manifest: Option<&Path>, out: Option<PathBuf>) -> Result<(), CliError> {
    let m = ctx.manifest(manifest)?;
    let samples: Vec<EvalSample> = eval_samples(&load_split(ctx, split, &m)?, &m, &ctx.cfg.run_dir)?;
    let model: Arc<dyn ChatModel> = match ctx.chat(&ctx.cfg.endpoints.eval)? {
        None => Arc::new(StubClassifier::new(
            ctx.cfg.scheme,
            ClassifierMode::Rubric(ctx.lexicons()?),
        )),
        Some(m) => m,
    };
    let mut cfg = EvalConfig::new(ctx.cfg.scheme, ctx.cfg.language);
    cfg.n_rollouts = ctx.cfg.n_rollouts;
    cfg.master_seed = ctx.cfg.master_seed;
    let templates = ctx.templates()?;
    let preds = run_rollouts(
        &samples,
        model.as_ref(),
        templates.get(TemplateId::Cls),
        &ctx.cfg.stimulus(),
        &cfg,
    )?;
    let out = out.unwrap_or_else(|| ctx.path(PREDICTIONS_FILE));
    write_jsonl(&preds, &out).map_err(runtime)?;
    let truths: BTreeMap<String, Label> = samples.iter().map(|s| (s.sample_id.clone(), s.label)).collect();
    let metrics = compute_metrics(&preds, &truths, cfg.n_rollouts)?;
    ctx.report("eval run", "eval_run", &json!({"predictions": out, "metrics": metrics}))
}

/// Predictions, the truth of every predicted sample, and the rollout count.
type LoadedPredictions = (Vec<Prediction>, BTreeMap<String, Label>, usize);

fn load_predictions(ctx: &Ctx, path: &Path, manifest: &CohortManifest) -> Result<LoadedPredictions, CliError> {
    let preds: Vec<Prediction> = read_jsonl(path).map_err(runtime)?;
    let index = manifest.index();
    let mut truths = BTreeMap::new();
    for p in &preds {
        let r = index
            .get(p.sample_id.as_str())
            .ok_or_else(|| runtime(format!("{} is not in the manifest", p.sample_id)))?;
        truths.insert(p.sample_id.clone(), r.label.label());
    }
    let n = preds
        .iter()
        .map(|p| p.rollout_idx + 1)
        .max()
        .unwrap_or(ctx.cfg.n_rollouts);
    Ok((preds, truths, n))
}

fn eval_report(
    ctx: &Ctx,
    predictions: Vec<PathBuf>,
    manifest: Option<&Path>,
    ratios: &[usize],
) -> Result<(), CliError> {
    let m = ctx.manifest(manifest)?;
    let files = if predictions.is_empty() {
        vec![ctx.path(PREDICTIONS_FILE)]
    } else {
        predictions
    };
    if !ratios.is_empty() && ratios.len() != files.len() {
        return Err(CliError::Usage(
            "--ratios needs one value per --predictions file".into(),
        ));
    }
    let mut reports = Vec::new();
    for f in &files {
        let (preds, truths, n) = load_predictions(ctx, f, &m)?;
        reports.push(compute_metrics(&preds, &truths, n)?);
    }
    for (i, r) in reports.iter().enumerate() {
        let suffix = if reports.len() == 1 {
            String::new()
        } else {
            format!("_{i}")
        };
        write_csv(
            &rollout_rows(r),
            &ctx.path(&format!("{REPORTS_DIR}/rollouts{suffix}.csv")),
        )
        .map_err(runtime)?;
        write_csv(
            &confusion_rows(r),
            &ctx.path(&format!("{REPORTS_DIR}/confusion{suffix}.csv")),
        )
        .map_err(runtime)?;
    }
    if !ratios.is_empty() {
        let points: Vec<_> = ratios.iter().copied().zip(reports.iter().cloned()).collect();
        write_csv(&scaling_rows(&points), &ctx.path(&format!("{REPORTS_DIR}/scaling.csv"))).map_err(runtime)?;
    }
    let body: Vec<_> = files
        .iter()
        .zip(&reports)
        .map(|(f, r)| json!({"predictions": f, "metrics": r}))
        .collect();
    ctx.report("eval report", "metrics", &body)
}

fn eval_stratify(ctx: &Ctx, predictions: Option<PathBuf>, manifest: Option<&Path>) -> Result<(), CliError> {
    let m = ctx.manifest(manifest)?;
    let path = predictions.unwrap_or_else(|| ctx.path(PREDICTIONS_FILE));
    let (preds, truths, n) = load_predictions(ctx, &path, &m)?;
    let mut rows = Vec::new();
    for t in Transition::ALL {
        rows.push(match stratify(&preds, &truths, t, n) {
            Ok(r) => json!(r),
            Err(e @ EvalError::EmptyStratum(_)) => json!({"transition": t, "error": e.to_string()}),
            Err(e) => return Err(e.into()),
        });
    }
    ctx.report("eval stratify", "stratified", &rows)
}

#[derive(Serialize)]
struct LadderRow {
    ratio: usize,
    label: Label,
    real: usize,
    synthetic: usize,
    total: usize,
}

fn mix_cmd(ctx: &Ctx, real: &Path, synthetic: Option<&Path>, ratios: &[usize]) -> Result<(), CliError> {
    let real_m = read_manifest(real).map_err(runtime)?;
    let syn_m = ctx.manifest(synthetic)?;
    let real_split = real_m.split("real");
    let syn_split = syn_m.split("synthetic");
    let mut rows = Vec::new();
    let mut files = Vec::new();
    for &k in ratios {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(ctx.cfg.master_seed, "mix", k as u64));
        let mut split = mix(&real_split, &syn_split, k, &mut rng).map_err(runtime)?;
        split.name = format!("mix_r{k}");
        for (&label, &total) in &split.class_histogram {
            let n_real = real_split.class_histogram.get(&label).copied().unwrap_or(0);
            rows.push(LadderRow {
                ratio: k,
                label,
                real: n_real,
                synthetic: total - n_real,
                total,
            });
        }
        let rel = format!("splits/{}.json", split.name);
        let path = ctx.path(&rel);
        fs::create_dir_all(path.parent().expect("split path has a parent")).map_err(runtime)?;
        fs::write(&path, serde_json::to_string_pretty(&split).expect("split serializes")).map_err(runtime)?;
        files.push(rel);
    }
    write_csv(&rows, &ctx.path(&format!("{REPORTS_DIR}/mix_ladder.csv"))).map_err(runtime)?;
    ctx.report("mix", "mix", &json!({"splits": files, "ladder": rows}))
}

fn timbre_cmd(ctx: &Ctx, cmd: TimbreCmd) -> Result<(), CliError> {
    let dir = ctx.cfg.timbre_dir();
    match cmd {
        TimbreCmd::Audit => {
            let lib = TimbreLibrary::load(&dir).map_err(|e| CliError::Config(e.to_string()))?;
            let report = lib.audit();
            ctx.report("timbre audit", "timbre_audit", &report)?;
            if !report.failures.is_empty() {
                return Err(CliError::Partial(format!(
                    "{} of {} references failed the audit",
                    report.failures.len(),
                    report.checked
                )));
            }
            Ok(())
        }
        TimbreCmd::Register {
            file,
            sex,
            age_bucket,
            id,
        } => {
            let age_bucket: AgeBucket = serde_json::from_value(json!(age_bucket))
                .map_err(|_| CliError::Usage(format!("unknown age bucket {age_bucket}")))?;
            let mut lib = if dir.join(INDEX_FILE).exists() {
                TimbreLibrary::load(&dir).map_err(|e| CliError::Config(e.to_string()))?
            } else {
                TimbreLibrary::new(&dir)
            };
            let meta = TimbreMetadata {
                timbre_id: id,
                sex: match sex {
                    SexArg::Female => Sex::Female,
                    SexArg::Male => Sex::Male,
                },
                age_bucket,
            };
            let entry = lib.register(&file, &meta).map_err(runtime)?;
            lib.save().map_err(runtime)?;
            ctx.report("timbre register", "timbre_register", &entry)
        }
        TimbreCmd::Stub { per_sex } => {
            let lib = TimbreLibrary::build_stub(&dir, per_sex, ctx.cfg.master_seed).map_err(runtime)?;
            ctx.report("timbre stub", "timbre_stub", &json!({"entries": lib.len()}))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_in(dir: &Path, args: &[&str]) -> i32 {
        let mut full = vec!["syncog".to_string(), "--run-dir".into(), dir.display().to_string()];
        full.extend(args.iter().map(|s| s.to_string()));
        run(full)
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["syncog", "bogus"]), 1);
        assert_eq!(run(["syncog", "--help"]), 0);
    }

    #[test]
    fn bad_config_exits_two() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        fs::write(&cfg, r#"{"lexicon_dir": "/no/such/dir"}"#).unwrap();
        let code = run_in(dir.path(), &["--config", cfg.to_str().unwrap(), "cohort", "plan"]);
        assert_eq!(code, 2);
    }

    #[test]
    fn unreachable_eval_exits_four_without_report() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(run_in(dir.path(), &["--stub", "cohort", "generate", "--limit", "2"]), 0);
        let cfg = dir.path().join("c.json");
        fs::write(
            &cfg,
            r#"{"endpoints": {"eval": {"live": {"base_url": "http://127.0.0.1:9/v1", "model": "m",
                "timeout_s": 1, "retry": {"max_attempts": 1}}}}}"#,
        )
        .unwrap();
        let code = run_in(dir.path(), &["--config", cfg.to_str().unwrap(), "eval", "run"]);
        assert_eq!(code, 4);
        assert!(!dir.path().join(PREDICTIONS_FILE).exists());
        assert!(!dir.path().join("reports/eval_run.json").exists());
    }
}
