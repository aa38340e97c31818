//! Staged batch pipeline behind the CLI: a TOML run configuration with a
//! canonical content hash, one artifact directory per configuration, atomic
//! stage outputs, and the stages ingest, match, expand, coc, prompt,
//! interview, eval, report.
//!
//! Paths in the configuration resolve relative to the configuration file,
//! so a run directory can be checked in next to its corpus.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::Digest;

use crate::align::{expand_stage2, match_stage1, AlignConfig, SymptomTaxonomyMap, UnifiedProfileRecord};
use crate::coc::{build_memory, CandidateMemory, CocConfig, MemoryFile, TripleExtractor};
use crate::corpus::{
    load_candidates, load_skeletons, threshold_timeline, to_jsonl, IngestConfig, PatientSkeleton,
    SkippedLine, SocialCandidate,
};
use crate::error::{Error, Result};
use crate::evalkit::{
    audit_transcript, diversity_qcentroid, judge, realism, render_table, CitationAuditReport,
    EvalReport, GevalReport, PatientEmbeddings,
};
use crate::gateway::{
    BoundedChat, ChatClient, EchoChat, Embedder, FileEmbedder, FixedChat, HashEmbedder,
    HttpBackendConfig, HttpChat, HttpEmbedder, LlmExtractor, MockExtractor, RetryPolicy,
};
use crate::promptkit::interview::{
    run_interview, scripted_patient, DialogueTranscript, FailurePolicy, InterviewScript,
    InterviewSetup,
};
use crate::promptkit::{ablation_tags, assemble_prompt, parse_tags, ComponentTag, PromptInputs};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub counseling: PathBuf,
    pub assessment: PathBuf,
    pub candidates: PathBuf,
    /// Interview script; the bundled one is used when absent.
    #[serde(default)]
    pub script: Option<PathBuf>,
    /// Answer table (question id to answer) for the scripted patient mock.
    #[serde(default)]
    pub scripted_answers: Option<PathBuf>,
    /// Precomputed embedding file for the `file` embed provider.
    #[serde(default)]
    pub embeddings: Option<PathBuf>,
    /// Symptom taxonomy; the built-in pairing is used when absent.
    #[serde(default)]
    pub taxonomy: Option<PathBuf>,
    pub out_dir: PathBuf,
}

fn default_tags() -> String {
    "full".to_string()
}

fn default_snippet_count() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptConfig {
    /// Either a named ablation (`basic`, `basic_t`, `basic_s`, `basic_st`,
    /// `full_wo_t`, `full`) or an explicit tag list such as `B,R,P,T`.
    #[serde(default = "default_tags")]
    pub tags: String,
    #[serde(default = "default_snippet_count")]
    pub snippet_count: usize,
    #[serde(default)]
    pub max_cards: Option<usize>,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig { tags: default_tags(), snippet_count: default_snippet_count(), max_cards: None }
    }
}

pub fn parse_tag_spec(spec: &str) -> Result<std::collections::BTreeSet<ComponentTag>> {
    match ablation_tags(spec) {
        Some(tags) => Ok(tags),
        None => parse_tags(spec),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterviewConfig {
    #[serde(default)]
    pub failure_policy: FailurePolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provider", rename_all = "snake_case")]
pub enum Provider {
    /// Chat mock echoing the user turn.
    Echo,
    /// Chat mock with one canned reply (handy as a judge).
    Fixed { reply: String },
    /// Chat mock answering interview questions from `paths.scripted_answers`.
    Scripted,
    /// Extraction mock building a triple from the node label.
    Template,
    /// Deterministic hash-to-unit-vector embedding stub.
    Hash { dim: usize },
    /// Embeddings precomputed in `paths.embeddings`.
    File,
    /// Chat-completions compatible HTTP backend. `auth_env` names an
    /// environment variable; secrets never live in the config itself.
    Http {
        endpoint: String,
        model: String,
        #[serde(default)]
        auth_env: Option<String>,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
        /// Embedding dimension, required when used as an embed backend.
        #[serde(default)]
        dim: Option<usize>,
    },
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_max_retries() -> u32 {
    2
}

fn default_base_delay_ms() -> u64 {
    200
}

fn default_max_in_flight() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    #[serde(flatten)]
    pub provider: Provider,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_base_delay_ms")]
    pub base_delay_ms: u64,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
}

impl BackendSpec {
    pub fn is_deterministic(&self) -> bool {
        !matches!(self.provider, Provider::Http { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendsConfig {
    /// Patient simulator backend (name of a `[backends.specs.*]` section).
    pub chat: String,
    pub judge: String,
    pub embed: String,
    /// Triple-extraction backend; required only when extraction is enabled.
    #[serde(default)]
    pub extract: Option<String>,
    pub specs: BTreeMap<String, BackendSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PathsConfig,
    #[serde(default)]
    pub ingest: IngestConfig,
    #[serde(default)]
    pub align: AlignConfig,
    #[serde(default)]
    pub coc: CocConfig,
    #[serde(default)]
    pub prompt: PromptConfig,
    #[serde(default)]
    pub interview: InterviewConfig,
    pub backends: BackendsConfig,
    /// When set, every configured backend must be deterministic, making
    /// whole runs byte-reproducible.
    #[serde(default)]
    pub random_free: bool,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.coc.validate()?;
        parse_tag_spec(&self.prompt.tags)?;
        let mut required = vec![
            ("backends.chat", &self.backends.chat),
            ("backends.judge", &self.backends.judge),
            ("backends.embed", &self.backends.embed),
        ];
        if self.coc.extraction_enabled {
            match &self.backends.extract {
                Some(name) => required.push(("backends.extract", name)),
                None => {
                    return Err(Error::Config(
                        "coc.extraction_enabled needs backends.extract".into(),
                    ))
                }
            }
        }
        for (slot, name) in required {
            let spec = self.backends.specs.get(name).ok_or_else(|| {
                Error::Config(format!("{slot} = {name:?} has no [backends.specs.{name}] section"))
            })?;
            if self.random_free && !spec.is_deterministic() {
                return Err(Error::Config(format!(
                    "random_free run cannot use nondeterministic backend {name:?} ({slot})"
                )));
            }
        }
        Ok(())
    }
}

fn toml_override_value(raw: &str) -> toml::Value {
    if let Ok(b) = raw.parse::<bool>() {
        return toml::Value::Boolean(b);
    }
    if let Ok(i) = raw.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = raw.parse::<f64>() {
        return toml::Value::Float(f);
    }
    toml::Value::String(raw.to_string())
}

fn apply_override(root: &mut toml::Value, spec: &str) -> Result<()> {
    let (key_path, raw_value) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not KEY=VALUE")))?;
    let segments: Vec<&str> = key_path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(Error::Config(format!("override key {key_path:?} has an empty segment")));
    }
    let mut current = root;
    for segment in &segments[..segments.len() - 1] {
        let table = current
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key_path:?} crosses a non-table")))?;
        current = table
            .entry(segment.to_string())
            .or_insert_with(|| toml::Value::Table(toml::map::Map::new()));
    }
    let table = current
        .as_table_mut()
        .ok_or_else(|| Error::Config(format!("override {key_path:?} crosses a non-table")))?;
    table.insert(segments[segments.len() - 1].to_string(), toml_override_value(raw_value));
    Ok(())
}

/// Loads a run configuration, applying `KEY=VALUE` overrides before
/// deserialization (so overrides participate in the config hash).
pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut value: toml::Value =
        toml::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    for spec in overrides {
        apply_override(&mut value, spec)?;
    }
    let config: RunConfig = value
        .try_into()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

/// Canonical content hash of a configuration. Serializing through
/// `serde_json::Value` sorts object keys, so the hash is stable under field
/// reordering in the TOML source. `paths.out_dir` is excluded: where the
/// artifacts land must not change what run they belong to.
pub fn config_hash(config: &RunConfig) -> String {
    let mut value = serde_json::to_value(config).expect("config serializes");
    if let Some(paths) = value.get_mut("paths").and_then(|p| p.as_object_mut()) {
        paths.remove("out_dir");
    }
    let canonical = serde_json::to_string(&value).expect("canonical form serializes");
    hex::encode(sha2::Sha256::digest(canonical.as_bytes()))
}

// ---------------------------------------------------------------------------
// Context and artifact plumbing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Match,
    Expand,
    Coc,
    Prompt,
    Interview,
    Eval,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Match,
        Stage::Expand,
        Stage::Coc,
        Stage::Prompt,
        Stage::Interview,
        Stage::Eval,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Match => "match",
            Stage::Expand => "expand",
            Stage::Coc => "coc",
            Stage::Prompt => "prompt",
            Stage::Interview => "interview",
            Stage::Eval => "eval",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub struct PipelineContext {
    pub config: RunConfig,
    pub hash: String,
    pub run_dir: PathBuf,
    pub dry_run: bool,
    config_dir: PathBuf,
}

impl PipelineContext {
    pub fn new(config_path: &Path, overrides: &[String], dry_run: bool) -> Result<Self> {
        let config = load_config(config_path, overrides)?;
        let config_dir = config_path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let hash = config_hash(&config);
        let out_dir = resolve_against(&config_dir, &config.paths.out_dir);
        let run_dir = out_dir.join(&hash[..8]);
        Ok(PipelineContext { config, hash, run_dir, dry_run, config_dir })
    }

    pub fn short_hash(&self) -> &str {
        &self.hash[..8]
    }

    /// Resolves a config-file-relative path.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        resolve_against(&self.config_dir, path)
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.run_dir.join(stage.name())
    }

    pub fn stage_file(&self, stage: Stage, name: &str) -> PathBuf {
        self.stage_dir(stage).join(name)
    }

    fn require(&self, path: &Path) -> Result<()> {
        if path.exists() {
            Ok(())
        } else {
            Err(Error::MissingInput(path.to_path_buf()))
        }
    }

    /// An artifact a previous stage produces. Real runs fail when it is
    /// absent; dry runs stop validating there, because a real run would
    /// have created it before this stage reads it.
    fn upstream(&self, stage: Stage, name: &str) -> Result<Option<PathBuf>> {
        let path = self.stage_file(stage, name);
        if path.exists() {
            Ok(Some(path))
        } else if self.dry_run {
            Ok(None)
        } else {
            Err(Error::MissingInput(path))
        }
    }

    fn write_stage_file(&self, stage: Stage, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.stage_file(stage, name);
        atomic_write(&path, contents.as_bytes())?;
        Ok(path)
    }

    fn script(&self) -> Result<InterviewScript> {
        match &self.config.paths.script {
            Some(path) => InterviewScript::load(&self.resolve(path)),
            None => Ok(InterviewScript::bundled().clone()),
        }
    }

    fn taxonomy(&self) -> Result<SymptomTaxonomyMap> {
        match &self.config.paths.taxonomy {
            Some(path) => SymptomTaxonomyMap::load(&self.resolve(path)),
            None => Ok(SymptomTaxonomyMap::default()),
        }
    }
}

fn resolve_against(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

/// Writes via a temporary file in the destination directory followed by an
/// atomic rename, so readers never observe partial stage outputs.
pub fn atomic_write(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut temp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
    temp.write_all(contents).map_err(|e| Error::io(path, e))?;
    temp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    raw.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(idx, line)| {
            serde_json::from_str(line).map_err(|e| Error::schema(path, idx + 1, e.to_string()))
        })
        .collect()
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&raw).map_err(|e| Error::schema(path, 1, e.to_string()))
}

// ---------------------------------------------------------------------------
// Backend factories
// ---------------------------------------------------------------------------

fn backend_spec<'a>(ctx: &'a PipelineContext, name: &str) -> Result<&'a BackendSpec> {
    ctx.config.backends.specs.get(name).ok_or_else(|| {
        Error::Config(format!("no [backends.specs.{name}] section for backend {name:?}"))
    })
}

fn build_chat(ctx: &PipelineContext, name: &str) -> Result<Arc<dyn ChatClient>> {
    let spec = backend_spec(ctx, name)?;
    if ctx.config.random_free && !spec.is_deterministic() {
        return Err(Error::Config(format!(
            "random_free run cannot use nondeterministic backend {name:?}"
        )));
    }
    let inner: Arc<dyn ChatClient> = match &spec.provider {
        Provider::Echo => Arc::new(EchoChat),
        Provider::Fixed { reply } => Arc::new(FixedChat { reply: reply.clone() }),
        Provider::Scripted => {
            let script = ctx.script()?;
            let answers_path = ctx.config.paths.scripted_answers.as_ref().ok_or_else(|| {
                Error::Config(format!(
                    "backend {name:?} is scripted but paths.scripted_answers is unset"
                ))
            })?;
            let answers: BTreeMap<String, String> = read_json(&ctx.resolve(answers_path))?;
            Arc::new(scripted_patient(&script, &answers)?)
        }
        Provider::Http { endpoint, model, auth_env, timeout_secs, .. } => {
            Arc::new(HttpChat::new(
                name,
                HttpBackendConfig {
                    endpoint: endpoint.clone(),
                    model: model.clone(),
                    auth_env: auth_env.clone(),
                    timeout_secs: *timeout_secs,
                },
            )?)
        }
        Provider::Template | Provider::Hash { .. } | Provider::File => {
            return Err(Error::Config(format!(
                "backend {name:?} cannot serve a chat slot"
            )));
        }
    };
    let retry = RetryPolicy { max_retries: spec.max_retries, base_delay_ms: spec.base_delay_ms };
    Ok(Arc::new(BoundedChat::new(inner, spec.max_in_flight, retry)))
}

fn build_embedder(ctx: &PipelineContext, name: &str) -> Result<Box<dyn Embedder>> {
    let spec = backend_spec(ctx, name)?;
    if ctx.config.random_free && !spec.is_deterministic() {
        return Err(Error::Config(format!(
            "random_free run cannot use nondeterministic backend {name:?}"
        )));
    }
    match &spec.provider {
        Provider::Hash { dim } => Ok(Box::new(HashEmbedder { dim: *dim })),
        Provider::File => {
            let path = ctx.config.paths.embeddings.as_ref().ok_or_else(|| {
                Error::Config(format!(
                    "backend {name:?} reads an embedding file but paths.embeddings is unset"
                ))
            })?;
            Ok(Box::new(FileEmbedder::load(&ctx.resolve(path))?))
        }
        Provider::Http { endpoint, model, auth_env, timeout_secs, dim } => {
            let dim = dim.ok_or_else(|| {
                Error::Config(format!("http embed backend {name:?} needs a dim field"))
            })?;
            Ok(Box::new(HttpEmbedder::new(
                name,
                HttpBackendConfig {
                    endpoint: endpoint.clone(),
                    model: model.clone(),
                    auth_env: auth_env.clone(),
                    timeout_secs: *timeout_secs,
                },
                dim,
            )?))
        }
        _ => Err(Error::Config(format!("backend {name:?} cannot serve the embed slot"))),
    }
}

fn build_extractor(ctx: &PipelineContext, name: &str) -> Result<Box<dyn TripleExtractor>> {
    let spec = backend_spec(ctx, name)?;
    match &spec.provider {
        Provider::Template => Ok(Box::new(MockExtractor)),
        Provider::Hash { .. } | Provider::File => Err(Error::Config(format!(
            "backend {name:?} cannot serve the extract slot"
        ))),
        _ => Ok(Box::new(LlmExtractor::new(build_chat(ctx, name)?))),
    }
}

// ---------------------------------------------------------------------------
// Stage artifacts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SkipReport {
    counseling: Vec<SkippedLine>,
    assessment: Vec<SkippedLine>,
    candidates: Vec<SkippedLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub profile_id: String,
    pub tags: String,
    pub prompt: String,
}

fn memory_file_name(profile_id: &str, candidate_id: &str) -> String {
    format!("{profile_id}__{candidate_id}.json")
}

/// The selected (top-ranked) candidate of each profile, with its memory
/// file when the coc stage produced one.
fn load_memories(
    ctx: &PipelineContext,
    profiles: &[UnifiedProfileRecord],
    required: bool,
) -> Result<BTreeMap<String, MemoryFile>> {
    let mut memories = BTreeMap::new();
    for profile in profiles {
        let Some(top) = profile.candidates.first() else { continue };
        let path = ctx.stage_file(
            Stage::Coc,
            &memory_file_name(&profile.skeleton_id, &top.candidate_id),
        );
        if path.exists() {
            memories.insert(profile.skeleton_id.clone(), read_json(&path)?);
        } else if required {
            return Err(Error::MissingInput(path));
        }
    }
    Ok(memories)
}

fn memory_of(file: &MemoryFile) -> CandidateMemory {
    CandidateMemory {
        anchor_day: file.anchor_day,
        graph: file.graph.clone(),
        cards: file.cards.clone(),
    }
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

fn stage_ingest(ctx: &PipelineContext) -> Result<()> {
    let paths = &ctx.config.paths;
    let counseling_path = ctx.resolve(&paths.counseling);
    let assessment_path = ctx.resolve(&paths.assessment);
    let candidates_path = ctx.resolve(&paths.candidates);
    for path in [&counseling_path, &assessment_path, &candidates_path] {
        ctx.require(path)?;
    }

    let ingest = &ctx.config.ingest;
    let counseling = load_skeletons(&counseling_path, ingest)?;
    let assessment = load_skeletons(&assessment_path, ingest)?;
    let mut candidates = load_candidates(&candidates_path, ingest)?;
    for candidate in &mut candidates.records {
        candidate.symptom_timeline =
            threshold_timeline(&candidate.symptom_timeline, ingest.score_threshold)?;
        candidate.event_timeline =
            threshold_timeline(&candidate.event_timeline, ingest.score_threshold)?;
    }

    if ctx.dry_run {
        return Ok(());
    }
    ctx.write_stage_file(Stage::Ingest, "counseling.jsonl", &to_jsonl(&counseling.records)?)?;
    ctx.write_stage_file(Stage::Ingest, "assessment.jsonl", &to_jsonl(&assessment.records)?)?;
    ctx.write_stage_file(Stage::Ingest, "candidates.jsonl", &to_jsonl(&candidates.records)?)?;
    let skips = SkipReport {
        counseling: counseling.skipped,
        assessment: assessment.skipped,
        candidates: candidates.skipped,
    };
    ctx.write_stage_file(
        Stage::Ingest,
        "skipped.json",
        &serde_json::to_string_pretty(&skips).expect("skip report serializes"),
    )?;
    log::info!(
        "ingest: {} counseling, {} assessment, {} candidates",
        counseling.records.len(),
        assessment.records.len(),
        candidates.records.len()
    );
    Ok(())
}

fn load_stage_skeletons(
    ctx: &PipelineContext,
    stage: Stage,
    name: &str,
) -> Result<Option<Vec<PatientSkeleton>>> {
    let Some(path) = ctx.upstream(stage, name)? else { return Ok(None) };
    // Stage artifacts were validated when written; strict mode re-checks.
    Ok(Some(load_skeletons(&path, &IngestConfig { strict: true, ..ctx.config.ingest.clone() })?.records))
}

fn stage_match(ctx: &PipelineContext) -> Result<()> {
    let Some(counseling) = load_stage_skeletons(ctx, Stage::Ingest, "counseling.jsonl")? else {
        return Ok(());
    };
    let Some(assessment) = load_stage_skeletons(ctx, Stage::Ingest, "assessment.jsonl")? else {
        return Ok(());
    };
    let skeletons = match_stage1(&counseling, &assessment);
    if ctx.dry_run {
        return Ok(());
    }
    ctx.write_stage_file(Stage::Match, "skeletons.jsonl", &to_jsonl(&skeletons)?)?;
    log::info!("match: {} unified skeletons", skeletons.len());
    Ok(())
}

fn load_stage_candidates(ctx: &PipelineContext) -> Result<Option<Vec<SocialCandidate>>> {
    let Some(path) = ctx.upstream(Stage::Ingest, "candidates.jsonl")? else { return Ok(None) };
    Ok(Some(
        load_candidates(&path, &IngestConfig { strict: true, ..ctx.config.ingest.clone() })?.records,
    ))
}

fn stage_expand(ctx: &PipelineContext) -> Result<()> {
    let Some(skeletons) = load_stage_skeletons(ctx, Stage::Match, "skeletons.jsonl")? else {
        return Ok(());
    };
    let Some(candidates) = load_stage_candidates(ctx)? else { return Ok(()) };
    let taxonomy = ctx.taxonomy()?;
    let align = &ctx.config.align;

    let records: Vec<UnifiedProfileRecord> = skeletons
        .par_iter()
        .map(|skeleton| {
            expand_stage2(skeleton, &candidates, &taxonomy, align).map(|p| p.to_record(align))
        })
        .collect::<Result<_>>()?;

    if ctx.dry_run {
        return Ok(());
    }
    ctx.write_stage_file(Stage::Expand, "profiles.jsonl", &to_jsonl(&records)?)?;
    let attached = records.iter().filter(|r| !r.candidates.is_empty()).count();
    log::info!("expand: {attached}/{} profiles gained a candidate", records.len());
    Ok(())
}

fn stage_coc(ctx: &PipelineContext) -> Result<()> {
    let Some(profiles_path) = ctx.upstream(Stage::Expand, "profiles.jsonl")? else {
        return Ok(());
    };
    let profiles: Vec<UnifiedProfileRecord> = read_jsonl(&profiles_path)?;
    let Some(candidates) = load_stage_candidates(ctx)? else { return Ok(()) };
    let by_id: BTreeMap<&str, &SocialCandidate> =
        candidates.iter().map(|c| (c.id.as_str(), c)).collect();

    let extractor: Option<Box<dyn TripleExtractor>> = if ctx.config.coc.extraction_enabled {
        let name = ctx.config.backends.extract.as_ref().ok_or_else(|| {
            Error::Config("coc.extraction_enabled needs backends.extract".into())
        })?;
        Some(build_extractor(ctx, name)?)
    } else {
        None
    };

    if ctx.dry_run {
        return Ok(());
    }

    let coc_config = &ctx.config.coc;
    let files: Vec<(String, String)> = profiles
        .par_iter()
        .filter_map(|profile| {
            profile.candidates.first().map(|top| (profile, &top.candidate_id))
        })
        .map(|(profile, candidate_id)| {
            let candidate = by_id.get(candidate_id.as_str()).ok_or_else(|| {
                Error::invalid(format!(
                    "profile {} selects unknown candidate {candidate_id}",
                    profile.skeleton_id
                ))
            })?;
            let memory = build_memory(candidate, coc_config, extractor.as_deref())?;
            let file = MemoryFile::new(&profile.skeleton_id, candidate_id, coc_config, memory);
            let name = memory_file_name(&profile.skeleton_id, candidate_id);
            let body = serde_json::to_string_pretty(&file)
                .map_err(|e| Error::invalid(format!("memory serialization: {e}")))?;
            Ok((name, body))
        })
        .collect::<Result<_>>()?;

    for (name, body) in &files {
        ctx.write_stage_file(Stage::Coc, name, body)?;
    }
    log::info!("coc: {} memory files", files.len());
    Ok(())
}

fn stage_prompt(ctx: &PipelineContext) -> Result<()> {
    let Some(skeletons) = load_stage_skeletons(ctx, Stage::Match, "skeletons.jsonl")? else {
        return Ok(());
    };
    let Some(profiles_path) = ctx.upstream(Stage::Expand, "profiles.jsonl")? else {
        return Ok(());
    };
    let profiles: Vec<UnifiedProfileRecord> = read_jsonl(&profiles_path)?;
    let taxonomy = ctx.taxonomy()?;
    let tags = parse_tag_spec(&ctx.config.prompt.tags)?;

    // Memory files are required for profiles that selected a candidate as
    // soon as a timeline-bearing component is enabled. Dry runs tolerate
    // their absence like any other upstream artifact.
    let needs_memory =
        tags.contains(&ComponentTag::S) || tags.contains(&ComponentTag::T);
    let loaded = load_memories(ctx, &profiles, needs_memory && !ctx.dry_run)?;
    if ctx.dry_run && needs_memory {
        let covered = profiles
            .iter()
            .filter(|p| !p.candidates.is_empty())
            .all(|p| loaded.contains_key(&p.skeleton_id));
        if !covered {
            return Ok(());
        }
    }
    let memories: BTreeMap<String, CandidateMemory> =
        loaded.iter().map(|(id, file)| (id.clone(), memory_of(file))).collect();

    let tag_string = tags.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
    let records: Vec<PromptRecord> = skeletons
        .iter()
        .map(|skeleton| {
            let inputs = PromptInputs {
                skeleton,
                memory: memories.get(&skeleton.id),
                taxonomy: &taxonomy,
                snippet_count: ctx.config.prompt.snippet_count,
                max_cards: ctx.config.prompt.max_cards,
            };
            let prompt = assemble_prompt(&inputs, &tags)?;
            Ok(PromptRecord { profile_id: skeleton.id.clone(), tags: tag_string.clone(), prompt })
        })
        .collect::<Result<_>>()?;

    if ctx.dry_run {
        return Ok(());
    }
    ctx.write_stage_file(Stage::Prompt, "prompts.jsonl", &to_jsonl(&records)?)?;
    log::info!("prompt: {} prompts with tags {tag_string}", records.len());
    Ok(())
}

fn stage_interview(ctx: &PipelineContext) -> Result<()> {
    let script = ctx.script()?;
    let client = build_chat(ctx, &ctx.config.backends.chat)?;
    let Some(prompts_path) = ctx.upstream(Stage::Prompt, "prompts.jsonl")? else {
        return Ok(());
    };
    let prompts: Vec<PromptRecord> = read_jsonl(&prompts_path)?;

    if ctx.dry_run {
        return Ok(());
    }

    let policy = ctx.config.interview.failure_policy;
    let transcripts: Vec<DialogueTranscript> = prompts
        .par_iter()
        .map(|record| {
            let setup = InterviewSetup {
                profile_id: &record.profile_id,
                config_hash: &ctx.hash,
                system_prompt: &record.prompt,
                failure_policy: policy,
            };
            run_interview(&setup, &script, client.as_ref())
        })
        .collect();

    ctx.write_stage_file(Stage::Interview, "transcripts.jsonl", &to_jsonl(&transcripts)?)?;
    log::info!("interview: {} transcripts", transcripts.len());
    Ok(())
}

fn stage_eval(ctx: &PipelineContext) -> Result<()> {
    let embedder = build_embedder(ctx, &ctx.config.backends.embed)?;
    let judge_client = build_chat(ctx, &ctx.config.backends.judge)?;

    let Some(transcripts_path) = ctx.upstream(Stage::Interview, "transcripts.jsonl")? else {
        return Ok(());
    };
    let transcripts: Vec<DialogueTranscript> = read_jsonl(&transcripts_path)?;
    let Some(skeletons) = load_stage_skeletons(ctx, Stage::Match, "skeletons.jsonl")? else {
        return Ok(());
    };
    let Some(prompts_path) = ctx.upstream(Stage::Prompt, "prompts.jsonl")? else {
        return Ok(());
    };
    let prompts: Vec<PromptRecord> = read_jsonl(&prompts_path)?;
    let Some(profiles_path) = ctx.upstream(Stage::Expand, "profiles.jsonl")? else {
        return Ok(());
    };
    let profiles: Vec<UnifiedProfileRecord> = read_jsonl(&profiles_path)?;
    let memories = load_memories(ctx, &profiles, false)?;

    if ctx.dry_run {
        return Ok(());
    }

    let skeleton_by_id: BTreeMap<&str, &PatientSkeleton> =
        skeletons.iter().map(|s| (s.id.as_str(), s)).collect();
    let prompt_by_id: BTreeMap<&str, &PromptRecord> =
        prompts.iter().map(|p| (p.profile_id.as_str(), p)).collect();

    let embed_texts = |texts: &[String]| -> Result<Vec<Vec<f64>>> {
        Ok(embedder.embed(texts)?.into_iter().map(|e| e.vector).collect())
    };

    // Realism: generated utterances are the transcript answers; real
    // utterances are the profile's source dialogue snippets.
    let mut generated = PatientEmbeddings::new();
    let mut real = PatientEmbeddings::new();
    for transcript in &transcripts {
        let answers: Vec<String> = transcript
            .turns
            .iter()
            .filter(|t| t.error.is_none())
            .map(|t| t.answer.clone())
            .collect();
        let skeleton = skeleton_by_id.get(transcript.profile_id.as_str()).ok_or_else(|| {
            Error::invalid(format!("transcript for unknown profile {}", transcript.profile_id))
        })?;
        let mut sources = skeleton.assessment_snippets.clone();
        sources.extend(skeleton.counseling_snippets.iter().cloned());
        generated.insert(transcript.profile_id.clone(), embed_texts(&answers)?);
        real.insert(transcript.profile_id.clone(), embed_texts(&sources)?);
    }
    let realism_report = realism(&generated, &real)?;

    // Diversity: all patients' answers grouped by question id.
    let mut answers_by_question: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for transcript in &transcripts {
        for turn in transcript.turns.iter().filter(|t| t.error.is_none()) {
            answers_by_question
                .entry(turn.question_id.clone())
                .or_default()
                .push(turn.answer.clone());
        }
    }
    let mut embedded_answers = BTreeMap::new();
    for (question, answers) in &answers_by_question {
        embedded_answers.insert(question.clone(), embed_texts(answers)?);
    }
    let diversity_report = diversity_qcentroid(&embedded_answers)?;

    // G-Eval judging, one verdict per transcript.
    let judge_results: BTreeMap<String, Result<crate::evalkit::JudgeVerdict>> = transcripts
        .par_iter()
        .map(|transcript| {
            let result = match prompt_by_id.get(transcript.profile_id.as_str()) {
                Some(record) => judge(transcript, &record.prompt, judge_client.as_ref()),
                None => Err(Error::invalid(format!(
                    "no prompt record for profile {}",
                    transcript.profile_id
                ))),
            };
            (transcript.profile_id.clone(), result)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect();
    let geval = GevalReport::from_results(judge_results);

    // Citation audit against the profile's own cards.
    let audits: BTreeMap<String, crate::evalkit::CitationAudit> = transcripts
        .iter()
        .map(|transcript| {
            let cards = memories
                .get(&transcript.profile_id)
                .map(|m| m.cards.as_slice())
                .unwrap_or(&[]);
            (transcript.profile_id.clone(), audit_transcript(transcript, cards))
        })
        .collect();

    let report = EvalReport {
        run_id: ctx.short_hash().to_string(),
        config_hash: ctx.hash.clone(),
        realism: Some(realism_report),
        diversity: Some(diversity_report),
        geval: Some(geval),
        citation_audit: Some(CitationAuditReport::from_per_transcript(audits)),
    };
    ctx.write_stage_file(
        Stage::Eval,
        "metrics.json",
        &serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    log::info!("eval: report for {} transcripts", transcripts.len());
    Ok(())
}

fn stage_report(ctx: &PipelineContext) -> Result<()> {
    let Some(metrics_path) = ctx.upstream(Stage::Eval, "metrics.json")? else {
        return Ok(());
    };
    let report: EvalReport = read_json(&metrics_path)?;
    if ctx.dry_run {
        return Ok(());
    }
    ctx.write_stage_file(
        Stage::Report,
        "report.json",
        &serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    ctx.write_stage_file(Stage::Report, "table.txt", &render_table(&report))?;
    log::info!("report: {}", ctx.stage_file(Stage::Report, "table.txt").display());
    Ok(())
}

pub fn run_stage(ctx: &PipelineContext, stage: Stage) -> Result<()> {
    match stage {
        Stage::Ingest => stage_ingest(ctx),
        Stage::Match => stage_match(ctx),
        Stage::Expand => stage_expand(ctx),
        Stage::Coc => stage_coc(ctx),
        Stage::Prompt => stage_prompt(ctx),
        Stage::Interview => stage_interview(ctx),
        Stage::Eval => stage_eval(ctx),
        Stage::Report => stage_report(ctx),
    }
}

/// Runs every stage in order.
pub fn run_all(ctx: &PipelineContext) -> Result<()> {
    for stage in Stage::ALL {
        run_stage(ctx, stage)?;
    }
    Ok(())
}
