//! Config-driven stage runner: ingest, abstract, generate, filter, stats.
//!
//! Each stage reads the previous stage's files from the work directory and
//! writes its own. A stamp records a fingerprint of the stage's inputs and
//! settings; a stage whose stamp matches and whose outputs exist is skipped
//! without touching the gateway.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::abstraction::{self, AbstractCache, AbstractionError, AbstractionReport, Summarizer};
use crate::corpus::{self, IngestReport, ItemReviewDb, UserReviewDb};
use crate::dialogue::{Dialogue, Outcome};
use crate::engine::{self, BatchSpec, RunReport, SessionConfig, SessionContext};
use crate::filters::{self, FilterConfig, FilterReport, FilterVerdict, VerdictStatus};
use crate::gateway::mock::{MockChat, MockEmbedder, RuleNli};
use crate::gateway::remote::{EndpointConfig, RemoteChat, RemoteEmbedder, RemoteNli};
use crate::gateway::{ChatParams, Gateway, RetryPolicy, SystemClock};
use crate::jsonl::{self, JsonlError};
use crate::metrics::{self, Episode, MetricsConfig, MetricsReport};
use crate::prompts::{PromptSet, TemplatePaths};
use crate::recommender::KnowledgeIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Remote,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub reviews: Option<PathBuf>,
    pub items: Option<PathBuf>,
    pub work_dir: Option<PathBuf>,
    /// Abstract cache; defaults to `<work_dir>/cache`.
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub chat: Option<EndpointConfig>,
    pub embedding: Option<EndpointConfig>,
    pub nli: Option<EndpointConfig>,
    pub embedding_max_input_tokens: usize,
    /// Global request budget per minute across all three services.
    pub requests_per_minute: Option<u32>,
    pub retry: RetryPolicy,
    pub simulator_temperature: f64,
    pub summarizer_temperature: f64,
    pub max_tokens: u32,
    pub system_prompt: String,
    /// Fraction of mock sessions steered into a known defect.
    pub mock_defect_rate: f64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        let sim = ChatParams::simulator();
        Self {
            kind: BackendKind::Mock,
            api_key_env: "OPENAI_API_KEY".into(),
            chat: None,
            embedding: None,
            nli: None,
            embedding_max_input_tokens: 8191,
            requests_per_minute: None,
            retry: RetryPolicy::default(),
            simulator_temperature: sim.temperature,
            summarizer_temperature: ChatParams::summarizer().temperature,
            max_tokens: sim.max_tokens,
            system_prompt: sim.system_prompt,
            mock_defect_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationConfig {
    pub dialogues_per_user: usize,
    pub limit_users: Option<usize>,
    pub resume: bool,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self { dialogues_per_user: 1, limit_users: None, resume: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub parallelism: usize,
    pub paths: PathsConfig,
    pub backend: BackendConfig,
    pub prompts: TemplatePaths,
    pub generation: GenerationConfig,
    pub session: SessionConfig,
    pub filter: FilterConfig,
    pub metrics: MetricsConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            parallelism: 4,
            paths: PathsConfig::default(),
            backend: BackendConfig::default(),
            prompts: TemplatePaths::default(),
            generation: GenerationConfig::default(),
            session: SessionConfig::default(),
            filter: FilterConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] JsonlError),
    #[error("{stage} failed: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("{stage} interrupted after {completed} of {planned} item(s); rerun with --resume to continue")]
    Interrupted { stage: &'static str, completed: usize, planned: usize },
}

impl PipelineError {
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Usage(_) => "usage",
            PipelineError::Io(_) => "io",
            PipelineError::Stage { .. } => "stage",
            PipelineError::Interrupted { .. } => "interrupted",
        }
    }
}

impl PipelineConfig {
    /// Parse TOML; relative paths resolve against `base`.
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Checks that need no network and no prior stage.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let missing = |k: &str| PipelineError::Config(format!("missing config key {k}"));
        self.paths.reviews.as_ref().ok_or_else(|| missing("paths.reviews"))?;
        self.paths.items.as_ref().ok_or_else(|| missing("paths.items"))?;
        self.paths.work_dir.as_ref().ok_or_else(|| missing("paths.work_dir"))?;
        if self.parallelism == 0 {
            return Err(PipelineError::Config("parallelism must be positive".into()));
        }
        if self.generation.dialogues_per_user == 0 {
            return Err(PipelineError::Config("generation.dialogues_per_user must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.backend.mock_defect_rate) {
            return Err(PipelineError::Config("backend.mock_defect_rate must lie in [0, 1]".into()));
        }
        self.session.validate().map_err(PipelineError::Config)?;
        self.filter.validate().map_err(PipelineError::Config)?;
        if self.backend.kind == BackendKind::Remote {
            self.backend.chat.as_ref().ok_or_else(|| missing("backend.chat"))?;
            self.backend.embedding.as_ref().ok_or_else(|| missing("backend.embedding"))?;
            self.backend.nli.as_ref().ok_or_else(|| missing("backend.nli"))?;
        }
        Ok(())
    }
}

/// A validated config with its paths resolved.
pub struct Pipeline {
    pub config: PipelineConfig,
    base: PathBuf,
    prompts: PromptSet,
    gateway: Arc<Gateway>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Stamp {
    stage: String,
    fingerprint: String,
}

/// What one stage did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: String,
    pub skipped: bool,
    /// Non-fatal problems: failed abstractions, aborted sessions, held verdicts.
    pub problems: Vec<String>,
    pub report: Value,
}

pub const STAGES: [&str; 5] = ["ingest", "abstract", "generate", "filter", "stats"];

fn hash_file(h: &mut Sha256, path: &Path) -> Result<(), PipelineError> {
    let text = std::fs::read(path).map_err(|e| JsonlError::io(path, e))?;
    // the header echoes run settings like parallelism; only records count
    let body: &[u8] = if text.starts_with(b"{\"header\"") {
        match text.iter().position(|b| *b == b'\n') {
            Some(i) => &text[i + 1..],
            None => &[],
        }
    } else {
        &text
    };
    h.update(path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default().as_bytes());
    h.update((body.len() as u64).to_le_bytes());
    h.update(body);
    Ok(())
}

impl Pipeline {
    /// Validate and build the backend. Reads the API key for remote
    /// backends; makes no network call.
    pub fn new(config: PipelineConfig, base: &Path) -> Result<Self, PipelineError> {
        config.validate()?;
        let prompts = PromptSet::load(&config.prompts, base).map_err(|e| PipelineError::Config(e.to_string()))?;
        let gateway = Arc::new(build_gateway(&config)?);
        Ok(Self { config, base: base.to_path_buf(), prompts, gateway })
    }

    /// Use a caller-supplied gateway instead of the configured backend.
    pub fn with_gateway(config: PipelineConfig, base: &Path, gateway: Gateway) -> Result<Self, PipelineError> {
        config.validate()?;
        let prompts = PromptSet::load(&config.prompts, base).map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(Self { config, base: base.to_path_buf(), prompts, gateway: Arc::new(gateway) })
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn work_dir(&self) -> PathBuf {
        self.resolve(self.config.paths.work_dir.as_deref().expect("validated"))
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.work_dir().join(name)
    }

    fn cache_dir(&self) -> PathBuf {
        match &self.config.paths.cache_dir {
            Some(p) => self.resolve(p),
            None => self.path("cache"),
        }
    }

    fn header(&self, stage: &str) -> Value {
        json!({ "stage": stage, "config": self.config })
    }

    fn chat_params(&self, temperature: f64) -> ChatParams {
        ChatParams {
            system_prompt: self.config.backend.system_prompt.clone(),
            temperature,
            max_tokens: self.config.backend.max_tokens,
        }
    }

    fn fingerprint(&self, stage: &str, settings: Value, inputs: &[PathBuf]) -> Result<String, PipelineError> {
        let mut h = Sha256::new();
        h.update(stage.as_bytes());
        h.update(settings.to_string().as_bytes());
        h.update(serde_json::to_string(&self.gateway.tags()).unwrap_or_default().as_bytes());
        for p in inputs {
            hash_file(&mut h, p)?;
        }
        Ok(hex::encode(h.finalize()))
    }

    fn stamp_path(&self, stage: &str) -> PathBuf {
        self.path(&format!("stamps/{stage}.json"))
    }

    fn up_to_date(&self, stage: &str, fingerprint: &str, outputs: &[&str]) -> bool {
        let ok = jsonl::read_json::<Stamp>(&self.stamp_path(stage)).is_ok_and(|s| s.fingerprint == fingerprint);
        ok && outputs.iter().all(|o| self.path(o).exists())
    }

    fn write_stamp(&self, stage: &str, fingerprint: String) -> Result<(), PipelineError> {
        Ok(jsonl::write_json(&self.stamp_path(stage), &Stamp { stage: stage.into(), fingerprint })?)
    }

    fn require(&self, file: &str, stage: &str) -> Result<PathBuf, PipelineError> {
        let p = self.path(file);
        if p.exists() {
            Ok(p)
        } else {
            Err(PipelineError::Usage(format!("{} not found; run the {stage} stage first", p.display())))
        }
    }

    /// A skipped stage still reports the problems its stored run had, so
    /// the exit status does not change on a rerun.
    fn skipped(stage: &str, report: Value) -> StageSummary {
        let count = |v: &Value| v.as_u64().unwrap_or(0);
        let problems = match stage {
            "abstract" => report["failures"]
                .as_array()
                .map(|a| a.iter().map(|f| f.as_str().unwrap_or_default().to_string()).collect())
                .unwrap_or_default(),
            "generate" if count(&report["outcomes"]["aborted"]) > 0 => {
                vec![format!("{} aborted session(s)", count(&report["outcomes"]["aborted"]))]
            }
            "filter" if count(&report["held"]) > 0 => vec![format!("{} held verdict(s)", count(&report["held"]))],
            _ => Vec::new(),
        };
        StageSummary { stage: stage.into(), skipped: true, problems, report }
    }

    fn write_report<T: Serialize>(&self, file: &str, stage: &str, report: &T) -> Result<(), PipelineError> {
        Ok(jsonl::write_json(&self.path(file), &json!({ "header": self.header(stage), "report": report }))?)
    }

    fn read_report(&self, file: &str) -> Value {
        jsonl::read_json::<Value>(&self.path(file)).ok().and_then(|v| v.get("report").cloned()).unwrap_or(Value::Null)
    }

    pub fn ingest(&self) -> Result<StageSummary, PipelineError> {
        let reviews = self.resolve(self.config.paths.reviews.as_deref().expect("validated"));
        let items = self.resolve(self.config.paths.items.as_deref().expect("validated"));
        for p in [&reviews, &items] {
            if !p.exists() {
                return Err(PipelineError::Config(format!("input file {} does not exist", p.display())));
            }
        }
        let fp = self.fingerprint("ingest", Value::Null, &[reviews.clone(), items.clone()])?;
        let outputs = ["users.json", "items.json", "ingest_report.json"];
        if self.up_to_date("ingest", &fp, &outputs) {
            return Ok(Self::skipped("ingest", self.read_report("ingest_report.json")));
        }
        let (users, items_db, report): (UserReviewDb, ItemReviewDb, IngestReport) =
            corpus::ingest_files(&reviews, &items)?;
        jsonl::write_json(&self.path("users.json"), &users)?;
        jsonl::write_json(&self.path("items.json"), &items_db)?;
        self.write_report("ingest_report.json", "ingest", &report)?;
        self.write_stamp("ingest", fp)?;
        // malformed lines are reported, not fatal
        Ok(StageSummary {
            stage: "ingest".into(),
            skipped: false,
            problems: Vec::new(),
            report: serde_json::to_value(report).unwrap(),
        })
    }

    /// Users in scope: all, or the first `limit_users` in id order.
    fn user_scope(&self, users: &UserReviewDb) -> Vec<String> {
        let all = users.users.keys().cloned();
        match self.config.generation.limit_users {
            Some(n) => all.take(n).collect(),
            None => all.collect(),
        }
    }

    pub fn abstract_stage(&self) -> Result<StageSummary, PipelineError> {
        let users_p = self.require("users.json", "ingest")?;
        let items_p = self.require("items.json", "ingest")?;
        let settings = json!({
            "prompts": [&self.prompts.user_abstract, &self.prompts.item_abstract],
            "temperature": self.config.backend.summarizer_temperature,
            "max_tokens": self.config.backend.max_tokens,
            "system_prompt": self.config.backend.system_prompt,
            "limit_users": self.config.generation.limit_users,
        });
        let fp = self.fingerprint("abstract", settings, &[users_p.clone(), items_p.clone()])?;
        let outputs = ["users.abstracted.json", "items.abstracted.json", "abstracts.jsonl", "abstraction_report.json"];
        if self.up_to_date("abstract", &fp, &outputs) {
            return Ok(Self::skipped("abstract", self.read_report("abstraction_report.json")));
        }
        let mut users: UserReviewDb = jsonl::read_json(&users_p)?;
        let mut items: ItemReviewDb = jsonl::read_json(&items_p)?;
        let scope: BTreeSet<String> = self.user_scope(&users).into_iter().collect();
        let summarizer = Summarizer::new(
            &self.gateway,
            &self.prompts,
            self.chat_params(self.config.backend.summarizer_temperature),
            Some(AbstractCache::new(self.cache_dir().join("abstracts"))),
        );
        let report: AbstractionReport =
            abstraction::abstract_corpus(&summarizer, &mut users, &mut items, Some(&scope), self.config.parallelism)
                .map_err(|e: AbstractionError| PipelineError::Stage { stage: "abstract", message: e.to_string() })?;
        jsonl::write_json(&self.path("users.abstracted.json"), &users)?;
        jsonl::write_json(&self.path("items.abstracted.json"), &items)?;
        jsonl::write_all(
            &self.path("abstracts.jsonl"),
            Some(&self.header("abstract")),
            abstraction::export_records(&users, &items),
        )?;
        self.write_report("abstraction_report.json", "abstract", &report)?;
        self.write_stamp("abstract", fp)?;
        Ok(StageSummary {
            stage: "abstract".into(),
            skipped: false,
            problems: report.failures.clone(),
            report: serde_json::to_value(report).unwrap(),
        })
    }

    pub fn generate(&self, cancel: &AtomicBool) -> Result<StageSummary, PipelineError> {
        let users_p = self.require("users.abstracted.json", "abstract")?;
        let items_p = self.require("items.abstracted.json", "abstract")?;
        let settings = json!({
            "seed": self.config.seed,
            "session": self.config.session,
            "dialogues_per_user": self.config.generation.dialogues_per_user,
            "limit_users": self.config.generation.limit_users,
            "prompts": [&self.prompts.seeker, &self.prompts.recommender],
            "temperature": self.config.backend.simulator_temperature,
            "max_tokens": self.config.backend.max_tokens,
            "system_prompt": self.config.backend.system_prompt,
            "defect_rate": self.config.backend.mock_defect_rate,
        });
        let fp = self.fingerprint("generate", settings, &[users_p.clone(), items_p.clone()])?;
        let outputs = ["dialogues.jsonl", "run_report.json"];
        if self.up_to_date("generate", &fp, &outputs) {
            return Ok(Self::skipped("generate", self.read_report("run_report.json")));
        }
        let users: UserReviewDb = jsonl::read_json(&users_p)?;
        let items: ItemReviewDb = jsonl::read_json(&items_p)?;
        let index = KnowledgeIndex::new();
        let ctx = SessionContext {
            gateway: &self.gateway,
            prompts: &self.prompts,
            params: self.chat_params(self.config.backend.simulator_temperature),
            users: &users,
            items: &items,
            index: &index,
        };
        let spec = BatchSpec {
            users: self.user_scope(&users),
            per_user: self.config.generation.dialogues_per_user,
            global_seed: self.config.seed,
            parallelism: self.config.parallelism,
        };
        // a partial log from different settings must not be resumed
        let partial = self.path("dialogues.partial.jsonl");
        let partial_stamp = self.path("stamps/generate.partial.json");
        let resume = self.config.generation.resume
            && jsonl::read_json::<Stamp>(&partial_stamp).is_ok_and(|s| s.fingerprint == fp);
        jsonl::write_json(&partial_stamp, &Stamp { stage: "generate".into(), fingerprint: fp.clone() })?;
        let out = engine::run_batch(&ctx, &self.config.session, &spec, Some(&partial), resume, cancel)
            .map_err(|e| PipelineError::Stage { stage: "generate", message: e.to_string() })?;
        let report: RunReport = out.report;
        if report.interrupted {
            return Err(PipelineError::Interrupted {
                stage: "generate",
                completed: report.dialogues,
                planned: report.sessions_planned,
            });
        }
        jsonl::write_all(&self.path("dialogues.jsonl"), Some(&self.header("generate")), &out.dialogues)?;
        self.write_report("run_report.json", "generate", &report)?;
        self.write_stamp("generate", fp)?;
        let _ = std::fs::remove_file(&partial);
        let _ = std::fs::remove_file(&partial_stamp);
        let problems = out
            .dialogues
            .iter()
            .filter_map(|d| match &d.outcome {
                Outcome::Aborted { reason, .. } => Some(format!("{}: {reason}", d.dialogue_id)),
                _ => None,
            })
            .collect();
        Ok(StageSummary {
            stage: "generate".into(),
            skipped: false,
            problems,
            report: serde_json::to_value(report).unwrap(),
        })
    }

    pub fn filter(&self) -> Result<StageSummary, PipelineError> {
        let dialogues_p = self.require("dialogues.jsonl", "generate")?;
        let settings = json!({ "filter": self.config.filter });
        let fp = self.fingerprint("filter", settings, std::slice::from_ref(&dialogues_p))?;
        let outputs = ["verdicts.jsonl", "kept.jsonl", "filter_report.json"];
        if self.up_to_date("filter", &fp, &outputs) {
            return Ok(Self::skipped("filter", self.read_report("filter_report.json")));
        }
        let dialogues: Vec<Dialogue> = jsonl::read_all(&dialogues_p)?;
        let out = filters::apply_filters(&dialogues, &self.gateway, &self.config.filter, self.config.parallelism);
        let header = self.header("filter");
        jsonl::write_all(&self.path("verdicts.jsonl"), Some(&header), &out.verdicts)?;
        jsonl::write_all(&self.path("kept.jsonl"), Some(&header), &out.kept)?;
        let report: FilterReport = out.report;
        self.write_report("filter_report.json", "filter", &report)?;
        self.write_stamp("filter", fp)?;
        let problems = out
            .verdicts
            .iter()
            .filter(|v: &&FilterVerdict| v.status == VerdictStatus::Held)
            .map(|v| format!("{}: {}", v.dialogue_id, v.error.as_deref().unwrap_or("held")))
            .collect();
        Ok(StageSummary {
            stage: "filter".into(),
            skipped: false,
            problems,
            report: serde_json::to_value(report).unwrap(),
        })
    }

    /// Metrics over `corpora`, or over the kept dialogues when none are given.
    pub fn stats(&self, corpora: &[PathBuf]) -> Result<StageSummary, PipelineError> {
        let inputs: Vec<PathBuf> = if corpora.is_empty() {
            vec![self.require("kept.jsonl", "filter")?]
        } else {
            for c in corpora {
                if !c.exists() {
                    return Err(PipelineError::Usage(format!("corpus {} not found", c.display())));
                }
            }
            corpora.to_vec()
        };
        let episodes_p = self.config.metrics.episodes.as_ref().map(|p| self.resolve(Path::new(p)));
        let mut fp_inputs = inputs.clone();
        fp_inputs.extend(episodes_p.clone());
        let settings = json!({ "metrics": self.config.metrics, "seed": self.config.seed });
        let fp = self.fingerprint("stats", settings, &fp_inputs)?;
        let outputs = ["metrics_report.json", "metrics.txt"];
        if self.up_to_date("stats", &fp, &outputs) {
            return Ok(Self::skipped("stats", self.read_report("metrics_report.json")));
        }
        let episodes: Vec<Episode> = match &episodes_p {
            Some(p) => jsonl::read_all(p)?,
            None => Vec::new(),
        };
        let mut reports: Vec<(String, MetricsReport)> = Vec::new();
        for p in &inputs {
            let corpus = metrics::read_transcripts(p)?;
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let r = metrics::compute_report(
                &corpus,
                &self.config.metrics,
                &episodes,
                Some(&self.gateway),
                self.config.seed,
            )
            .map_err(|e| PipelineError::Stage { stage: "stats", message: format!("{name}: {e}") })?;
            reports.push((name, r));
        }
        let value = json!(reports.iter().map(|(n, r)| json!({ "corpus": n, "metrics": r })).collect::<Vec<_>>());
        self.write_report("metrics_report.json", "stats", &value)?;
        let table: String = reports.iter().map(|(n, r)| format!("== {n}\n{}", metrics::render_table(r))).collect();
        jsonl::atomic_write_with(&self.path("metrics.txt"), |w| std::io::Write::write_all(w, table.as_bytes()))?;
        self.write_stamp("stats", fp)?;
        Ok(StageSummary { stage: "stats".into(), skipped: false, problems: Vec::new(), report: value })
    }

    /// Every stage in order.
    pub fn all(&self, cancel: &AtomicBool) -> Result<Vec<StageSummary>, PipelineError> {
        Ok(vec![self.ingest()?, self.abstract_stage()?, self.generate(cancel)?, self.filter()?, self.stats(&[])?])
    }
}

/// Build the configured backend.
pub fn build_gateway(config: &PipelineConfig) -> Result<Gateway, PipelineError> {
    let b = &config.backend;
    let clock = Arc::new(SystemClock::default());
    match b.kind {
        BackendKind::Mock => Ok(Gateway::new(
            Arc::new(MockChat::new(config.seed).with_defect_rate(b.mock_defect_rate)),
            Arc::new(MockEmbedder::new(config.seed).with_max_input_tokens(b.embedding_max_input_tokens)),
            Arc::new(RuleNli),
            b.retry,
            b.requests_per_minute,
            clock,
        )),
        BackendKind::Remote => {
            let key = std::env::var(&b.api_key_env).ok().filter(|k| !k.is_empty());
            if key.is_none() {
                return Err(PipelineError::Config(format!(
                    "environment variable {} (backend.api_key_env) is not set",
                    b.api_key_env
                )));
            }
            let missing = |k: &str| PipelineError::Config(format!("missing config key {k}"));
            let chat = b.chat.clone().ok_or_else(|| missing("backend.chat"))?;
            let emb = b.embedding.clone().ok_or_else(|| missing("backend.embedding"))?;
            let nli = b.nli.clone().ok_or_else(|| missing("backend.nli"))?;
            Ok(Gateway::new(
                Arc::new(RemoteChat::new(chat, key.clone())),
                Arc::new(RemoteEmbedder::new(emb, key.clone(), b.embedding_max_input_tokens)),
                Arc::new(RemoteNli::new(nli, key)),
                b.retry,
                b.requests_per_minute,
                clock,
            ))
        }
    }
}
