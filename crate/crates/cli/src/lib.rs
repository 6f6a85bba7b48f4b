//! Command-line front end for the synthesis pipeline.

use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;

use clap::{Args, Parser, Subcommand, ValueEnum};
use crsynth_core::pipeline::{BackendKind, Pipeline, PipelineConfig, PipelineError, StageSummary};
use crsynth_core::synthetic::{self, SyntheticSpec};
use serde_json::json;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;
pub const EXIT_INTERRUPTED: i32 = 130;

#[derive(Debug, Parser)]
#[command(name = "crsynth", version, about = "Synthesize conversational recommendation dialogues from reviews")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Remote,
    Mock,
}

#[derive(Debug, Default, Args)]
pub struct GlobalArgs {
    /// Pipeline config (TOML). Relative paths inside resolve against its directory.
    #[arg(long, global = true, default_value = "crsynth.toml")]
    pub config: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendArg>,
    /// Only the first N users in id order.
    #[arg(long, global = true)]
    pub limit_users: Option<usize>,
    /// Continue generation from the checkpoint log.
    #[arg(long, global = true)]
    pub resume: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load raw reviews and item metadata.
    Ingest,
    /// Summarize reviews into like/dislike abstracts.
    Abstract,
    /// Simulate dialogues.
    Generate,
    /// Apply the quality filters to generated dialogues.
    Filter,
    /// Corpus metrics over kept dialogues, or over the given files.
    Stats { corpora: Vec<PathBuf> },
    /// Run every stage in order.
    All,
    /// Write the synthetic fixture corpus and a matching config.
    MakeFixtures {
        dir: PathBuf,
        #[arg(long, default_value_t = 2024)]
        corpus_seed: u64,
    },
}

impl GlobalArgs {
    /// Flags override the file.
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = self.parallelism {
            cfg.parallelism = p;
        }
        if let Some(b) = self.backend {
            cfg.backend.kind = match b {
                BackendArg::Remote => BackendKind::Remote,
                BackendArg::Mock => BackendKind::Mock,
            };
        }
        if self.limit_users.is_some() {
            cfg.generation.limit_users = self.limit_users;
        }
        if self.resume {
            cfg.generation.resume = true;
        }
    }
}

/// Result of one invocation: exit code plus the summaries of stages that ran.
#[derive(Debug)]
pub struct RunOutcome {
    pub code: i32,
    pub stages: Vec<StageSummary>,
    pub error: Option<String>,
}

pub fn exit_code(e: &PipelineError) -> i32 {
    match e {
        PipelineError::Config(_) | PipelineError::Usage(_) => EXIT_USAGE,
        PipelineError::Interrupted { .. } => EXIT_INTERRUPTED,
        PipelineError::Io(_) | PipelineError::Stage { .. } => EXIT_FAILURE,
    }
}

pub fn load_pipeline(global: &GlobalArgs) -> Result<Pipeline, PipelineError> {
    let mut cfg = PipelineConfig::load(&global.config)?;
    global.apply(&mut cfg);
    let base = global.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let base = if base.as_os_str().is_empty() { PathBuf::from(".") } else { base };
    Pipeline::new(cfg, &base)
}

fn run_stages(pipeline: &Pipeline, command: &Command, cancel: &AtomicBool) -> Result<Vec<StageSummary>, PipelineError> {
    Ok(match command {
        Command::Ingest => vec![pipeline.ingest()?],
        Command::Abstract => vec![pipeline.abstract_stage()?],
        Command::Generate => vec![pipeline.generate(cancel)?],
        Command::Filter => vec![pipeline.filter()?],
        Command::Stats { corpora } => vec![pipeline.stats(corpora)?],
        Command::All => pipeline.all(cancel)?,
        Command::MakeFixtures { .. } => unreachable!("handled before loading a config"),
    })
}

pub const FIXTURE_CONFIG: &str = r#"seed = 7
parallelism = 4

[paths]
reviews = "reviews.jsonl"
items = "items.jsonl"
work_dir = "work"

[backend]
kind = "mock"

[generation]
dialogues_per_user = 2
"#;

pub fn make_fixtures(dir: &Path, corpus_seed: u64) -> Result<(), PipelineError> {
    synthetic::write_fixture(dir, &SyntheticSpec { seed: corpus_seed, ..SyntheticSpec::default() })?;
    let cfg = dir.join("crsynth.toml");
    if !cfg.exists() {
        std::fs::write(&cfg, FIXTURE_CONFIG)
            .map_err(|e| PipelineError::Io(crsynth_core::jsonl::JsonlError::io(&cfg, e)))?;
    }
    Ok(())
}

/// Run a parsed command line. Writes `last_error.json` into the work
/// directory when the run does not fully succeed.
pub fn run(cli: &Cli, cancel: &AtomicBool) -> RunOutcome {
    if let Command::MakeFixtures { dir, corpus_seed } = &cli.command {
        return match make_fixtures(dir, *corpus_seed) {
            Ok(()) => RunOutcome { code: EXIT_OK, stages: Vec::new(), error: None },
            Err(e) => RunOutcome { code: exit_code(&e), stages: Vec::new(), error: Some(e.to_string()) },
        };
    }
    let pipeline = match load_pipeline(&cli.global) {
        Ok(p) => p,
        Err(e) => return RunOutcome { code: exit_code(&e), stages: Vec::new(), error: Some(e.to_string()) },
    };
    let (code, stages, error, kind) = match run_stages(&pipeline, &cli.command, cancel) {
        Ok(stages) => {
            let partial = stages.iter().any(|s| !s.problems.is_empty());
            let code = if partial { EXIT_PARTIAL } else { EXIT_OK };
            (code, stages, None, "partial")
        }
        Err(e) => (exit_code(&e), Vec::new(), Some(e.to_string()), e.kind()),
    };
    let summary_path = pipeline.path("last_error.json");
    if code != EXIT_OK {
        let problems: Vec<_> = stages
            .iter()
            .filter(|s| !s.problems.is_empty())
            .map(|s| json!({ "stage": s.stage, "problems": s.problems }))
            .collect();
        let summary = json!({ "exit_code": code, "kind": kind, "error": error, "stages": problems });
        if let Err(e) = crsynth_core::jsonl::write_json(&summary_path, &summary) {
            log::warn!("could not write {}: {e}", summary_path.display());
        }
    } else {
        let _ = std::fs::remove_file(&summary_path);
    }
    RunOutcome { code, stages, error }
}
