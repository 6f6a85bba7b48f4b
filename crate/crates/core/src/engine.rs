//! Session orchestration: one dialogue end to end, and resumable batches.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Mutex};

use serde::{Deserialize, Serialize};

use crate::corpus::{ItemReviewDb, UserReviewDb};
use crate::dialogue::{Dialogue, Outcome, SimError, Turn};
use crate::gateway::mock::stable_hash;
use crate::gateway::{ChatParams, Gateway, StatsSnapshot};
use crate::jsonl::{self, AppendLog, JsonlError};
use crate::persona::{build_persona, responsive_preference, Persona, PersonaError};
use crate::prompts::PromptSet;
use crate::recommender::{self, KnowledgeIndex, Phase, RetrievalRequest};
use crate::seeker::{self, Suggested};

/// Opening pairs: a seeker request and a recommender preference question.
pub const SEED_PAIRS: &[(&str, &str)] = &[
    (
        "Hi there! I'm in the mood to watch a movie. Can you recommend something?",
        "Absolutely! What kind of movie are you in the mood for? Any specific genre or theme?",
    ),
    (
        "Hello! I'm looking for a movie to watch tonight. Any suggestions?",
        "Sure! Tell me a little about what you usually enjoy watching.",
    ),
    ("Hey, could you help me find a good movie?", "Of course! What kinds of movies do you like?"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SessionConfig {
    /// Candidates per recommender turn; the last entry repeats.
    pub k_schedule: Vec<usize>,
    /// Recommender turn (1 = first after the seed pair) from which the
    /// target is forced into the candidates.
    pub force_from_turn: usize,
    pub max_utterances: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self { k_schedule: vec![3], force_from_turn: 3, max_utterances: 20 }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.k_schedule.is_empty() || self.k_schedule.contains(&0) {
            return Err("session.k_schedule must be non-empty with positive entries".into());
        }
        if self.force_from_turn < 3 {
            return Err(format!("session.force_from_turn must be at least 3, got {}", self.force_from_turn));
        }
        if self.max_utterances < 8 || !self.max_utterances.is_multiple_of(2) {
            return Err(format!("session.max_utterances must be even and at least 8, got {}", self.max_utterances));
        }
        Ok(())
    }

    /// k for the given recommender turn (1-based).
    pub fn k_for(&self, rec_turn: usize) -> usize {
        let i = rec_turn.saturating_sub(1).min(self.k_schedule.len() - 1);
        self.k_schedule[i]
    }
}

/// Everything a session reads; shared by all workers.
pub struct SessionContext<'a> {
    pub gateway: &'a Gateway,
    pub prompts: &'a PromptSet,
    pub params: ChatParams,
    pub users: &'a UserReviewDb,
    pub items: &'a ItemReviewDb,
    pub index: &'a KnowledgeIndex,
}

/// Per-session seed for (user, replica) under a global seed.
pub fn session_seed(global: u64, user_id: &str, replica: usize) -> u64 {
    stable_hash(&[b"session", &global.to_le_bytes(), user_id.as_bytes(), &(replica as u64).to_le_bytes()])
}

pub fn dialogue_id(user_id: &str, replica: usize) -> String {
    format!("{user_id}-{replica}")
}

/// Items the user reviewed that have item metadata.
pub fn candidate_pool(users: &UserReviewDb, items: &ItemReviewDb, user_id: &str) -> Vec<String> {
    let mut pool: Vec<String> = users
        .users
        .get(user_id)
        .map(|rs| rs.iter().map(|r| r.item_id.clone()).filter(|i| items.items.contains_key(i)).collect())
        .unwrap_or_default();
    pool.sort();
    pool.dedup();
    pool
}

fn aborted(e: &SimError) -> Outcome {
    Outcome::Aborted { reason: e.to_string(), transport: e.is_transport() }
}

/// Run one session to acceptance, abort, or the utterance cap.
pub fn generate_dialogue(ctx: &SessionContext<'_>, persona: &Persona, cfg: &SessionConfig, replica: usize) -> Dialogue {
    let seed = persona.seed;
    let (opener, question) =
        SEED_PAIRS[(stable_hash(&[b"pair", &seed.to_le_bytes()]) % SEED_PAIRS.len() as u64) as usize];
    let mut turns = vec![Turn::seeker(opener), Turn::recommender(question)];
    let full_pool = candidate_pool(ctx.users, ctx.items, &persona.user_id);
    let mut recommended: HashSet<String> = HashSet::new();
    let mut rec_turn = 0usize;

    let outcome = loop {
        let last = turns.last().and_then(|t| t.movie_id.clone());
        let responsive = last.as_deref().and_then(|id| responsive_preference(ctx.users, &persona.user_id, id));
        let title = last.as_deref().map(|id| ctx.items.items[id].item.title.clone());
        let suggested = last.as_deref().map(|id| Suggested {
            item_id: id,
            title: title.as_deref().unwrap_or(""),
            responsive: responsive.as_ref(),
        });
        let reply = match seeker::next_seeker_utterance(
            ctx.gateway,
            ctx.prompts,
            &ctx.params,
            persona,
            &turns,
            suggested,
            seed,
        ) {
            Ok(r) => r,
            Err(e) => break aborted(&e),
        };
        let mut t = Turn::seeker(reply.text);
        t.terminal = reply.is_terminal;
        t.accepted_item_id = reply.accepted_item_id.clone();
        turns.push(t);
        if let Some(accepted) = reply.accepted_item_id {
            break if accepted == persona.target_item_id {
                Outcome::AcceptedTarget
            } else {
                Outcome::AcceptedOther { item_id: accepted }
            };
        }
        if turns.len() >= cfg.max_utterances {
            break Outcome::MaxTurns;
        }

        rec_turn += 1;
        let phase = if rec_turn == 1 { Phase::Questioning } else { Phase::Recommending };
        let pool: Vec<String> = full_pool.iter().filter(|i| !recommended.contains(*i)).cloned().collect();
        let req = RetrievalRequest {
            context: &turns,
            pool: &pool,
            k: cfg.k_for(rec_turn),
            turn_index: rec_turn,
            target_id: &persona.target_item_id,
            force_from_turn: cfg.force_from_turn,
        };
        let candidates = match recommender::retrieve_candidates(ctx.gateway, ctx.items, ctx.index, &req) {
            Ok(c) => c,
            Err(e) => break aborted(&e),
        };
        let rec = match recommender::next_recommender_utterance(
            ctx.gateway,
            ctx.prompts,
            &ctx.params,
            &turns,
            &candidates,
            phase,
            seed,
        ) {
            Ok(r) => r,
            Err(e) => break aborted(&e),
        };
        let mut t = Turn::recommender(rec.text);
        t.think = Some(rec.think);
        if let Some(id) = rec.movie_id {
            recommended.insert(id.clone());
            t.movie_id = Some(id);
            t.movie_line = rec.movie_line;
            t.candidates = Some(candidates.ids());
            t.target_forced = candidates.target_forced;
        }
        turns.push(t);
        if turns.len() >= cfg.max_utterances {
            break Outcome::MaxTurns;
        }
    };

    Dialogue {
        dialogue_id: dialogue_id(&persona.user_id, replica),
        user_id: persona.user_id.clone(),
        replica,
        target_item_id: persona.target_item_id.clone(),
        target_title: persona.target_title.clone(),
        persona: persona.clone(),
        turns,
        outcome,
        seed,
        backend: ctx.gateway.tags(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub users: Vec<String>,
    pub per_user: usize,
    pub global_seed: u64,
    pub parallelism: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub sessions_planned: usize,
    pub dialogues: usize,
    pub resumed: usize,
    pub outcomes: BTreeMap<String, usize>,
    pub ineligible_users: BTreeMap<String, String>,
    pub retried_sessions: usize,
    pub interrupted: bool,
    pub usage: StatsSnapshot,
}

impl RunReport {
    /// Sessions that ended without a usable result for reasons other than the cap.
    pub fn aborted(&self) -> usize {
        self.outcomes.get("aborted").copied().unwrap_or(0)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("invalid session config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] JsonlError),
}

pub struct BatchOutput {
    pub dialogues: Vec<Dialogue>,
    pub report: RunReport,
}

/// Sort key: user id, then replica number.
pub fn sort_dialogues(d: &mut [Dialogue]) {
    d.sort_by(|a, b| a.user_id.cmp(&b.user_id).then(a.replica.cmp(&b.replica)));
}

/// Generate `per_user` dialogues for each user. With a checkpoint path,
/// every finished dialogue is appended there as it completes; `resume`
/// keeps what is already in it and runs only the missing sessions.
/// Setting `cancel` stops new sessions from starting.
pub fn run_batch(
    ctx: &SessionContext<'_>,
    cfg: &SessionConfig,
    spec: &BatchSpec,
    checkpoint: Option<&Path>,
    resume: bool,
    cancel: &AtomicBool,
) -> Result<BatchOutput, EngineError> {
    cfg.validate().map_err(EngineError::Config)?;
    let start = ctx.gateway.stats();
    let mut report = RunReport::default();

    let mut done: BTreeMap<String, Dialogue> = BTreeMap::new();
    if let (Some(path), true) = (checkpoint, resume) {
        if path.exists() {
            for d in jsonl::read_log::<Dialogue>(path)? {
                done.insert(d.dialogue_id.clone(), d);
            }
        }
    }

    let mut jobs: Vec<Persona> = Vec::new();
    let mut replicas: Vec<usize> = Vec::new();
    let wanted: BTreeSet<&String> = spec.users.iter().collect();
    for user in wanted {
        for replica in 0..spec.per_user {
            let seed = session_seed(spec.global_seed, user, replica);
            match build_persona(ctx.users, user, seed) {
                Ok(p) => {
                    report.sessions_planned += 1;
                    if done.contains_key(&dialogue_id(user, replica)) {
                        report.resumed += 1;
                    } else {
                        jobs.push(p);
                        replicas.push(replica);
                    }
                }
                Err(PersonaError::IneligibleUser { reason, .. }) => {
                    report.ineligible_users.insert(user.clone(), reason);
                    break;
                }
                Err(e) => {
                    report.ineligible_users.insert(user.clone(), e.to_string());
                    break;
                }
            }
        }
    }
    done.retain(|_, d| d.replica < spec.per_user && spec.users.contains(&d.user_id));

    prewarm(ctx, &jobs, spec.parallelism);

    let mut log = match checkpoint {
        Some(p) => Some(AppendLog::open(p, !resume)?),
        None => None,
    };

    let retried = AtomicUsize::new(0);
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<Dialogue>();
    let workers = spec.parallelism.max(1).min(jobs.len().max(1));
    let mut write_error: Option<JsonlError> = None;
    std::thread::scope(|s| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (jobs, replicas, next, retried) = (&jobs, &replicas, &next, &retried);
            s.spawn(move || loop {
                if cancel.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= jobs.len() {
                    break;
                }
                let mut d = generate_dialogue(ctx, &jobs[i], cfg, replicas[i]);
                if matches!(d.outcome, Outcome::Aborted { transport: true, .. }) {
                    retried.fetch_add(1, Ordering::Relaxed);
                    d = generate_dialogue(ctx, &jobs[i], cfg, replicas[i]);
                }
                if tx.send(d).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for d in rx {
            if let Some(log) = log.as_mut() {
                if let Err(e) = log.append(&d) {
                    write_error.get_or_insert(e);
                    cancel.store(true, Ordering::SeqCst);
                }
            }
            done.insert(d.dialogue_id.clone(), d);
        }
    });
    if let Some(e) = write_error {
        return Err(e.into());
    }

    let mut dialogues: Vec<Dialogue> = done.into_values().collect();
    sort_dialogues(&mut dialogues);
    report.dialogues = dialogues.len();
    report.interrupted = report.dialogues < report.sessions_planned;
    report.retried_sessions = retried.into_inner();
    for d in &dialogues {
        *report.outcomes.entry(d.outcome.label().to_string()).or_default() += 1;
    }
    report.usage = ctx.gateway.stats().since(&start);
    Ok(BatchOutput { dialogues, report })
}

/// Embed every candidate item the pending sessions can reach, so the
/// number of embedding calls does not depend on scheduling.
fn prewarm(ctx: &SessionContext<'_>, jobs: &[Persona], parallelism: usize) {
    let ids: BTreeSet<String> = jobs.iter().flat_map(|p| candidate_pool(ctx.users, ctx.items, &p.user_id)).collect();
    let ids: Vec<String> = ids.into_iter().collect();
    let failures = Mutex::new(0usize);
    crate::abstraction::parallel_map(&ids, parallelism, |id| {
        if ctx.index.get(ctx.gateway, ctx.items, id).is_err() {
            *failures.lock().unwrap() += 1;
        }
    });
    let failures = failures.into_inner().unwrap();
    if failures > 0 {
        log::warn!("{failures} item knowledge embedding(s) failed during prewarm; sessions will retry them");
    }
}
