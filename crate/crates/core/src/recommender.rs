//! Recommender simulator: embedding retrieval over the seeker's reviewed
//! items, then a Think / Movie / Recommender completion.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::corpus::ItemReviewDb;
use crate::dialogue::{render_context, SimError, Turn};
use crate::gateway::{ChatParams, Gateway, GatewayError};
use crate::prompts::{render_knowledge, PromptSet, REASONING_FORMAT_REMINDER};
use crate::text;

pub const QUESTION_TAG: &str = "recommender-question";
pub const RECOMMEND_TAG: &str = "recommender-recommend";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Questioning,
    Recommending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub item_id: String,
    pub title: String,
    pub knowledge: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub items: Vec<Candidate>,
    pub k: usize,
    pub target_forced: bool,
}

impl CandidateSet {
    pub fn ids(&self) -> Vec<String> {
        self.items.iter().map(|c| c.item_id.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecTurn {
    pub think: String,
    pub movie_id: Option<String>,
    pub movie_line: Option<String>,
    pub text: String,
}

/// Knowledge text and its embedding.
pub type KnowledgeEntry = Arc<(String, Vec<f64>)>;

/// Knowledge text and embedding per item, shared across sessions.
#[derive(Default)]
pub struct KnowledgeIndex {
    entries: RwLock<HashMap<String, KnowledgeEntry>>,
}

impl KnowledgeIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, gateway: &Gateway, items: &ItemReviewDb, item_id: &str) -> Result<KnowledgeEntry, SimError> {
        if let Some(e) = self.entries.read().unwrap().get(item_id) {
            return Ok(e.clone());
        }
        let entry = items.entry(item_id).map_err(|e| SimError::Gateway(GatewayError::InvalidRequest(e.to_string())))?;
        let knowledge = render_knowledge(entry);
        let v = gateway.embed(&knowledge)?.values;
        let e = Arc::new((knowledge, v));
        Ok(self.entries.write().unwrap().entry(item_id.to_string()).or_insert(e).clone())
    }
}

/// Rank `pool` by cosine against `query`, ties by item id ascending, keep
/// the top `k`. From `turn_index >= force_from_turn` on, a target outside
/// the top `k` replaces the lowest kept entry. Returns (indices into
/// `pool` with scores, target_forced).
pub fn rank_pool(
    query: &[f64],
    pool: &[(&str, &[f64])],
    k: usize,
    turn_index: usize,
    target_id: &str,
    force_from_turn: usize,
) -> (Vec<(usize, f64)>, bool) {
    let mut scored: Vec<(usize, f64)> =
        pool.iter().enumerate().map(|(i, (_, v))| (i, crate::gateway::cosine(query, v))).collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| pool[a.0].0.cmp(pool[b.0].0)));
    let k = k.min(scored.len());
    let mut top: Vec<(usize, f64)> = scored[..k].to_vec();
    let mut forced = false;
    if turn_index >= force_from_turn && k > 0 && !top.iter().any(|(i, _)| pool[*i].0 == target_id) {
        if let Some(t) = scored[k..].iter().find(|(i, _)| pool[*i].0 == target_id) {
            top[k - 1] = *t;
            forced = true;
        }
    }
    (top, forced)
}

pub struct RetrievalRequest<'a> {
    pub context: &'a [Turn],
    pub pool: &'a [String],
    pub k: usize,
    pub turn_index: usize,
    pub target_id: &'a str,
    pub force_from_turn: usize,
}

pub fn retrieve_candidates(
    gateway: &Gateway,
    items: &ItemReviewDb,
    index: &KnowledgeIndex,
    req: &RetrievalRequest<'_>,
) -> Result<CandidateSet, SimError> {
    if req.pool.is_empty() {
        return Err(SimError::EmptyPool);
    }
    let query = gateway.embed(&render_context(req.context))?.values;
    let entries = req.pool.iter().map(|id| index.get(gateway, items, id)).collect::<Result<Vec<_>, _>>()?;
    let pool: Vec<(&str, &[f64])> =
        req.pool.iter().zip(&entries).map(|(id, e)| (id.as_str(), e.1.as_slice())).collect();
    let (top, target_forced) =
        rank_pool(&query, &pool, req.k.max(1), req.turn_index, req.target_id, req.force_from_turn);
    let items_out = top
        .into_iter()
        .map(|(i, score)| Candidate {
            item_id: req.pool[i].clone(),
            title: items.items[&req.pool[i]].item.title.clone(),
            knowledge: entries[i].0.clone(),
            score,
        })
        .collect();
    Ok(CandidateSet { items: items_out, k: req.k.max(1), target_forced })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reasoning {
    pub think: String,
    pub movie_line: Option<String>,
    pub utterance: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("missing Think field")]
    MissingThink,
    #[error("missing Recommender field")]
    MissingUtterance,
}

const FIELDS: [&str; 3] = ["Think:", "Movie:", "Recommender:"];

/// Line-anchored scan for the Think / Movie / Recommender fields; each runs
/// until the next field prefix.
pub fn parse_reasoning(raw: &str) -> Result<Reasoning, ParseError> {
    let mut values: [Option<String>; 3] = [None, None, None];
    let mut current: Option<usize> = None;
    for line in raw.lines() {
        let t = line.trim_start();
        if let Some(f) = FIELDS.iter().position(|p| t.starts_with(p)) {
            if values[f].is_none() {
                values[f] = Some(t[FIELDS[f].len()..].trim().to_string());
                current = Some(f);
                continue;
            }
        }
        if let Some(f) = current {
            let v = values[f].as_mut().expect("open field");
            if !v.is_empty() {
                v.push('\n');
            }
            v.push_str(line.trim());
        }
    }
    let [think, movie, utterance] = values.map(|v| v.map(|s| s.trim().to_string()).filter(|s| !s.is_empty()));
    let think = think.ok_or(ParseError::MissingThink)?;
    let utterance = utterance.ok_or(ParseError::MissingUtterance)?;
    Ok(Reasoning { think, movie_line: movie, utterance })
}

/// Resolve a "Title (Year)" line against the candidates: case-insensitive,
/// punctuation-insensitive, and tolerant of a missing or different year.
pub fn match_title<'a>(movie_line: &str, candidates: &'a [Candidate]) -> Option<&'a Candidate> {
    let line = movie_line.trim().trim_matches(|c: char| matches!(c, '`' | '\'' | '"' | '*'));
    let full = text::collapse_punctuation(line);
    candidates.iter().find(|c| text::collapse_punctuation(&c.title) == full).or_else(|| {
        let bare = text::normalize_title(line);
        candidates.iter().find(|c| text::normalize_title(&c.title) == bare)
    })
}

pub fn recommender_prompt(prompts: &PromptSet, context: &[Turn], candidates: &CandidateSet) -> String {
    let info = candidates.items.iter().map(|c| c.knowledge.as_str()).collect::<Vec<_>>().join("\n\n");
    prompts.recommender.render(&[("k movies info", &info), ("dialogue context", &render_context(context))])
}

/// Generate one recommender turn. Unparseable output, or a recommending turn
/// without a Movie line, is re-asked twice with a format reminder.
pub fn next_recommender_utterance(
    gateway: &Gateway,
    prompts: &PromptSet,
    params: &ChatParams,
    context: &[Turn],
    candidates: &CandidateSet,
    phase: Phase,
    seed: u64,
) -> Result<RecTurn, SimError> {
    let base = recommender_prompt(prompts, context, candidates);
    let tag = match phase {
        Phase::Questioning => QUESTION_TAG,
        Phase::Recommending => RECOMMEND_TAG,
    };
    let attempts = crate::abstraction::MAX_REASKS + 1;
    let mut reason = String::new();
    for attempt in 0..attempts {
        let prompt = if attempt == 0 { base.clone() } else { format!("{base}{REASONING_FORMAT_REMINDER}") };
        let raw = match gateway.chat(&params.request(tag, prompt, Some(seed))) {
            Ok(c) => c.text,
            Err(GatewayError::EmptyCompletion) => {
                reason = "empty completion".into();
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        // the prompt ends with "Think:", so completions often continue it
        let raw = if raw.lines().any(|l| l.trim_start().starts_with("Think:")) { raw } else { format!("Think: {raw}") };
        let parsed = match parse_reasoning(&raw) {
            Ok(p) => p,
            Err(e) => {
                reason = e.to_string();
                continue;
            }
        };
        if phase == Phase::Questioning {
            return Ok(RecTurn { think: parsed.think, movie_id: None, movie_line: None, text: parsed.utterance });
        }
        let Some(line) = parsed.movie_line else {
            reason = "missing Movie field".into();
            continue;
        };
        let Some(c) = match_title(&line, &candidates.items) else { return Err(SimError::OffCandidate(line)) };
        return Ok(RecTurn {
            think: parsed.think,
            movie_id: Some(c.item_id.clone()),
            movie_line: Some(line),
            text: parsed.utterance,
        });
    }
    Err(SimError::Parse { attempts, reason })
}
