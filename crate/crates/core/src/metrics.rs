//! Dataset statistics and evaluation metrics over dialogue corpora.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dialogue::{Dialogue, Role};
use crate::gateway::{cosine, Gateway, GatewayError};
use crate::jsonl::{self, JsonlError};
use crate::text::{self, Tokenization};

/// A dialogue reduced to (role, text) pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub id: String,
    pub utterances: Vec<(Role, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_id: Option<String>,
    #[serde(default)]
    pub items: Vec<String>,
}

impl Transcript {
    pub fn from_dialogue(d: &Dialogue) -> Self {
        let mut items: Vec<String> = d.recommended().map(str::to_string).collect();
        items.sort();
        items.dedup();
        Self {
            id: d.dialogue_id.clone(),
            utterances: d.turns.iter().map(|t| (t.role, t.text.clone())).collect(),
            user_id: Some(d.user_id.clone()),
            items,
        }
    }

    pub fn seeker_text(&self) -> String {
        self.utterances
            .iter()
            .filter(|(r, _)| *r == Role::Seeker)
            .map(|(_, t)| t.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("metric undefined on an empty corpus")]
    EmptyCorpus,
    #[error("dialogue {0} has no utterances")]
    EmptyDialogue(String),
    #[error("no {0}-gram exists in the responses")]
    NoNgrams(usize),
    #[error("n must be positive")]
    ZeroN,
    #[error("k must be positive")]
    ZeroK,
    #[error("ranking {0} contains duplicate ids")]
    DuplicateRanking(usize),
    #[error("need at least two dialogues, got {0}")]
    TooFewDialogues(usize),
    #[error("corpus has no recommender utterances")]
    NoRecommenderUtterances,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

fn check_corpus(corpus: &[Transcript]) -> Result<(), MetricsError> {
    if corpus.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    if let Some(t) = corpus.iter().find(|t| t.utterances.is_empty()) {
        return Err(MetricsError::EmptyDialogue(t.id.clone()));
    }
    Ok(())
}

/// Mean over dialogues of the number of distinct n-grams in the
/// concatenated seeker token stream.
pub fn ngram_specificity(corpus: &[Transcript], n: usize, tok: &Tokenization) -> Result<f64, MetricsError> {
    if n == 0 {
        return Err(MetricsError::ZeroN);
    }
    check_corpus(corpus)?;
    let total: usize = corpus
        .iter()
        .map(|t| {
            let tokens: Vec<String> =
                t.utterances.iter().filter(|(r, _)| *r == Role::Seeker).flat_map(|(_, u)| tok.tokenize(u)).collect();
            text::ngrams(&tokens, n).collect::<HashSet<_>>().len()
        })
        .sum();
    Ok(total as f64 / corpus.len() as f64)
}

/// Distinct n-grams over total n-grams across all responses.
pub fn distinct_n(responses: &[String], n: usize, tok: &Tokenization) -> Result<f64, MetricsError> {
    if n == 0 {
        return Err(MetricsError::ZeroN);
    }
    let mut seen: HashSet<Vec<String>> = HashSet::new();
    let mut total = 0usize;
    for r in responses {
        let tokens = tok.tokenize(r);
        for g in text::ngrams(&tokens, n) {
            total += 1;
            seen.insert(g.to_vec());
        }
    }
    if total == 0 {
        return Err(MetricsError::NoNgrams(n));
    }
    Ok(seen.len() as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub ranked: Vec<String>,
    pub target: String,
}

/// Fraction of episodes whose target is within the first k ranked ids.
pub fn recall_at_k(episodes: &[Episode], k: usize) -> Result<f64, MetricsError> {
    if k == 0 {
        return Err(MetricsError::ZeroK);
    }
    if episodes.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let mut hits = 0usize;
    for (i, e) in episodes.iter().enumerate() {
        let unique: HashSet<&String> = e.ranked.iter().collect();
        if unique.len() != e.ranked.len() {
            return Err(MetricsError::DuplicateRanking(i));
        }
        if e.ranked.iter().take(k).any(|r| *r == e.target) {
            hits += 1;
        }
    }
    Ok(hits as f64 / episodes.len() as f64)
}

/// Consecutive recommender utterances merged into one.
pub fn merged_recommender_utterances(t: &Transcript) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut prev = None;
    for (r, u) in &t.utterances {
        if *r == Role::Recommender {
            if prev == Some(Role::Recommender) {
                let last = out.last_mut().expect("open run");
                last.push(' ');
                last.push_str(u);
            } else {
                out.push(u.clone());
            }
        }
        prev = Some(*r);
    }
    out
}

/// Mean whitespace word count of merged recommender utterances.
pub fn avg_recommender_words(corpus: &[Transcript]) -> Result<f64, MetricsError> {
    check_corpus(corpus)?;
    let merged: Vec<String> = corpus.iter().flat_map(merged_recommender_utterances).collect();
    if merged.is_empty() {
        return Err(MetricsError::NoRecommenderUtterances);
    }
    Ok(merged.iter().map(|u| text::word_count(u)).sum::<usize>() as f64 / merged.len() as f64)
}

/// Unordered pairs to score: all of them when there are at most
/// `sample_size`, otherwise a seeded sample without replacement.
pub fn sample_pairs(n: usize, sample_size: usize, seed: u64) -> Vec<(usize, usize)> {
    let total = n * n.saturating_sub(1) / 2;
    let pick: Vec<usize> = if total <= sample_size {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = index::sample(&mut rng, total, sample_size).into_vec();
        v.sort_unstable();
        v
    };
    pick.into_iter().map(|p| pair_at(n, p)).collect()
}

/// The p-th pair (i < j) in row-major order.
fn pair_at(n: usize, mut p: usize) -> (usize, usize) {
    let mut i = 0;
    loop {
        let row = n - i - 1;
        if p < row {
            return (i, i + 1 + p);
        }
        p -= row;
        i += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub mean: f64,
    pub pairs: usize,
}

/// Mean cosine between embeddings of two dialogues' concatenated seeker text.
pub fn inter_dialogue_similarity(
    corpus: &[Transcript],
    gateway: &Gateway,
    sample_size: usize,
    seed: u64,
) -> Result<Similarity, MetricsError> {
    if corpus.len() < 2 {
        return Err(MetricsError::TooFewDialogues(corpus.len()));
    }
    check_corpus(corpus)?;
    let pairs = sample_pairs(corpus.len(), sample_size.max(1), seed);
    let needed: BTreeSet<usize> = pairs.iter().flat_map(|(a, b)| [*a, *b]).collect();
    let mut vecs: HashMap<usize, Vec<f64>> = HashMap::new();
    for i in needed {
        let text = corpus[i].seeker_text();
        let text = if text.trim().is_empty() { corpus[i].id.clone() } else { text };
        vecs.insert(i, gateway.embed(&text)?.values);
    }
    let sum: f64 = pairs.iter().map(|(a, b)| cosine(&vecs[a], &vecs[b])).sum();
    Ok(Similarity { mean: sum / pairs.len() as f64, pairs: pairs.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub specificity_n: Vec<usize>,
    pub distinct_n: Vec<usize>,
    pub recall_k: Vec<usize>,
    pub pair_sample_size: usize,
    /// Optional JSONL of `{"ranked": [...], "target": ...}` episodes.
    pub episodes: Option<String>,
    /// Skip the embedding-based similarity (no gateway calls).
    pub skip_similarity: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            specificity_n: vec![2, 3, 4],
            distinct_n: vec![3, 4],
            recall_k: vec![1, 10, 50],
            pair_sample_size: 1000,
            episodes: None,
            skip_similarity: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cardinalities {
    pub dialogues: usize,
    pub utterances: usize,
    pub users: usize,
    pub items: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tokenization: Tokenization,
    pub specificity_aggregate: String,
    pub specificity: BTreeMap<usize, f64>,
    pub inter_dialogue_similarity: Option<Similarity>,
    pub avg_recommender_words: f64,
    pub distinct_n: BTreeMap<usize, f64>,
    pub recall_at_k: BTreeMap<usize, f64>,
    pub counts: Cardinalities,
}

pub fn cardinalities(corpus: &[Transcript]) -> Cardinalities {
    let users: BTreeSet<&str> = corpus.iter().filter_map(|t| t.user_id.as_deref()).collect();
    let items: BTreeSet<&str> = corpus.iter().flat_map(|t| t.items.iter().map(String::as_str)).collect();
    Cardinalities {
        dialogues: corpus.len(),
        utterances: corpus.iter().map(|t| t.utterances.len()).sum(),
        users: users.len(),
        items: items.len(),
    }
}

/// Compute the full report. `gateway` is needed only for similarity.
pub fn compute_report(
    corpus: &[Transcript],
    cfg: &MetricsConfig,
    episodes: &[Episode],
    gateway: Option<&Gateway>,
    seed: u64,
) -> Result<MetricsReport, MetricsError> {
    let tok = Tokenization::default();
    check_corpus(corpus)?;
    let mut specificity = BTreeMap::new();
    for &n in &cfg.specificity_n {
        specificity.insert(n, ngram_specificity(corpus, n, &tok)?);
    }
    let responses: Vec<String> = corpus.iter().flat_map(merged_recommender_utterances).collect();
    let mut distinct = BTreeMap::new();
    for &n in &cfg.distinct_n {
        match distinct_n(&responses, n, &tok) {
            Ok(v) => {
                distinct.insert(n, v);
            }
            Err(MetricsError::NoNgrams(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let mut recall = BTreeMap::new();
    if !episodes.is_empty() {
        for &k in &cfg.recall_k {
            recall.insert(k, recall_at_k(episodes, k)?);
        }
    }
    let similarity = match gateway {
        Some(g) if !cfg.skip_similarity && corpus.len() >= 2 => {
            Some(inter_dialogue_similarity(corpus, g, cfg.pair_sample_size, seed)?)
        }
        _ => None,
    };
    Ok(MetricsReport {
        tokenization: tok,
        specificity_aggregate: "mean over dialogues".into(),
        specificity,
        inter_dialogue_similarity: similarity,
        avg_recommender_words: avg_recommender_words(corpus)?,
        distinct_n: distinct,
        recall_at_k: recall,
        counts: cardinalities(corpus),
    })
}

/// Plain-text rendering of a report.
pub fn render_table(r: &MetricsReport) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "tokenizer: {} (case folding {}, split on {}, punctuation {})\n",
        r.tokenization.rule, r.tokenization.case_folding, r.tokenization.split_on, r.tokenization.punctuation_tokens
    ));
    s.push_str(&format!(
        "dialogues {}  utterances {}  users {}  items {}\n",
        r.counts.dialogues, r.counts.utterances, r.counts.users, r.counts.items
    ));
    for (n, v) in &r.specificity {
        s.push_str(&format!("{n}-gram specificity ({})    {v:.2}\n", r.specificity_aggregate));
    }
    if let Some(sim) = &r.inter_dialogue_similarity {
        s.push_str(&format!("inter-dialogue similarity    {:.4} over {} pairs\n", sim.mean, sim.pairs));
    }
    s.push_str(&format!("avg recommender words        {:.2}\n", r.avg_recommender_words));
    for (n, v) in &r.distinct_n {
        s.push_str(&format!("distinct-{n}                   {v:.4}\n"));
    }
    for (k, v) in &r.recall_at_k {
        s.push_str(&format!("recall@{k}                     {v:.4}\n"));
    }
    s
}

// ---- external corpus adapters ----

fn role_of(label: &str) -> Option<Role> {
    match label.trim().to_ascii_lowercase().as_str() {
        "seeker" | "user" | "usr" | "human" => Some(Role::Seeker),
        "recommender" | "system" | "sys" | "assistant" | "agent" | "bot" => Some(Role::Recommender),
        _ => None,
    }
}

fn utterance_of(v: &serde_json::Value) -> Option<(Role, String)> {
    if let Some(s) = v.as_str() {
        let (label, text) = s.split_once(':')?;
        return Some((role_of(label)?, text.trim().to_string()));
    }
    let obj = v.as_object()?;
    let label = ["role", "speaker", "sender"].iter().find_map(|k| obj.get(*k).and_then(|x| x.as_str()))?;
    let text = ["text", "utterance", "content", "value"].iter().find_map(|k| obj.get(*k).and_then(|x| x.as_str()))?;
    Some((role_of(label)?, text.to_string()))
}

/// Read role+text transcripts from JSONL. Each line is either one of this
/// crate's dialogues or an object holding a list of utterances under
/// `turns`, `dialogue`, `dialog`, `messages` or `conversation`; an utterance
/// is `{"role"|"speaker", "text"|"utterance"|"content"}` or a `"Role: text"` string.
pub fn read_transcripts(path: &Path) -> Result<Vec<Transcript>, JsonlError> {
    let mut out = Vec::new();
    for (line, rec) in jsonl::read_records::<serde_json::Value>(path)? {
        let v = rec.map_err(|message| JsonlError::Parse { path: path.to_path_buf(), line, message })?;
        if let Ok(d) = serde_json::from_value::<Dialogue>(v.clone()) {
            out.push(Transcript::from_dialogue(&d));
            continue;
        }
        let list = ["turns", "dialogue", "dialog", "messages", "conversation"]
            .iter()
            .find_map(|k| v.get(*k).and_then(|x| x.as_array()));
        let Some(list) = list else {
            return Err(JsonlError::Parse { path: path.to_path_buf(), line, message: "no utterance list".into() });
        };
        let id = ["dialogue_id", "dialog_id", "conv_id", "id"]
            .iter()
            .find_map(|k| v.get(*k).map(|x| x.as_str().map(str::to_string).unwrap_or_else(|| x.to_string())))
            .unwrap_or_else(|| format!("line-{line}"));
        let user_id = ["user_id", "seeker_id"]
            .iter()
            .find_map(|k| v.get(*k).map(|x| x.as_str().map(str::to_string).unwrap_or_else(|| x.to_string())));
        let utterances: Vec<(Role, String)> = list.iter().filter_map(utterance_of).collect();
        out.push(Transcript { id, utterances, user_id, items: Vec::new() });
    }
    Ok(out)
}
