//! Deterministic offline backends.
//!
//! [`MockChat`] answers the pipeline's own prompts by reading their sections
//! back out: the summarizers extract liked/disliked features from review
//! sentences, the seeker accepts exactly when the last recommendation names
//! its target, and the recommender picks the candidate whose liked features
//! the seeker has mentioned most. Everything is a pure function of the
//! request (prompt, tag and seed). A configurable fraction of sessions,
//! chosen by hashing the session seed, is steered into one of five defects
//! so the filtering stage has known-bad dialogues to catch.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::{
    ChatRequest, ChatTransport, EmbeddingTransport, NliScores, NliTransport, RawCompletion, TransportError, Usage,
};
use crate::prompts::{
    CANDIDATES_HEADER, CONTEXT_HEADER, ITEM_REVIEWS_HEADER, KNOWLEDGE_TITLE_PREFIX, PERSONA_HEADER, RESPONSIVE_HEADER,
    TARGET_FEATURES_HEADER, USER_REVIEW_HEADER,
};
use crate::text::{self, split_statements};

pub const MOCK_CHAT_TAG: &str = "mock-chat-v1";
pub const MOCK_EMBED_TAG: &str = "mock-embed-v1";
pub const MOCK_NLI_TAG: &str = "mock-nli-rules-v1";

/// Stable 64-bit hash of labelled parts.
pub fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

/// Failure modes the mock can inject into a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Defect {
    Repetition,
    TargetLeak,
    WrongAcceptance,
    PersonaContradiction,
    GuessContradiction,
}

impl Defect {
    pub const ALL: [Defect; 5] = [
        Defect::Repetition,
        Defect::TargetLeak,
        Defect::WrongAcceptance,
        Defect::PersonaContradiction,
        Defect::GuessContradiction,
    ];
}

/// Which defect, if any, the session with `seed` carries at `rate`.
pub fn defect_for(seed: Option<u64>, rate: f64) -> Option<Defect> {
    let seed = seed?;
    if rate <= 0.0 {
        return None;
    }
    let h = stable_hash(&[b"defect", &seed.to_le_bytes()]);
    let u = (h >> 11) as f64 / (1u64 << 53) as f64;
    if u >= rate {
        return None;
    }
    let k = stable_hash(&[b"defect-kind", &seed.to_le_bytes()]) % Defect::ALL.len() as u64;
    Some(Defect::ALL[k as usize])
}

pub struct MockChat {
    seed: u64,
    scripts: BTreeMap<String, String>,
    defect_rate: f64,
    defect_plan: Option<BTreeMap<u64, Defect>>,
}

impl MockChat {
    pub fn new(seed: u64) -> Self {
        Self { seed, scripts: BTreeMap::new(), defect_rate: 0.0, defect_plan: None }
    }

    /// Fixed completion for every request carrying `tag`.
    pub fn with_script(mut self, tag: &str, completion: &str) -> Self {
        self.scripts.insert(tag.to_string(), completion.to_string());
        self
    }

    pub fn with_defect_rate(mut self, rate: f64) -> Self {
        self.defect_rate = rate;
        self
    }

    /// Exact per-session defects keyed by session seed; replaces the rate.
    pub fn with_defect_plan(mut self, plan: BTreeMap<u64, Defect>) -> Self {
        self.defect_plan = Some(plan);
        self
    }

    fn respond(&self, req: &ChatRequest) -> String {
        if let Some(s) = self.scripts.get(&req.tag) {
            return s.clone();
        }
        let prompt = req.user_prompt.as_str();
        let defect = match &self.defect_plan {
            Some(plan) => req.seed.and_then(|s| plan.get(&s).copied()),
            None => defect_for(req.seed, self.defect_rate),
        };
        match req.tag.as_str() {
            "summarize-user" => summarize_user(prompt),
            "summarize-item" => summarize_item(prompt),
            "seeker" => seeker_reply(prompt, defect),
            "recommender-question" => recommender_question(prompt, self.seed ^ req.seed.unwrap_or(0)),
            "recommender-recommend" => recommender_recommend(prompt, defect),
            _ => "Mock response.".to_string(),
        }
    }
}

impl ChatTransport for MockChat {
    fn model_tag(&self) -> &str {
        MOCK_CHAT_TAG
    }

    fn complete(&self, req: &ChatRequest) -> Result<RawCompletion, TransportError> {
        let text = self.respond(req);
        let usage = Usage {
            prompt_tokens: text::word_count(&req.system_prompt) as u64 + text::word_count(&req.user_prompt) as u64,
            completion_tokens: text::word_count(&text) as u64,
        };
        Ok(RawCompletion { text, usage: Some(usage) })
    }
}

// ---- prompt section readers ----

const ALL_HEADERS: &[&str] = &[
    PERSONA_HEADER,
    TARGET_FEATURES_HEADER,
    RESPONSIVE_HEADER,
    CONTEXT_HEADER,
    CANDIDATES_HEADER,
    USER_REVIEW_HEADER,
    ITEM_REVIEWS_HEADER,
];

/// Text following the line that starts with `header`, up to the next known header.
fn section<'a>(prompt: &'a str, header: &str) -> Option<&'a str> {
    let start = prompt.find(header)?;
    let after_header = &prompt[start..];
    let body_start = start + after_header.find('\n').map(|i| i + 1).unwrap_or(after_header.len());
    let body = &prompt[body_start..];
    let end = ALL_HEADERS
        .iter()
        .filter(|h| **h != header)
        .filter_map(|h| body.find(&format!("\n{h}")))
        .min()
        .unwrap_or(body.len());
    Some(&body[..end])
}

#[derive(Debug, Default)]
struct LikeDislike {
    likes: Vec<String>,
    dislikes: Vec<String>,
}

/// Collect statements under `[Like]` / `[Dislike]` tags across a section.
fn read_like_dislike(section: &str) -> LikeDislike {
    let mut out = LikeDislike::default();
    let mut mode = 0u8;
    for line in section.lines() {
        let t = line.trim();
        match t.to_ascii_lowercase().as_str() {
            "[like]" => mode = 1,
            "[dislike]" => mode = 2,
            _ if t.is_empty() || t.starts_with("Movie:") || t.starts_with(KNOWLEDGE_TITLE_PREFIX) => mode = 0,
            _ => {
                for s in split_statements(t) {
                    if s.eq_ignore_ascii_case("none") {
                        continue;
                    }
                    match mode {
                        1 => out.likes.push(s),
                        2 => out.dislikes.push(s),
                        _ => {}
                    }
                }
            }
        }
    }
    out
}

struct Utterance {
    seeker: bool,
    text: String,
}

fn read_context(prompt: &str) -> Vec<Utterance> {
    let Some(ctx) = section(prompt, CONTEXT_HEADER) else { return Vec::new() };
    ctx.lines()
        .filter_map(|l| {
            if let Some(t) = l.strip_prefix("Seeker: ") {
                Some(Utterance { seeker: true, text: t.trim().to_string() })
            } else {
                l.strip_prefix("Recommender: ").map(|t| Utterance { seeker: false, text: t.trim().to_string() })
            }
        })
        .collect()
}

/// First backtick-quoted span, the mock recommender's way of naming a title.
fn quoted_title(text: &str) -> Option<&str> {
    let start = text.find('`')? + 1;
    let len = text[start..].find('`')?;
    Some(&text[start..start + len])
}

// ---- summarizers ----

const LIKE_PREFIXES: &[&str] = &["i loved the ", "i really enjoyed the ", "i enjoyed the ", "i liked the "];
const NOTICE_PREFIXES: &[&str] = &["i noticed the "];
const DISLIKE_PREFIXES: &[&str] = &["i disliked the ", "i was bored by the "];
const DISLIKE_SUFFIX: &str = " bothered me";

enum Sentiment {
    Like(String),
    Notice(String),
    Dislike(String),
}

fn classify(sentence: &str) -> Option<Sentiment> {
    let s = sentence.trim().to_lowercase();
    for p in LIKE_PREFIXES {
        if let Some(f) = s.strip_prefix(p) {
            return Some(Sentiment::Like(f.to_string()));
        }
    }
    for p in NOTICE_PREFIXES {
        if let Some(f) = s.strip_prefix(p) {
            return Some(Sentiment::Notice(f.to_string()));
        }
    }
    for p in DISLIKE_PREFIXES {
        if let Some(f) = s.strip_prefix(p) {
            return Some(Sentiment::Dislike(f.to_string()));
        }
    }
    if let Some(f) = s.strip_suffix(DISLIKE_SUFFIX).and_then(|x| x.strip_prefix("the ")) {
        return Some(Sentiment::Dislike(f.to_string()));
    }
    None
}

fn join_statements(items: &[String]) -> String {
    if items.is_empty() {
        "None.".to_string()
    } else {
        format!("{}.", items.join(". "))
    }
}

fn push_unique(v: &mut Vec<String>, s: String) {
    if !v.contains(&s) {
        v.push(s);
    }
}

fn summarize_user(prompt: &str) -> String {
    let review = section(prompt, USER_REVIEW_HEADER).unwrap_or("");
    let mut likes = Vec::new();
    let mut dislikes = Vec::new();
    for s in split_statements(review) {
        match classify(&s) {
            Some(Sentiment::Like(f)) => push_unique(&mut likes, f),
            Some(Sentiment::Dislike(f)) => push_unique(&mut dislikes, f),
            _ => {}
        }
    }
    if likes.is_empty() && dislikes.is_empty() {
        if let Some(first) = split_statements(review).into_iter().next() {
            likes.push(first.to_lowercase());
        }
    }
    format!("[Like]\n{}\n[Dislike]\n{}", join_statements(&likes), join_statements(&dislikes))
}

fn summarize_item(prompt: &str) -> String {
    let reviews = section(prompt, ITEM_REVIEWS_HEADER).unwrap_or("");
    let mut likes = Vec::new();
    let mut dislikes = Vec::new();
    for line in reviews.lines() {
        let body = line.split_once(": ").map(|(_, b)| b).unwrap_or(line);
        for s in split_statements(body) {
            match classify(&s) {
                Some(Sentiment::Like(f) | Sentiment::Notice(f)) => push_unique(&mut likes, f),
                Some(Sentiment::Dislike(f)) => push_unique(&mut dislikes, f),
                None => {}
            }
        }
    }
    dislikes.retain(|d| !likes.contains(d));
    format!("[Like]\n{}\n[Dislike]\n{}", join_statements(&likes), join_statements(&dislikes))
}

// ---- seeker ----

const FALLBACK_DISLIKE: &str = "endless filler scenes";

fn gt_title(prompt: &str) -> Option<String> {
    prompt.lines().find_map(|l| {
        let rest = l.trim().strip_prefix("- If you are recommended ")?;
        let (title, _) = rest.split_once(", you should accept it")?;
        Some(title.to_string())
    })
}

fn pick(items: &[String], i: usize) -> Option<&String> {
    (!items.is_empty()).then(|| &items[i % items.len()])
}

fn seeker_reply(prompt: &str, defect: Option<Defect>) -> String {
    let target = gt_title(prompt).unwrap_or_default();
    let persona = read_like_dislike(section(prompt, PERSONA_HEADER).unwrap_or(""));
    let features = read_like_dislike(section(prompt, TARGET_FEATURES_HEADER).unwrap_or(""));
    let responsive = section(prompt, RESPONSIVE_HEADER).map(read_like_dislike);
    let context = read_context(prompt);
    let turn = context.iter().filter(|u| u.seeker).count();
    let last_rec = context.iter().rev().find(|u| !u.seeker).map(|u| u.text.as_str()).unwrap_or("");
    let previous_seeker = context.iter().rev().find(|u| u.seeker).map(|u| u.text.clone());

    let target_likes = if features.likes.is_empty() { &persona.likes } else { &features.likes };
    let wanted = |i: usize| pick(target_likes, i).cloned().unwrap_or_else(|| "a gripping story".to_string());

    if !target.is_empty() && last_rec.contains(&target) {
        return format!(
            "That sounds like exactly what I'm looking for! I'll definitely give `{target}` a watch. Thanks for the recommendation! [EOD]"
        );
    }

    if let Some(recommended) = quoted_title(last_rec) {
        if defect == Some(Defect::WrongAcceptance) {
            return format!("Perfect, `{recommended}` it is. Thanks for the help! [EOD]");
        }
        let reason = responsive
            .as_ref()
            .and_then(|r| r.dislikes.first().or(r.likes.first()).map(|f| (f.clone(), !r.dislikes.is_empty())));
        let reason = match reason {
            Some((f, true)) => format!("The {f} put me off when I saw it."),
            Some((f, false)) => format!("The {f} was nice, but it is not what I am after tonight."),
            None => "It does not quite match my mood.".to_string(),
        };
        let templates = [
            "I appreciate the suggestion of `{rec}`, but it isn't quite right for me. {reason} I'm really looking for something with {f1}.",
            "Hmm, `{rec}` is not what I had in mind. {reason} Do you have anything with {f1} and {f2}?",
            "Thanks, but I'll pass on `{rec}`. {reason} My ideal pick would have {f1}.",
            "I can see why you suggested `{rec}`, yet it misses the mark. {reason} What I really want is {f2} together with {f1}.",
            "Not `{rec}`, I think. {reason} Could you find a movie known for {f1}?",
            "That one does not grab me. {reason} I keep coming back to {f2} and {f1}, so something along those lines please.",
        ];
        let t = templates[turn % templates.len()];
        return t
            .replace("{rec}", recommended)
            .replace("{reason}", &reason)
            .replace("{f1}", &wanted(turn))
            .replace("{f2}", &wanted(turn + 1));
    }

    if turn <= 1 {
        let l1 = pick(&persona.likes, 0).cloned().unwrap_or_else(|| "great characters".into());
        let l2 = pick(&persona.likes, 1).cloned().unwrap_or_else(|| "a strong story".into());
        let d =
            persona.dislikes.first().or(features.dislikes.first()).cloned().unwrap_or_else(|| FALLBACK_DISLIKE.into());
        let mut out = format!("I'm generally a fan of movies with {l1} and {l2}. I can't stand {d}.");
        if defect == Some(Defect::TargetLeak) {
            out.push_str(&format!(" Something like {} would be perfect.", text::strip_year_suffix(&target)));
        }
        return out;
    }

    if defect == Some(Defect::Repetition) {
        if let Some(prev) = previous_seeker {
            return prev;
        }
    }
    let mut out = format!("I'm especially drawn to stories with {}.", wanted(turn));
    if let Some(extra) = pick(&persona.likes, turn + 2) {
        out.push_str(&format!(" Bonus points for {extra}."));
    }
    if defect == Some(Defect::PersonaContradiction) {
        if let Some(l) = persona.likes.first() {
            out.push_str(&format!(" Honestly, I hate {l}."));
        }
    }
    out
}

// ---- recommender ----

fn recommender_question(prompt: &str, salt: u64) -> String {
    let questions = [
        "What kinds of stories or moods are you hoping for tonight?",
        "Could you tell me a bit more about the movies that have stuck with you?",
        "Which qualities matter most to you in a movie?",
    ];
    let asked = read_context(prompt).iter().filter(|u| !u.seeker).count();
    let q = questions[(salt as usize).wrapping_add(asked) % questions.len()];
    format!("Think: I should find out which kinds of movies the seeker is into.\nRecommender: {q}")
}

struct Candidate {
    title: String,
    likes: Vec<String>,
}

fn read_candidates(prompt: &str) -> Vec<Candidate> {
    let Some(sec) = section(prompt, CANDIDATES_HEADER) else { return Vec::new() };
    let mut out: Vec<Candidate> = Vec::new();
    let mut block = String::new();
    let flush = |block: &mut String, out: &mut Vec<Candidate>| {
        if let Some(title) = block.lines().find_map(|l| l.strip_prefix(KNOWLEDGE_TITLE_PREFIX)) {
            out.push(Candidate { title: title.trim().to_string(), likes: read_like_dislike(block).likes });
        }
        block.clear();
    };
    for line in sec.lines() {
        if line.starts_with(KNOWLEDGE_TITLE_PREFIX) {
            flush(&mut block, &mut out);
        }
        block.push_str(line);
        block.push('\n');
    }
    flush(&mut block, &mut out);
    out
}

fn recommender_recommend(prompt: &str, defect: Option<Defect>) -> String {
    let candidates = read_candidates(prompt);
    let context = read_context(prompt);
    let seeker_all = text::collapse_punctuation(
        &context.iter().filter(|u| u.seeker).map(|u| u.text.as_str()).collect::<Vec<_>>().join(" "),
    );
    let seeker_last =
        text::collapse_punctuation(context.iter().rev().find(|u| u.seeker).map(|u| u.text.as_str()).unwrap_or(""));
    if candidates.is_empty() {
        return "Think: I have nothing suitable left to suggest.\nRecommender: Could you tell me more about what you enjoy?".into();
    }
    let score = |c: &Candidate| -> usize {
        c.likes
            .iter()
            .map(|f| {
                let f = text::collapse_punctuation(f);
                2 * text::contains_phrase(&seeker_last, &f) as usize + text::contains_phrase(&seeker_all, &f) as usize
            })
            .sum()
    };
    let mut best = 0;
    let mut best_score = score(&candidates[0]);
    for (i, c) in candidates.iter().enumerate().skip(1) {
        let s = score(c);
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    let chosen = &candidates[best];
    let matched: Vec<&String> =
        chosen.likes.iter().filter(|f| text::contains_phrase(&seeker_all, &text::collapse_punctuation(f))).collect();
    let mut think = if matched.is_empty() {
        "The seeker is looking for something engaging that they have not seen yet.".to_string()
    } else {
        format!("The seeker is looking for {}.", matched.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(" and "))
    };
    if defect == Some(Defect::GuessContradiction) {
        if let Some(avoided) = context.iter().filter(|u| u.seeker).find_map(|u| {
            let lower = u.text.to_lowercase();
            let at = lower.find("can't stand ")?;
            let rest = &lower[at + "can't stand ".len()..];
            Some(rest.split(['.', ',', '!', '?']).next().unwrap_or("").trim().to_string())
        }) {
            think = format!("The seeker wants {avoided}.");
        }
    }
    let mut highlights: Vec<&String> = matched.clone();
    for f in &chosen.likes {
        if highlights.len() >= 2 {
            break;
        }
        if !highlights.contains(&f) {
            highlights.push(f);
        }
    }
    let highlight = if highlights.is_empty() {
        "a lot to offer".to_string()
    } else {
        highlights.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(" and ")
    };
    let rec_turn = context.iter().filter(|u| !u.seeker).count();
    let templates = [
        "How about `{t}`? It offers {h}, which fits what you described.",
        "I think you would really enjoy `{t}`. Viewers single out its {h}.",
        "Then `{t}` could be the one: it is praised for {h}.",
        "You might want to try `{t}`, since people rave about {h}.",
    ];
    let utterance = templates[rec_turn % templates.len()].replace("{t}", &chosen.title).replace("{h}", &highlight);
    format!("Think: {think}\nMovie: {}\nRecommender: {utterance}", chosen.title)
}

// ---- embeddings ----

/// Seeded token-hash embedder: each distinct token gets a pseudo-random
/// unit vector; a text embeds as the renormalized sum over its token
/// multiset, so lexically similar texts land close together.
pub struct MockEmbedder {
    seed: u64,
    dim: usize,
    max_input_tokens: usize,
    token_cache: Mutex<HashMap<String, Arc<Vec<f64>>>>,
}

impl MockEmbedder {
    pub fn new(seed: u64) -> Self {
        Self { seed, dim: 256, max_input_tokens: 8191, token_cache: Mutex::new(HashMap::new()) }
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim.max(1);
        self
    }

    pub fn with_max_input_tokens(mut self, n: usize) -> Self {
        self.max_input_tokens = n.max(1);
        self
    }

    fn token_vector(&self, token: &str) -> Arc<Vec<f64>> {
        if let Some(v) = self.token_cache.lock().unwrap().get(token) {
            return v.clone();
        }
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(token.as_bytes());
        let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
        let mut v: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        normalize(&mut v);
        let v = Arc::new(v);
        self.token_cache.lock().unwrap().insert(token.to_string(), v.clone());
        v
    }
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

impl EmbeddingTransport for MockEmbedder {
    fn model_tag(&self) -> &str {
        MOCK_EMBED_TAG
    }

    fn max_input_tokens(&self) -> usize {
        self.max_input_tokens
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, TransportError> {
        let mut tokens = text::tokenize(text);
        if tokens.is_empty() {
            tokens.push(format!("\u{0}{}", text.trim()));
        }
        let mut acc = vec![0.0; self.dim];
        for t in &tokens {
            for (a, x) in acc.iter_mut().zip(self.token_vector(t).iter()) {
                *a += x;
            }
        }
        normalize(&mut acc);
        Ok(acc)
    }
}

// ---- rule-based NLI ----

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Polarity {
    Positive,
    Negative,
}

const NEGATIVE_CUES: &[&[&str]] = &[
    &["do", "not", "like"],
    &["does", "not", "like"],
    &["not", "a", "fan", "of"],
    &["cannot", "stand"],
    &["don't", "like"],
    &["doesn't", "like"],
    &["didn't", "like"],
    &["can't", "stand"],
    &["hate"],
    &["hates"],
    &["dislike"],
    &["dislikes"],
    &["avoid"],
];

const POSITIVE_CUES: &[&[&str]] = &[
    &["like"],
    &["likes"],
    &["love"],
    &["loves"],
    &["enjoy"],
    &["enjoys"],
    &["want"],
    &["wants"],
    &["prefer"],
    &["prefers"],
    &["appreciate"],
    &["appreciates"],
    &["adore"],
];

const ARTICLES: &[&str] = &["the", "a", "an"];
const CONNECTIVES: &[&str] = &["and", "but", "or"];

fn cue_at(words: &[String], i: usize) -> Option<(Polarity, usize)> {
    let matches = |cue: &[&str]| cue.len() <= words.len() - i && cue.iter().zip(&words[i..]).all(|(c, w)| c == w);
    if let Some(c) = NEGATIVE_CUES.iter().find(|c| matches(c)) {
        return Some((Polarity::Negative, c.len()));
    }
    POSITIVE_CUES.iter().find(|c| matches(c)).map(|c| (Polarity::Positive, c.len()))
}

fn trim_feature(mut f: &[String]) -> Vec<String> {
    while f.first().is_some_and(|w| ARTICLES.contains(&w.as_str())) {
        f = &f[1..];
    }
    while f.last().is_some_and(|w| CONNECTIVES.contains(&w.as_str())) {
        f = &f[..f.len() - 1];
    }
    f.to_vec()
}

/// (polarity, feature words) claims expressed by a text. A "likes: ..." or
/// "dislikes: ..." statement is one claim; otherwise every preference cue
/// opens a claim running to the next cue or clause boundary.
fn claims(text: &str) -> Vec<(Polarity, Vec<String>)> {
    let t = text.trim();
    let lower = t.to_lowercase();
    if let Some(rest) = lower.strip_prefix("likes:") {
        return vec![(Polarity::Positive, trim_feature(&text::words(rest)))];
    }
    if let Some(rest) = lower.strip_prefix("dislikes:") {
        return vec![(Polarity::Negative, trim_feature(&text::words(rest)))];
    }
    let mut out = Vec::new();
    for clause in lower.split(['.', ',', ';', '!', '?', ':', '\n']) {
        let words = text::words(clause);
        let cues: Vec<(usize, Polarity, usize)> =
            (0..words.len()).filter_map(|i| cue_at(&words, i).map(|(p, len)| (i, p, len))).collect();
        // drop cues nested inside a longer cue ("like" within "don't like")
        let mut kept: Vec<(usize, Polarity, usize)> = Vec::new();
        for c in cues {
            if kept.last().is_some_and(|k| c.0 < k.0 + k.2) {
                continue;
            }
            kept.push(c);
        }
        for (n, &(i, p, len)) in kept.iter().enumerate() {
            let end = kept.get(n + 1).map(|k| k.0).unwrap_or(words.len());
            let f = trim_feature(&words[i + len..end]);
            if !f.is_empty() {
                out.push((p, f));
            }
        }
    }
    out
}

/// Rule-based stand-in for an NLI model: identical texts entail; a
/// hypothesis that restates one of the premise's features with the opposite
/// preference polarity contradicts; anything else is neutral.
#[derive(Debug, Default)]
pub struct RuleNli;

pub const RULE_HIGH: f64 = 0.9;
pub const RULE_LOW: f64 = 0.05;

impl RuleNli {
    pub fn judge(premise: &str, hypothesis: &str) -> NliScores {
        if text::collapse_punctuation(premise) == text::collapse_punctuation(hypothesis) {
            return NliScores { entail: RULE_HIGH, neutral: RULE_LOW, contradict: RULE_LOW };
        }
        let hyp = claims(hypothesis);
        let contradicts = claims(premise)
            .iter()
            .any(|(pp, pf)| hyp.iter().any(|(hp, hf)| hp != pp && hf.len() >= pf.len() && hf[..pf.len()] == pf[..]));
        if contradicts {
            NliScores { entail: RULE_LOW, neutral: RULE_LOW, contradict: RULE_HIGH }
        } else {
            NliScores { entail: RULE_LOW, neutral: RULE_HIGH, contradict: RULE_LOW }
        }
    }
}

impl NliTransport for RuleNli {
    fn model_tag(&self) -> &str {
        MOCK_NLI_TAG
    }

    fn score(&self, premise: &str, hypothesis: &str) -> Result<NliScores, TransportError> {
        Ok(Self::judge(premise, hypothesis))
    }
}
