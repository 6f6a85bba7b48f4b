//! Shared fixtures and brute-force oracles for the integration and
//! acceptance tests. Included by path from the cli crate as well.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::AtomicBool;
use std::sync::{Arc, Mutex};

use crsynth_core::abstraction::{abstract_corpus, Abstract, Summarizer};
use crsynth_core::corpus::{ingest_reviews, ItemReviewDb, UserReviewDb};
use crsynth_core::dialogue::{Dialogue, Outcome, Role, Turn};
use crsynth_core::engine::{run_batch, session_seed, BatchSpec, SessionConfig, SessionContext};
use crsynth_core::filters::{judge, FilterConfig, FilterVerdict, Rule, VerdictStatus};
use crsynth_core::gateway::mock::{Defect, MockChat, MockEmbedder, RuleNli};
use crsynth_core::gateway::{
    BackendTags, ChatParams, ChatRequest, ChatTransport, Gateway, GatewayError, NliScores, RawCompletion, RetryPolicy,
    SystemClock, TransportError,
};
use crsynth_core::metrics::{self, Episode, Transcript};
use crsynth_core::persona::{Persona, PersonaEntry};
use crsynth_core::prompts::{render_knowledge, PromptSet, CONTEXT_HEADER, TARGET_FEATURES_HEADER};
use crsynth_core::recommender::{rank_pool, retrieve_candidates, KnowledgeIndex, RetrievalRequest};
use crsynth_core::seeker::SEEKER_TAG;
use crsynth_core::synthetic::{self, SyntheticSpec};
use crsynth_core::text::Tokenization;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------- oracles

fn brute_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn brute_grams(tokens: &[String], n: usize) -> Vec<String> {
    if tokens.len() < n {
        return Vec::new();
    }
    (0..=tokens.len() - n).map(|i| tokens[i..i + n].join("\u{1}")).collect()
}

fn distinct_count(mut v: Vec<String>) -> usize {
    v.sort();
    v.dedup();
    v.len()
}

pub fn brute_specificity(corpus: &[Transcript], n: usize) -> f64 {
    let mut total = 0usize;
    for t in corpus {
        let mut tokens = Vec::new();
        for (r, u) in &t.utterances {
            if *r == Role::Seeker {
                tokens.extend(brute_tokens(u));
            }
        }
        total += distinct_count(brute_grams(&tokens, n));
    }
    total as f64 / corpus.len() as f64
}

/// Merged recommender runs and their total word count.
fn brute_runs(corpus: &[Transcript]) -> (Vec<String>, usize) {
    let mut runs: Vec<String> = Vec::new();
    let mut words = 0usize;
    for t in corpus {
        let mut open = false;
        for (r, u) in &t.utterances {
            match r {
                Role::Recommender if open => {
                    let last = runs.last_mut().unwrap();
                    *last = format!("{last} {u}");
                }
                Role::Recommender => {
                    runs.push(u.clone());
                    open = true;
                }
                Role::Seeker => open = false,
            }
            if *r == Role::Recommender {
                words += u.split_whitespace().count();
            }
        }
    }
    (runs, words)
}

pub fn brute_distinct(responses: &[String], n: usize) -> Option<f64> {
    let grams: Vec<String> = responses.iter().flat_map(|r| brute_grams(&brute_tokens(r), n)).collect();
    if grams.is_empty() {
        return None;
    }
    let total = grams.len();
    Some(distinct_count(grams) as f64 / total as f64)
}

pub fn brute_recall(episodes: &[Episode], k: usize) -> f64 {
    let mut hits = 0;
    for e in episodes {
        for (pos, id) in e.ranked.iter().enumerate() {
            if id == &e.target && pos < k {
                hits += 1;
            }
        }
    }
    hits as f64 / episodes.len() as f64
}

const VOCAB: &[&str] =
    &["the", "War", "film", "tanks", "love", "it's", "slow-burn", "Epic", "42", "plot", "ending", "café"];
const PUNCT: &[&str] = &[" ", " ", " ", ", ", ". ", "! ", " - ", "  ", "'"];

fn random_utterance(rng: &mut ChaCha8Rng) -> String {
    let len = rng.gen_range(0..14);
    let mut s = String::new();
    for _ in 0..len {
        s.push_str(VOCAB.choose(rng).unwrap());
        s.push_str(PUNCT.choose(rng).unwrap());
    }
    s
}

pub fn random_corpus(rng: &mut ChaCha8Rng) -> Vec<Transcript> {
    (0..rng.gen_range(1..8))
        .map(|i| {
            let n = rng.gen_range(1..10);
            let utterances = (0..n)
                .map(|_| {
                    let role = if rng.gen_bool(0.5) { Role::Seeker } else { Role::Recommender };
                    (role, random_utterance(rng))
                })
                .collect();
            Transcript { id: format!("d{i}"), utterances, user_id: None, items: Vec::new() }
        })
        .collect()
}

pub fn random_episodes(rng: &mut ChaCha8Rng) -> Vec<Episode> {
    (0..rng.gen_range(1..20))
        .map(|_| {
            let mut ids: Vec<String> = (0..rng.gen_range(1..30)).map(|i| format!("i{i}")).collect();
            ids.shuffle(rng);
            let target = format!("i{}", rng.gen_range(0..35));
            Episode { ranked: ids, target }
        })
        .collect()
}

fn close(a: f64, b: f64) -> bool {
    a == b || ((a - b) / b.abs().max(f64::MIN_POSITIVE)).abs() <= 1e-9
}

/// Compare the library metrics with the brute-force versions on `count`
/// random corpora. Returns the number of comparisons made.
pub fn check_metric_oracles(count: usize, seed: u64) -> Result<usize, String> {
    let tok = Tokenization::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = 0;
    for c in 0..count {
        let corpus = random_corpus(&mut rng);
        for n in 1..=4 {
            let got = metrics::ngram_specificity(&corpus, n, &tok).map_err(|e| e.to_string())?;
            let want = brute_specificity(&corpus, n);
            // the count behind the mean must match exactly
            if (got * corpus.len() as f64).round() != (want * corpus.len() as f64).round() || !close(got, want) {
                return Err(format!("corpus {c}: specificity n={n} got {got} want {want}"));
            }
            checks += 1;
        }
        let (runs, words) = brute_runs(&corpus);
        let responses: Vec<String> = corpus.iter().flat_map(metrics::merged_recommender_utterances).collect();
        if responses != runs {
            return Err(format!("corpus {c}: merged recommender runs differ"));
        }
        for n in 1..=4 {
            let got = metrics::distinct_n(&responses, n, &tok).ok();
            let want = brute_distinct(&runs, n);
            match (got, want) {
                (None, None) => {}
                (Some(g), Some(w)) if close(g, w) => {}
                _ => return Err(format!("corpus {c}: distinct-{n} got {got:?} want {want:?}")),
            }
            checks += 1;
        }
        let got = metrics::avg_recommender_words(&corpus).ok();
        let want = (!runs.is_empty()).then(|| words as f64 / runs.len() as f64);
        match (got, want) {
            (None, None) => {}
            (Some(g), Some(w)) if close(g, w) => {}
            _ => return Err(format!("corpus {c}: avg recommender words got {got:?} want {want:?}")),
        }
        checks += 1;
        let episodes = random_episodes(&mut rng);
        for k in [1, 3, 10, 50] {
            let got = metrics::recall_at_k(&episodes, k).map_err(|e| e.to_string())?;
            let want = brute_recall(&episodes, k);
            if !close(got, want) {
                return Err(format!("corpus {c}: recall@{k} got {got} want {want}"));
            }
            checks += 1;
        }
    }
    Ok(checks)
}

fn brute_cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// Exhaustive ranking: an entry's rank is the number of entries that beat it.
pub fn brute_rank(
    query: &[f64],
    pool: &[(String, Vec<f64>)],
    k: usize,
    turn_index: usize,
    target: &str,
    force_from: usize,
) -> (Vec<String>, bool) {
    let scores: Vec<f64> = pool.iter().map(|(_, v)| brute_cosine(query, v)).collect();
    let rank = |i: usize| {
        (0..pool.len()).filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && pool[j].0 < pool[i].0)).count()
    };
    let k = k.min(pool.len());
    let mut slots: Vec<Option<String>> = vec![None; k];
    for (i, (id, _)) in pool.iter().enumerate() {
        let r = rank(i);
        if r < k {
            slots[r] = Some(id.clone());
        }
    }
    let mut top: Vec<String> = slots.into_iter().map(Option::unwrap).collect();
    let in_pool = pool.iter().any(|(id, _)| id == target);
    let forced = turn_index >= force_from && k > 0 && in_pool && !top.iter().any(|t| t == target);
    if forced {
        top[k - 1] = target.to_string();
    }
    (top, forced)
}

pub struct RetrievalWorld {
    pub gateway: Gateway,
    pub items: ItemReviewDb,
    pub index: KnowledgeIndex,
}

pub fn retrieval_world(seed: u64) -> RetrievalWorld {
    let (reviews, items) = synthetic::generate(&SyntheticSpec::default());
    let (_, items, _) = ingest_reviews(reviews, items);
    RetrievalWorld { gateway: Gateway::mock(seed), items, index: KnowledgeIndex::new() }
}

/// `count` random fixtures through `retrieve_candidates` against the
/// exhaustive ranking, plus `count` tie-heavy integer fixtures through
/// `rank_pool`. Returns how many fixtures had the target forced.
pub fn check_retrieval_oracle(world: &RetrievalWorld, count: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<String> = world.items.items.keys().cloned().collect();
    let mut forced_seen = 0;
    for f in 0..count {
        let size = rng.gen_range(1..=50);
        let mut pool: Vec<String> = ids.choose_multiple(&mut rng, size).cloned().collect();
        pool.sort();
        let context: Vec<Turn> = (0..rng.gen_range(1..6))
            .map(|i| {
                let text = format!("{} {}", random_utterance(&mut rng), VOCAB.choose(&mut rng).unwrap());
                if i % 2 == 0 {
                    Turn::seeker(text)
                } else {
                    Turn::recommender(text)
                }
            })
            .collect();
        let target = pool.choose(&mut rng).unwrap().clone();
        let (k, turn_index, force_from) = (rng.gen_range(1..=5), rng.gen_range(1..=6), rng.gen_range(1..=5));
        let req = RetrievalRequest {
            context: &context,
            pool: &pool,
            k,
            turn_index,
            target_id: &target,
            force_from_turn: force_from,
        };
        let got = retrieve_candidates(&world.gateway, &world.items, &world.index, &req).map_err(|e| e.to_string())?;

        let query = world.gateway.embed(&crsynth_core::dialogue::render_context(&context)).unwrap().values;
        let vecs: Vec<(String, Vec<f64>)> = pool
            .iter()
            .map(|id| (id.clone(), world.gateway.embed(&render_knowledge(&world.items.items[id])).unwrap().values))
            .collect();
        let (want, want_forced) = brute_rank(&query, &vecs, k, turn_index, &target, force_from);
        if got.ids() != want || got.target_forced != want_forced {
            return Err(format!("fixture {f}: got {:?}/{} want {want:?}/{want_forced}", got.ids(), got.target_forced));
        }
        forced_seen += want_forced as usize;

        // small integer vectors make exact score ties common
        let n = rng.gen_range(1..=50);
        let mut names: Vec<String> = (0..n).map(|i| format!("x{:02}", i)).collect();
        names.shuffle(&mut rng);
        let vecs: Vec<(String, Vec<f64>)> =
            names.into_iter().map(|id| (id, (0..3).map(|_| rng.gen_range(-1..=1) as f64).collect())).collect();
        let query: Vec<f64> = (0..3).map(|_| rng.gen_range(-1..=1) as f64).collect();
        let target = vecs.choose(&mut rng).unwrap().0.clone();
        let view: Vec<(&str, &[f64])> = vecs.iter().map(|(id, v)| (id.as_str(), v.as_slice())).collect();
        let (top, forced) = rank_pool(&query, &view, k, turn_index, &target, force_from);
        let got: Vec<String> = top.iter().map(|(i, _)| vecs[*i].0.clone()).collect();
        let (want, want_forced) = brute_rank(&query, &vecs, k, turn_index, &target, force_from);
        if got != want || forced != want_forced {
            return Err(format!("tie fixture {f}: got {got:?}/{forced} want {want:?}/{want_forced}"));
        }
    }
    Ok(forced_seen)
}

// ---------------------------------------------------------------- filters

pub const FIX_TARGET_ID: &str = "m-target";
pub const FIX_TARGET_TITLE: &str = "Iron Harbor (1999)";

fn abs(like: &str, dislike: &str) -> Abstract {
    Abstract::new(Some(like.into()), Some(dislike.into()), vec!["r".into()]).unwrap()
}

pub fn fixture_persona() -> Persona {
    let entry = |id: &str, title: &str, like: &str, dislike: &str| PersonaEntry {
        item_id: id.into(),
        title: title.into(),
        r#abstract: abs(like, dislike),
    };
    Persona {
        user_id: "u-fix".into(),
        general: vec![
            entry("g1", "Golden Orchard (1971)", "Tense battles.", "Sluggish pacing."),
            entry("g2", "Hollow Summit (1988)", "Witty banter.", "Campy effects."),
            entry("g3", "Velvet Station (2003)", "Haunting score.", "Bleak ending."),
        ],
        target_item_id: FIX_TARGET_ID.into(),
        target_title: FIX_TARGET_TITLE.into(),
        target_abstract: abs("Clever twists.", "Loud explosions."),
        seed: 1,
    }
}

fn rec(think: &str, text: &str, movie: Option<(&str, &str)>) -> Turn {
    let mut t = Turn::recommender(text);
    t.think = Some(think.into());
    if let Some((id, title)) = movie {
        t.movie_id = Some(id.into());
        t.movie_line = Some(title.into());
        t.candidates = Some(vec![id.into(), "m-other".into(), FIX_TARGET_ID.into()]);
    }
    t
}

fn terminal(text: &str, accepted: &str) -> Turn {
    let mut t = Turn::seeker(text);
    t.terminal = true;
    t.accepted_item_id = Some(accepted.into());
    t
}

/// A clean accepted dialogue: 7 utterances, target on the second recommendation.
pub fn clean_dialogue(id: &str) -> Dialogue {
    let turns = vec![
        Turn::seeker("Hi! I'm looking for a movie to watch tonight."),
        rec("Ask about favourite genres.", "What kind of movies do you usually enjoy?", None),
        Turn::seeker("I enjoy films with tense battles and witty banter."),
        rec(
            "The seeker likes tense battles.",
            "You might like Crimson Echo (1980), a war story with plenty of action.",
            Some(("m-crimson", "Crimson Echo (1980)")),
        ),
        Turn::seeker("Thanks, but I am after something with clever twists rather than pure action."),
        rec(
            "The seeker wants clever twists.",
            "Then try Iron Harbor (1999), a thriller full of clever twists.",
            Some((FIX_TARGET_ID, FIX_TARGET_TITLE)),
        ),
        terminal("That sounds perfect, I will watch it tonight!", FIX_TARGET_ID),
    ];
    Dialogue {
        dialogue_id: id.into(),
        user_id: "u-fix".into(),
        replica: 0,
        target_item_id: FIX_TARGET_ID.into(),
        target_title: FIX_TARGET_TITLE.into(),
        persona: fixture_persona(),
        turns,
        outcome: Outcome::AcceptedTarget,
        seed: 1,
        backend: BackendTags { chat: "fixture".into(), embedding: "fixture".into(), nli: "fixture".into() },
    }
}

/// NLI keyed by exact (premise, hypothesis); everything else scores 0.05.
pub struct ScriptedNli {
    pub contradict: HashMap<(String, String), f64>,
    pub fail: bool,
}

impl ScriptedNli {
    pub fn none() -> Self {
        Self { contradict: HashMap::new(), fail: false }
    }

    pub fn with(mut self, premise: &str, hypothesis: &str, score: f64) -> Self {
        self.contradict.insert((premise.into(), hypothesis.into()), score);
        self
    }

    pub fn score(&self, p: &str, h: &str) -> Result<NliScores, GatewayError> {
        if self.fail {
            return Err(GatewayError::Transport { operation: "nli", attempts: vec![] });
        }
        let c = self.contradict.get(&(p.to_string(), h.to_string())).copied().unwrap_or(0.05);
        Ok(NliScores { entail: (1.0 - c) * 0.5, neutral: (1.0 - c) * 0.5, contradict: c })
    }
}

pub struct FilterFixture {
    pub name: &'static str,
    pub dialogue: Dialogue,
    pub nli: ScriptedNli,
    pub config: FilterConfig,
    pub status: VerdictStatus,
    pub failed: Vec<Rule>,
}

fn fixture(name: &'static str, dialogue: Dialogue, nli: ScriptedNli, failed: Vec<Rule>) -> FilterFixture {
    FilterFixture { name, dialogue, nli, config: FilterConfig::default(), status: VerdictStatus::Judged, failed }
}

/// Hand-built dialogues with hand-assigned verdicts.
pub fn filter_fixtures() -> Vec<FilterFixture> {
    let first_statement = crsynth_core::filters::persona_statements(&fixture_persona())[0].clone();
    let persona_nli = |score: f64| {
        let d = clean_dialogue("x");
        ScriptedNli::none().with(&first_statement, &d.turns[2].text, score)
    };
    let guess_nli = |score: f64| {
        let d = clean_dialogue("x");
        ScriptedNli::none().with(&d.turns[4].text, d.turns[5].think.as_deref().unwrap(), score)
    };
    let mut out = vec![fixture("clean", clean_dialogue("clean"), ScriptedNli::none(), vec![])];

    let mut d = clean_dialogue("exact-duplicate-seeker");
    d.turns[4].text = d.turns[2].text.clone();
    out.push(fixture("exact-duplicate-seeker", d, ScriptedNli::none(), vec![Rule::Repetition]));

    let mut d = clean_dialogue("near-duplicate-recommender");
    d.turns[5].text = "You might like Crimson Echo (1980), a war story with plenty of action and heart.".into();
    d.turns[5].movie_id = Some(FIX_TARGET_ID.into());
    out.push(fixture("near-duplicate-recommender", d, ScriptedNli::none(), vec![Rule::Repetition]));

    // heavy overlap across roles is not repetition unless identical
    let mut d = clean_dialogue("cross-role-overlap");
    d.turns[2].text = "You might like Crimson Echo, a war story with plenty of action.".into();
    out.push(fixture("cross-role-overlap", d, ScriptedNli::none(), vec![]));

    let mut d = clean_dialogue("exact-duplicate-cross-role");
    d.turns[2].text = d.turns[1].text.clone();
    out.push(fixture("exact-duplicate-cross-role", d, ScriptedNli::none(), vec![Rule::Repetition]));

    let mut d = clean_dialogue("target-leak");
    d.turns[4].text = "Thanks, but I'd rather see something like iron harbor, with clever twists.".into();
    out.push(fixture("target-leak", d, ScriptedNli::none(), vec![Rule::TargetLeak]));

    let mut d = clean_dialogue("title-after-recommendation");
    d.turns[6].text = "Iron Harbor sounds perfect, I will watch it tonight!".into();
    out.push(fixture("title-after-recommendation", d, ScriptedNli::none(), vec![]));

    let mut d = clean_dialogue("title-word-boundary");
    d.turns[4].text = "Thanks, but no iron harbors or naval stuff; I want clever twists.".into();
    out.push(fixture("title-word-boundary", d, ScriptedNli::none(), vec![]));

    let mut d = clean_dialogue("wrong-acceptance");
    d.turns.truncate(4);
    d.turns.push(terminal("Great, Crimson Echo it is!", "m-crimson"));
    d.outcome = Outcome::AcceptedOther { item_id: "m-crimson".into() };
    out.push(fixture("wrong-acceptance", d, ScriptedNli::none(), vec![Rule::WrongAcceptance]));

    out.push(fixture("persona-0.69", clean_dialogue("persona-0.69"), persona_nli(0.69), vec![]));
    out.push(fixture("persona-0.70", clean_dialogue("persona-0.70"), persona_nli(0.70), vec![]));
    out.push(fixture(
        "persona-0.71",
        clean_dialogue("persona-0.71"),
        persona_nli(0.71),
        vec![Rule::PersonaContradiction],
    ));
    out.push(fixture("guess-0.70", clean_dialogue("guess-0.70"), guess_nli(0.70), vec![]));
    out.push(fixture("guess-0.71", clean_dialogue("guess-0.71"), guess_nli(0.71), vec![Rule::GuessContradiction]));

    // the flipped orientation swaps premise and hypothesis
    let mut f = fixture("persona-0.71-flipped", clean_dialogue("persona-0.71-flipped"), persona_nli(0.71), vec![]);
    f.config.orientation = crsynth_core::filters::NliOrientation::Flipped;
    out.push(f);

    let mut d = clean_dialogue("leak-and-contradiction");
    d.turns[2].text = "I enjoy films like Iron Harbor with tense battles.".into();
    let nli = ScriptedNli::none().with(&first_statement, &d.turns[2].text, 0.95);
    out.push(fixture("leak-and-contradiction", d, nli, vec![Rule::TargetLeak, Rule::PersonaContradiction]));

    let mut d = clean_dialogue("max-turns");
    d.turns.truncate(6);
    d.turns[4].text = d.turns[2].text.clone();
    d.outcome = Outcome::MaxTurns;
    let mut f = fixture("max-turns", d, ScriptedNli::none(), vec![]);
    f.status = VerdictStatus::Incomplete;
    out.push(f);

    let mut f = fixture(
        "nli-failure",
        clean_dialogue("nli-failure"),
        ScriptedNli { contradict: HashMap::new(), fail: true },
        vec![],
    );
    f.status = VerdictStatus::Held;
    out.push(f);

    let mut f = fixture("rule-disabled", clean_dialogue("rule-disabled"), persona_nli(0.9), vec![]);
    f.config.rules = vec![Rule::Repetition, Rule::TargetLeak, Rule::WrongAcceptance, Rule::GuessContradiction];
    out.push(f);
    out
}

pub fn run_fixture(f: &FilterFixture) -> FilterVerdict {
    let nli = |p: &str, h: &str| f.nli.score(p, h);
    judge(&f.dialogue, &nli, &f.config)
}

/// Names of fixtures whose verdict differs from the hand-assigned one.
pub fn check_filter_fixtures() -> Result<usize, String> {
    let fixtures = filter_fixtures();
    let mut bad = Vec::new();
    for f in &fixtures {
        let v = run_fixture(f);
        let passed = f.status == VerdictStatus::Judged && f.failed.is_empty();
        if v.status != f.status || v.failed_rules != f.failed || v.passed != passed {
            bad.push(format!("{}: got {:?} {:?}", f.name, v.status, v.failed_rules));
        }
    }
    if bad.is_empty() {
        Ok(fixtures.len())
    } else {
        Err(bad.join("; "))
    }
}

// ---------------------------------------------------------------- mock world

/// Records every chat request before passing it on.
pub struct Recording<T> {
    pub inner: T,
    pub requests: Mutex<Vec<ChatRequest>>,
}

impl<T: ChatTransport> ChatTransport for Recording<T> {
    fn model_tag(&self) -> &str {
        self.inner.model_tag()
    }

    fn complete(&self, request: &ChatRequest) -> Result<RawCompletion, TransportError> {
        self.requests.lock().unwrap().push(request.clone());
        self.inner.complete(request)
    }
}

pub struct World {
    pub gateway: Gateway,
    pub recorder: Arc<Recording<MockChat>>,
    pub prompts: PromptSet,
    pub users: UserReviewDb,
    pub items: ItemReviewDb,
    pub index: KnowledgeIndex,
}

pub fn mock_world(seed: u64, defect_rate: f64) -> World {
    world_with(MockChat::new(seed).with_defect_rate(defect_rate), seed)
}

/// Exactly `round(rate * sessions)` sessions carry a defect, kinds in rotation.
pub fn defect_plan(users: &[String], per_user: usize, global_seed: u64, rate: f64) -> BTreeMap<u64, Defect> {
    let mut seeds: Vec<u64> =
        users.iter().flat_map(|u| (0..per_user).map(move |r| session_seed(global_seed, u, r))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(global_seed);
    seeds.shuffle(&mut rng);
    let n = (rate * seeds.len() as f64).round() as usize;
    seeds[..n].iter().enumerate().map(|(i, s)| (*s, Defect::ALL[i % Defect::ALL.len()])).collect()
}

/// A world whose sessions under `global_seed` carry exactly the planned defects.
pub fn planned_world(seed: u64, per_user: usize, global_seed: u64, rate: f64) -> (World, usize) {
    let (reviews, items) = synthetic::generate(&SyntheticSpec::default());
    let (users, _, _) = ingest_reviews(reviews, items);
    let ids: Vec<String> = users.users.keys().cloned().collect();
    let plan = defect_plan(&ids, per_user, global_seed, rate);
    let n = plan.len();
    (world_with(MockChat::new(seed).with_defect_plan(plan), seed), n)
}

fn world_with(chat: MockChat, seed: u64) -> World {
    let (reviews, items) = synthetic::generate(&SyntheticSpec::default());
    let (mut users, mut items, _) = ingest_reviews(reviews, items);
    let recorder = Arc::new(Recording { inner: chat, requests: Mutex::new(Vec::new()) });
    let gateway = Gateway::new(
        recorder.clone(),
        Arc::new(MockEmbedder::new(seed)),
        Arc::new(RuleNli),
        RetryPolicy::default(),
        None,
        Arc::new(SystemClock::default()),
    );
    let prompts = PromptSet::default();
    {
        let s = Summarizer::new(&gateway, &prompts, ChatParams::summarizer(), None);
        abstract_corpus(&s, &mut users, &mut items, None, 8).unwrap();
    }
    World { gateway, recorder, prompts, users, items, index: KnowledgeIndex::new() }
}

impl World {
    pub fn ctx(&self) -> SessionContext<'_> {
        SessionContext {
            gateway: &self.gateway,
            prompts: &self.prompts,
            params: ChatParams::simulator(),
            users: &self.users,
            items: &self.items,
            index: &self.index,
        }
    }

    pub fn run(&self, per_user: usize, seed: u64, parallelism: usize) -> Vec<Dialogue> {
        let spec =
            BatchSpec { users: self.users.users.keys().cloned().collect(), per_user, global_seed: seed, parallelism };
        run_batch(&self.ctx(), &SessionConfig::default(), &spec, None, false, &AtomicBool::new(false))
            .unwrap()
            .dialogues
    }
}

/// Protocol violations across `dialogues`, using the recorded seeker prompts.
pub fn protocol_violations(world: &World, dialogues: &[Dialogue]) -> Vec<String> {
    let mut bad = Vec::new();
    let requests = world.recorder.requests.lock().unwrap();
    let mut seeker_prompts: BTreeMap<u64, Vec<&str>> = BTreeMap::new();
    for r in requests.iter().filter(|r| r.tag == SEEKER_TAG) {
        seeker_prompts.entry(r.seed.unwrap_or_default()).or_default().push(&r.user_prompt);
    }
    for d in dialogues {
        let id = &d.dialogue_id;
        for (i, t) in d.turns.iter().enumerate() {
            let want = if i % 2 == 0 { Role::Seeker } else { Role::Recommender };
            if t.role != want {
                bad.push(format!("{id}: turn {i} has role {:?}", t.role));
            }
            if let (Some(m), Some(c)) = (&t.movie_id, &t.candidates) {
                if !c.contains(m) {
                    bad.push(format!("{id}: turn {i} recommends {m} outside its candidates"));
                }
            } else if t.movie_id.is_some() {
                bad.push(format!("{id}: turn {i} recommends without a candidate set"));
            }
        }
        let recs: Vec<&str> = d.recommended().collect();
        if recs.iter().collect::<BTreeSet<_>>().len() != recs.len() {
            bad.push(format!("{id}: repeated recommendation {recs:?}"));
        }
        if d.outcome == Outcome::AcceptedTarget {
            let last = d.turns.last().unwrap();
            if !(last.role == Role::Seeker && last.terminal) || recs.last() != Some(&d.target_item_id.as_str()) {
                bad.push(format!("{id}: accepted without ending on the target"));
            }
            if d.turns.len() < 6 {
                bad.push(format!("{id}: accepted after only {} utterances", d.turns.len()));
            }
        }
        let title = crsynth_core::text::strip_year_suffix(&d.target_title).to_lowercase();
        for p in seeker_prompts.get(&d.seed).into_iter().flatten() {
            let start = p.find(TARGET_FEATURES_HEADER).unwrap_or(0);
            let end = p.find(CONTEXT_HEADER).unwrap_or(p.len());
            if p[start..end].to_lowercase().contains(&title) {
                bad.push(format!("{id}: seeker feature prompt names the target"));
            }
        }
        if !seeker_prompts.contains_key(&d.seed) {
            bad.push(format!("{id}: no seeker prompt recorded"));
        }
    }
    bad
}
