//! Like/dislike abstracts distilled from raw review text.
//!
//! User reviews are summarized one at a time; items are summarized from
//! their selected reviews together with their metadata. Completions are
//! parsed into [`Abstract`]s and memoized on disk under
//! `<cache>/<first two hex>/<sha256(model tag, prompt)>.json`, so a warm
//! rerun issues no gateway calls.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{review_id, ItemRecord, ItemReview, ItemReviewDb, Review, UserReviewDb};
use crate::gateway::{ChatParams, Gateway, GatewayError};
use crate::jsonl::{self, JsonlError};
use crate::prompts::{self, PromptSet};

/// Re-asks after an unparseable completion.
pub const MAX_REASKS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Abstract {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub like: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dislike: Option<String>,
    #[serde(default)]
    pub source_ids: Vec<String>,
}

impl Abstract {
    pub fn new(
        like: Option<String>,
        dislike: Option<String>,
        source_ids: Vec<String>,
    ) -> Result<Self, AbstractionError> {
        if like.is_none() && dislike.is_none() {
            return Err(AbstractionError::Empty);
        }
        Ok(Self { like, dislike, source_ids })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AbstractionError {
    #[error("neither [Like] nor [Dislike] header found")]
    MissingHeaders,
    #[error("both [Like] and [Dislike] are empty")]
    Empty,
    #[error("empty review text")]
    EmptyInput,
    #[error("no reviews to summarize")]
    NoReviews,
    #[error("unparseable completion for {id} after {attempts} attempt(s): {reason}")]
    Unparseable { id: String, attempts: usize, reason: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("cache: {0}")]
    Cache(String),
}

fn is_none_marker(section: &str) -> bool {
    let s = section.trim();
    let s = s.strip_suffix('.').unwrap_or(s).trim();
    s.is_empty() || s.eq_ignore_ascii_case("none")
}

/// Split a completion into its `[Like]` and `[Dislike]` sections.
///
/// Headers are matched case-insensitively in either order. Each section runs
/// to the next header or the end of the text; a literal "None." (any case,
/// period optional) or an empty section is absent.
pub fn parse_like_dislike(text: &str) -> Result<(Option<String>, Option<String>), AbstractionError> {
    // ASCII lowercasing keeps byte offsets aligned with `text`
    let lower = text.to_ascii_lowercase();
    let like = lower.find("[like]");
    let dislike = lower.find("[dislike]");
    if like.is_none() && dislike.is_none() {
        return Err(AbstractionError::MissingHeaders);
    }
    let section = |start: Option<usize>, header_len: usize, other: Option<usize>| -> Option<String> {
        let start = start?;
        let body_start = start + header_len;
        let end = match other {
            Some(o) if o > start => o,
            _ => text.len(),
        };
        let body = text[body_start..end].trim();
        (!is_none_marker(body)).then(|| body.to_string())
    };
    Ok((section(like, "[like]".len(), dislike), section(dislike, "[dislike]".len(), like)))
}

/// Disk memo of parsed abstracts, safe under concurrent writers.
#[derive(Debug, Clone)]
pub struct AbstractCache {
    dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheEntry {
    #[serde(default)]
    r#abstract: Option<Abstract>,
    #[serde(default)]
    error: Option<String>,
}

impl AbstractCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn key(model_tag: &str, prompt: &str) -> String {
        let mut h = Sha256::new();
        h.update(model_tag.as_bytes());
        h.update([0u8]);
        h.update(prompt.as_bytes());
        hex::encode(h.finalize())
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }

    fn get(&self, key: &str) -> Option<CacheEntry> {
        let p = self.path(key);
        if !p.exists() {
            return None;
        }
        jsonl::read_json(&p).ok()
    }

    fn put(&self, key: &str, entry: &CacheEntry) -> Result<(), JsonlError> {
        jsonl::write_json(&self.path(key), entry)
    }
}

pub struct Summarizer<'a> {
    pub gateway: &'a Gateway,
    pub prompts: &'a PromptSet,
    pub params: ChatParams,
    pub cache: Option<AbstractCache>,
    cache_hits: AtomicUsize,
}

impl<'a> Summarizer<'a> {
    pub fn new(gateway: &'a Gateway, prompts: &'a PromptSet, params: ChatParams, cache: Option<AbstractCache>) -> Self {
        Self { gateway, prompts, params, cache, cache_hits: AtomicUsize::new(0) }
    }

    pub fn cache_hits(&self) -> usize {
        self.cache_hits.load(Ordering::Relaxed)
    }

    pub fn summarize_user_review(&self, user_id: &str, review: &Review) -> Result<Abstract, AbstractionError> {
        if review.text.trim().is_empty() {
            return Err(AbstractionError::EmptyInput);
        }
        let prompt = self.prompts.user_abstract.render(&[("review", review.text.trim())]);
        let id = review_id(user_id, &review.item_id);
        self.summarize(&id, "summarize-user", prompt, vec![id.clone()])
    }

    pub fn summarize_item_reviews(
        &self,
        item: &ItemRecord,
        reviews: &[ItemReview],
    ) -> Result<Abstract, AbstractionError> {
        if reviews.is_empty() {
            return Err(AbstractionError::NoReviews);
        }
        let joined = reviews
            .iter()
            .enumerate()
            .map(|(i, r)| format!("Review {}: {}", i + 1, r.text.trim()))
            .collect::<Vec<_>>()
            .join("\n");
        let genre = item.genre.join(", ");
        let director = item.director.join(", ");
        let cast = item.cast.join(", ");
        let prompt = self.prompts.item_abstract.render(&[
            ("movie title", &item.title),
            ("genre", &genre),
            ("director", &director),
            ("cast", &cast),
            ("reviews", &joined),
        ]);
        let sources = reviews.iter().map(|r| review_id(&r.user_id, &item.item_id)).collect();
        self.summarize(&item.item_id, "summarize-item", prompt, sources)
    }

    fn summarize(
        &self,
        id: &str,
        tag: &str,
        prompt: String,
        sources: Vec<String>,
    ) -> Result<Abstract, AbstractionError> {
        let key = AbstractCache::key(&self.gateway.tags().chat, &prompt);
        if let Some(cache) = &self.cache {
            if let Some(entry) = cache.get(&key) {
                self.cache_hits.fetch_add(1, Ordering::Relaxed);
                return match (entry.r#abstract, entry.error) {
                    (Some(mut a), _) => {
                        a.source_ids = sources;
                        Ok(a)
                    }
                    (None, err) => Err(AbstractionError::Unparseable {
                        id: id.to_string(),
                        attempts: 0,
                        reason: err.unwrap_or_default(),
                    }),
                };
            }
        }
        let mut last_reason = String::new();
        let mut current = prompt.clone();
        let mut attempts = 0;
        for _ in 0..=MAX_REASKS {
            attempts += 1;
            let completion = self.gateway.chat(&self.params.request(tag, current.clone(), None))?;
            match parse_like_dislike(&completion.text).and_then(|(l, d)| Abstract::new(l, d, sources.clone())) {
                Ok(a) => {
                    self.store(&key, CacheEntry { r#abstract: Some(a.clone()), error: None })?;
                    return Ok(a);
                }
                Err(e) => {
                    last_reason = e.to_string();
                    current = format!("{prompt}{}", prompts::ABSTRACT_FORMAT_REMINDER);
                }
            }
        }
        self.store(&key, CacheEntry { r#abstract: None, error: Some(last_reason.clone()) })?;
        Err(AbstractionError::Unparseable { id: id.to_string(), attempts, reason: last_reason })
    }

    fn store(&self, key: &str, entry: CacheEntry) -> Result<(), AbstractionError> {
        match &self.cache {
            Some(c) => c.put(key, &entry).map_err(|e| AbstractionError::Cache(e.to_string())),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbstractionReport {
    pub reviews_total: usize,
    pub reviews_abstracted: usize,
    pub reviews_failed: usize,
    pub items_total: usize,
    pub items_abstracted: usize,
    pub items_failed: usize,
    pub items_without_reviews: usize,
    pub cache_hits: usize,
    pub failures: Vec<String>,
}

/// One exported abstract, keyed by review id or item id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstractRecord {
    pub id: String,
    pub kind: String,
    pub r#abstract: Abstract,
}

/// Summarize every review of the given users and every item they reviewed,
/// writing results back into the databases. Failed reviews keep no abstract
/// and so never enter persona pools.
pub fn abstract_corpus(
    summarizer: &Summarizer<'_>,
    users: &mut UserReviewDb,
    items: &mut ItemReviewDb,
    user_scope: Option<&BTreeSet<String>>,
    parallelism: usize,
) -> Result<AbstractionReport, AbstractionError> {
    let mut report = AbstractionReport::default();

    let review_jobs: Vec<(String, usize)> = users
        .users
        .iter()
        .filter(|(u, _)| user_scope.is_none_or(|s| s.contains(*u)))
        .flat_map(|(u, rs)| (0..rs.len()).map(move |i| (u.clone(), i)))
        .collect();
    let item_ids: BTreeSet<String> = review_jobs.iter().map(|(u, i)| users.users[u][*i].item_id.clone()).collect();

    let review_results =
        parallel_map(&review_jobs, parallelism, |(u, i)| summarizer.summarize_user_review(u, &users.users[u][*i]));
    report.reviews_total = review_jobs.len();
    for ((u, i), res) in review_jobs.iter().zip(review_results) {
        let review = &mut users.users.get_mut(u).expect("job user").get_mut(*i).expect("job index");
        match res {
            Ok(a) => {
                review.r#abstract = Some(a);
                report.reviews_abstracted += 1;
            }
            Err(e @ (AbstractionError::Gateway(_) | AbstractionError::Cache(_))) => return Err(e),
            Err(e) => {
                review.r#abstract = None;
                report.reviews_failed += 1;
                report.failures.push(format!("{}: {e}", review_id(u, &review.item_id)));
            }
        }
    }

    let item_jobs: Vec<String> = item_ids.into_iter().collect();
    let item_results = parallel_map(&item_jobs, parallelism, |id| {
        let entry = &items.items[id];
        if entry.selected.is_empty() {
            return Err(AbstractionError::NoReviews);
        }
        summarizer.summarize_item_reviews(&entry.item, &entry.selected)
    });
    report.items_total = item_jobs.len();
    for (id, res) in item_jobs.iter().zip(item_results) {
        let entry = items.items.get_mut(id).expect("job item");
        match res {
            Ok(a) => {
                entry.knowledge = Some(a);
                report.items_abstracted += 1;
            }
            Err(AbstractionError::NoReviews) => report.items_without_reviews += 1,
            Err(e @ (AbstractionError::Gateway(_) | AbstractionError::Cache(_))) => return Err(e),
            Err(e) => {
                entry.knowledge = None;
                report.items_failed += 1;
                report.failures.push(format!("{id}: {e}"));
            }
        }
    }
    report.cache_hits = summarizer.cache_hits();
    Ok(report)
}

/// Every abstract present in the databases, reviews first, in key order.
pub fn export_records(users: &UserReviewDb, items: &ItemReviewDb) -> Vec<AbstractRecord> {
    let reviews = users.users.iter().flat_map(|(u, rs)| {
        rs.iter().filter_map(move |r| {
            r.r#abstract.as_ref().map(|a| AbstractRecord {
                id: review_id(u, &r.item_id),
                kind: "review".into(),
                r#abstract: a.clone(),
            })
        })
    });
    let item_recs = items.items.iter().filter_map(|(id, e)| {
        e.knowledge.as_ref().map(|a| AbstractRecord { id: id.clone(), kind: "item".into(), r#abstract: a.clone() })
    });
    reviews.chain(item_recs).collect()
}

/// Order-preserving map over `jobs` on up to `parallelism` scoped threads.
pub(crate) fn parallel_map<J: Sync, R: Send>(jobs: &[J], parallelism: usize, f: impl Fn(&J) -> R + Sync) -> Vec<R> {
    let workers = parallelism.max(1).min(jobs.len().max(1));
    if workers == 1 {
        return jobs.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let r = f(&jobs[i]);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots.into_inner().unwrap().into_iter().map(|r| r.expect("every job ran")).collect()
}

/// Write the exported abstracts as JSONL.
pub fn write_exports(path: &Path, users: &UserReviewDb, items: &ItemReviewDb) -> Result<(), JsonlError> {
    jsonl::write_all(path, None, export_records(users, items))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::mock::{MockChat, MockEmbedder, RuleNli};
    use crate::gateway::{RetryPolicy, VirtualClock};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn scripted(tag: &str, text: &str) -> Gateway {
        Gateway::new(
            Arc::new(MockChat::new(0).with_script(tag, text)),
            Arc::new(MockEmbedder::new(0)),
            Arc::new(RuleNli),
            RetryPolicy::default(),
            None,
            Arc::new(VirtualClock::new()),
        )
    }

    fn review(text: &str) -> Review {
        Review {
            item_id: "m1".into(),
            title: "M (2000)".into(),
            rating: 9,
            text: text.into(),
            votes: 0,
            r#abstract: None,
        }
    }

    #[test]
    fn parse_canonical_reversed_and_none() {
        assert_eq!(parse_like_dislike("[Like]\nA\n[Dislike]\nB").unwrap(), (Some("A".into()), Some("B".into())));
        assert_eq!(parse_like_dislike("[Dislike]\nB\n[Like]\nA").unwrap(), (Some("A".into()), Some("B".into())));
        assert_eq!(parse_like_dislike("[Like]\nnone\n[Dislike]\nB").unwrap(), (None, Some("B".into())));
        assert_eq!(parse_like_dislike("[LIKE] None [dislike] x").unwrap(), (None, Some("x".into())));
        assert_eq!(parse_like_dislike("[Like]\nonly likes").unwrap(), (Some("only likes".into()), None));
        assert_eq!(parse_like_dislike("nothing here"), Err(AbstractionError::MissingHeaders));
    }

    #[test]
    fn user_review_with_none_dislike() {
        let g = scripted("summarize-user", "[Like]\nstrong ensemble cast\n[Dislike]\nNone.");
        let prompts = PromptSet::default();
        let s = Summarizer::new(&g, &prompts, ChatParams::summarizer(), None);
        let a = s.summarize_user_review("u1", &review("great")).unwrap();
        assert_eq!(a.like.as_deref(), Some("strong ensemble cast"));
        assert_eq!(a.dislike, None);
        assert_eq!(a.source_ids, vec!["u1::m1".to_string()]);
    }

    #[test]
    fn missing_headers_fail_after_reasks() {
        let g = scripted("summarize-user", "I liked it.");
        let prompts = PromptSet::default();
        let s = Summarizer::new(&g, &prompts, ChatParams::summarizer(), None);
        match s.summarize_user_review("u1", &review("fine")) {
            Err(AbstractionError::Unparseable { attempts, .. }) => assert_eq!(attempts, 1 + MAX_REASKS),
            other => panic!("{other:?}"),
        }
        assert_eq!(g.stats().chat_requests as usize, 1 + MAX_REASKS);
        assert!(matches!(s.summarize_user_review("u1", &review("  ")), Err(AbstractionError::EmptyInput)));
    }

    #[test]
    fn item_summary_cardinality_and_degenerate_completion() {
        let prompts = PromptSet::default();
        let item = ItemRecord {
            item_id: "m1".into(),
            title: "M (2000)".into(),
            genre: vec![],
            director: vec![],
            cast: vec![],
        };
        let reviews: Vec<ItemReview> = (0..3)
            .map(|i| ItemReview { user_id: format!("u{i}"), rating: 7, votes: 3 - i as u64, text: format!("text {i}") })
            .collect();
        let g = scripted("summarize-item", "[Like]\ngood\n[Dislike]\nbad");
        let s = Summarizer::new(&g, &prompts, ChatParams::summarizer(), None);
        assert_eq!(s.summarize_item_reviews(&item, &reviews).unwrap().source_ids.len(), 3);
        assert!(matches!(s.summarize_item_reviews(&item, &[]), Err(AbstractionError::NoReviews)));

        let g = scripted("summarize-item", "[Like]\nNone.\n[Dislike]\nNone.");
        let s = Summarizer::new(&g, &prompts, ChatParams::summarizer(), None);
        assert!(matches!(s.summarize_item_reviews(&item, &reviews), Err(AbstractionError::Unparseable { .. })));
    }

    #[test]
    fn warm_cache_issues_no_gateway_calls() {
        let dir = tempfile::tempdir().unwrap();
        let g = scripted("summarize-user", "[Like]\na\n[Dislike]\nb");
        let prompts = PromptSet::default();
        let s = Summarizer::new(&g, &prompts, ChatParams::summarizer(), Some(AbstractCache::new(dir.path())));
        let first = s.summarize_user_review("u1", &review("text")).unwrap();
        let calls = g.stats().chat_requests;
        let s2 = Summarizer::new(&g, &prompts, ChatParams::summarizer(), Some(AbstractCache::new(dir.path())));
        assert_eq!(s2.summarize_user_review("u1", &review("text")).unwrap(), first);
        assert_eq!(g.stats().chat_requests, calls);
        assert_eq!(s2.cache_hits(), 1);
    }

    #[test]
    fn parallel_map_preserves_order() {
        let jobs: Vec<u32> = (0..100).collect();
        assert_eq!(parallel_map(&jobs, 8, |x| x * 2), jobs.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    fn section_text() -> impl Strategy<Value = Option<String>> {
        proptest::option::of("[a-z][a-z ,'-]{0,30}[a-z]".prop_filter("not none", |s| !is_none_marker(s)))
    }

    proptest! {
        #[test]
        fn parse_inverts_render(like in section_text(), dislike in section_text()) {
            prop_assume!(like.is_some() || dislike.is_some());
            let a = Abstract::new(like.clone(), dislike.clone(), vec![]).unwrap();
            let parsed = parse_like_dislike(&prompts::render_abstract(&a)).unwrap();
            prop_assert_eq!(parsed, (like, dislike));
        }
    }
}
