//! Review ingest and the two grouped databases: reviews per user, and item
//! metadata with its most-voted reviews per item.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::abstraction::Abstract;
use crate::jsonl::{self, JsonlError};

/// Most-voted reviews kept per item for knowledge distillation.
pub const ITEM_REVIEW_LIMIT: usize = 3;
/// Minimum rating for a review to qualify as a dialogue target.
pub const TARGET_MIN_RATING: u8 = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawReviewRecord {
    pub user_id: String,
    pub item_id: String,
    pub title: String,
    pub rating: u8,
    pub text: String,
    #[serde(default)]
    pub votes: u64,
}

impl RawReviewRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.user_id.trim().is_empty() {
            return Err("empty user_id".into());
        }
        if self.item_id.trim().is_empty() {
            return Err("empty item_id".into());
        }
        if !(1..=10).contains(&self.rating) {
            return Err(format!("rating {} outside 1..10", self.rating));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item_id: String,
    /// Title including the release year, e.g. "Fury (2014)".
    pub title: String,
    #[serde(default)]
    pub genre: Vec<String>,
    #[serde(default)]
    pub director: Vec<String>,
    #[serde(default)]
    pub cast: Vec<String>,
}

impl ItemRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.item_id.trim().is_empty() {
            return Err("empty item_id".into());
        }
        if self.title.trim().is_empty() {
            return Err("empty title".into());
        }
        Ok(())
    }
}

/// One user's review of one item, as stored in the user-review database.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Review {
    pub item_id: String,
    pub title: String,
    pub rating: u8,
    pub text: String,
    pub votes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r#abstract: Option<Abstract>,
}

/// Stable identifier of a (user, item) review.
pub fn review_id(user_id: &str, item_id: &str) -> String {
    format!("{user_id}::{item_id}")
}

/// A review as seen from the item side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemReview {
    pub user_id: String,
    pub rating: u8,
    pub votes: u64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemEntry {
    pub item: ItemRecord,
    /// Up to three reviews, votes descending, insertion order on ties.
    pub selected: Vec<ItemReview>,
    pub review_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knowledge: Option<Abstract>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UserReviewDb {
    pub users: BTreeMap<String, Vec<Review>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ItemReviewDb {
    pub items: BTreeMap<String, ItemEntry>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorpusError {
    #[error("unknown user {0}")]
    UnknownUser(String),
    #[error("unknown item {0}")]
    UnknownItem(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordError {
    pub file: String,
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub reviews_read: usize,
    pub reviews_kept: usize,
    pub duplicates_resolved: usize,
    pub dropped_unknown_item: usize,
    pub items_read: usize,
    pub duplicate_items: usize,
    pub users: usize,
    pub items: usize,
    pub malformed: Vec<RecordError>,
}

impl UserReviewDb {
    pub fn reviews(&self, user_id: &str) -> Result<&[Review], CorpusError> {
        self.users.get(user_id).map(Vec::as_slice).ok_or_else(|| CorpusError::UnknownUser(user_id.to_string()))
    }

    pub fn review(&self, user_id: &str, item_id: &str) -> Option<&Review> {
        self.users.get(user_id)?.iter().find(|r| r.item_id == item_id)
    }

    pub fn review_count(&self) -> usize {
        self.users.values().map(Vec::len).sum()
    }
}

impl ItemReviewDb {
    pub fn entry(&self, item_id: &str) -> Result<&ItemEntry, CorpusError> {
        self.items.get(item_id).ok_or_else(|| CorpusError::UnknownItem(item_id.to_string()))
    }
}

/// Build both databases from already-parsed records.
///
/// Repeated (user, item) pairs keep the record with the most votes, first
/// seen on ties, at the position of the pair's first occurrence. Reviews of
/// items absent from `items` are dropped.
pub fn ingest_reviews(
    records: impl IntoIterator<Item = RawReviewRecord>,
    items: impl IntoIterator<Item = ItemRecord>,
) -> (UserReviewDb, ItemReviewDb, IngestReport) {
    let mut report = IngestReport::default();

    let mut item_map: BTreeMap<String, ItemRecord> = BTreeMap::new();
    for item in items {
        report.items_read += 1;
        if item_map.contains_key(&item.item_id) {
            report.duplicate_items += 1;
            continue;
        }
        item_map.insert(item.item_id.clone(), item);
    }

    let mut kept: Vec<RawReviewRecord> = Vec::new();
    let mut position: HashMap<(String, String), usize> = HashMap::new();
    for rec in records {
        report.reviews_read += 1;
        if !item_map.contains_key(&rec.item_id) {
            report.dropped_unknown_item += 1;
            continue;
        }
        let key = (rec.user_id.clone(), rec.item_id.clone());
        match position.get(&key) {
            Some(&i) => {
                report.duplicates_resolved += 1;
                if rec.votes > kept[i].votes {
                    kept[i] = rec;
                }
            }
            None => {
                position.insert(key, kept.len());
                kept.push(rec);
            }
        }
    }
    report.reviews_kept = kept.len();

    let mut users: BTreeMap<String, Vec<Review>> = BTreeMap::new();
    let mut per_item: HashMap<String, Vec<ItemReview>> = HashMap::new();
    for rec in kept {
        per_item.entry(rec.item_id.clone()).or_default().push(ItemReview {
            user_id: rec.user_id.clone(),
            rating: rec.rating,
            votes: rec.votes,
            text: rec.text.clone(),
        });
        users.entry(rec.user_id).or_default().push(Review {
            item_id: rec.item_id,
            title: rec.title,
            rating: rec.rating,
            text: rec.text,
            votes: rec.votes,
            r#abstract: None,
        });
    }

    let items = item_map
        .into_iter()
        .map(|(id, item)| {
            let reviews = per_item.remove(&id).unwrap_or_default();
            let review_count = reviews.len();
            let selected = top_voted(reviews, ITEM_REVIEW_LIMIT);
            (id, ItemEntry { item, selected, review_count, knowledge: None })
        })
        .collect();

    report.users = users.len();
    let db_items = ItemReviewDb { items };
    report.items = db_items.items.len();
    (UserReviewDb { users }, db_items, report)
}

fn top_voted(mut reviews: Vec<ItemReview>, limit: usize) -> Vec<ItemReview> {
    // stable: equal votes keep insertion order
    reviews.sort_by_key(|r| std::cmp::Reverse(r.votes));
    reviews.truncate(limit);
    reviews
}

/// Parse and ingest the two JSONL input files. Malformed lines are reported
/// with their locator and skipped.
pub fn ingest_files(
    reviews_path: &Path,
    items_path: &Path,
) -> Result<(UserReviewDb, ItemReviewDb, IngestReport), JsonlError> {
    let mut malformed = Vec::new();
    let items = collect_valid::<ItemRecord>(items_path, ItemRecord::validate, &mut malformed)?;
    let reviews = collect_valid::<RawReviewRecord>(reviews_path, RawReviewRecord::validate, &mut malformed)?;
    let (u, i, mut report) = ingest_reviews(reviews, items);
    report.malformed = malformed;
    Ok((u, i, report))
}

fn collect_valid<T: serde::de::DeserializeOwned>(
    path: &Path,
    validate: fn(&T) -> Result<(), String>,
    errors: &mut Vec<RecordError>,
) -> Result<Vec<T>, JsonlError> {
    let file = path.display().to_string();
    let mut out = Vec::new();
    for (line, parsed) in jsonl::read_records::<T>(path)? {
        match parsed.and_then(|r| validate(&r).map(|_| r)) {
            Ok(r) => out.push(r),
            Err(message) => errors.push(RecordError { file: file.clone(), line, message }),
        }
    }
    Ok(out)
}

/// The user's up-to-three most-voted reviews of an item.
pub fn select_item_reviews<'a>(db: &'a ItemReviewDb, item_id: &str) -> Result<&'a [ItemReview], CorpusError> {
    Ok(&db.entry(item_id)?.selected)
}

/// The user's reviews rated at least [`TARGET_MIN_RATING`].
pub fn eligible_target_items<'a>(db: &'a UserReviewDb, user_id: &str) -> Result<Vec<&'a Review>, CorpusError> {
    Ok(db.reviews(user_id)?.iter().filter(|r| r.rating >= TARGET_MIN_RATING).collect())
}

/// Distinct items referenced by any user review.
pub fn reviewed_items(db: &UserReviewDb) -> HashSet<&str> {
    db.users.values().flatten().map(|r| r.item_id.as_str()).collect()
}
