//! Seeker personas: three general-preference abstracts plus one target
//! abstract, all drawn from a single user's reviews.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::abstraction::Abstract;
use crate::corpus::{CorpusError, Review, UserReviewDb, TARGET_MIN_RATING};

/// Reviews feeding the general preference.
pub const GENERAL_COUNT: usize = 3;
/// Abstracted reviews a user needs: the general three plus a target.
pub const MIN_ABSTRACTED_REVIEWS: usize = GENERAL_COUNT + 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaEntry {
    pub item_id: String,
    pub title: String,
    pub r#abstract: Abstract,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Persona {
    pub user_id: String,
    pub general: Vec<PersonaEntry>,
    pub target_item_id: String,
    pub target_title: String,
    pub target_abstract: Abstract,
    pub seed: u64,
}

impl Persona {
    pub fn general_item_ids(&self) -> impl Iterator<Item = &str> {
        self.general.iter().map(|e| e.item_id.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PersonaError {
    #[error("user {user_id} is ineligible: {reason}")]
    IneligibleUser { user_id: String, reason: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

fn abstracted(reviews: &[Review]) -> Vec<&Review> {
    reviews.iter().filter(|r| r.r#abstract.is_some()).collect()
}

fn entry(r: &Review) -> PersonaEntry {
    PersonaEntry {
        item_id: r.item_id.clone(),
        title: r.title.clone(),
        r#abstract: r.r#abstract.clone().expect("abstracted review"),
    }
}

/// Draw a persona for `user_id`. The target is uniform over the user's
/// abstracted reviews rated at least [`TARGET_MIN_RATING`]; the general
/// entries are three draws without replacement from the rest.
pub fn build_persona(db: &UserReviewDb, user_id: &str, seed: u64) -> Result<Persona, PersonaError> {
    let reviews = db.reviews(user_id)?;
    let pool = abstracted(reviews);
    let ineligible = |reason: String| PersonaError::IneligibleUser { user_id: user_id.to_string(), reason };
    if pool.len() < MIN_ABSTRACTED_REVIEWS {
        return Err(ineligible(format!("{} abstracted review(s), need {MIN_ABSTRACTED_REVIEWS}", pool.len())));
    }
    let eligible: Vec<usize> = (0..pool.len()).filter(|&i| pool[i].rating >= TARGET_MIN_RATING).collect();
    if eligible.is_empty() {
        return Err(ineligible(format!("no abstracted review rated {TARGET_MIN_RATING} or higher")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target_idx = eligible[index::sample(&mut rng, eligible.len(), 1).index(0)];
    let rest: Vec<&Review> = (0..pool.len()).filter(|&i| i != target_idx).map(|i| pool[i]).collect();
    let general = index::sample(&mut rng, rest.len(), GENERAL_COUNT).into_iter().map(|i| entry(rest[i])).collect();
    let target = pool[target_idx];
    Ok(Persona {
        user_id: user_id.to_string(),
        general,
        target_item_id: target.item_id.clone(),
        target_title: target.title.clone(),
        target_abstract: target.r#abstract.clone().expect("abstracted review"),
        seed,
    })
}

/// The user's own abstract of `item_id`, looked up when that item is suggested.
pub fn responsive_preference(db: &UserReviewDb, user_id: &str, item_id: &str) -> Option<Abstract> {
    db.review(user_id, item_id).and_then(|r| r.r#abstract.clone())
}
