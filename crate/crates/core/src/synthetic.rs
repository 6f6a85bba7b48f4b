//! Deterministic synthetic review corpus used by the bundled fixtures,
//! tests and benchmarks.
//!
//! Review sentences follow the fixed patterns the mock summarizer reads
//! ("I loved the X.", "The X bothered me.", ...). Features are two-word
//! phrases, so no feature is a word prefix of another, and each user's liked
//! and disliked features are disjoint.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{ItemRecord, RawReviewRecord};

pub const FEATURES: &[&str] = &[
    "tense battles",
    "witty banter",
    "lush scenery",
    "haunting score",
    "clever twists",
    "sluggish pacing",
    "gritty realism",
    "vivid costumes",
    "sharp editing",
    "moody lighting",
    "quirky humor",
    "heartfelt romance",
    "brutal violence",
    "epic scale",
    "intimate drama",
    "campy effects",
    "stellar cast",
    "rousing finale",
    "bleak ending",
    "dense plot",
    "playful tone",
    "eerie atmosphere",
    "loud explosions",
    "tender friendship",
    "sweeping vistas",
    "frantic chases",
    "political intrigue",
    "courtroom scenes",
    "heist planning",
    "space battles",
    "ghostly visions",
    "jazz soundtrack",
    "period detail",
    "rural setting",
    "urban grit",
    "slapstick gags",
    "family bonds",
    "rival siblings",
    "martial arts",
    "sword fights",
    "naval warfare",
    "tank crew",
    "spy gadgets",
    "robot designs",
    "alien worlds",
    "dragon lore",
    "detective work",
    "survival struggle",
    "mountain climbing",
    "ocean voyages",
    "desert landscapes",
    "jungle expeditions",
    "kitchen scenes",
    "dance numbers",
    "choral music",
    "quiet stretches",
    "nonlinear structure",
    "unreliable narrator",
    "unexpected cameos",
    "cheesy lines",
    "shaky camerawork",
    "neon visuals",
    "animated sequences",
    "sports rivalry",
];

const TITLE_ADJ: &[&str] = &[
    "Crimson",
    "Silent",
    "Golden",
    "Broken",
    "Hidden",
    "Distant",
    "Frozen",
    "Burning",
    "Hollow",
    "Iron",
    "Velvet",
    "Wandering",
    "Shattered",
    "Midnight",
    "Scarlet",
    "Forgotten",
    "Savage",
    "Gentle",
    "Restless",
    "Electric",
];
const TITLE_NOUN: &[&str] = &[
    "Harbor",
    "Empire",
    "Orchard",
    "Compass",
    "Lantern",
    "Meridian",
    "Cathedral",
    "Horizon",
    "Garden",
    "Reckoning",
    "Frontier",
    "Station",
    "Kingdom",
    "River",
    "Sparrow",
    "Citadel",
    "Echo",
    "Passage",
    "Covenant",
    "Summit",
];
const GENRES: &[&str] =
    &["Drama", "Action", "Comedy", "Thriller", "Romance", "Sci-Fi", "Horror", "War", "Mystery", "Adventure"];
const FIRST: &[&str] =
    &["Ada", "Bruno", "Celia", "Dmitri", "Elena", "Farid", "Greta", "Hiro", "Ines", "Jonas", "Kemal", "Lena"];
const LAST: &[&str] =
    &["Marsh", "Okafor", "Petrov", "Quinn", "Rossi", "Sato", "Tanaka", "Underwood", "Varga", "Weller"];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub users: usize,
    pub items: usize,
    pub min_reviews: usize,
    pub max_reviews: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { users: 50, items: 200, min_reviews: 5, max_reviews: 9, seed: 2024 }
    }
}

fn person(rng: &mut ChaCha8Rng) -> String {
    format!("{} {}", FIRST.choose(rng).unwrap(), LAST.choose(rng).unwrap())
}

fn like_sentence(rng: &mut ChaCha8Rng, f: &str) -> String {
    if rng.gen_bool(0.5) {
        format!("I loved the {f}.")
    } else {
        format!("I really enjoyed the {f}.")
    }
}

fn dislike_sentence(rng: &mut ChaCha8Rng, f: &str) -> String {
    if rng.gen_bool(0.5) {
        format!("The {f} bothered me.")
    } else {
        format!("I disliked the {f}.")
    }
}

pub fn generate(spec: &SyntheticSpec) -> (Vec<RawReviewRecord>, Vec<ItemRecord>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let max_titles = TITLE_ADJ.len() * TITLE_NOUN.len();
    let n_items = spec.items.min(max_titles);
    let mut combos: Vec<(usize, usize)> =
        (0..TITLE_ADJ.len()).flat_map(|a| (0..TITLE_NOUN.len()).map(move |n| (a, n))).collect();
    combos.shuffle(&mut rng);
    let items: Vec<ItemRecord> = combos[..n_items]
        .iter()
        .enumerate()
        .map(|(i, (a, n))| {
            let year = rng.gen_range(1950..=2022);
            let genre: BTreeSet<&str> = (0..rng.gen_range(1..=2)).map(|_| *GENRES.choose(&mut rng).unwrap()).collect();
            ItemRecord {
                item_id: format!("m{i:04}"),
                title: format!("{} {} ({year})", TITLE_ADJ[*a], TITLE_NOUN[*n]),
                genre: genre.into_iter().map(str::to_string).collect(),
                director: vec![person(&mut rng)],
                cast: (0..3).map(|_| person(&mut rng)).collect(),
            }
        })
        .collect();

    let mut reviews = Vec::new();
    for u in 0..spec.users {
        let user_id = format!("u{u:03}");
        let mut feats: Vec<&str> = FEATURES.to_vec();
        feats.shuffle(&mut rng);
        let likes = &feats[..6];
        let dislikes = &feats[6..10];
        let n = rng.gen_range(spec.min_reviews..=spec.max_reviews).min(items.len());
        let chosen: Vec<&ItemRecord> = items.choose_multiple(&mut rng, n).collect();
        let high = rng.gen_range(0..n);
        for (k, item) in chosen.into_iter().enumerate() {
            let rating: u8 = if k == high { rng.gen_range(8..=10) } else { rng.gen_range(1..=10) };
            let mut sentences = Vec::new();
            let (n_like, n_dislike) = match rating {
                8..=10 => (2, rng.gen_range(0..=1)),
                5..=7 => (1, 1),
                _ => (rng.gen_range(0..=1), 2),
            };
            for f in likes.choose_multiple(&mut rng, n_like) {
                sentences.push(like_sentence(&mut rng, f));
            }
            for f in dislikes.choose_multiple(&mut rng, n_dislike) {
                sentences.push(dislike_sentence(&mut rng, f));
            }
            if rng.gen_bool(0.4) {
                let f = FEATURES.choose(&mut rng).unwrap();
                sentences.push(format!("I noticed the {f}."));
            }
            sentences.shuffle(&mut rng);
            if !sentences.iter().any(|s| !s.starts_with("I noticed")) {
                sentences.push(like_sentence(&mut rng, likes[0]));
            }
            reviews.push(RawReviewRecord {
                user_id: user_id.clone(),
                item_id: item.item_id.clone(),
                title: item.title.clone(),
                rating,
                text: sentences.join(" "),
                votes: rng.gen_range(0..50),
            });
        }
    }
    (reviews, items)
}

/// Write `reviews.jsonl` and `items.jsonl` into `dir`.
pub fn write_fixture(dir: &std::path::Path, spec: &SyntheticSpec) -> Result<(), crate::jsonl::JsonlError> {
    let (reviews, items) = generate(spec);
    std::fs::create_dir_all(dir).map_err(|e| crate::jsonl::JsonlError::io(dir, e))?;
    crate::jsonl::write_all(&dir.join("reviews.jsonl"), None, reviews)?;
    crate::jsonl::write_all(&dir.join("items.jsonl"), None, items)
}
