//! Prompt templates and the renderers that fill them.
//!
//! Templates use `{name}` placeholders. Substitution is single-pass, so
//! braces inside substituted values are never re-expanded.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::abstraction::Abstract;
use crate::corpus::{ItemEntry, ItemRecord};

pub const USER_ABSTRACT_TEMPLATE: &str = "\
Given a review written by you, summarize what you liked and disliked about the movie, under [Like] and [Dislike] respectively. If there is nothing to mention about like/dislike, simply write \"None.\" under the corresponding tag.

Here is the movie review written by you:
{review}";

pub const ITEM_ABSTRACT_TEMPLATE: &str = "\
Given some popular reviews about {movie title}, describe what people liked and disliked about the movie, under [Like] and [Dislike] respectively. If there is nothing to mention about like/dislike, simply write \"None.\" under the corresponding tag.

Here are some basic information about the movie and reviews about it:
Movie Title: {movie title}
Genre: {genre}
Director: {director}
Cast: {cast}
Reviews:
{reviews}";

pub const SEEKER_TEMPLATE: &str = "\
You are a Seeker who interacts with a Recommender to get a movie recommendation that suits your preferences well. You will be given a dialogue context, and you must follow the instructions below to interact with the Recommender:

- The recommender may ask for your preference or recommend a movie to you.
- In the beginning, express your general preference on movies based on your past reviews about movies you have watched before.
- If you are recommended a movie which is not {gt movie title}, you should reject it with a reason based on your thought about the recommended movie. Also, express some common features of the movies you have watched before and you should be recommended (DO NOT explicitly mention the movie title!).
- If you are recommended {gt movie title}, you should accept it as if you haven't watched it before, and end the conversation by generating [EOD] token.
- Continue the conversation for at least six turns.

Here are your reviews about movies you have watched before:
{user persona}

Some features of the movie you should be recommended:
{gt abstract}

{rec movie abstract}

Here is the dialogue context:
{dialogue context}";

pub const RECOMMENDER_TEMPLATE: &str = "\
You are a Recommender who recommends a Seeker a movie that he/she will enjoy, among the three candidates and based on the dialogue context given. Follow the instructions below to complete the task:

- In the beginning of the conversation, engage with the Seeker to discover his/her movie preferences (regardless of the given three candidates). Follow this format:
  Think: (think about which question to ask the seeker)
  Recommender: (utterance that asks for the seeker's movie preference)
- After some interactions, choose and suggest a movie from the three candidates and make the recommendation in the specified format:
  Think: (think about the seeker's movie preference based on the context)
  Movie: (Movie title (Year))
  Recommender: (response to the seeker's utterance)
- Do not recommend a movie that has been mentioned before in the dialogue context.

Here are the three movie candidates:
{k movies info}

Here is the dialogue context:
{dialogue context}

Think:";

/// Section headers the renderers emit; the mock backend keys on them.
pub const PERSONA_HEADER: &str = "Here are your reviews about movies you have watched before:";
pub const TARGET_FEATURES_HEADER: &str = "Some features of the movie you should be recommended:";
pub const RESPONSIVE_HEADER: &str = "Here is your review about the recommended movie";
pub const CONTEXT_HEADER: &str = "Here is the dialogue context:";
pub const CANDIDATES_HEADER: &str = "Here are the three movie candidates:";
pub const USER_REVIEW_HEADER: &str = "Here is the movie review written by you:";
pub const ITEM_REVIEWS_HEADER: &str = "Reviews:";
pub const KNOWLEDGE_TITLE_PREFIX: &str = "Movie Title: ";

pub const ABSTRACT_FORMAT_REMINDER: &str =
    "\n\nFormat reminder: answer with a [Like] section and a [Dislike] section, writing \"None.\" under a tag with nothing to mention.";
pub const REASONING_FORMAT_REMINDER: &str =
    "\n\nFormat reminder: reply with a line starting with \"Think:\", then (when recommending) a line starting with \"Movie:\", then a line starting with \"Recommender:\".";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("template {name} is missing placeholder {{{placeholder}}}")]
    MissingPlaceholder { name: String, placeholder: String },
    #[error("cannot read template {path}: {message}")]
    Read { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: String,
    pub text: String,
}

impl PromptTemplate {
    pub fn new(name: &str, text: &str, required: &[&str]) -> Result<Self, TemplateError> {
        for p in required {
            if !text.contains(&format!("{{{p}}}")) {
                return Err(TemplateError::MissingPlaceholder { name: name.into(), placeholder: (*p).into() });
            }
        }
        Ok(Self { name: name.into(), text: text.into() })
    }

    pub fn render(&self, values: &[(&str, &str)]) -> String {
        let map: HashMap<&str, &str> = values.iter().copied().collect();
        let mut out = String::with_capacity(self.text.len() + 256);
        let mut rest = self.text.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            match after.find('}') {
                Some(close) if map.contains_key(&after[..close]) => {
                    out.push_str(map[&after[..close]]);
                    rest = &after[close + 1..];
                }
                _ => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        out
    }
}

/// The four templates used by the pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSet {
    pub user_abstract: PromptTemplate,
    pub item_abstract: PromptTemplate,
    pub seeker: PromptTemplate,
    pub recommender: PromptTemplate,
}

const USER_KEYS: &[&str] = &["review"];
const ITEM_KEYS: &[&str] = &["movie title", "genre", "director", "cast", "reviews"];
const SEEKER_KEYS: &[&str] =
    &["gt movie title", "user persona", "gt abstract", "rec movie abstract", "dialogue context"];
const RECOMMENDER_KEYS: &[&str] = &["k movies info", "dialogue context"];

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            user_abstract: PromptTemplate::new("user_abstract", USER_ABSTRACT_TEMPLATE, USER_KEYS).unwrap(),
            item_abstract: PromptTemplate::new("item_abstract", ITEM_ABSTRACT_TEMPLATE, ITEM_KEYS).unwrap(),
            seeker: PromptTemplate::new("seeker", SEEKER_TEMPLATE, SEEKER_KEYS).unwrap(),
            recommender: PromptTemplate::new("recommender", RECOMMENDER_TEMPLATE, RECOMMENDER_KEYS).unwrap(),
        }
    }
}

/// Optional override paths; unset entries keep the shipped default.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplatePaths {
    pub user_abstract: Option<String>,
    pub item_abstract: Option<String>,
    pub seeker: Option<String>,
    pub recommender: Option<String>,
}

impl PromptSet {
    pub fn load(paths: &TemplatePaths, base: &Path) -> Result<Self, TemplateError> {
        let mut set = PromptSet::default();
        let load = |slot: &mut PromptTemplate, path: &Option<String>, keys: &[&str]| -> Result<(), TemplateError> {
            if let Some(p) = path {
                let full = base.join(p);
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| TemplateError::Read { path: full.display().to_string(), message: e.to_string() })?;
                *slot = PromptTemplate::new(&slot.name.clone(), text.trim_end(), keys)?;
            }
            Ok(())
        };
        load(&mut set.user_abstract, &paths.user_abstract, USER_KEYS)?;
        load(&mut set.item_abstract, &paths.item_abstract, ITEM_KEYS)?;
        load(&mut set.seeker, &paths.seeker, SEEKER_KEYS)?;
        load(&mut set.recommender, &paths.recommender, RECOMMENDER_KEYS)?;
        Ok(set)
    }
}

/// Canonical `[Like]` / `[Dislike]` rendering; absent fields render as "None.".
pub fn render_abstract(a: &Abstract) -> String {
    format!("[Like]\n{}\n[Dislike]\n{}", a.like.as_deref().unwrap_or("None."), a.dislike.as_deref().unwrap_or("None."))
}

/// Item knowledge text: title, genre, director, cast, then the like/dislike
/// abstract when one exists.
pub fn render_knowledge(entry: &ItemEntry) -> String {
    let mut s = render_metadata(&entry.item);
    if let Some(k) = &entry.knowledge {
        s.push('\n');
        s.push_str(&render_abstract(k));
    }
    s
}

fn render_metadata(item: &ItemRecord) -> String {
    format!(
        "{KNOWLEDGE_TITLE_PREFIX}{}\nGenre: {}\nDirector: {}\nCast: {}",
        item.title,
        item.genre.join(", "),
        item.director.join(", "),
        item.cast.join(", ")
    )
}
