//! Synthesis of conversational-recommendation dialogues from real reviews.
//!
//! A persona-grounded seeker simulator and a retrieval-backed recommender
//! simulator talk through a pluggable chat-completion [`gateway`]; the
//! resulting dialogues are filtered and scored by [`filters`] and [`metrics`].

pub mod abstraction;
pub mod corpus;
pub mod dialogue;
pub mod engine;
pub mod filters;
pub mod gateway;
pub mod jsonl;
pub mod metrics;
pub mod persona;
pub mod pipeline;
pub mod prompts;
pub mod recommender;
pub mod seeker;
pub mod synthetic;
pub mod text;

pub use abstraction::Abstract;
pub use corpus::{ItemReviewDb, UserReviewDb};
pub use dialogue::{Dialogue, Outcome, Role, Turn};
pub use engine::{RunReport, SessionConfig};
pub use filters::{FilterConfig, FilterReport, FilterVerdict, Rule};
pub use gateway::Gateway;
pub use metrics::{MetricsConfig, MetricsReport};
pub use persona::Persona;
