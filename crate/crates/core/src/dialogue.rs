//! Dialogue records shared by the simulators, the engine and the filters.

use serde::{Deserialize, Serialize};

use crate::gateway::{BackendTags, GatewayError};
use crate::persona::Persona;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Seeker,
    Recommender,
}

impl Role {
    pub fn label(self) -> &'static str {
        match self {
            Role::Seeker => "Seeker",
            Role::Recommender => "Recommender",
        }
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// One utterance. Recommender turns carry their reasoning and, when they
/// recommend, the resolved item and the candidate ids it was chosen from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub think: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub movie_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub movie_line: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub target_forced: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accepted_item_id: Option<String>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub terminal: bool,
}

impl Turn {
    pub fn seeker(text: impl Into<String>) -> Self {
        Self::plain(Role::Seeker, text.into())
    }

    pub fn recommender(text: impl Into<String>) -> Self {
        Self::plain(Role::Recommender, text.into())
    }

    fn plain(role: Role, text: String) -> Self {
        Turn {
            role,
            text,
            think: None,
            movie_id: None,
            movie_line: None,
            candidates: None,
            target_forced: false,
            accepted_item_id: None,
            terminal: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Outcome {
    AcceptedTarget,
    /// The seeker ended the dialogue on a non-target recommendation.
    AcceptedOther {
        item_id: String,
    },
    Aborted {
        reason: String,
        transport: bool,
    },
    MaxTurns,
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::AcceptedTarget => "accepted-target",
            Outcome::AcceptedOther { .. } => "accepted-other",
            Outcome::Aborted { .. } => "aborted",
            Outcome::MaxTurns => "max-turns",
        }
    }

    /// Whether the seeker ended the dialogue.
    pub fn is_terminal(&self) -> bool {
        matches!(self, Outcome::AcceptedTarget | Outcome::AcceptedOther { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    pub dialogue_id: String,
    pub user_id: String,
    pub replica: usize,
    pub target_item_id: String,
    pub target_title: String,
    pub persona: Persona,
    pub turns: Vec<Turn>,
    pub outcome: Outcome,
    pub seed: u64,
    pub backend: BackendTags,
}

impl Dialogue {
    /// Item ids recommended so far, in order.
    pub fn recommended(&self) -> impl Iterator<Item = &str> {
        self.turns.iter().filter_map(|t| t.movie_id.as_deref())
    }
}

/// Role-prefixed transcript, one utterance per line.
pub fn render_context(turns: &[Turn]) -> String {
    turns.iter().map(|t| format!("{}: {}", t.role.label(), t.text)).collect::<Vec<_>>().join("\n")
}

/// Failures inside one simulator step. Every variant aborts the dialogue.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("empty utterance after {attempts} attempt(s)")]
    EmptyUtterance { attempts: usize },
    #[error("seeker ended the dialogue before any recommendation")]
    PrematureEnd,
    #[error("unparseable recommender output after {attempts} attempt(s): {reason}")]
    Parse { attempts: usize, reason: String },
    #[error("recommended title {0:?} is not among the candidates")]
    OffCandidate(String),
    #[error("candidate pool is empty")]
    EmptyPool,
}

impl SimError {
    pub fn is_transport(&self) -> bool {
        matches!(self, SimError::Gateway(GatewayError::Transport { .. }))
    }
}
