//! The agent abstraction: answer / review / summarize / discuss
//! behaviors behind one trait, with deterministic simulated backends,
//! a generic HTTP backend, and the offline retrieval provider.

mod http;
mod retrieval;
mod sim;

pub use http::HttpAgent;
pub use retrieval::{load_corpus, retrieve, RetrievalDoc};
pub use sim::{AgentProfile, SimWorld, SimulatedAgent};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgentError {
    /// Transport-level failure; the orchestrator treats the agent as a
    /// non-participant, never as a wrong answer.
    #[error("agent unavailable: {0}")]
    Unavailable(String),
    #[error("invalid answer: {0}")]
    InvalidAnswer(String),
}

/// Roster identity of an agent: a dense index plus a display name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentId {
    pub index: usize,
    pub name: String,
}

/// An opaque reference to one image at desk scale: a stable id, a
/// 64-bit content seed standing in for pixel data, and the sample's
/// region/truth labels that simulated backends condition on. Real
/// (HTTP) backends only ever see the id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRef {
    pub id: String,
    pub content_seed: u64,
    pub region_key: String,
    pub truth_text: String,
}

/// The three-part reply every behavior must produce: a location, a
/// confidence percentage, and an explanation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationAnswer {
    pub location_text: String,
    pub confidence_pct: f64,
    pub explanation: String,
}

impl LocationAnswer {
    pub fn new(
        location_text: impl Into<String>,
        confidence_pct: f64,
        explanation: impl Into<String>,
    ) -> Result<Self, AgentError> {
        let location_text = location_text.into();
        let explanation = explanation.into();
        if location_text.is_empty() {
            return Err(AgentError::InvalidAnswer("empty location text".into()));
        }
        if !confidence_pct.is_finite() || !(0.0..=100.0).contains(&confidence_pct) {
            return Err(AgentError::InvalidAnswer(format!(
                "confidence {confidence_pct} outside [0, 100]"
            )));
        }
        if explanation.is_empty() {
            return Err(AgentError::InvalidAnswer("empty explanation".into()));
        }
        Ok(Self {
            location_text,
            confidence_pct,
            explanation,
        })
    }

    /// The canonical wire/accounting form of the three-part reply.
    pub fn canonical_text(&self) -> String {
        format!(
            "location: {}\nconfidence: {}\nexplanation: {}",
            self.location_text, self.confidence_pct, self.explanation
        )
    }
}

/// A reviewer's comment on an answer agent's reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewComment {
    pub reviewer: AgentId,
    pub text: String,
    pub confidence_pct: f64,
}

impl ReviewComment {
    pub fn canonical_text(&self) -> String {
        format!(
            "review by {}: {} (confidence: {})",
            self.reviewer.name, self.text, self.confidence_pct
        )
    }
}

/// One entry of the global dialog history `diag`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub seq: u64,
    pub round: u32,
    pub speaker: AgentId,
    pub answer: LocationAnswer,
}

/// A vision-language agent. Implementations must be deterministic in
/// their construction-time seed and the call inputs; the built-in
/// simulated backend keys every draw by (agent seed, image, stage,
/// round) so call order never matters.
pub trait AgentBackend: Send + Sync {
    fn id(&self) -> &AgentId;

    /// Stage 1: the primary three-part analysis of an image.
    fn answer(
        &self,
        image: &ImageRef,
        retrieval_enabled: bool,
    ) -> Result<LocationAnswer, AgentError>;

    /// Stage 2: critique another agent's reply.
    fn review(
        &self,
        image: &ImageRef,
        subject: &LocationAnswer,
        retrieval_enabled: bool,
    ) -> Result<ReviewComment, AgentError>;

    /// Stage 2: fold reviewer feedback into a refined three-part reply.
    fn summarize(
        &self,
        image: &ImageRef,
        own: &LocationAnswer,
        reviews: &[ReviewComment],
    ) -> Result<LocationAnswer, AgentError>;

    /// Stage 3: speak once in a free-discussion round, given a snapshot
    /// of the dialog so far and the agent's current position.
    fn discuss(
        &self,
        image: &ImageRef,
        snapshot: &[Utterance],
        own_latest: &LocationAnswer,
        round: u32,
    ) -> Result<LocationAnswer, AgentError>;
}

/// A backend that always fails with `Unavailable`; stands in for an
/// unreachable endpoint in failure-path tests and chaos runs.
pub struct OfflineAgent {
    id: AgentId,
}

impl OfflineAgent {
    pub fn new(id: AgentId) -> Self {
        Self { id }
    }
}

impl AgentBackend for OfflineAgent {
    fn id(&self) -> &AgentId {
        &self.id
    }

    fn answer(&self, _: &ImageRef, _: bool) -> Result<LocationAnswer, AgentError> {
        Err(AgentError::Unavailable("offline".into()))
    }

    fn review(
        &self,
        _: &ImageRef,
        _: &LocationAnswer,
        _: bool,
    ) -> Result<ReviewComment, AgentError> {
        Err(AgentError::Unavailable("offline".into()))
    }

    fn summarize(
        &self,
        _: &ImageRef,
        _: &LocationAnswer,
        _: &[ReviewComment],
    ) -> Result<LocationAnswer, AgentError> {
        Err(AgentError::Unavailable("offline".into()))
    }

    fn discuss(
        &self,
        _: &ImageRef,
        _: &[Utterance],
        _: &LocationAnswer,
        _: u32,
    ) -> Result<LocationAnswer, AgentError> {
        Err(AgentError::Unavailable("offline".into()))
    }
}

/// The full set of agents available to one run. Indices are the dense
/// roster order and must match each backend's own id.
pub struct Roster {
    agents: Vec<Box<dyn AgentBackend>>,
}

impl Roster {
    pub fn new(agents: Vec<Box<dyn AgentBackend>>) -> Result<Self, AgentError> {
        for (i, a) in agents.iter().enumerate() {
            if a.id().index != i {
                return Err(AgentError::InvalidAnswer(format!(
                    "roster index {i} holds agent claiming index {}",
                    a.id().index
                )));
            }
        }
        Ok(Self { agents })
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn get(&self, i: usize) -> &dyn AgentBackend {
        self.agents[i].as_ref()
    }

    pub fn names(&self) -> Vec<String> {
        self.agents.iter().map(|a| a.id().name.clone()).collect()
    }
}
