//! Wire types. Field names are camelCase; question payloads never carry the key.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use placement_core::engine::{ElementBreakdown, SessionOutcome, SessionState, TestSession};
use placement_core::ims::{CompetenceDefinition, CompetencyElement, CompetencyRecord, ItemDefinition, LearnerProfile};

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CreateSession {
    pub learner_ref: String,
    pub competence_ref: String,
    #[serde(default)]
    pub mode: Option<String>,
    /// Seed for shuffling each question's choices; authored order when absent.
    #[serde(default)]
    pub shuffle_seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SubmitAnswer {
    pub item_id: String,
    pub choice_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoicePayload {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QuestionPayload {
    pub item_id: String,
    pub body: String,
    pub choices: Vec<ChoicePayload>,
    /// 1-based position of the question in the test.
    pub position: usize,
    pub total: usize,
}

impl QuestionPayload {
    pub fn new(item: &ItemDefinition, index: usize, total: usize, shuffle_seed: Option<u64>) -> Self {
        let mut choices: Vec<ChoicePayload> = item
            .choices
            .iter()
            .map(|c| ChoicePayload {
                id: c.id.clone(),
                text: c.text.clone(),
            })
            .collect();
        if let Some(seed) = shuffle_seed {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(&item.id));
            choices.shuffle(&mut rng);
        }
        Self {
            item_id: item.id.clone(),
            body: item.body.clone(),
            choices,
            position: index + 1,
            total,
        }
    }

    /// The question awaiting an answer in `session`, if any.
    pub fn current(session: &TestSession) -> Option<Self> {
        session
            .current_item()
            .map(|item| Self::new(item, session.cursor(), session.total_questions(), session.shuffle_seed()))
    }
}

// Stable per-item salt so a resumed session shows the same order.
fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionCreated {
    pub session_id: String,
    pub total_questions: usize,
    pub first_question: QuestionPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, rename_all = "camelCase")]
pub enum AnswerAccepted {
    #[serde(rename_all = "camelCase")]
    Next { next_question: QuestionPayload },
    Completed { completed: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionView {
    pub session_id: String,
    pub learner_ref: String,
    pub competence_ref: String,
    pub mode: String,
    pub state: SessionState,
    pub answered: usize,
    pub total_questions: usize,
    pub current_question: Option<QuestionPayload>,
}

impl SessionView {
    pub fn new(session: &TestSession) -> Self {
        Self {
            session_id: session.id().to_string(),
            learner_ref: session.learner_ref().to_string(),
            competence_ref: session.competence_ref().to_string(),
            mode: session.mode().as_str().to_string(),
            state: session.state(),
            answered: session.cursor(),
            total_questions: session.total_questions(),
            current_question: QuestionPayload::current(session),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ElementResult {
    pub element_id: String,
    pub answered: usize,
    pub correct: usize,
    pub fraction_correct: Option<f64>,
}

impl From<&ElementBreakdown> for ElementResult {
    fn from(e: &ElementBreakdown) -> Self {
        Self {
            element_id: e.element_id.clone(),
            answered: e.answered,
            correct: e.correct,
            fraction_correct: e.fraction_correct,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionResult {
    pub session_id: String,
    pub theta: f64,
    pub standard_error: f64,
    pub status: String,
    pub iterations: usize,
    pub per_element: Vec<ElementResult>,
}

impl SessionResult {
    pub fn new(session_id: &str, outcome: &SessionOutcome) -> Self {
        Self {
            session_id: session_id.to_string(),
            theta: outcome.estimate.theta,
            standard_error: outcome.estimate.standard_error,
            status: outcome.estimate.status.as_str().to_string(),
            iterations: outcome.estimate.iterations,
            per_element: outcome.per_element.iter().map(ElementResult::from).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CompetenceSummary {
    pub id: String,
    pub title: String,
    pub prerequisites: Vec<String>,
    pub required_questions: u32,
}

impl From<&CompetenceDefinition> for CompetenceSummary {
    fn from(c: &CompetenceDefinition) -> Self {
        Self {
            id: c.id.clone(),
            title: c.title.clone(),
            prerequisites: c.prerequisites.clone(),
            required_questions: c.required_questions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CompetenceView {
    pub id: String,
    pub title: String,
    pub description: String,
    pub prerequisites: Vec<String>,
    pub required_questions: u32,
    pub choices_per_question: u32,
    pub elements: Vec<CompetencyElement>,
    pub linked_items: usize,
}

impl CompetenceView {
    pub fn new(c: &CompetenceDefinition, linked_items: usize) -> Self {
        Self {
            id: c.id.clone(),
            title: c.title.clone(),
            description: c.description.clone(),
            prerequisites: c.prerequisites.clone(),
            required_questions: c.required_questions,
            choices_per_question: c.choices_per_question,
            elements: c.elements.clone(),
            linked_items,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RecordView {
    pub competence_ref: String,
    pub theta: f64,
    pub standard_error: f64,
    pub status: String,
    pub items: u32,
    pub timestamp: String,
}

impl From<&CompetencyRecord> for RecordView {
    fn from(r: &CompetencyRecord) -> Self {
        Self {
            competence_ref: r.competence_ref.clone(),
            theta: r.theta,
            standard_error: r.standard_error,
            status: r.status.as_str().to_string(),
            items: r.items,
            timestamp: r.timestamp.to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LearnerView {
    pub id: String,
    pub name: String,
    pub affiliation: String,
    pub records: Vec<RecordView>,
}

impl From<&LearnerProfile> for LearnerView {
    fn from(p: &LearnerProfile) -> Self {
        Self {
            id: p.id.clone(),
            name: p.identification.name.clone(),
            affiliation: p.identification.affiliation.clone(),
            records: p.records.iter().map(RecordView::from).collect(),
        }
    }
}
