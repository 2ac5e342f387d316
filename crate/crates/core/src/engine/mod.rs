//! Placement-test sessions.
//!
//! A [`TestSession`] serves one question at a time, scores each answer 0/1,
//! estimates ability once the last question is answered and produces a
//! [`CompetencyRecord`] for the learner profile. Every transition is recorded
//! as a [`SessionEvent`]; replaying the events through [`resume_session`]
//! rebuilds the same session.

mod form;
mod log;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ims::{CompetenceDefinition, CompetencyRecord, ItemDefinition, LearnerProfile, ModelError};
use crate::irt::{estimate_ability, AbilityEstimate, EstimationConfig, EstimationStatus, IrtError, Response};

pub use form::{build_form, linked_items, select_max_information, SelectionMode};
pub use log::{read_events, replay, resume_session, EventKind, SessionEvent, SessionLog};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("competence '{competence}' needs {required} items but only {available} are linked")]
    InsufficientItems {
        competence: String,
        required: usize,
        available: usize,
    },
    #[error("session '{0}' is already completed")]
    Completed(String),
    #[error("expected an answer to item '{expected}', got '{got}'")]
    OutOfOrder { expected: String, got: String },
    #[error("item '{item}' has no choice '{choice}'")]
    UnknownChoice { item: String, choice: String },
    #[error("session '{0}' not found")]
    NotFound(String),
    #[error("session log is inconsistent at event {seq}: {message}")]
    CorruptLog { seq: u64, message: String },
    #[error("estimation failed: {0}")]
    Estimation(#[from] IrtError),
    #[error(transparent)]
    Profile(#[from] ModelError),
    #[error("session log I/O: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    InProgress,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredAnswer {
    pub item_id: String,
    pub choice_id: String,
    pub u: u8,
}

/// Fraction of correct answers among the items linked to one competency element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementBreakdown {
    pub element_id: String,
    pub answered: usize,
    pub correct: usize,
    /// `None` when no served item belonged to the element.
    pub fraction_correct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOutcome {
    pub estimate: AbilityEstimate,
    pub per_element: Vec<ElementBreakdown>,
    pub record: CompetencyRecord,
}

/// What the learner sees next after an accepted answer.
#[derive(Debug, Clone, PartialEq)]
pub enum Progress {
    Next(String),
    Completed,
}

#[derive(Debug, Clone)]
pub struct TestSession {
    id: String,
    learner_ref: String,
    competence_ref: String,
    mode: SelectionMode,
    config: EstimationConfig,
    shuffle_seed: Option<u64>,
    total: usize,
    element_ids: Vec<String>,
    pool: Vec<ItemDefinition>,
    form: Vec<String>,
    answers: Vec<ScoredAnswer>,
    responses: Vec<Response>,
    outcome: Option<SessionOutcome>,
    events: Vec<SessionEvent>,
}

/// Everything needed to open a session, as recorded in its first event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSpec {
    pub session_id: String,
    pub learner_ref: String,
    pub competence_ref: String,
    pub mode: SelectionMode,
    pub config: EstimationConfig,
    #[serde(default)]
    pub shuffle_seed: Option<u64>,
}

impl TestSession {
    /// Opens a session and serves its first question.
    pub fn start(
        spec: SessionSpec,
        competence: &CompetenceDefinition,
        bank: &[ItemDefinition],
        now: DateTime<Utc>,
    ) -> Result<Self, EngineError> {
        spec.config.validate()?;
        let form: Vec<String> = build_form(competence, bank, spec.mode, spec.config.theta_initial)?
            .into_iter()
            .map(|i| i.id.clone())
            .collect();
        let pool: Vec<ItemDefinition> = linked_items(competence, bank)?.into_iter().cloned().collect();
        let total = competence.required_questions as usize;
        let mut session = Self {
            id: spec.session_id.clone(),
            learner_ref: spec.learner_ref.clone(),
            competence_ref: competence.id.clone(),
            mode: spec.mode,
            config: spec.config,
            shuffle_seed: spec.shuffle_seed,
            total,
            element_ids: competence.elements.iter().map(|e| e.id.clone()).collect(),
            pool,
            form: form.clone(),
            answers: Vec::new(),
            responses: Vec::new(),
            outcome: None,
            events: Vec::new(),
        };
        session.push_event(
            now,
            EventKind::Created {
                spec: SessionSpec {
                    competence_ref: competence.id.clone(),
                    ..spec
                },
                total_questions: total,
                form,
            },
        );
        session.serve_current(now);
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn learner_ref(&self) -> &str {
        &self.learner_ref
    }

    pub fn competence_ref(&self) -> &str {
        &self.competence_ref
    }

    pub fn mode(&self) -> SelectionMode {
        self.mode
    }

    pub fn config(&self) -> &EstimationConfig {
        &self.config
    }

    pub fn shuffle_seed(&self) -> Option<u64> {
        self.shuffle_seed
    }

    /// Number of questions in the test (`n`).
    pub fn total_questions(&self) -> usize {
        self.total
    }

    /// Number of answered questions.
    pub fn cursor(&self) -> usize {
        self.answers.len()
    }

    pub fn state(&self) -> SessionState {
        if self.answers.len() == self.total {
            SessionState::Completed
        } else {
            SessionState::InProgress
        }
    }

    /// Item ids served or scheduled so far. In fixed mode this is the full form.
    pub fn form(&self) -> &[String] {
        &self.form
    }

    pub fn answers(&self) -> &[ScoredAnswer] {
        &self.answers
    }

    pub fn responses(&self) -> &[Response] {
        &self.responses
    }

    pub fn outcome(&self) -> Option<&SessionOutcome> {
        self.outcome.as_ref()
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    pub fn item(&self, id: &str) -> Option<&ItemDefinition> {
        self.pool.iter().find(|i| i.id == id)
    }

    /// The question awaiting an answer, if the session is in progress.
    pub fn current_item(&self) -> Option<&ItemDefinition> {
        if self.state() == SessionState::Completed {
            return None;
        }
        self.form.get(self.cursor()).and_then(|id| self.item(id))
    }

    /// Scores an answer to the current question and advances the session.
    pub fn submit_answer(&mut self, item_id: &str, choice_id: &str, now: DateTime<Utc>) -> Result<Progress, EngineError> {
        let item = match self.current_item() {
            None => return Err(EngineError::Completed(self.id.clone())),
            Some(i) if i.id != item_id => {
                return Err(EngineError::OutOfOrder {
                    expected: i.id.clone(),
                    got: item_id.to_string(),
                })
            }
            Some(i) => i,
        };
        if !item.has_choice(choice_id) {
            return Err(EngineError::UnknownChoice {
                item: item_id.to_string(),
                choice: choice_id.to_string(),
            });
        }
        let correct = item.is_correct(choice_id);
        let response = Response::new(item.scale, correct);
        let answer = ScoredAnswer {
            item_id: item_id.to_string(),
            choice_id: choice_id.to_string(),
            u: u8::from(correct),
        };
        self.push_event(
            now,
            EventKind::AnswerScored {
                item_id: answer.item_id.clone(),
                choice_id: answer.choice_id.clone(),
                u: answer.u,
            },
        );
        self.answers.push(answer);
        self.responses.push(response);

        if self.cursor() == self.total {
            self.finalize(now)?;
            return Ok(Progress::Completed);
        }
        if self.mode == SelectionMode::AdaptiveMaxInfo {
            let theta = self.provisional_theta()?;
            let candidates: Vec<&ItemDefinition> = self.pool.iter().collect();
            let next = select_max_information(theta, &candidates, &self.form)
                .map(|i| i.id.clone())
                .expect("pool holds at least n items");
            self.form.push(next);
        }
        self.serve_current(now);
        Ok(Progress::Next(self.form[self.cursor()].clone()))
    }

    fn provisional_theta(&self) -> Result<f64, EngineError> {
        let est = estimate_ability(&self.responses, &self.config)?;
        Ok(match est.status {
            EstimationStatus::NonFiniteMle => self.config.theta_initial,
            _ => est.theta,
        })
    }

    fn finalize(&mut self, now: DateTime<Utc>) -> Result<(), EngineError> {
        let estimate = estimate_ability(&self.responses, &self.config)?;
        let per_element = self
            .element_ids
            .iter()
            .map(|element| {
                let (answered, correct) = self
                    .answers
                    .iter()
                    .filter(|a| self.item(&a.item_id).is_some_and(|i| &i.element_ref == element))
                    .fold((0, 0), |(n, k), a| (n + 1, k + usize::from(a.u)));
                ElementBreakdown {
                    element_id: element.clone(),
                    answered,
                    correct,
                    fraction_correct: (answered > 0).then(|| correct as f64 / answered as f64),
                }
            })
            .collect();
        let record = CompetencyRecord {
            competence_ref: self.competence_ref.clone(),
            theta: estimate.theta,
            standard_error: estimate.standard_error,
            status: estimate.status,
            items: self.total as u32,
            timestamp: now,
        };
        self.push_event(
            now,
            EventKind::Estimated {
                theta: estimate.theta,
                standard_error: estimate.standard_error,
                status: estimate.status,
                iterations: estimate.iterations,
            },
        );
        self.outcome = Some(SessionOutcome {
            estimate,
            per_element,
            record,
        });
        Ok(())
    }

    fn serve_current(&mut self, now: DateTime<Utc>) {
        let position = self.cursor();
        if let Some(item_id) = self.form.get(position).cloned() {
            self.push_event(now, EventKind::QuestionServed { item_id, position });
        }
    }

    fn push_event(&mut self, timestamp: DateTime<Utc>, kind: EventKind) {
        let seq = self.events.len() as u64;
        self.events.push(SessionEvent { seq, timestamp, kind });
    }
}

/// Appends the session's competency record to `profile`.
pub fn apply_to_profile(outcome: &SessionOutcome, profile: &mut LearnerProfile) -> Result<(), EngineError> {
    profile.push_record(outcome.record.clone())?;
    Ok(())
}
