//! Item banks, competence definitions and learner profiles.
//!
//! The three XML formats are small documented subsets of IMS QTI (items),
//! IMS RDCEO (competences) and IMS LIP (learner profiles); see `FORMATS.md`
//! at the repository root for the element-level layout.

mod repository;
mod validate;
mod xml;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::irt::{EstimationStatus, ItemParameters};

pub use repository::{write_profile_atomic, Repository, RepositoryError};
pub use validate::{validate_repository, Finding, Severity, ValidationReport};
pub use xml::{
    parse_competence, parse_item_bank, parse_profile, serialize_competence, serialize_item_bank, serialize_profile,
    DocumentKind,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("malformed XML at line {line}: {message}")]
    Xml { line: usize, message: String },
    #[error("invalid {entity} '{id}': {field}: {message}")]
    Invalid {
        entity: &'static str,
        id: String,
        field: &'static str,
        message: String,
    },
}

impl ModelError {
    pub(crate) fn invalid(entity: &'static str, id: &str, field: &'static str, message: impl Into<String>) -> Self {
        Self::Invalid {
            entity,
            id: id.to_string(),
            field,
            message: message.into(),
        }
    }
}

macro_rules! string_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(&self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }

            pub fn parse(s: &str) -> Option<Self> {
                match s {
                    $($text => Some($name::$variant),)+
                    _ => None,
                }
            }
        }
    };
}

string_enum!(
    /// Cognitive ability verb applied to a competency element.
    Ability { Memorize => "memorize", Apply => "apply", Synthesize => "synthesize", Evaluate => "evaluate" }
);
string_enum!(ElementKind { Knowledge => "knowledge", Skill => "skill", Attitude => "attitude" });
string_enum!(KnowledgeKind { Concept => "concept", Fact => "fact", Principle => "principle", Procedure => "procedure" });
string_enum!(Context { Familiar => "familiar", Unfamiliar => "unfamiliar" });
string_enum!(Autonomy { Assisted => "assisted", Autonomous => "autonomous" });
string_enum!(Scope { Partial => "partial", Total => "total" });

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeItem {
    pub label: String,
    pub kind: KnowledgeKind,
}

/// Expected performance of a competency element. Ordinals run 1 through 5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Performance {
    pub context: Context,
    pub complexity: u8,
    pub autonomy: Autonomy,
    pub scope: Scope,
    pub frequency: u8,
}

pub const ORDINAL_RANGE: std::ops::RangeInclusive<u8> = 1..=5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompetencyElement {
    pub id: String,
    pub ability: Ability,
    pub kind: ElementKind,
    pub knowledge: Vec<KnowledgeItem>,
    pub performance: Performance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompetenceDefinition {
    pub id: String,
    pub title: String,
    pub description: String,
    pub prerequisites: Vec<String>,
    pub elements: Vec<CompetencyElement>,
    /// Questions per placement test (`n`).
    pub required_questions: u32,
    /// Choices per question (`m`).
    pub choices_per_question: u32,
}

impl CompetenceDefinition {
    pub fn element(&self, id: &str) -> Option<&CompetencyElement> {
        self.elements.iter().find(|e| e.id == id)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |field, msg: &str| Err(ModelError::invalid("competence", &self.id, field, msg));
        if self.id.is_empty() {
            return err("identifier", "must not be empty");
        }
        if self.elements.is_empty() {
            return err("elements", "at least one competency element is required");
        }
        if self.required_questions < 1 {
            return err("questions", "must be >= 1");
        }
        if self.choices_per_question < 2 {
            return err("choices", "must be >= 2");
        }
        for (i, e) in self.elements.iter().enumerate() {
            if self.elements[..i].iter().any(|o| o.id == e.id) {
                return Err(ModelError::invalid("element", &e.id, "identifier", "duplicate element identifier"));
            }
            e.validate()?;
        }
        Ok(())
    }
}

impl CompetencyElement {
    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |field, msg: &str| Err(ModelError::invalid("element", &self.id, field, msg));
        if self.id.is_empty() {
            return err("identifier", "must not be empty");
        }
        match self.kind {
            ElementKind::Skill if self.knowledge.is_empty() => {
                return err("knowledge", "a skill element requires at least one knowledge item")
            }
            ElementKind::Attitude if !self.knowledge.is_empty() => {
                return err("knowledge", "an attitude element carries no knowledge items")
            }
            _ => {}
        }
        let p = &self.performance;
        if !ORDINAL_RANGE.contains(&p.complexity) {
            return err("complexity", "must be within 1..=5");
        }
        if !ORDINAL_RANGE.contains(&p.frequency) {
            return err("frequency", "must be within 1..=5");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub id: String,
    pub text: String,
}

/// A multiple-choice question with its IRT scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemDefinition {
    pub id: String,
    pub body: String,
    pub choices: Vec<Choice>,
    pub correct_choice: String,
    pub scale: ItemParameters,
    /// Relevance weight in `[0, 1]` used when the bank holds more items than a test needs.
    pub importance: f64,
    pub element_ref: String,
    pub competence_ref: String,
}

impl ItemDefinition {
    pub fn is_correct(&self, choice_id: &str) -> bool {
        self.correct_choice == choice_id
    }

    pub fn has_choice(&self, choice_id: &str) -> bool {
        self.choices.iter().any(|c| c.id == choice_id)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |field, msg: &str| Err(ModelError::invalid("item", &self.id, field, msg));
        if self.id.is_empty() {
            return err("identifier", "must not be empty");
        }
        if self.choices.len() < 2 {
            return err("choice", "at least two choices are required");
        }
        for (i, c) in self.choices.iter().enumerate() {
            if self.choices[..i].iter().any(|o| o.id == c.id) {
                return Err(ModelError::invalid(
                    "item",
                    &self.id,
                    "choice",
                    format!("duplicate choice identifier '{}'", c.id),
                ));
            }
        }
        if !self.has_choice(&self.correct_choice) {
            return Err(ModelError::invalid(
                "item",
                &self.id,
                "correct",
                format!("'{}' is not one of the listed choices", self.correct_choice),
            ));
        }
        if !(0.0..=1.0).contains(&self.importance) {
            return err("importance", "must be within [0, 1]");
        }
        if self.element_ref.is_empty() {
            return err("elementRef", "must not be empty");
        }
        if self.competence_ref.is_empty() {
            return err("competenceRef", "must not be empty");
        }
        Ok(())
    }
}

/// Items sharing one competence, as stored in one item-bank document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ItemBank {
    pub competence_ref: Option<String>,
    pub items: Vec<ItemDefinition>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Identification {
    pub name: String,
    pub affiliation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetencyRecord {
    pub competence_ref: String,
    pub theta: f64,
    pub standard_error: f64,
    pub status: EstimationStatus,
    pub items: u32,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerProfile {
    pub id: String,
    pub identification: Identification,
    pub records: Vec<CompetencyRecord>,
}

impl LearnerProfile {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            identification: Identification::default(),
            records: Vec::new(),
        }
    }

    /// Latest record for a competence, if any.
    pub fn latest(&self, competence_ref: &str) -> Option<&CompetencyRecord> {
        self.records
            .iter()
            .filter(|r| r.competence_ref == competence_ref)
            .max_by_key(|r| r.timestamp)
    }

    /// Appends a record, rejecting a second record for the same competence and timestamp.
    pub fn push_record(&mut self, record: CompetencyRecord) -> Result<(), ModelError> {
        validate_record(&self.id, &record)?;
        if self
            .records
            .iter()
            .any(|r| r.competence_ref == record.competence_ref && r.timestamp == record.timestamp)
        {
            return Err(ModelError::invalid(
                "learner",
                &self.id,
                "competencyRecord",
                format!("duplicate record for '{}' at {}", record.competence_ref, record.timestamp.to_rfc3339()),
            ));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.id.is_empty() {
            return Err(ModelError::invalid("learner", &self.id, "identifier", "must not be empty"));
        }
        for (i, r) in self.records.iter().enumerate() {
            validate_record(&self.id, r)?;
            if self.records[..i]
                .iter()
                .any(|o| o.competence_ref == r.competence_ref && o.timestamp == r.timestamp)
            {
                return Err(ModelError::invalid(
                    "learner",
                    &self.id,
                    "competencyRecord",
                    format!("duplicate record for '{}'", r.competence_ref),
                ));
            }
        }
        Ok(())
    }
}

fn validate_record(learner: &str, r: &CompetencyRecord) -> Result<(), ModelError> {
    let err = |field, msg: &str| Err(ModelError::invalid("learner", learner, field, msg));
    if r.competence_ref.is_empty() {
        return err("competenceRef", "must not be empty");
    }
    if !(r.theta.is_finite() && (-3.0..=3.0).contains(&r.theta)) {
        return err("theta", "must be within [-3, 3]");
    }
    if !(r.standard_error.is_finite() && r.standard_error >= 0.0) {
        return err("stderr", "must be finite and non-negative");
    }
    Ok(())
}
