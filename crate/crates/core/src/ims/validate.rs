use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;

use super::{CompetenceDefinition, ItemDefinition, LearnerProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Error,
}

/// One problem found across a repository.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    DuplicateCompetence { competence: String },
    DuplicateItem { item: String },
    DuplicateLearner { learner: String },
    UnresolvedPrerequisite { competence: String, prerequisite: String },
    /// Competence ids along one prerequisite cycle, sorted.
    PrerequisiteCycle { competences: Vec<String> },
    UnresolvedCompetenceRef { item: String, competence: String },
    UnresolvedElementRef { item: String, competence: String, element: String },
    ElementWithoutItems { competence: String, element: String },
    InsufficientItems { competence: String, required: u32, available: usize },
    ChoiceCountMismatch { item: String, expected: u32, found: usize },
    UnknownRecordCompetence { learner: String, competence: String },
}

impl Finding {
    pub fn severity(&self) -> Severity {
        match self {
            Finding::ChoiceCountMismatch { .. } | Finding::UnknownRecordCompetence { .. } => Severity::Warning,
            _ => Severity::Error,
        }
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::DuplicateCompetence { competence } => write!(f, "competence '{competence}' is defined more than once"),
            Finding::DuplicateItem { item } => write!(f, "item '{item}' is defined more than once"),
            Finding::DuplicateLearner { learner } => write!(f, "learner '{learner}' is defined more than once"),
            Finding::UnresolvedPrerequisite { competence, prerequisite } => {
                write!(f, "competence '{competence}' requires unknown competence '{prerequisite}'")
            }
            Finding::PrerequisiteCycle { competences } => {
                write!(f, "prerequisite cycle among: {}", competences.join(", "))
            }
            Finding::UnresolvedCompetenceRef { item, competence } => {
                write!(f, "item '{item}' refers to unknown competence '{competence}'")
            }
            Finding::UnresolvedElementRef { item, competence, element } => {
                write!(f, "item '{item}' refers to unknown element '{element}' of competence '{competence}'")
            }
            Finding::ElementWithoutItems { competence, element } => {
                write!(f, "element '{element}' of competence '{competence}' has no linked items")
            }
            Finding::InsufficientItems { competence, required, available } => write!(
                f,
                "competence '{competence}' needs {required} questions but only {available} items are linked"
            ),
            Finding::ChoiceCountMismatch { item, expected, found } => {
                write!(f, "item '{item}' has {found} choices, its competence expects {expected}")
            }
            Finding::UnknownRecordCompetence { learner, competence } => {
                write!(f, "learner '{learner}' holds a record for unknown competence '{competence}'")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.findings.iter().any(|f| f.severity() == Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity() == Severity::Error)
    }
}

/// Cross-document checks: references, prerequisite cycles and item coverage.
///
/// Never fails; every problem becomes a [`Finding`].
pub fn validate_repository(
    competences: &[CompetenceDefinition],
    items: &[ItemDefinition],
    profiles: &[LearnerProfile],
) -> ValidationReport {
    let mut findings = Vec::new();

    let mut by_id: HashMap<&str, &CompetenceDefinition> = HashMap::new();
    for c in competences {
        if by_id.insert(c.id.as_str(), c).is_some() {
            findings.push(Finding::DuplicateCompetence { competence: c.id.clone() });
        }
    }
    let mut seen = HashSet::new();
    for item in items {
        if !seen.insert(item.id.as_str()) {
            findings.push(Finding::DuplicateItem { item: item.id.clone() });
        }
    }
    let mut seen = HashSet::new();
    for p in profiles {
        if !seen.insert(p.id.as_str()) {
            findings.push(Finding::DuplicateLearner { learner: p.id.clone() });
        }
    }

    for c in competences {
        for p in &c.prerequisites {
            if !by_id.contains_key(p.as_str()) {
                findings.push(Finding::UnresolvedPrerequisite {
                    competence: c.id.clone(),
                    prerequisite: p.clone(),
                });
            }
        }
    }
    findings.extend(prerequisite_cycles(competences));

    // (competence, element) -> linked item count
    let mut linked: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    let mut per_competence: HashMap<&str, usize> = HashMap::new();
    for item in items {
        let Some(c) = by_id.get(item.competence_ref.as_str()) else {
            findings.push(Finding::UnresolvedCompetenceRef {
                item: item.id.clone(),
                competence: item.competence_ref.clone(),
            });
            continue;
        };
        if c.element(&item.element_ref).is_none() {
            findings.push(Finding::UnresolvedElementRef {
                item: item.id.clone(),
                competence: c.id.clone(),
                element: item.element_ref.clone(),
            });
            continue;
        }
        *linked.entry((c.id.as_str(), item.element_ref.as_str())).or_default() += 1;
        *per_competence.entry(c.id.as_str()).or_default() += 1;
        if item.choices.len() != c.choices_per_question as usize {
            findings.push(Finding::ChoiceCountMismatch {
                item: item.id.clone(),
                expected: c.choices_per_question,
                found: item.choices.len(),
            });
        }
    }

    for c in competences {
        for e in &c.elements {
            if !linked.contains_key(&(c.id.as_str(), e.id.as_str())) {
                findings.push(Finding::ElementWithoutItems {
                    competence: c.id.clone(),
                    element: e.id.clone(),
                });
            }
        }
        let available = per_competence.get(c.id.as_str()).copied().unwrap_or(0);
        if available < c.required_questions as usize {
            findings.push(Finding::InsufficientItems {
                competence: c.id.clone(),
                required: c.required_questions,
                available,
            });
        }
    }

    for p in profiles {
        for r in &p.records {
            if !by_id.contains_key(r.competence_ref.as_str()) {
                findings.push(Finding::UnknownRecordCompetence {
                    learner: p.id.clone(),
                    competence: r.competence_ref.clone(),
                });
            }
        }
    }

    ValidationReport { findings }
}

fn prerequisite_cycles(competences: &[CompetenceDefinition]) -> Vec<Finding> {
    let mut graph = DiGraph::<&str, ()>::new();
    let mut nodes = HashMap::new();
    for c in competences {
        nodes.entry(c.id.as_str()).or_insert_with(|| graph.add_node(c.id.as_str()));
    }
    for c in competences {
        for p in &c.prerequisites {
            if let Some(&to) = nodes.get(p.as_str()) {
                graph.update_edge(nodes[c.id.as_str()], to, ());
            }
        }
    }
    let mut cycles: Vec<Vec<String>> = tarjan_scc(&graph)
        .into_iter()
        .filter(|scc| scc.len() > 1 || graph.contains_edge(scc[0], scc[0]))
        .map(|scc| {
            let mut ids: Vec<String> = scc.iter().map(|&n| graph[n].to_string()).collect();
            ids.sort();
            ids
        })
        .collect();
    cycles.sort();
    cycles
        .into_iter()
        .map(|competences| Finding::PrerequisiteCycle { competences })
        .collect()
}
