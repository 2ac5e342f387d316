use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::ims::{CompetenceDefinition, ItemDefinition};
use crate::irt::logistic;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// The `n` most important linked items, served from easiest to hardest.
    #[default]
    FixedByImportance,
    /// Each next item maximizes information at the provisional ability.
    AdaptiveMaxInfo,
}

impl SelectionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::FixedByImportance => "fixed_by_importance",
            Self::AdaptiveMaxInfo => "adaptive_max_info",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fixed_by_importance" | "fixed" => Some(Self::FixedByImportance),
            "adaptive_max_info" | "adaptive" => Some(Self::AdaptiveMaxInfo),
            _ => None,
        }
    }
}

/// Items of `bank` linked to `competence`, erroring when fewer than `n` exist.
pub fn linked_items<'a>(
    competence: &CompetenceDefinition,
    bank: &'a [ItemDefinition],
) -> Result<Vec<&'a ItemDefinition>, EngineError> {
    let linked: Vec<&ItemDefinition> = bank.iter().filter(|i| i.competence_ref == competence.id).collect();
    let required = competence.required_questions as usize;
    if linked.len() < required {
        return Err(EngineError::InsufficientItems {
            competence: competence.id.clone(),
            required,
            available: linked.len(),
        });
    }
    Ok(linked)
}

/// Builds the test form.
///
/// In fixed mode this is the whole form: the `n` highest-importance linked
/// items (ties by id), ordered by ascending difficulty (ties by id). In
/// adaptive mode only the first item is chosen, the one with maximal
/// information at `theta_initial`.
pub fn build_form<'a>(
    competence: &CompetenceDefinition,
    bank: &'a [ItemDefinition],
    mode: SelectionMode,
    theta_initial: f64,
) -> Result<Vec<&'a ItemDefinition>, EngineError> {
    let linked = linked_items(competence, bank)?;
    match mode {
        SelectionMode::FixedByImportance => {
            let mut chosen = linked;
            chosen.sort_by(|x, y| by_importance(x, y));
            chosen.truncate(competence.required_questions as usize);
            chosen.sort_by(|x, y| {
                x.scale
                    .difficulty()
                    .total_cmp(&y.scale.difficulty())
                    .then_with(|| x.id.cmp(&y.id))
            });
            Ok(chosen)
        }
        SelectionMode::AdaptiveMaxInfo => Ok(select_max_information(theta_initial, &linked, &[]).into_iter().collect()),
    }
}

fn by_importance(x: &ItemDefinition, y: &ItemDefinition) -> Ordering {
    y.importance.total_cmp(&x.importance).then_with(|| x.id.cmp(&y.id))
}

/// The unused candidate with the largest `a^2 P Q` at `theta`; ties go to the smaller id.
pub fn select_max_information<'a>(
    theta: f64,
    candidates: &[&'a ItemDefinition],
    used: &[String],
) -> Option<&'a ItemDefinition> {
    let info = |i: &ItemDefinition| {
        let p = logistic(theta, &i.scale);
        i.scale.discrimination().powi(2) * p * (1.0 - p)
    };
    candidates
        .iter()
        .copied()
        .filter(|i| !used.contains(&i.id))
        .max_by(|x, y| info(x).total_cmp(&info(y)).then_with(|| y.id.cmp(&x.id)))
}
