//! Two-parameter logistic (2PL) item response model.
//!
//! The kernel is a set of pure functions over [`ItemParameters`] and slices of
//! [`Response`]. Ability is estimated by Newton-Raphson maximum likelihood in
//! [`estimate_ability`]; every Newton step is recorded as an [`IterationRow`]
//! so the computation can be printed and checked column by column.

mod estimate;

pub use estimate::{
    estimate_ability, newton_update, AbilityEstimate, EstimationConfig, EstimationStatus, IterationCell, IterationRow,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest probability handed to logs and divisions.
pub const PROB_FLOOR: f64 = 1e-12;

/// Total information below this is treated as "no information".
pub const INFORMATION_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IrtError {
    #[error("discrimination must be finite and > 0, got {0}")]
    InvalidDiscrimination(f64),
    #[error("difficulty must be finite, got {0}")]
    InvalidDifficulty(f64),
    #[error("ability must be finite, got {0}")]
    NonFiniteTheta(f64),
    #[error("response score must be 0 or 1, got {0}")]
    InvalidScore(u8),
    #[error("at least one response is required")]
    EmptyResponses,
    #[error("total information {0:e} is below the floor; the likelihood has no usable curvature")]
    NonFiniteMle(f64),
    #[error("invalid estimation config: {0}")]
    InvalidConfig(&'static str),
}

/// Discrimination `a` and difficulty `b` of one item.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemParameters {
    a: f64,
    b: f64,
}

impl ItemParameters {
    pub fn new(a: f64, b: f64) -> Result<Self, IrtError> {
        if !(a.is_finite() && a > 0.0) {
            return Err(IrtError::InvalidDiscrimination(a));
        }
        if !b.is_finite() {
            return Err(IrtError::InvalidDifficulty(b));
        }
        Ok(Self { a, b })
    }

    /// An item with unit discrimination.
    pub fn with_difficulty(b: f64) -> Result<Self, IrtError> {
        Self::new(1.0, b)
    }

    pub fn discrimination(&self) -> f64 {
        self.a
    }

    pub fn difficulty(&self) -> f64 {
        self.b
    }
}

/// One scored answer: the item and whether it was answered correctly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub item: ItemParameters,
    correct: bool,
}

impl Response {
    pub fn new(item: ItemParameters, correct: bool) -> Self {
        Self { item, correct }
    }

    /// Builds a response from a dichotomous score `u`, which must be 0 or 1.
    pub fn scored(item: ItemParameters, u: u8) -> Result<Self, IrtError> {
        match u {
            0 => Ok(Self::new(item, false)),
            1 => Ok(Self::new(item, true)),
            other => Err(IrtError::InvalidScore(other)),
        }
    }

    pub fn is_correct(&self) -> bool {
        self.correct
    }

    /// The score as 0 or 1.
    pub fn u(&self) -> u8 {
        self.correct as u8
    }
}

fn check_theta(theta: f64) -> Result<(), IrtError> {
    if theta.is_finite() {
        Ok(())
    } else {
        Err(IrtError::NonFiniteTheta(theta))
    }
}

fn check_nonempty(responses: &[Response]) -> Result<(), IrtError> {
    if responses.is_empty() {
        Err(IrtError::EmptyResponses)
    } else {
        Ok(())
    }
}

// Unchecked logistic, clamped to [PROB_FLOOR, 1 - PROB_FLOOR].
pub(crate) fn logistic(theta: f64, item: &ItemParameters) -> f64 {
    let p = 1.0 / (1.0 + (-item.a * (theta - item.b)).exp());
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Probability of a correct answer, `1 / (1 + exp(-a (theta - b)))`.
pub fn prob_correct(theta: f64, item: &ItemParameters) -> Result<f64, IrtError> {
    check_theta(theta)?;
    Ok(logistic(theta, item))
}

/// Probability of an incorrect answer, `1 - prob_correct`.
pub fn prob_incorrect(theta: f64, item: &ItemParameters) -> Result<f64, IrtError> {
    Ok(1.0 - prob_correct(theta, item)?)
}

/// Fisher information of one item, `a^2 P Q`. Peaks at `theta = b` with value `a^2 / 4`.
pub fn item_information(theta: f64, item: &ItemParameters) -> Result<f64, IrtError> {
    check_theta(theta)?;
    let p = logistic(theta, item);
    Ok(item.a * item.a * p * (1.0 - p))
}

/// First derivative of the log-likelihood: `sum a_i (u_i - P_i(theta))`.
pub fn score_gradient(theta: f64, responses: &[Response]) -> Result<f64, IrtError> {
    check_theta(theta)?;
    check_nonempty(responses)?;
    Ok(responses
        .iter()
        .map(|r| r.item.a * (f64::from(r.u()) - logistic(theta, &r.item)))
        .sum())
}

/// Test information `sum a_i^2 P_i Q_i`, the negated second derivative of the log-likelihood.
pub fn total_information(theta: f64, responses: &[Response]) -> Result<f64, IrtError> {
    check_theta(theta)?;
    check_nonempty(responses)?;
    Ok(responses
        .iter()
        .map(|r| {
            let p = logistic(theta, &r.item);
            r.item.a * r.item.a * p * (1.0 - p)
        })
        .sum())
}

/// `1 / sqrt(total_information)`.
pub fn standard_error(theta: f64, responses: &[Response]) -> Result<f64, IrtError> {
    let info = total_information(theta, responses)?;
    if info < INFORMATION_FLOOR {
        return Err(IrtError::NonFiniteMle(info));
    }
    Ok(info.sqrt().recip())
}

/// Log-likelihood `sum u ln P + (1 - u) ln Q` of a response pattern.
pub fn log_likelihood(theta: f64, responses: &[Response]) -> Result<f64, IrtError> {
    check_theta(theta)?;
    check_nonempty(responses)?;
    Ok(responses
        .iter()
        .map(|r| {
            let p = logistic(theta, &r.item);
            if r.correct {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum())
}
