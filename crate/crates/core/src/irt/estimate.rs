use serde::{Deserialize, Serialize};

use super::{check_nonempty, check_theta, log_likelihood, logistic, IrtError, Response, INFORMATION_FLOOR};

/// Newton iterates are kept inside this interval so `exp` cannot overflow.
const ITERATION_GUARD: f64 = 6.0;

/// Maximum number of step halvings when a full Newton step lowers the likelihood.
const MAX_HALVINGS: u32 = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationConfig {
    pub theta_initial: f64,
    /// Convergence threshold on `|theta_{s+1} - theta_s|`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub theta_bounds: (f64, f64),
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            theta_initial: 0.0,
            tolerance: 1e-5,
            max_iterations: 50,
            theta_bounds: (-3.0, 3.0),
        }
    }
}

impl EstimationConfig {
    pub fn with_theta_initial(mut self, theta: f64) -> Self {
        self.theta_initial = theta;
        self
    }

    pub fn validate(&self) -> Result<(), IrtError> {
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(IrtError::InvalidConfig("tolerance must be > 0"));
        }
        if self.max_iterations == 0 {
            return Err(IrtError::InvalidConfig("max_iterations must be >= 1"));
        }
        let (lo, hi) = self.theta_bounds;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(IrtError::InvalidConfig("theta bounds must be finite with lower < upper"));
        }
        if !self.theta_initial.is_finite() {
            return Err(IrtError::InvalidConfig("theta_initial must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimationStatus {
    Converged,
    MaxIterationsReached,
    /// All responses identical, or no information: the likelihood has no interior maximum.
    NonFiniteMle,
}

impl EstimationStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::MaxIterationsReached => "max_iterations_reached",
            Self::NonFiniteMle => "non_finite_mle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "converged" => Some(Self::Converged),
            "max_iterations_reached" => Some(Self::MaxIterationsReached),
            "non_finite_mle" => Some(Self::NonFiniteMle),
            _ => None,
        }
    }
}

impl std::fmt::Display for EstimationStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-item columns of one Newton iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationCell {
    pub u: u8,
    pub a: f64,
    pub b: f64,
    pub p: f64,
    pub q: f64,
    /// `a (u - p)`
    pub numerator: f64,
    /// `a^2 p q`
    pub denominator: f64,
}

/// Snapshot of one Newton iteration evaluated at `theta_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub s: usize,
    pub theta_s: f64,
    pub cells: Vec<IterationCell>,
    pub numerator_sum: f64,
    pub denominator_sum: f64,
}

impl IterationRow {
    fn evaluate(s: usize, theta_s: f64, responses: &[Response]) -> Self {
        let cells: Vec<IterationCell> = responses
            .iter()
            .map(|r| {
                let a = r.item.discrimination();
                let p = logistic(theta_s, &r.item);
                let q = 1.0 - p;
                IterationCell {
                    u: r.u(),
                    a,
                    b: r.item.difficulty(),
                    p,
                    q,
                    numerator: a * (f64::from(r.u()) - p),
                    denominator: a * a * p * q,
                }
            })
            .collect();
        let numerator_sum = cells.iter().map(|c| c.numerator).sum();
        let denominator_sum = cells.iter().map(|c| c.denominator).sum();
        Self {
            s,
            theta_s,
            cells,
            numerator_sum,
            denominator_sum,
        }
    }

    /// The Newton proposal `theta_s + numerator_sum / denominator_sum`.
    pub fn proposal(&self) -> f64 {
        self.theta_s + self.numerator_sum / self.denominator_sum
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbilityEstimate {
    pub theta: f64,
    pub standard_error: f64,
    pub status: EstimationStatus,
    /// Newton steps taken.
    pub iterations: usize,
    /// One row per evaluated iterate; on convergence the last row is evaluated at the accepted theta.
    pub trace: Vec<IterationRow>,
}

/// One Newton-Raphson step: `theta_s + sum a(u - P) / sum a^2 P Q`.
pub fn newton_update(theta_s: f64, responses: &[Response]) -> Result<(f64, IterationRow), IrtError> {
    step(0, theta_s, responses)
}

fn step(s: usize, theta_s: f64, responses: &[Response]) -> Result<(f64, IterationRow), IrtError> {
    check_theta(theta_s)?;
    check_nonempty(responses)?;
    let row = IterationRow::evaluate(s, theta_s, responses);
    if row.denominator_sum < INFORMATION_FLOOR {
        return Err(IrtError::NonFiniteMle(row.denominator_sum));
    }
    Ok((row.proposal(), row))
}

/// Maximum-likelihood ability by Newton-Raphson.
///
/// Iterates from `config.theta_initial` until successive iterates differ by
/// less than `config.tolerance`. A step that lowers the log-likelihood is
/// halved until it does not, which never triggers on well-conditioned
/// patterns. Patterns with every answer right (or every answer wrong) have no
/// finite maximum; they are reported as [`EstimationStatus::NonFiniteMle`]
/// with theta at the matching bound.
pub fn estimate_ability(responses: &[Response], config: &EstimationConfig) -> Result<AbilityEstimate, IrtError> {
    config.validate()?;
    check_nonempty(responses)?;
    let (lo, hi) = config.theta_bounds;

    let first = responses[0].is_correct();
    if responses.iter().all(|r| r.is_correct() == first) {
        let theta = if first { hi } else { lo };
        return Ok(AbilityEstimate {
            theta,
            standard_error: forced_standard_error(theta, responses),
            status: EstimationStatus::NonFiniteMle,
            iterations: 0,
            trace: Vec::new(),
        });
    }

    let mut theta = config.theta_initial.clamp(-ITERATION_GUARD, ITERATION_GUARD);
    let mut trace = Vec::new();
    let mut status = EstimationStatus::MaxIterationsReached;
    let mut iterations = 0;

    for s in 0..config.max_iterations {
        let (proposal, row) = match step(s, theta, responses) {
            Ok(v) => v,
            Err(IrtError::NonFiniteMle(_)) => {
                status = EstimationStatus::NonFiniteMle;
                break;
            }
            Err(e) => return Err(e),
        };
        trace.push(row);
        iterations += 1;

        let next = damped(theta, proposal.clamp(-ITERATION_GUARD, ITERATION_GUARD), responses)?;
        let delta = (next - theta).abs();
        theta = next;
        if delta < config.tolerance {
            status = EstimationStatus::Converged;
            trace.push(IterationRow::evaluate(s + 1, theta, responses));
            break;
        }
    }

    let theta = theta.clamp(lo, hi);
    let standard_error = match super::standard_error(theta, responses) {
        Ok(se) => se,
        Err(IrtError::NonFiniteMle(_)) => {
            status = EstimationStatus::NonFiniteMle;
            forced_standard_error(theta, responses)
        }
        Err(e) => return Err(e),
    };
    Ok(AbilityEstimate {
        theta,
        standard_error,
        status,
        iterations,
        trace,
    })
}

fn damped(theta: f64, mut next: f64, responses: &[Response]) -> Result<f64, IrtError> {
    let base = log_likelihood(theta, responses)?;
    let slack = 1e-12 * base.abs().max(1.0);
    for _ in 0..MAX_HALVINGS {
        if log_likelihood(next, responses)? >= base - slack {
            break;
        }
        next = theta + 0.5 * (next - theta);
    }
    Ok(next)
}

fn forced_standard_error(theta: f64, responses: &[Response]) -> f64 {
    let info: f64 = responses
        .iter()
        .map(|r| {
            let p = logistic(theta, &r.item);
            r.item.discrimination().powi(2) * p * (1.0 - p)
        })
        .sum();
    info.max(INFORMATION_FLOOR).sqrt().recip()
}
