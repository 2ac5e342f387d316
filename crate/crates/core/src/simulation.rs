//! Synthetic examinees and parameter-recovery statistics.
//!
//! Responses are drawn from the 2PL model with a ChaCha8 generator. Each
//! replication gets its own seed derived from the run seed with SplitMix64,
//! so reports are identical whether replications run sequentially or on the
//! rayon pool.
//!
//! [`grid_search_mle`] maximizes the log-likelihood by brute force on a grid.
//! It evaluates the likelihood on its own and shares no code with the
//! Newton-Raphson estimator, so the two can check each other.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SelectionMode;
use crate::irt::{estimate_ability, AbilityEstimate, EstimationConfig, EstimationStatus, IrtError, ItemParameters, Response};
use crate::Execution;

pub const GENERATOR: &str = "ChaCha8Rng (rand_chacha 0.9), per-replication seeds via SplitMix64";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("replications must be >= 1")]
    NoReplications,
    #[error("the item bank is empty")]
    EmptyBank,
    #[error("true theta {0} is outside [-3, 3]")]
    ThetaOutOfRange(f64),
    #[error("test length {length} exceeds the bank size {bank}")]
    TestTooLong { length: usize, bank: usize },
    #[error(transparent)]
    Estimation(#[from] IrtError),
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `rep` at true-theta index `point`.
pub fn replication_seed(seed: u64, point: usize, rep: usize) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(point as u64)) ^ rep as u64)
}

/// Draws one response per bank item, Bernoulli with the 2PL probability at `true_theta`.
pub fn simulate_responses(true_theta: f64, bank: &[ItemParameters], seed: u64) -> Vec<Response> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    bank.iter().map(|item| draw(&mut rng, true_theta, item)).collect()
}

fn draw(rng: &mut ChaCha8Rng, theta: f64, item: &ItemParameters) -> Response {
    let p = 1.0 / (1.0 + (-item.discrimination() * (theta - item.difficulty())).exp());
    Response::new(*item, rng.random::<f64>() < p)
}

// ln P and ln Q of the logistic, computed without cancellation.
fn log_p_q(theta: f64, item: &ItemParameters) -> (f64, f64) {
    let z = item.discrimination() * (theta - item.difficulty());
    let softplus = |x: f64| if x > 0.0 { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() };
    (-softplus(-z), -softplus(z))
}

/// The grid point in `[lo, hi]` (spacing `step`) with the largest log-likelihood.
/// Ties go to the smaller theta.
pub fn grid_search_mle(responses: &[Response], lo: f64, hi: f64, step: f64) -> f64 {
    assert!(lo < hi && step > 0.0, "grid needs lo < hi and step > 0");
    let points = ((hi - lo) / step + 1e-9).floor() as usize;
    let loglik = |theta: f64| -> f64 {
        responses
            .iter()
            .map(|r| {
                let (lp, lq) = log_p_q(theta, &r.item);
                if r.is_correct() {
                    lp
                } else {
                    lq
                }
            })
            .sum()
    };
    let mut best = (lo, loglik(lo));
    for k in 1..=points {
        let theta = lo + k as f64 * step;
        let ll = loglik(theta);
        if ll > best.1 {
            best = (theta, ll);
        }
    }
    best.0
}

/// `n` unit-or-given-discrimination items with difficulties evenly spaced over `[lo, hi]`.
pub fn evenly_spaced_bank(n: usize, lo: f64, hi: f64, a: f64) -> Result<Vec<ItemParameters>, IrtError> {
    (0..n)
        .map(|i| {
            let b = if n == 1 { (lo + hi) / 2.0 } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 };
            ItemParameters::new(a, b)
        })
        .collect()
}

/// Estimates many response patterns, in input order.
pub fn estimate_batch(
    patterns: &[Vec<Response>],
    config: &EstimationConfig,
    execution: Execution,
) -> Vec<Result<AbilityEstimate, IrtError>> {
    execution.map_indexed(patterns.len(), |i| estimate_ability(&patterns[i], config))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub true_thetas: Vec<f64>,
    pub replications: usize,
    pub bank: Vec<ItemParameters>,
    pub seed: u64,
    pub mode: SelectionMode,
    /// Items administered per examinee; the whole bank when `None`.
    pub test_length: Option<usize>,
    pub config: EstimationConfig,
    pub execution: Execution,
}

impl SimulationSpec {
    /// 50 items with `a = 1` and `b` evenly spaced over `[-2.5, 2.5]`, five
    /// true abilities from -2 to 2, 200 replications each.
    pub fn standard(seed: u64) -> Self {
        Self {
            true_thetas: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
            replications: 200,
            bank: evenly_spaced_bank(50, -2.5, 2.5, 1.0).expect("valid bank"),
            seed,
            mode: SelectionMode::FixedByImportance,
            test_length: None,
            config: EstimationConfig::default(),
            execution: Execution::Parallel,
        }
    }

    fn validate(&self) -> Result<usize, SimulationError> {
        if self.replications == 0 {
            return Err(SimulationError::NoReplications);
        }
        if self.bank.is_empty() {
            return Err(SimulationError::EmptyBank);
        }
        if let Some(&t) = self.true_thetas.iter().find(|t| !(-3.0..=3.0).contains(*t)) {
            return Err(SimulationError::ThetaOutOfRange(t));
        }
        self.config.validate()?;
        let length = self.test_length.unwrap_or(self.bank.len());
        if length == 0 || length > self.bank.len() {
            return Err(SimulationError::TestTooLong {
                length,
                bank: self.bank.len(),
            });
        }
        Ok(length)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub true_theta: f64,
    pub replications: usize,
    /// Replications with a finite maximum (included in the statistics below).
    pub finite: usize,
    pub mean_estimate: f64,
    pub bias: f64,
    pub rmse: f64,
    pub mean_se: f64,
    pub empirical_sd: f64,
    pub non_finite_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub generator: String,
    pub seed: u64,
    pub rows: Vec<RecoveryRow>,
}

#[derive(Debug, Clone, Copy)]
struct Replicate {
    estimate: f64,
    se: f64,
    finite: bool,
}

fn administer(spec: &SimulationSpec, length: usize, true_theta: f64, seed: u64) -> Result<Vec<Response>, IrtError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match spec.mode {
        SelectionMode::FixedByImportance => Ok(spec.bank[..length]
            .iter()
            .map(|item| draw(&mut rng, true_theta, item))
            .collect()),
        SelectionMode::AdaptiveMaxInfo => {
            let mut used = vec![false; spec.bank.len()];
            let mut responses: Vec<Response> = Vec::with_capacity(length);
            let mut theta = spec.config.theta_initial;
            for _ in 0..length {
                let next = (0..spec.bank.len())
                    .filter(|&i| !used[i])
                    .max_by(|&i, &j| {
                        crate::irt::item_information(theta, &spec.bank[i])
                            .unwrap_or(0.0)
                            .total_cmp(&crate::irt::item_information(theta, &spec.bank[j]).unwrap_or(0.0))
                            .then(j.cmp(&i))
                    })
                    .expect("length <= bank size");
                used[next] = true;
                responses.push(draw(&mut rng, true_theta, &spec.bank[next]));
                let est = estimate_ability(&responses, &spec.config)?;
                theta = match est.status {
                    EstimationStatus::NonFiniteMle => spec.config.theta_initial,
                    _ => est.theta,
                };
            }
            Ok(responses)
        }
    }
}

/// Replicates simulate-then-estimate at each true ability and aggregates the results.
///
/// Replications whose estimate is [`EstimationStatus::NonFiniteMle`] are left
/// out of bias, RMSE and SE statistics and counted in `non_finite_rate`.
pub fn run_recovery(spec: &SimulationSpec) -> Result<RecoveryReport, SimulationError> {
    let length = spec.validate()?;
    let per_point = spec.replications;
    let total = spec.true_thetas.len() * per_point;
    let outcomes: Vec<Result<Replicate, IrtError>> = spec.execution.map_indexed(total, |k| {
        let (point, rep) = (k / per_point, k % per_point);
        let true_theta = spec.true_thetas[point];
        let responses = administer(spec, length, true_theta, replication_seed(spec.seed, point, rep))?;
        let est = estimate_ability(&responses, &spec.config)?;
        Ok(Replicate {
            estimate: est.theta,
            se: est.standard_error,
            finite: est.status != EstimationStatus::NonFiniteMle,
        })
    });
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;

    let rows = spec
        .true_thetas
        .iter()
        .enumerate()
        .map(|(point, &true_theta)| summarize(true_theta, &outcomes[point * per_point..(point + 1) * per_point]))
        .collect();
    Ok(RecoveryReport {
        generator: GENERATOR.to_string(),
        seed: spec.seed,
        rows,
    })
}

fn summarize(true_theta: f64, reps: &[Replicate]) -> RecoveryRow {
    let finite: Vec<&Replicate> = reps.iter().filter(|r| r.finite).collect();
    let n = finite.len();
    let nf = n as f64;
    let mean_estimate = finite.iter().map(|r| r.estimate).sum::<f64>() / nf;
    let rmse = (finite.iter().map(|r| (r.estimate - true_theta).powi(2)).sum::<f64>() / nf).sqrt();
    let mean_se = finite.iter().map(|r| r.se).sum::<f64>() / nf;
    let empirical_sd = if n > 1 {
        (finite.iter().map(|r| (r.estimate - mean_estimate).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt()
    } else {
        0.0
    };
    RecoveryRow {
        true_theta,
        replications: reps.len(),
        finite: n,
        mean_estimate,
        bias: mean_estimate - true_theta,
        rmse,
        mean_se,
        empirical_sd,
        non_finite_rate: (reps.len() - n) as f64 / reps.len() as f64,
    }
}

impl RecoveryReport {
    pub const CSV_HEADER: &'static str =
        "true_theta,replications,finite,mean_estimate,bias,rmse,mean_se,empirical_sd,non_finite_rate";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.true_theta,
                r.replications,
                r.finite,
                r.mean_estimate,
                r.bias,
                r.rmse,
                r.mean_se,
                r.empirical_sd,
                r.non_finite_rate
            ));
        }
        out
    }
}

impl fmt::Display for RecoveryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "generator: {}", self.generator)?;
        writeln!(f, "seed: {}", self.seed)?;
        writeln!(
            f,
            "{:>8} {:>6} {:>10} {:>9} {:>8} {:>8} {:>8} {:>9}",
            "theta", "reps", "mean est", "bias", "rmse", "mean se", "emp sd", "nonfinite"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:>8.3} {:>6} {:>10.4} {:>9.4} {:>8.4} {:>8.4} {:>8.4} {:>9.3}",
                r.true_theta, r.replications, r.mean_estimate, r.bias, r.rmse, r.mean_se, r.empirical_sd, r.non_finite_rate
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn same_seed_same_vector() {
        let bank = evenly_spaced_bank(30, -2.0, 2.0, 1.0).unwrap();
        assert_eq!(simulate_responses(0.3, &bank, 42), simulate_responses(0.3, &bank, 42));
        assert_ne!(simulate_responses(0.3, &bank, 42), simulate_responses(0.3, &bank, 43));
    }

    #[test]
    fn fraction_correct_at_theta_three_matches_the_model() {
        // mean of P_i(3) over the fixture bank, from the logistic formula: 0.8620618405530381
        let expected = 0.8620618405530381;
        let bank: Vec<_> = fixtures::responses().iter().map(|r| r.item).collect();
        let reps = 1000;
        let correct: usize = (0..reps)
            .map(|k| simulate_responses(3.0, &bank, k).iter().filter(|r| r.is_correct()).count())
            .sum();
        let n = (reps as usize * bank.len()) as f64;
        let observed = correct as f64 / n;
        let sigma = (expected * (1.0 - expected) / n).sqrt();
        assert!((observed - expected).abs() < 3.0 * sigma, "{observed} vs {expected}");
    }

    #[test]
    fn tiny_discrimination_is_a_fair_coin() {
        let bank = vec![ItemParameters::new(1e-4, 0.0).unwrap(); 4000];
        for theta in [-3.0, 3.0] {
            let k = simulate_responses(theta, &bank, 9).iter().filter(|r| r.is_correct()).count() as f64;
            assert!((k / 4000.0 - 0.5).abs() < 3.0 * (0.25f64 / 4000.0).sqrt() + 1e-3);
        }
    }

    #[test]
    fn grid_oracle_on_the_worked_example() {
        let theta = grid_search_mle(&fixtures::responses(), -3.0, 3.0, 1e-3);
        assert!((theta - 1.488).abs() <= 1e-3 + 1e-9, "{theta}");
    }

    #[test]
    fn grid_oracle_monotone_cases_hit_the_upper_end() {
        let right: Vec<_> = fixtures::responses().iter().map(|r| Response::new(r.item, true)).collect();
        assert!((grid_search_mle(&right, -3.0, 3.0, 1e-3) - 3.0).abs() < 1e-9);
        let single = [Response::new(ItemParameters::new(1.0, 0.0).unwrap(), true)];
        assert!((grid_search_mle(&single, -3.0, 3.0, 1e-3) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn grid_ties_go_to_the_smaller_theta() {
        // flat likelihood: every grid point ties
        let r = [Response::new(ItemParameters::new(1e-300, 0.0).unwrap(), true)];
        assert_eq!(grid_search_mle(&r, -1.0, 1.0, 0.5), -1.0);
    }

    #[test]
    fn single_replication_is_reproducible() {
        let mut spec = SimulationSpec::standard(11);
        spec.replications = 1;
        let a = run_recovery(&spec).unwrap();
        let b = run_recovery(&spec).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn sequential_and_parallel_reports_are_identical() {
        let mut spec = SimulationSpec::standard(5);
        spec.replications = 20;
        spec.execution = Execution::Sequential;
        let seq = run_recovery(&spec).unwrap();
        spec.execution = Execution::Parallel;
        assert_eq!(seq, run_recovery(&spec).unwrap());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = SimulationSpec::standard(1);
        spec.replications = 0;
        assert_eq!(run_recovery(&spec), Err(SimulationError::NoReplications));
        let mut spec = SimulationSpec::standard(1);
        spec.true_thetas = vec![3.5];
        assert_eq!(run_recovery(&spec), Err(SimulationError::ThetaOutOfRange(3.5)));
        let mut spec = SimulationSpec::standard(1);
        spec.bank.clear();
        assert_eq!(run_recovery(&spec), Err(SimulationError::EmptyBank));
    }

    #[test]
    fn adaptive_recovery_runs() {
        let mut spec = SimulationSpec::standard(3);
        spec.mode = SelectionMode::AdaptiveMaxInfo;
        spec.test_length = Some(20);
        spec.replications = 30;
        spec.true_thetas = vec![0.0];
        let report = run_recovery(&spec).unwrap();
        assert!(report.rows[0].rmse < 0.8);
        assert!(report.rows[0].rmse + 1e-12 >= report.rows[0].bias.abs());
    }

    #[test]
    fn csv_has_one_row_per_theta() {
        let mut spec = SimulationSpec::standard(2);
        spec.replications = 3;
        let csv = run_recovery(&spec).unwrap().to_csv();
        assert_eq!(csv.lines().count(), 6);
        assert!(csv.starts_with(RecoveryReport::CSV_HEADER));
    }
}
