//! Adaptive placement testing over the two-parameter logistic item response model.
//!
//! - [`irt`]: 2PL probabilities, information and Newton-Raphson ability estimation.
//! - [`ims`]: item banks, competence definitions and learner profiles, with XML
//!   interchange and repository validation.
//! - [`engine`]: the placement-test session state machine and its event log.
//! - [`simulation`]: synthetic examinees, recovery statistics and the
//!   likelihood-grid oracle.
//! - [`fixtures`]: the SQL worked example used by the CLI and the tests.
//!
//! With the default `parallel` feature, replications and batch estimation run on
//! the rayon thread pool; without it, [`Execution::Parallel`] falls back to a
//! sequential loop. Results are identical either way.

pub mod engine;
pub mod fixtures;
pub mod ims;
pub mod irt;
pub mod simulation;

mod exec;

pub use exec::Execution;
