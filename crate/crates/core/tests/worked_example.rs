//! The SQL worked example against independently computed values.
//!
//! Exact values were computed with an arbitrary-precision evaluation of the
//! logistic model; the printed tables round to four decimals and were
//! produced with e truncated to 2.718, so they are checked with looser bounds.

use placement_core::fixtures::{self, printed};
use placement_core::irt::{estimate_ability, newton_update, standard_error, EstimationConfig, EstimationStatus};

fn config(theta0: f64) -> EstimationConfig {
    EstimationConfig::default().with_theta_initial(theta0)
}

#[test]
fn first_iteration_sums() {
    let (theta1, row) = newton_update(1.0, &fixtures::responses()).unwrap();
    assert!((row.numerator_sum - 2.231058578630005).abs() < 1e-12);
    assert!((row.denominator_sum - 4.619656933543373).abs() < 1e-12);
    assert!((theta1 - 1.482948974507234).abs() < 1e-12);
    // printed: 2.23104 / 4.61973; the printed theta_1 follows from those sums, not the exact ones
    assert!((row.numerator_sum - 2.23104).abs() < 1e-4);
    assert!((row.denominator_sum - 4.61973).abs() < 1e-4);
    assert!((theta1 - printed::THETA_1).abs() < 2e-5);
    assert!((1.0 + 2.23104 / 4.61973 - printed::THETA_1).abs() < 1e-6);
}

#[test]
fn second_iteration_sums_at_the_rounded_theta() {
    let (_, row) = newton_update(1.4829, &fixtures::responses()).unwrap();
    assert!((row.numerator_sum - 0.023440694306391285).abs() < 1e-12);
    assert!((row.denominator_sum - 4.455129489954475).abs() < 1e-12);
    // the printed column values add up to 0.0234 / 4.4553
    let column: f64 = printed::ITERATION_2.p.iter().zip(&printed::ITERATION_2.q).map(|(p, q)| p * q).sum();
    assert!((column - 4.4553).abs() < 1e-3, "{column}");
}

#[test]
fn converged_estimate_and_standard_error() {
    let est = estimate_ability(&fixtures::responses(), &config(1.0)).unwrap();
    assert_eq!(est.status, EstimationStatus::Converged);
    assert!((est.theta - 1.4881638614130055).abs() < 1e-9);
    assert!((est.standard_error - 0.47398494038899497).abs() < 1e-9);
    assert!((est.theta - printed::THETA_FINAL).abs() < 1e-3);
    assert!((est.standard_error - printed::STANDARD_ERROR).abs() < 1e-3);
    // the printed information sum 4.4512 gives the same SE to 4 decimals
    assert!((1.0 / printed::FINAL.denominator_sum.sqrt() - printed::STANDARD_ERROR).abs() < 5e-5);
    assert!(est.iterations <= 5, "took {} steps", est.iterations);
}

#[test]
fn final_table_numerator_vanishes() {
    let est = estimate_ability(&fixtures::responses(), &config(1.0)).unwrap();
    let last = est.trace.last().unwrap();
    assert!(last.numerator_sum.abs() < 1e-9);
    assert!((last.denominator_sum - 4.4511).abs() < 1e-4);
    assert_eq!(last.theta_s, est.theta);
    // printed SOMME -1.1102 is not the sum of its own column
    let column: f64 = printed::FINAL
        .p
        .iter()
        .enumerate()
        .map(|(i, p)| f64::from(fixtures::score(i + 1)) - p)
        .sum();
    assert!(column.abs() < 2e-3, "{column}");
}

#[test]
fn printed_cells_within_rounding() {
    let responses = fixtures::responses();
    let est = estimate_ability(&responses, &config(1.0)).unwrap();
    let (_, table3) = newton_update(1.4829, &responses).unwrap();
    for (row, table) in [
        (&est.trace[0], &printed::ITERATION_1),
        (&table3, &printed::ITERATION_2),
        (est.trace.last().unwrap(), &printed::FINAL),
    ] {
        for (i, c) in row.cells.iter().enumerate() {
            assert!((c.p - table.p[i]).abs() < 5e-4, "P_{} at {}", i + 1, row.theta_s);
            assert!((c.q - table.q[i]).abs() < 5e-4, "Q_{} at {}", i + 1, row.theta_s);
        }
    }
}

#[test]
fn start_point_does_not_change_the_estimate() {
    let responses = fixtures::responses();
    let reference = estimate_ability(&responses, &config(1.0)).unwrap().theta;
    for theta0 in [-3.0, -1.0, 0.0, 2.0, 3.0] {
        let est = estimate_ability(&responses, &config(theta0)).unwrap();
        assert_eq!(est.status, EstimationStatus::Converged);
        assert!((est.theta - reference).abs() < 1e-6, "from {theta0}: {}", est.theta);
    }
}

#[test]
fn standard_error_matches_information_at_the_estimate() {
    let responses = fixtures::responses();
    let est = estimate_ability(&responses, &config(1.0)).unwrap();
    assert_eq!(standard_error(est.theta, &responses).unwrap(), est.standard_error);
}
