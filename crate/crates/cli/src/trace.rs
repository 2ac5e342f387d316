//! Iteration tables in the column layout `i U_i b P_i Q_i Num Denom`.

use std::fmt::Write;

use placement_core::irt::IterationRow;

pub const HEADER: &str = "i\tU_i\tb\tP_i\tQ_i\tNum\tDenom";

/// One iteration as a tab-separated table with a SUM row.
pub fn table(row: &IterationRow) -> String {
    let mut out = String::new();
    writeln!(out, "{HEADER}").unwrap();
    for (i, c) in row.cells.iter().enumerate() {
        writeln!(
            out,
            "{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
            i + 1,
            c.u,
            c.b,
            c.p,
            c.q,
            c.numerator,
            c.denominator
        )
        .unwrap();
    }
    writeln!(out, "SUM\t\t\t\t\t{:.5}\t{:.5}", row.numerator_sum, row.denominator_sum).unwrap();
    out
}

/// `theta_{s+1} = theta_s + num / denom = value`
pub fn step_line(row: &IterationRow) -> String {
    format!(
        "theta_{} = {} + {:.5} / {:.5} = {:.10}",
        row.s + 1,
        row.theta_s,
        row.numerator_sum,
        row.denominator_sum,
        row.proposal()
    )
}

/// Largest absolute gap between computed P/Q cells and a printed 4-decimal table.
pub fn max_cell_gap(row: &IterationRow, p: &[f64], q: &[f64]) -> f64 {
    row.cells
        .iter()
        .zip(p.iter().zip(q))
        .map(|(c, (p, q))| (c.p - p).abs().max((c.q - q).abs()))
        .fold(0.0, f64::max)
}
