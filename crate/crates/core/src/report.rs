//! CSV output for study summaries and oracle tables.
//!
//! Floats use Rust's shortest round-trip formatting, so identical results
//! give byte-identical files.

use std::io::Write;

use crate::error::Result;
use crate::harness::{MisspecRow, SimSummary, Table1Row};
use crate::oracle::InequalityCheck;

pub const SUMMARY_HEADER: [&str; 10] = [
    "approach", "n_total", "n_labeled", "estimator", "ate", "rmse", "bias", "coverage", "sd",
    "failed_reps",
];

pub const TABLE1_HEADER: [&str; 9] = [
    "n", "reps", "sd_true", "sd_fitted", "sd_calibrated", "mean_true", "mean_fitted",
    "mean_calibrated", "failed_reps",
];

pub const MISSPEC_HEADER: [&str; 11] = [
    "case", "xj_confounder", "xj_included", "gamma_xj", "n", "reps", "bias", "rmse", "coverage",
    "sd", "failed_reps",
];

pub const INEQUALITY_HEADER: [&str; 7] = ["a", "b", "c", "d", "lhs", "rhs", "holds"];

pub const VARIANCE_HEADER: [&str; 8] = [
    "n_x", "p", "v_true", "v_hat", "v_hat_px", "v_true_closed_form", "closed_form_agrees",
    "true_exceeds_hat",
];

/// One design of the exact-variance table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceRow {
    pub n_x: u32,
    pub p: f64,
    pub v_true: f64,
    pub v_hat: f64,
    pub v_hat_px: f64,
    pub v_true_closed_form: f64,
    pub closed_form_agrees: bool,
}

fn write_rows<W: Write>(out: W, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(out: W, summary: &SimSummary) -> Result<()> {
    write_rows(
        out,
        &SUMMARY_HEADER,
        summary.rows.iter().map(|r| {
            vec![
                r.approach.as_str().to_string(),
                r.n_total.to_string(),
                r.n_labeled.to_string(),
                r.estimator().to_string(),
                r.mean_ate.to_string(),
                r.rmse.to_string(),
                r.bias.to_string(),
                r.coverage.to_string(),
                r.sd.to_string(),
                r.failed_reps.to_string(),
            ]
        }),
    )
}

pub fn write_table1<W: Write>(out: W, rows: &[Table1Row]) -> Result<()> {
    write_rows(
        out,
        &TABLE1_HEADER,
        rows.iter().map(|r| {
            vec![
                r.n.to_string(),
                r.reps.to_string(),
                r.sd_true.to_string(),
                r.sd_fitted.to_string(),
                r.sd_calibrated.to_string(),
                r.mean_true.to_string(),
                r.mean_fitted.to_string(),
                r.mean_calibrated.to_string(),
                r.failed_reps.to_string(),
            ]
        }),
    )
}

pub fn write_misspec<W: Write>(out: W, rows: &[MisspecRow]) -> Result<()> {
    write_rows(
        out,
        &MISSPEC_HEADER,
        rows.iter().map(|r| {
            vec![
                r.case.to_string(),
                r.xj_confounder.to_string(),
                r.xj_included.to_string(),
                r.gamma_xj.to_string(),
                r.n.to_string(),
                r.reps.to_string(),
                r.bias.to_string(),
                r.rmse.to_string(),
                r.coverage.to_string(),
                r.sd.to_string(),
                r.failed_reps.to_string(),
            ]
        }),
    )
}

pub fn write_inequality<W: Write>(out: W, rows: &[([u64; 4], InequalityCheck)]) -> Result<()> {
    write_rows(
        out,
        &INEQUALITY_HEADER,
        rows.iter().map(|(abcd, c)| {
            let mut v: Vec<String> = abcd.iter().map(u64::to_string).collect();
            v.extend([c.lhs.to_string(), c.rhs.to_string(), c.holds.to_string()]);
            v
        }),
    )
}

pub fn write_variances<W: Write>(out: W, rows: &[VarianceRow]) -> Result<()> {
    write_rows(
        out,
        &VARIANCE_HEADER,
        rows.iter().map(|r| {
            vec![
                r.n_x.to_string(),
                r.p.to_string(),
                r.v_true.to_string(),
                r.v_hat.to_string(),
                r.v_hat_px.to_string(),
                r.v_true_closed_form.to_string(),
                r.closed_form_agrees.to_string(),
                (r.v_true > r.v_hat).to_string(),
            ]
        }),
    )
}
