//! Posterior-sample causal-parent selection.
//!
//! A covariate is declared a parent of the response when the posterior mass
//! of its slope on one side of zero falls below `alpha`: with draws
//! `beta_1..beta_N`, select when `min(#{beta_i < 0}, #{beta_i > 0}) < alpha N`.
//! Draws exactly at zero count toward neither side. The intercept is never
//! a candidate.

use std::io::Write;

use serde::Serialize;

use crate::draws::PosteriorSamples;
use crate::error::{Error, Result};

/// Per-covariate tail counts and decisions.
#[derive(Debug, Clone, Serialize)]
pub struct CovariateDecision {
    /// 1-based covariate index.
    pub index: usize,
    pub negative_count: usize,
    pub positive_count: usize,
    /// `min(neg, pos) / N`.
    pub tail_fraction: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionReport {
    pub alpha: f64,
    pub n_draws: usize,
    pub decisions: Vec<CovariateDecision>,
}

impl SelectionReport {
    pub fn selected_indices(&self) -> Vec<usize> {
        self.decisions
            .iter()
            .filter(|d| d.selected)
            .map(|d| d.index)
            .collect()
    }
}

/// Applies the tail-count rule to every non-intercept slope coordinate.
pub fn select_parents(samples: &PosteriorSamples, alpha: f64) -> Result<SelectionReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Contract(format!("alpha {alpha} outside (0,1)")));
    }
    let n = samples.total_draws();
    if (n as f64) < 1.0 / alpha {
        log::warn!(
            "{n} draws at alpha = {alpha}: the tail-count rule only fires on \
             one-sided posteriors (alpha*N < 1)"
        );
    }
    let threshold = alpha * n as f64;
    let mut decisions = Vec::with_capacity(samples.p());
    for j in 1..=samples.p() {
        let draws = samples.beta_coordinate_draws(j)?;
        let negative_count = draws.iter().filter(|&&v| v < 0.0).count();
        let positive_count = draws.iter().filter(|&&v| v > 0.0).count();
        let min_count = negative_count.min(positive_count);
        decisions.push(CovariateDecision {
            index: j,
            negative_count,
            positive_count,
            tail_fraction: min_count as f64 / n as f64,
            selected: (min_count as f64) < threshold,
        });
    }
    Ok(SelectionReport {
        alpha,
        n_draws: n,
        decisions,
    })
}

/// Two-row (or more) comparison grid: one row per selection report plus a
/// baseline row from per-covariate p-values thresholded at 0.05.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonGrid {
    /// Row labels, aligned with `rows`.
    pub labels: Vec<String>,
    /// 0/1 selection indicators, one inner vector per row.
    pub rows: Vec<Vec<u8>>,
}

pub const BASELINE_P_THRESHOLD: f64 = 0.05;

pub fn selection_table(
    reports: &[SelectionReport],
    baseline_p_values: &[f64],
) -> Result<ComparisonGrid> {
    if reports.is_empty() {
        return Err(Error::Contract("no selection reports".into()));
    }
    let p = reports[0].decisions.len();
    if reports.iter().any(|r| r.decisions.len() != p) || baseline_p_values.len() != p {
        return Err(Error::Contract(
            "covariate sets of reports and baseline do not match".into(),
        ));
    }
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (i, report) in reports.iter().enumerate() {
        labels.push(if reports.len() == 1 {
            "bgi".to_string()
        } else {
            format!("bgi[{i}]")
        });
        rows.push(report.decisions.iter().map(|d| u8::from(d.selected)).collect());
    }
    labels.push("baseline".to_string());
    rows.push(
        baseline_p_values
            .iter()
            .map(|&pv| u8::from(pv < BASELINE_P_THRESHOLD))
            .collect(),
    );
    Ok(ComparisonGrid { labels, rows })
}

impl ComparisonGrid {
    /// Wide CSV: `method,x1,...,xp` with 0/1 cells.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let p = self.rows.first().map_or(0, |r| r.len());
        write!(w, "method")?;
        for j in 1..=p {
            write!(w, ",x{j}")?;
        }
        writeln!(w)?;
        for (label, row) in self.labels.iter().zip(&self.rows) {
            write!(w, "{label}")?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}
