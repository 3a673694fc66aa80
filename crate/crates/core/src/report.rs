//! Indirect misspecification evidence from a coefficient table.
//!
//! When the working model is correct, sandwich and conventional standard
//! errors estimate the same quantity. Large ratios between them, or
//! significance decisions that flip between the two columns, are indirect
//! evidence that the model is misspecified. There is no null distribution
//! behind the ratio cutoff: it is a heuristic knob.

use std::fmt::Write as _;

use serde::Serialize;

use crate::covariance::CoefficientTable;
use crate::error::{Error, Result};

pub const DEFAULT_RATIO_THRESHOLD: f64 = 1.5;
pub const DEFAULT_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeRatio {
    pub label: String,
    /// `Sand.SE / SE`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reversal {
    pub label: String,
    pub p_conv: f64,
    pub p_sand: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MisspecIndicator {
    pub ratios: Vec<SeRatio>,
    pub flagged: Vec<String>,
    pub decision_reversals: Vec<Reversal>,
    pub level: f64,
    pub ratio_threshold: f64,
}

pub fn misspec_indicator(table: &CoefficientTable, level: f64, ratio_threshold: f64) -> Result<MisspecIndicator> {
    if !(ratio_threshold >= 1.0) {
        return Err(Error::Invalid(format!("ratio threshold must be >= 1, got {ratio_threshold}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Level(level));
    }
    let mut ratios = Vec::new();
    let mut flagged = Vec::new();
    let mut reversals = Vec::new();
    for row in &table.rows {
        if !row.se_sand.is_finite() || !row.p_sand.is_finite() {
            return Err(Error::Invalid(format!("row `{}` has no sandwich column", row.label)));
        }
        let ratio = if row.se_conv > 0.0 {
            row.se_sand / row.se_conv
        } else if row.se_sand == 0.0 {
            1.0
        } else {
            f64::INFINITY
        };
        if ratio > ratio_threshold || ratio < 1.0 / ratio_threshold {
            flagged.push(row.label.clone());
        }
        ratios.push(SeRatio {
            label: row.label.clone(),
            ratio,
        });
        let conv_rejects = row.p_conv < level;
        let sand_rejects = row.p_sand < level;
        if conv_rejects != sand_rejects {
            reversals.push(Reversal {
                label: row.label.clone(),
                p_conv: row.p_conv,
                p_sand: row.p_sand,
            });
        }
    }
    Ok(MisspecIndicator {
        ratios,
        flagged,
        decision_reversals: reversals,
        level,
        ratio_threshold,
    })
}

impl MisspecIndicator {
    /// Trailing diagnostics block for text reports.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Misspecification diagnostics (indirect evidence, not a test; ratio threshold {}, level {})",
            self.ratio_threshold, self.level
        );
        let w = self.ratios.iter().map(|r| r.label.chars().count()).max().unwrap_or(0);
        for r in &self.ratios {
            let mark = if self.flagged.contains(&r.label) { "  *" } else { "" };
            let _ = writeln!(out, "  {:<w$}  Sand.SE/SE = {:>8.4}{mark}", r.label, r.ratio);
        }
        if self.decision_reversals.is_empty() {
            let _ = writeln!(out, "  no decision reversals");
        } else {
            for rev in &self.decision_reversals {
                let _ = writeln!(
                    out,
                    "  reversal: {} (p-value {:.4} vs Sand-p {:.4})",
                    rev.label, rev.p_conv, rev.p_sand
                );
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::CoefficientRow;

    fn row(label: &str, se: f64, p: f64, sand: f64, sp: f64) -> CoefficientRow {
        CoefficientRow {
            label: label.into(),
            coef: 0.0,
            se_conv: se,
            p_conv: p,
            se_boot: None,
            se_sand: sand,
            p_sand: sp,
        }
    }

    #[test]
    fn identical_columns_raise_nothing() {
        let t = CoefficientTable {
            rows: vec![row("a", 0.1, 0.01, 0.1, 0.01), row("b", 0.2, 0.5, 0.2, 0.5)],
        };
        let m = misspec_indicator(&t, 0.05, 1.5).unwrap();
        assert!(m.flagged.is_empty());
        assert!(m.decision_reversals.is_empty());
        assert!(m.ratios.iter().all(|r| r.ratio == 1.0));
    }

    #[test]
    fn small_ratio_is_flagged_too() {
        let t = CoefficientTable {
            rows: vec![row("a", 0.3, 0.5, 0.1, 0.5)],
        };
        assert_eq!(misspec_indicator(&t, 0.05, 1.5).unwrap().flagged, vec!["a".to_string()]);
    }

    #[test]
    fn missing_sandwich_column() {
        let t = CoefficientTable {
            rows: vec![row("a", 0.3, 0.5, f64::NAN, f64::NAN)],
        };
        assert!(misspec_indicator(&t, 0.05, 1.5).is_err());
    }
}
