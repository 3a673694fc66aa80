//! Conventional and sandwich covariance estimates for fitted coefficients,
//! normal-reference p-values, and the seven-column coefficient report.
//!
//! All matrices returned here are covariances of `β̂` itself, i.e. the
//! asymptotic variance already divided by `n`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::fit::{Family, FitResult, WEIGHT_FLOOR};
use crate::linalg::{gram, inverse_spd, symmetrize_lower, weighted_gram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceMethod {
    Conventional,
    Sandwich,
    Bootstrap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub matrix: DMatrix<f64>,
    pub method: CovarianceMethod,
    pub n: usize,
}

impl CovarianceEstimate {
    pub fn standard_errors(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }
}

/// Mean per-observation Hessian of the family loss (the "bread").
fn bread(fit: &FitResult) -> DMatrix<f64> {
    let x = fit.design().matrix();
    let n = fit.n() as f64;
    match fit.family {
        Family::Gaussian => gram(x) / n,
        family => {
            let w: Vec<f64> = fit
                .fitted
                .iter()
                .map(|&m| {
                    let v = family.variance(m);
                    if family == Family::Bernoulli {
                        v.max(WEIGHT_FLOOR)
                    } else {
                        v
                    }
                })
                .collect();
            weighted_gram(x, &w) / n
        }
    }
}

/// Model-trusting covariance: `σ̂² (X'X)⁻¹` for OLS, inverse expected
/// information for the GLM families.
pub fn conventional_cov(fit: &FitResult) -> Result<CovarianceEstimate> {
    let n = fit.n();
    let k = fit.beta_hat.len();
    let bread_inv = inverse_spd(&bread(fit))?;
    let matrix = match fit.family {
        Family::Gaussian => {
            if n <= k {
                return Err(Error::DegreesOfFreedom { n, needed: k });
            }
            let sigma2 = fit.residuals.norm_squared() / (n - k) as f64;
            bread_inv * (sigma2 / n as f64)
        }
        _ => bread_inv / n as f64,
    };
    Ok(CovarianceEstimate {
        matrix,
        method: CovarianceMethod::Conventional,
        n,
    })
}

/// Plug-in sandwich `(1/n) B̂⁻¹ M̂ B̂⁻¹` with `M̂ = (1/n) Σ r_i² X_i X_i'`.
pub fn sandwich_cov(fit: &FitResult) -> Result<CovarianceEstimate> {
    let n = fit.n();
    let bread_inv = inverse_spd(&bread(fit))?;
    let r2: Vec<f64> = fit.residuals.iter().map(|r| r * r).collect();
    let meat = weighted_gram(fit.design().matrix(), &r2) / n as f64;
    let mut matrix = &bread_inv * meat * &bread_inv / n as f64;
    symmetrize_lower(&mut matrix);
    Ok(CovarianceEstimate {
        matrix,
        method: CovarianceMethod::Sandwich,
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoefficientInference {
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
    /// Set when SE is zero, where the p-value is a limit rather than a
    /// normal tail probability.
    pub degenerate_se: bool,
}

/// Two-sided normal-reference p-value `2(1 − Φ(|z|))`.
pub fn two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

pub fn inference_for(coef: f64, se: f64) -> CoefficientInference {
    if se > 0.0 {
        let z = coef / se;
        CoefficientInference {
            se,
            z,
            p_value: two_sided_p(z),
            degenerate_se: false,
        }
    } else if coef == 0.0 {
        CoefficientInference {
            se: 0.0,
            z: 0.0,
            p_value: 1.0,
            degenerate_se: true,
        }
    } else {
        CoefficientInference {
            se: 0.0,
            z: coef.signum() * f64::INFINITY,
            p_value: 0.0,
            degenerate_se: true,
        }
    }
}

pub fn se_and_pvalues(fit: &FitResult, cov: &CovarianceEstimate) -> Result<Vec<CoefficientInference>> {
    let k = fit.beta_hat.len();
    if cov.matrix.nrows() != k {
        return Err(Error::Dimension {
            expected: k,
            got: cov.matrix.nrows(),
        });
    }
    Ok(fit
        .beta_hat
        .iter()
        .zip(cov.standard_errors())
        .map(|(&b, se)| inference_for(b, se))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientRow {
    pub label: String,
    pub coef: f64,
    pub se_conv: f64,
    pub p_conv: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se_boot: Option<f64>,
    pub se_sand: f64,
    pub p_sand: f64,
}

/// Per-coefficient report in the column order
/// `Coeff, SE, p-value, Boot.SE, Sand.SE, Sand-p`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientTable {
    pub rows: Vec<CoefficientRow>,
}

pub fn coefficient_table(
    fit: &FitResult,
    conv: &CovarianceEstimate,
    sand: &CovarianceEstimate,
    boot_se: Option<&[f64]>,
) -> Result<CoefficientTable> {
    let conv_inf = se_and_pvalues(fit, conv)?;
    let sand_inf = se_and_pvalues(fit, sand)?;
    let k = fit.beta_hat.len();
    if let Some(b) = boot_se {
        if b.len() != k {
            return Err(Error::Dimension {
                expected: k,
                got: b.len(),
            });
        }
    }
    let rows = (0..k)
        .map(|j| CoefficientRow {
            label: fit.labels()[j].clone(),
            coef: fit.beta_hat[j],
            se_conv: conv_inf[j].se,
            p_conv: conv_inf[j].p_value,
            se_boot: boot_se.map(|b| b[j]),
            se_sand: sand_inf[j].se,
            p_sand: sand_inf[j].p_value,
        })
        .collect();
    Ok(CoefficientTable { rows })
}

impl CoefficientTable {
    fn has_boot(&self) -> bool {
        self.rows.iter().any(|r| r.se_boot.is_some())
    }

    pub fn headers(&self) -> Vec<&'static str> {
        let mut h = vec!["Coeff", "SE", "p-value"];
        if self.has_boot() {
            h.push("Boot.SE");
        }
        h.extend(["Sand.SE", "Sand-p"]);
        h
    }

    fn numeric_cells(&self, row: &CoefficientRow) -> Vec<f64> {
        let mut v = vec![row.coef, row.se_conv, row.p_conv];
        if self.has_boot() {
            v.push(row.se_boot.unwrap_or(f64::NAN));
        }
        v.extend([row.se_sand, row.p_sand]);
        v
    }

    /// Aligned plain text, four decimals.
    pub fn render_text(&self) -> String {
        let label_w = self.rows.iter().map(|r| r.label.chars().count()).max().unwrap_or(0);
        let mut out = String::new();
        let _ = write!(out, "{:<label_w$}", "");
        for h in self.headers() {
            let _ = write!(out, "  {h:>9}");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:<label_w$}", row.label);
            for v in self.numeric_cells(row) {
                let _ = write!(out, "  {:>9}", format_4(v));
            }
            out.push('\n');
        }
        out
    }

    pub fn render_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// CSV with a `label` column followed by the report columns, four
    /// decimals.
    pub fn render_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["label"];
        header.extend(self.headers());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.label.clone()];
            rec.extend(self.numeric_cells(row).into_iter().map(format_4));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub(crate) fn format_4(v: f64) -> String {
    if v.is_nan() {
        return "NA".to_string();
    }
    let s = format!("{v:.4}");
    // "-0.0000" reads as noise in a report
    if s == "-0.0000" {
        "0.0000".to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_design, Dataset};
    use crate::fit::fit_ols;
    use approx::assert_abs_diff_eq;

    fn ols(x: &[f64], y: &[f64]) -> FitResult {
        let ds = Dataset::new("y", vec!["x".into()], y.to_vec(), x.iter().map(|&v| vec![v]).collect()).unwrap();
        fit_ols(&build_design(&ds), ds.response()).unwrap()
    }

    #[test]
    fn exact_linear_data_has_zero_conventional_cov() {
        let f = ols(&[0.0, 1.0, 2.0, 3.0], &[1.0, 3.0, 5.0, 7.0]);
        let c = conventional_cov(&f).unwrap();
        assert!(c.matrix.iter().all(|v| v.abs() < 1e-20));
    }

    #[test]
    fn intercept_only_conventional_variance() {
        let ds = Dataset::new("y", vec![], vec![0.0, 2.0], vec![vec![]; 2]).unwrap();
        let f = fit_ols(&build_design(&ds), ds.response()).unwrap();
        let c = conventional_cov(&f).unwrap();
        assert_abs_diff_eq!(c.matrix[(0, 0)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn conventional_needs_degrees_of_freedom() {
        let f = ols(&[0.0, 1.0], &[0.0, 1.0]);
        assert!(matches!(conventional_cov(&f), Err(Error::DegreesOfFreedom { .. })));
    }

    #[test]
    fn two_point_sandwich_by_hand() {
        // slope 1, intercept 0, residuals (1, -1, -1, 1)
        let f = ols(&[1.0, -1.0, 1.0, -1.0], &[2.0, -2.0, 0.0, 0.0]);
        assert_abs_diff_eq!(f.beta_hat[1], 1.0, epsilon = 1e-12);
        let s = sandwich_cov(&f).unwrap();
        // B = I, M = I, so cov = I / n
        assert_abs_diff_eq!(s.matrix[(1, 1)], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(s.matrix[(0, 0)], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(s.matrix[(0, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn hand_evaluated_meat_with_two_observations() {
        // Direct evaluation: points (x, r) = (1, 1), (-1, -1); B = I, M = I.
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]);
        let r = [1.0, -1.0];
        let b = gram(&x) / 2.0;
        let m = weighted_gram(&x, &[r[0] * r[0], r[1] * r[1]]) / 2.0;
        assert_abs_diff_eq!(m[(1, 1)], 1.0, epsilon = 1e-15);
        let bi = inverse_spd(&b).unwrap();
        let cov = &bi * m * &bi / 2.0;
        assert_abs_diff_eq!(cov[(1, 1)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn p_values() {
        assert_eq!(inference_for(0.0, 0.3).p_value, 1.0);
        assert_abs_diff_eq!(inference_for(1.96, 1.0).p_value, 0.05, epsilon = 1e-4);
        let d = inference_for(0.5, 0.0);
        assert!(d.degenerate_se);
        assert_eq!(d.p_value, 0.0);
    }

    #[test]
    fn table_rows_and_headers() {
        let f = ols(&[0.0, 1.0, 2.0, 3.0], &[1.0, 3.0, 5.0, 7.0]);
        let t = coefficient_table(&f, &conventional_cov(&f).unwrap(), &sandwich_cov(&f).unwrap(), None).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[0].label, "(Intercept)");
        assert_eq!(t.headers(), vec!["Coeff", "SE", "p-value", "Sand.SE", "Sand-p"]);
        let with_boot = coefficient_table(
            &f,
            &conventional_cov(&f).unwrap(),
            &sandwich_cov(&f).unwrap(),
            Some(&[0.0, 0.0]),
        )
        .unwrap();
        assert_eq!(
            with_boot.headers(),
            vec!["Coeff", "SE", "p-value", "Boot.SE", "Sand.SE", "Sand-p"]
        );
        assert!(with_boot.render_text().lines().count() == 3);
    }

    #[test]
    fn table_dimension_mismatch() {
        let f = ols(&[0.0, 1.0, 2.0, 3.0], &[1.0, 3.0, 5.0, 7.0]);
        let conv = conventional_cov(&f).unwrap();
        let sand = sandwich_cov(&f).unwrap();
        assert!(coefficient_table(&f, &conv, &sand, Some(&[1.0])).is_err());
    }
}
