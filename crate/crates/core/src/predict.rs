//! Prediction intervals `ŷ_x ± K σ̂ (1 + x'(Σ X_i X_i')⁻¹ x)` with the
//! multiplier `K` calibrated on data instead of taken from normal theory.
//!
//! The intervals form a nested one-parameter family in `K`, so coverage is
//! decided by comparing each observation's minimal covering multiplier
//! with `K`. Calibration picks the order statistic of those multipliers
//! that covers the requested fraction of the training sample.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{build_design, Dataset};
use crate::error::{Error, Result};
use crate::fit::{fit_ols, Family, FitResult};
use crate::linalg::{gram, inverse_spd, quad_form};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBand {
    pub k: f64,
    pub sigma_hat: f64,
    pub xtx_inverse: DMatrix<f64>,
    pub beta_hat: DVector<f64>,
    pub alpha: f64,
    pub family: Family,
    pub labels: Vec<String>,
    /// Residual sizes at or below this count as zero.
    zero_tol: f64,
}

fn zero_tolerance(y: &DVector<f64>) -> f64 {
    1e-12 * (1.0 + y.amax())
}

fn residual_scale(fit: &FitResult) -> Result<f64> {
    let n = fit.n();
    let k = fit.beta_hat.len();
    match fit.family {
        Family::Gaussian => {
            if n <= k {
                return Err(Error::DegreesOfFreedom { n, needed: k });
            }
            Ok((fit.residuals.norm_squared() / (n - k) as f64).sqrt())
        }
        _ => Ok((fit.residuals.norm_squared() / n as f64).sqrt()),
    }
}

impl PredictionBand {
    /// Band around `fit` with multiplier `k`.
    pub fn from_fit(fit: &FitResult, k: f64, alpha: f64) -> Result<Self> {
        if !(k >= 0.0) {
            return Err(Error::Invalid(format!("multiplier must be nonnegative, got {k}")));
        }
        check_alpha(alpha)?;
        Ok(PredictionBand {
            k,
            sigma_hat: residual_scale(fit)?,
            xtx_inverse: inverse_spd(&gram(fit.design().matrix()))?,
            beta_hat: fit.beta_hat.clone(),
            alpha,
            family: fit.family,
            labels: fit.labels().to_vec(),
            zero_tol: zero_tolerance(fit.response()),
        })
    }

    pub fn with_k(&self, k: f64) -> Self {
        PredictionBand { k, ..self.clone() }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.beta_hat.len() {
            return Err(Error::Dimension {
                expected: self.beta_hat.len(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn point_prediction(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let eta: f64 = x.iter().zip(self.beta_hat.iter()).map(|(a, b)| a * b).sum();
        Ok(self.family.inverse_link(eta))
    }

    /// `1 + x'(Σ X_i X_i')⁻¹ x`.
    pub fn leverage_factor(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(1.0 + quad_form(&self.xtx_inverse, x))
    }

    /// `[lower, upper]` at `x` (with its leading 1).
    pub fn interval(&self, x: &[f64]) -> Result<(f64, f64)> {
        let yhat = self.point_prediction(x)?;
        let half = self.k * self.sigma_hat * self.leverage_factor(x)?;
        Ok((yhat - half, yhat + half))
    }

    /// Smallest multiplier whose interval at `x` contains `y`.
    pub fn required_multiplier(&self, x: &[f64], y: f64) -> Result<f64> {
        let abs_resid = (y - self.point_prediction(x)?).abs();
        let denom = self.sigma_hat * self.leverage_factor(x)?;
        Ok(multiplier(abs_resid, denom, self.zero_tol))
    }

    pub fn covers(&self, x: &[f64], y: f64) -> Result<bool> {
        Ok(self.required_multiplier(x, y)? <= self.k)
    }
}

fn multiplier(abs_resid: f64, denom: f64, zero_tol: f64) -> f64 {
    if abs_resid <= zero_tol {
        0.0
    } else if denom <= zero_tol {
        f64::INFINITY
    } else {
        abs_resid / denom
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Level(alpha));
    }
    Ok(())
}

/// `⌈(1−α) n⌉`, clamped to `1..=n`.
fn covering_rank(alpha: f64, n: usize) -> usize {
    let raw = ((1.0 - alpha) * n as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(n)
}

/// Order-statistic choice of `K` from per-observation multipliers.
fn order_statistic_k(multipliers: &[f64], alpha: f64) -> f64 {
    let n = multipliers.len();
    let mut sorted = multipliers.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = covering_rank(alpha, n);
    let k = sorted[rank - 1];
    let covered = sorted.iter().filter(|&&v| v <= k).count();
    if covered as f64 > (1.0 - alpha) * n as f64 + 1.0 {
        // a tie block overshoots; fall back to the smallest K covering at
        // least (1 − α − 1/n) n points
        let lower_rank = (((1.0 - alpha) * n as f64 - 1.0 - 1e-9).ceil().max(1.0) as usize).min(n);
        return sorted[lower_rank - 1];
    }
    k
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub k_hat: f64,
    pub training_coverage: f64,
    pub alpha: f64,
    pub n: usize,
}

fn training_multipliers(band: &PredictionBand, fit: &FitResult) -> Vec<f64> {
    let x = fit.design();
    (0..fit.n())
        .map(|i| {
            let row = x.row(i);
            let lev = 1.0 + quad_form(&band.xtx_inverse, &row);
            multiplier(fit.residuals[i].abs(), band.sigma_hat * lev, band.zero_tol)
        })
        .collect()
}

fn calibrate(fit: &FitResult, alpha: f64) -> Result<(Calibration, PredictionBand)> {
    check_alpha(alpha)?;
    let band = PredictionBand::from_fit(fit, 0.0, alpha)?;
    if fit.residuals.amax() <= band.zero_tol {
        return Err(Error::ZeroScale);
    }
    let ks = training_multipliers(&band, fit);
    let k_hat = order_statistic_k(&ks, alpha);
    let covered = ks.iter().filter(|&&k| k <= k_hat).count();
    let cal = Calibration {
        k_hat,
        training_coverage: covered as f64 / ks.len() as f64,
        alpha,
        n: ks.len(),
    };
    Ok((cal, band.with_k(k_hat)))
}

/// Calibrates `K` on the training sample of an OLS fit.
pub fn calibrate_k(fit: &FitResult, alpha: f64) -> Result<Calibration> {
    if fit.family != Family::Gaussian {
        return Err(Error::Family(format!(
            "calibration is defined for OLS fits; use calibrate_k_response_scale for {}",
            fit.family
        )));
    }
    calibrate(fit, alpha).map(|(c, _)| c)
}

/// Calibrated band for an OLS fit.
pub fn calibrated_band(fit: &FitResult, alpha: f64) -> Result<(Calibration, PredictionBand)> {
    if fit.family != Family::Gaussian {
        return Err(Error::Family(format!("calibrated bands are defined for OLS fits, not {}", fit.family)));
    }
    calibrate(fit, alpha)
}

/// Extension to GLM fits on the response scale: `ŷ = inverse_link(β̂'x)`
/// and `σ̂` the root mean squared response residual.
pub fn calibrate_k_response_scale(fit: &FitResult, alpha: f64) -> Result<(Calibration, PredictionBand)> {
    calibrate(fit, alpha)
}

/// Cross-validated `K`: multipliers of held-out observations against
/// fold-specific fits, pooled before taking the order statistic.
pub fn cv_calibrate_k(ds: &Dataset, alpha: f64, folds: usize, seed: u64) -> Result<f64> {
    check_alpha(alpha)?;
    let n = ds.n();
    if folds < 2 || folds > n {
        return Err(Error::Invalid(format!("folds must lie in 2..={n}, got {folds}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, 0));
    let mut assignment = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos % folds;
    }
    let needed = ds.p() + 1;

    let per_fold: Vec<Result<Vec<f64>>> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| assignment[i] == f).collect();
            let fold_err = || Error::FoldSize {
                fold: f,
                train: train.len(),
                needed,
            };
            if train.len() <= needed {
                return Err(fold_err());
            }
            let train_ds = ds.select(&train);
            let fit = fit_ols(&build_design(&train_ds), train_ds.response()).map_err(|e| match e {
                Error::Singular { .. } => fold_err(),
                other => other,
            })?;
            let band = PredictionBand::from_fit(&fit, 0.0, alpha)?;
            test.iter()
                .map(|&i| {
                    let mut x = vec![1.0];
                    x.extend(ds.row(i));
                    band.required_multiplier(&x, ds.response()[i])
                })
                .collect()
        })
        .collect();
    let mut pooled = Vec::with_capacity(n);
    for fold in per_fold {
        pooled.extend(fold?);
    }
    Ok(order_statistic_k(&pooled, alpha))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FutureCoverage {
    pub coverage: f64,
    pub n_test: usize,
    pub nominal: f64,
    /// Set when coverage leaves the two-standard-error Monte Carlo band
    /// around `1 − α`, e.g. because the regressor law shifted. Not an error.
    pub caveat: Option<String>,
}

/// Fraction of `testset` observations inside their intervals.
pub fn future_coverage(band: &PredictionBand, testset: &Dataset) -> Result<FutureCoverage> {
    let expected_names = &band.labels[1..];
    if testset.names() != expected_names {
        return Err(Error::Invalid(format!(
            "test set regressors {:?} do not match the fitted model's {:?}",
            testset.names(),
            expected_names
        )));
    }
    let dm = build_design(testset);
    let mut covered = 0usize;
    for i in 0..testset.n() {
        if band.covers(&dm.row(i), testset.response()[i])? {
            covered += 1;
        }
    }
    let n_test = testset.n();
    let coverage = covered as f64 / n_test as f64;
    let nominal = 1.0 - band.alpha;
    let mc_se = (band.alpha * nominal / n_test as f64).sqrt();
    let caveat = ((coverage - nominal).abs() > 2.0 * mc_se).then(|| {
        format!(
            "coverage {coverage:.4} is outside {nominal:.2} +/- 2 MC SE; \
             calibration holds only for data from the training distribution"
        )
    });
    Ok(FutureCoverage {
        coverage,
        n_test,
        nominal,
        caveat,
    })
}

/// CSV rows `x..., yhat, lower, upper` for every observation in `ds`.
pub fn intervals_csv(band: &PredictionBand, ds: &Dataset) -> Result<String> {
    let dm = build_design(ds);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ds.names().to_vec();
    header.extend(["yhat".into(), "lower".into(), "upper".into()]);
    w.write_record(&header)?;
    for i in 0..ds.n() {
        let row = dm.row(i);
        let (lo, hi) = band.interval(&row)?;
        let mut rec: Vec<String> = row[1..].iter().map(|v| v.to_string()).collect();
        rec.extend([band.point_prediction(&row)?.to_string(), lo.to_string(), hi.to_string()]);
        w.write_record(&rec)?;
    }
    crate::bootstrap::into_string(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn noisy(n: usize) -> Dataset {
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.731).sin() * 3.0).collect();
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| v * v + ((i * 7919) % 13) as f64 / 6.0 - 1.0)
            .collect();
        Dataset::new("y", vec!["x".into()], y, x.iter().map(|&v| vec![v]).collect()).unwrap()
    }

    fn ols(ds: &Dataset) -> FitResult {
        fit_ols(&build_design(ds), ds.response()).unwrap()
    }

    #[test]
    fn zero_multiplier_is_degenerate() {
        let f = ols(&noisy(20));
        let band = PredictionBand::from_fit(&f, 0.0, 0.1).unwrap();
        let (lo, hi) = band.interval(&[1.0, 0.4]).unwrap();
        assert_eq!(lo, hi);
    }

    #[test]
    fn intercept_only_leverage() {
        let ds = Dataset::new("y", vec![], vec![1.0, 3.0, 2.0, 6.0], vec![vec![]; 4]).unwrap();
        let band = PredictionBand::from_fit(&ols(&ds), 1.0, 0.1).unwrap();
        assert_abs_diff_eq!(band.leverage_factor(&[1.0]).unwrap(), 1.25, epsilon = 1e-15);
    }

    #[test]
    fn intervals_nest() {
        let f = ols(&noisy(20));
        let b1 = PredictionBand::from_fit(&f, 1.0, 0.1).unwrap();
        let b2 = b1.with_k(2.0);
        let (l1, u1) = b1.interval(&[1.0, 0.7]).unwrap();
        let (l2, u2) = b2.interval(&[1.0, 0.7]).unwrap();
        assert!(l2 < l1 && u1 < u2);
        assert!(matches!(b1.interval(&[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn order_statistic_example() {
        assert_eq!(order_statistic_k(&[1.0, 2.0, 0.5, 1.5], 0.25), 1.5);
        // α below 1/n covers everything
        assert_eq!(order_statistic_k(&[1.0, 2.0, 0.5, 1.5], 0.1), 2.0);
    }

    #[test]
    fn tie_block_overshoot_falls_back() {
        // rank 8 of 10 sits in a tie block covering all 10; the fallback
        // picks the smallest K covering at least 7
        let ks = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.9, 0.9, 0.9];
        assert_eq!(order_statistic_k(&ks, 0.25), 0.7);
    }

    #[test]
    fn training_coverage_within_one_over_n() {
        let ds = noisy(57);
        let f = ols(&ds);
        for alpha in [0.05, 0.1, 0.2, 0.5] {
            let cal = calibrate_k(&f, alpha).unwrap();
            assert!((cal.training_coverage - (1.0 - alpha)).abs() <= 1.0 / 57.0 + 1e-12);
        }
        let tiny = calibrate_k(&f, 1e-4).unwrap();
        assert_eq!(tiny.training_coverage, 1.0);
    }

    #[test]
    fn zero_residuals_make_calibration_vacuous() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ds = Dataset::new(
            "y",
            vec!["x".into()],
            x.iter().map(|v| 2.0 * v + 1.0).collect(),
            x.iter().map(|&v| vec![v]).collect(),
        )
        .unwrap();
        assert!(matches!(calibrate_k(&ols(&ds), 0.1), Err(Error::ZeroScale)));
        assert_eq!(cv_calibrate_k(&ds, 0.1, 5, 3).unwrap(), 0.0);
    }

    #[test]
    fn loo_calibration_is_finite() {
        let x: Vec<(f64, f64)> = (0..30).map(|i| ((i as f64 * 0.37).cos(), (i as f64 * 1.3).sin())).collect();
        let y: Vec<f64> = x.iter().enumerate().map(|(i, (a, b))| a - b + (i % 5) as f64 * 0.2).collect();
        let ds = Dataset::new(
            "y",
            vec!["a".into(), "b".into()],
            y,
            x.iter().map(|&(a, b)| vec![a, b]).collect(),
        )
        .unwrap();
        let k = cv_calibrate_k(&ds, 0.1, 30, 1).unwrap();
        assert!(k.is_finite() && k > 0.0);
    }

    #[test]
    fn fold_too_small() {
        let ds = noisy(5);
        assert!(matches!(cv_calibrate_k(&ds, 0.1, 2, 1), Err(Error::FoldSize { .. })));
    }

    #[test]
    fn training_set_as_test_set() {
        let ds = noisy(40);
        let f = ols(&ds);
        let (cal, band) = calibrated_band(&f, 0.1).unwrap();
        let fc = future_coverage(&band, &ds).unwrap();
        assert_eq!(fc.coverage, cal.training_coverage);
        assert!((fc.coverage - 0.9).abs() <= 1.0 / 40.0 + 1e-12);
    }

    #[test]
    fn glm_calibration_is_opt_in() {
        let ds = Dataset::new(
            "y",
            vec!["x".into()],
            vec![0.0, 1.0, 1.0, 3.0, 2.0, 5.0, 4.0, 8.0],
            (0..8).map(|i| vec![i as f64 / 4.0]).collect(),
        )
        .unwrap();
        let f = crate::fit::fit(&build_design(&ds), ds.response(), Family::Poisson).unwrap();
        assert!(matches!(calibrate_k(&f, 0.2), Err(Error::Family(_))));
        let (cal, _) = calibrate_k_response_scale(&f, 0.25).unwrap();
        assert!((cal.training_coverage - 0.75).abs() <= 1.0 / 8.0 + 1e-12);
    }
}
