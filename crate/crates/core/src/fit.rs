//! Plug-in estimation of regression functionals.
//!
//! Every fit returns the coefficient vector that minimizes the sample
//! analog of the population cost: squared error for OLS, the Bernoulli
//! negative log-likelihood for the logit family and the Poisson one (without
//! the `log Y!` term) for the log family. The coefficients target the best
//! approximation within the working model, whether or not that model is
//! correct.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::{check_rank, DesignMatrix};
use crate::error::{Error, Result};
use crate::linalg::{ensure_well_posed, gram, solve_spd, weighted_gram};

/// Largest |coefficient| on the logit scale before a Bernoulli fit is
/// declared separated.
pub const SEPARATION_BOUND: f64 = 30.0;

/// Floor on Bernoulli IRLS weights so the weighted system stays solvable.
pub const WEIGHT_FLOOR: f64 = 1e-10;

const MAX_HALVINGS: usize = 10;

/// Working-model family, each with its canonical link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Family {
    /// Gaussian response, identity link (OLS).
    #[serde(rename = "gaussian-identity")]
    Gaussian,
    /// Binary response, logit link.
    #[serde(rename = "bernoulli-logit")]
    Bernoulli,
    /// Count response, log link.
    #[serde(rename = "poisson-log")]
    Poisson,
}

impl Family {
    pub fn tag(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian-identity",
            Family::Bernoulli => "bernoulli-logit",
            Family::Poisson => "poisson-log",
        }
    }

    /// Mean as a function of the linear predictor.
    pub fn inverse_link(self, t: f64) -> f64 {
        match self {
            Family::Gaussian => t,
            Family::Bernoulli => logistic(t),
            Family::Poisson => t.exp(),
        }
    }

    /// Variance function; for canonical links also dμ/dη.
    pub fn variance(self, mu: f64) -> f64 {
        match self {
            Family::Gaussian => 1.0,
            Family::Bernoulli => mu * (1.0 - mu),
            Family::Poisson => mu,
        }
    }

    /// Per-observation loss whose mean is the sample objective.
    pub fn loss(self, eta: f64, y: f64) -> f64 {
        match self {
            Family::Gaussian => 0.5 * (y - eta) * (y - eta),
            Family::Bernoulli => softplus(eta) - eta * y,
            Family::Poisson => eta.exp() - eta * y,
        }
    }

    pub fn check_support(self, y: &DVector<f64>) -> Result<()> {
        match self {
            Family::Gaussian => Ok(()),
            Family::Bernoulli => match y.iter().position(|&v| v != 0.0 && v != 1.0) {
                Some(i) => Err(Error::Family(format!(
                    "bernoulli response must be 0/1, row {} has {}",
                    i + 1,
                    y[i]
                ))),
                None => Ok(()),
            },
            Family::Poisson => match y.iter().position(|&v| v < 0.0 || v.fract() != 0.0) {
                Some(i) => Err(Error::Family(format!(
                    "poisson response must be a nonnegative integer, row {} has {}",
                    i + 1,
                    y[i]
                ))),
                None => Ok(()),
            },
        }
    }

    fn deviance(self, y: &DVector<f64>, mu: &DVector<f64>) -> f64 {
        match self {
            Family::Gaussian => y.iter().zip(mu.iter()).map(|(a, b)| (a - b) * (a - b)).sum(),
            Family::Bernoulli => {
                2.0 * y
                    .iter()
                    .zip(mu.iter())
                    .map(|(&y, &m)| if y == 1.0 { -m.ln() } else { -(1.0 - m).ln() })
                    .sum::<f64>()
            }
            Family::Poisson => {
                2.0 * y
                    .iter()
                    .zip(mu.iter())
                    .map(|(&y, &m)| {
                        let log_term = if y > 0.0 { y * (y / m).ln() } else { 0.0 };
                        log_term - (y - m)
                    })
                    .sum::<f64>()
            }
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ols" | "gaussian" | "gaussian-identity" => Ok(Family::Gaussian),
            "logit" | "logistic" | "bernoulli" | "bernoulli-logit" => Ok(Family::Bernoulli),
            "poisson" | "poisson-log" => Ok(Family::Poisson),
            other => Err(Error::Family(format!("unknown family `{other}`"))),
        }
    }
}

pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^t) without overflow.
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlsOptions {
    pub max_iter: usize,
    /// Relative coefficient change below which iteration stops.
    pub tol: f64,
    /// Bound on the scaled mean score at convergence.
    pub score_tol: f64,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        IrlsOptions {
            max_iter: 50,
            tol: 1e-9,
            score_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IrlsStep {
    pub iteration: usize,
    pub objective: f64,
    pub relative_change: f64,
    pub score_norm: f64,
    pub halvings: usize,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub family: Family,
    pub beta_hat: DVector<f64>,
    /// Fitted means on the response scale.
    pub fitted: DVector<f64>,
    pub residuals: DVector<f64>,
    pub linear_predictor: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// SSE for OLS, deviance for the GLM families.
    pub deviance_or_sse: f64,
    pub trace: Vec<IrlsStep>,
    pub warnings: Vec<String>,
    design: DesignMatrix,
    response: DVector<f64>,
}

impl FitResult {
    pub fn design(&self) -> &DesignMatrix {
        &self.design
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    pub fn n(&self) -> usize {
        self.design.n()
    }

    pub fn labels(&self) -> &[String] {
        self.design.labels()
    }

    /// max_j |Σ_i (μ̂_i − Y_i) X_ij| / n.
    pub fn score_norm(&self) -> f64 {
        mean_score_norm(self.design.matrix(), &self.residuals)
    }

    pub fn summary(&self) -> FitSummary {
        FitSummary {
            family: self.family,
            coefficients: self
                .labels()
                .iter()
                .zip(self.beta_hat.iter())
                .map(|(l, &v)| LabeledValue {
                    label: l.clone(),
                    value: v,
                })
                .collect(),
            converged: self.converged,
            iterations: self.iterations,
            deviance_or_sse: self.deviance_or_sse,
            n: self.n(),
            warnings: self.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LabeledValue {
    pub label: String,
    pub value: f64,
}

/// JSON-facing view of a fit.
#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub family: Family,
    pub coefficients: Vec<LabeledValue>,
    pub converged: bool,
    pub iterations: usize,
    pub deviance_or_sse: f64,
    pub n: usize,
    pub warnings: Vec<String>,
}

fn mean_score_norm(x: &DMatrix<f64>, residuals: &DVector<f64>) -> f64 {
    let n = x.nrows() as f64;
    let s = x.tr_mul(residuals);
    s.iter().fold(0.0_f64, |m, v| m.max(v.abs())) / n
}

fn check_dims(dm: &DesignMatrix, y: &DVector<f64>) -> Result<()> {
    if dm.n() != y.len() {
        return Err(Error::Dimension {
            expected: dm.n(),
            got: y.len(),
        });
    }
    Ok(())
}

fn rank_gate(dm: &DesignMatrix) -> Result<()> {
    let report = check_rank(dm);
    if !report.full_rank {
        let second = gram(dm.matrix()) / dm.n() as f64;
        let (_, max) = crate::linalg::eigen_extremes(&second);
        return Err(Error::Singular {
            min_eigenvalue: report.min_eigenvalue,
            max_eigenvalue: max,
        });
    }
    Ok(())
}

/// OLS by the normal equations `(Σ X_i X_i') β = Σ X_i Y_i`.
pub fn fit_ols(dm: &DesignMatrix, y: &DVector<f64>) -> Result<FitResult> {
    check_dims(dm, y)?;
    rank_gate(dm)?;
    let x = dm.matrix();
    let xtx = gram(x);
    let mut beta = solve_spd(&xtx, &x.tr_mul(y))?;
    // one step of iterative refinement keeps X'r at roundoff level
    let r = y - x * &beta;
    beta += solve_spd(&xtx, &x.tr_mul(&r))?;

    let fitted = x * &beta;
    let residuals = y - &fitted;
    let sse = residuals.norm_squared();
    let mut warnings = Vec::new();
    if dm.n() <= dm.ncols() {
        warnings.push(format!(
            "n = {} does not exceed p + 1 = {}; residual variance is not estimable",
            dm.n(),
            dm.ncols()
        ));
    }
    Ok(FitResult {
        family: Family::Gaussian,
        linear_predictor: fitted.clone(),
        beta_hat: beta,
        fitted,
        residuals,
        converged: true,
        iterations: 1,
        deviance_or_sse: sse,
        trace: Vec::new(),
        warnings,
        design: dm.clone(),
        response: y.clone(),
    })
}

fn objective(family: Family, eta: &DVector<f64>, y: &DVector<f64>) -> f64 {
    eta.iter().zip(y.iter()).map(|(&e, &v)| family.loss(e, v)).sum()
}

fn initial_beta(family: Family, k: usize, y: &DVector<f64>) -> DVector<f64> {
    let mut beta = DVector::zeros(k);
    if family == Family::Poisson {
        beta[0] = (y.mean() + 0.5).ln();
    }
    beta
}

/// GLM fit by Newton-type iteratively reweighted least squares with step
/// halving.
pub fn fit_glm(dm: &DesignMatrix, y: &DVector<f64>, family: Family, opts: IrlsOptions) -> Result<FitResult> {
    check_dims(dm, y)?;
    family.check_support(y)?;
    rank_gate(dm)?;
    let x = dm.matrix();
    let n = dm.n() as f64;
    let k = dm.ncols();
    let scale = {
        let y_scale = 1.0 + y.iter().map(|v| v.abs()).sum::<f64>() / n;
        let x_scale = (0..k)
            .map(|j| x.column(j).iter().map(|v| v.abs()).sum::<f64>() / n)
            .fold(0.0_f64, f64::max);
        y_scale * x_scale
    };

    let mut beta = initial_beta(family, k, y);
    let mut eta = x * &beta;
    let mut obj = objective(family, &eta, y);
    let mut trace = Vec::new();
    let mut score_norm = f64::INFINITY;

    for iteration in 1..=opts.max_iter {
        let mu = eta.map(|e| family.inverse_link(e));
        let weights: Vec<f64> = mu
            .iter()
            .map(|&m| match family {
                Family::Bernoulli => family.variance(m).max(WEIGHT_FLOOR),
                _ => family.variance(m),
            })
            .collect();
        let score = x.tr_mul(&(y - &mu));
        let hessian = weighted_gram(x, &weights);
        ensure_well_posed(&hessian)?;
        let step = solve_spd(&hessian, &score)?;

        let mut t = 1.0;
        let mut halvings = 0;
        let (next_beta, next_eta, next_obj) = loop {
            let cand = &beta + &step * t;
            let cand_eta = x * &cand;
            let cand_obj = objective(family, &cand_eta, y);
            if cand_obj.is_finite() && cand_obj <= obj + 1e-12 * (1.0 + obj.abs()) {
                break (cand, cand_eta, cand_obj);
            }
            if halvings == MAX_HALVINGS {
                if cand_obj.is_finite() {
                    break (cand, cand_eta, cand_obj);
                }
                return Err(Error::NonConvergence {
                    iterations: iteration,
                    score_norm,
                    beta: beta.iter().copied().collect(),
                });
            }
            t *= 0.5;
            halvings += 1;
        };

        let change = (&next_beta - &beta).amax();
        let relative_change = change / next_beta.amax().max(1.0);
        beta = next_beta;
        eta = next_eta;
        obj = next_obj;

        let mu = eta.map(|e| family.inverse_link(e));
        score_norm = mean_score_norm(x, &(&mu - y));
        trace.push(IrlsStep {
            iteration,
            objective: obj,
            relative_change,
            score_norm,
            halvings,
        });

        if family == Family::Bernoulli && beta.amax() > SEPARATION_BOUND {
            return Err(Error::Separation {
                iterations: iteration,
                max_abs_beta: beta.amax(),
            });
        }
        if relative_change < opts.tol && score_norm <= opts.score_tol * scale {
            let fitted = mu;
            let residuals = y - &fitted;
            return Ok(FitResult {
                family,
                deviance_or_sse: family.deviance(y, &fitted),
                beta_hat: beta,
                fitted,
                residuals,
                linear_predictor: eta,
                converged: true,
                iterations: iteration,
                trace,
                warnings: Vec::new(),
                design: dm.clone(),
                response: y.clone(),
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        score_norm,
        beta: beta.iter().copied().collect(),
    })
}

/// Fits the working model of `family`: OLS for gaussian, IRLS otherwise.
pub fn fit(dm: &DesignMatrix, y: &DVector<f64>, family: Family) -> Result<FitResult> {
    match family {
        Family::Gaussian => fit_ols(dm, y),
        _ => fit_glm(dm, y, family, IrlsOptions::default()),
    }
}

/// Fitted mean at `x` (with its leading 1).
pub fn predict_mean(fit: &FitResult, x: &[f64]) -> Result<f64> {
    if x.len() != fit.beta_hat.len() {
        return Err(Error::Dimension {
            expected: fit.beta_hat.len(),
            got: x.len(),
        });
    }
    let eta: f64 = x.iter().zip(fit.beta_hat.iter()).map(|(a, b)| a * b).sum();
    Ok(fit.family.inverse_link(eta))
}

/// Multiplicative effect on the mean of raising a regressor by `delta`
/// under a log link: `exp(beta * delta)`.
pub fn count_multiplier(beta: f64, delta: f64) -> f64 {
    (beta * delta).exp()
}

/// [`count_multiplier`] for coefficient `j` of a Poisson fit.
pub fn exp_coef(fit: &FitResult, j: usize, delta: f64) -> Result<f64> {
    if fit.family != Family::Poisson {
        return Err(Error::Family(format!(
            "exponentiated coefficients are count multipliers only under the log link, not {}",
            fit.family
        )));
    }
    if j >= fit.beta_hat.len() {
        return Err(Error::Index {
            index: j,
            len: fit.beta_hat.len(),
        });
    }
    Ok(count_multiplier(fit.beta_hat[j], delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_design, Dataset};
    use approx::assert_abs_diff_eq;

    fn simple(x: &[f64], y: &[f64]) -> (DesignMatrix, DVector<f64>) {
        let ds = Dataset::new(
            "y",
            vec!["x".into()],
            y.to_vec(),
            x.iter().map(|&v| vec![v]).collect(),
        )
        .unwrap();
        (build_design(&ds), ds.response().clone())
    }

    #[test]
    fn exact_linear_data() {
        let (dm, y) = simple(&[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0]);
        let f = fit_ols(&dm, &y).unwrap();
        assert_abs_diff_eq!(f.beta_hat[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.beta_hat[1], 1.0, epsilon = 1e-12);
        assert!(f.residuals.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn quadratic_on_three_points() {
        let (dm, y) = simple(&[0.0, 1.0, 2.0], &[0.0, 1.0, 4.0]);
        let f = fit_ols(&dm, &y).unwrap();
        assert_abs_diff_eq!(f.beta_hat[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.beta_hat[0], -1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn intercept_only_is_mean() {
        let ds = Dataset::new("y", vec![], vec![1.0, 4.0, 7.0, 2.0], vec![vec![]; 4]).unwrap();
        let f = fit_ols(&build_design(&ds), ds.response()).unwrap();
        assert_abs_diff_eq!(f.beta_hat[0], 3.5, epsilon = 1e-12);
    }

    #[test]
    fn rank_deficient_design_is_singular() {
        let ds = Dataset::new(
            "y",
            vec!["a".into(), "b".into()],
            vec![1.0, 2.0, 3.0],
            vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]],
        )
        .unwrap();
        let err = fit_ols(&build_design(&ds), ds.response()).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
    }

    #[test]
    fn symmetric_bernoulli_gives_zero() {
        let x = [-1.0, -1.0, 1.0, 1.0];
        let y = [0.0, 1.0, 0.0, 1.0];
        let (dm, y) = simple(&x, &y);
        let f = fit_glm(&dm, &y, Family::Bernoulli, IrlsOptions::default()).unwrap();
        assert_abs_diff_eq!(f.beta_hat[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.beta_hat[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(predict_mean(&f, &[1.0, 3.0]).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn poisson_intercept_only_is_log_mean() {
        let ds = Dataset::new("y", vec![], vec![1.0, 2.0, 3.0], vec![vec![]; 3]).unwrap();
        let f = fit_glm(&build_design(&ds), ds.response(), Family::Poisson, IrlsOptions::default()).unwrap();
        assert_abs_diff_eq!(f.beta_hat[0], 2f64.ln(), epsilon = 1e-10);
        assert_abs_diff_eq!(predict_mean(&f, &[1.0]).unwrap(), 2.0, epsilon = 1e-9);
    }

    #[test]
    fn separated_bernoulli_errors() {
        let (dm, y) = simple(&[-2.0, -1.0, -0.5, 0.5, 1.0, 2.0], &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let err = fit_glm(&dm, &y, Family::Bernoulli, IrlsOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Separation { .. }), "{err:?}");
    }

    #[test]
    fn bernoulli_support_checked() {
        let (dm, y) = simple(&[0.0, 1.0, 2.0], &[0.0, 2.0, 1.0]);
        let err = fit_glm(&dm, &y, Family::Bernoulli, IrlsOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Family(_)));
    }

    #[test]
    fn non_convergence_reports_last_iterate() {
        let (dm, y) = simple(&[0.0, 1.0, 2.0, 3.0], &[1.0, 0.0, 3.0, 5.0]);
        let opts = IrlsOptions {
            max_iter: 1,
            ..IrlsOptions::default()
        };
        match fit_glm(&dm, &y, Family::Poisson, opts).unwrap_err() {
            Error::NonConvergence { iterations, beta, .. } => {
                assert_eq!(iterations, 1);
                assert_eq!(beta.len(), 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gaussian_glm_matches_ols() {
        let (dm, y) = simple(&[0.3, 1.1, 2.4, 3.9, 5.0], &[1.0, 0.2, 3.3, 2.8, 6.1]);
        let a = fit_ols(&dm, &y).unwrap();
        let b = fit_glm(&dm, &y, Family::Gaussian, IrlsOptions::default()).unwrap();
        for j in 0..2 {
            assert!((a.beta_hat[j] - b.beta_hat[j]).abs() <= 1e-8 * a.beta_hat[j].abs().max(1.0));
        }
    }

    #[test]
    fn predict_checks_dimension() {
        let (dm, y) = simple(&[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0]);
        let f = fit_ols(&dm, &y).unwrap();
        assert_abs_diff_eq!(predict_mean(&f, &[1.0, 2.0]).unwrap(), 3.0, epsilon = 1e-12);
        assert!(matches!(predict_mean(&f, &[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn published_count_multipliers() {
        let round2 = |v: f64| (v * 100.0).round() / 100.0;
        assert_eq!(round2(count_multiplier(-0.0147, 10.0)), 0.86);
        // exp(0.0823) = 1.0858; the published 1.08 is truncated, not rounded
        assert_eq!(round2(count_multiplier(0.0823, 1.0)), 1.09);
        assert_eq!((count_multiplier(0.0823, 1.0) * 100.0).floor() / 100.0, 1.08);
        assert_eq!(round2(count_multiplier(-0.0138, 20.0)), 0.76);
    }

    #[test]
    fn exp_coef_requires_log_link() {
        let (dm, y) = simple(&[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0]);
        let f = fit_ols(&dm, &y).unwrap();
        assert!(matches!(exp_coef(&f, 1, 1.0), Err(Error::Family(_))));
        let g = fit_glm(&dm, &y, Family::Poisson, IrlsOptions::default()).unwrap();
        let m = exp_coef(&g, 1, 2.0).unwrap();
        assert_abs_diff_eq!(m, (2.0 * g.beta_hat[1]).exp(), epsilon = 1e-15);
    }
}
