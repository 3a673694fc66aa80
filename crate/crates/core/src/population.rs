//! Finite-support populations with exact expectations.
//!
//! A [`DiscretePopulation`] puts probability mass on finitely many regressor
//! points and attaches a true response surface `μ(x)` and a mean-zero noise
//! law at every point. Everything the population functional needs (the
//! best linear approximation `β(P)`, the nonlinearity `η = μ − β'x`, the
//! noise `ε = Y − μ`, and moments of `δ = η + ε`) is then a finite sum.
//!
//! Noise laws are enumerated through moment-matching atoms: two-point and
//! Bernoulli laws are enumerated exactly; Gaussian and Poisson noise enter
//! through their first two moments, which is all the identities and the
//! sandwich meat `E[δ² X X']` ever use.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::{Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bootstrap::{bootstrap_se, residual_bootstrap, xy_bootstrap, MAX_FAILURE_FRACTION};
use crate::covariance::{conventional_cov, sandwich_cov};
use crate::data::{build_design, Dataset};
use crate::error::{Error, Result};
use crate::fit::{fit, Family};
use crate::linalg::{eigen_extremes, solve_spd, RANK_TOLERANCE};
use crate::rng;

/// Tolerance used by [`check_orthogonality`] unless the caller picks one.
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-12;

/// True conditional mean `μ(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResponseSurface {
    /// `Σ_k c_k x_1^k`, a polynomial in the first regressor.
    Polynomial { coefficients: Vec<f64> },
    /// `c_0 + Σ_j c_j x_j`.
    Linear { coefficients: Vec<f64> },
    /// One value per support point.
    Table { values: Vec<f64> },
}

impl ResponseSurface {
    fn evaluate(&self, support: &[Vec<f64>]) -> Result<Vec<f64>> {
        match self {
            ResponseSurface::Polynomial { coefficients } => {
                if support.first().is_none_or(|x| x.len() < 2) {
                    return Err(Error::population("mu", "polynomial surface needs at least one regressor"));
                }
                Ok(support
                    .iter()
                    .map(|x| coefficients.iter().rev().fold(0.0, |acc, &c| acc * x[1] + c))
                    .collect())
            }
            ResponseSurface::Linear { coefficients } => {
                let k = support.first().map_or(0, |x| x.len());
                if coefficients.len() != k {
                    return Err(Error::population(
                        "mu.coefficients",
                        format!("expected {k} coefficients (intercept first), got {}", coefficients.len()),
                    ));
                }
                Ok(support
                    .iter()
                    .map(|x| x.iter().zip(coefficients).map(|(a, b)| a * b).sum())
                    .collect())
            }
            ResponseSurface::Table { values } => {
                if values.len() != support.len() {
                    return Err(Error::population(
                        "mu.values",
                        format!("expected {} values, got {}", support.len(), values.len()),
                    ));
                }
                Ok(values.clone())
            }
        }
    }
}

/// Per-point parameter: either one value for every point or one per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerPoint {
    Scalar(f64),
    Values(Vec<f64>),
}

impl PerPoint {
    fn expand(&self, m: usize, field: &str) -> Result<Vec<f64>> {
        let v = match self {
            PerPoint::Scalar(s) => vec![*s; m],
            PerPoint::Values(v) if v.len() == m => v.clone(),
            PerPoint::Values(v) => {
                return Err(Error::population(field, format!("expected {m} values, got {}", v.len())))
            }
        };
        if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::population(field, "values must be finite and nonnegative"));
        }
        Ok(v)
    }
}

/// Conditional noise law `ε | x`, always with mean zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    None,
    Gaussian { sigma: PerPoint },
    TwoPoint { a: PerPoint },
    /// `Y ~ Bernoulli(μ(x))`.
    Bernoulli,
    /// `Y ~ Poisson(μ(x))`.
    Poisson,
}

#[derive(Debug, Clone, PartialEq)]
enum Noise {
    None,
    Gaussian(Vec<f64>),
    TwoPoint(Vec<f64>),
    Bernoulli,
    Poisson,
}

impl Noise {
    /// `(weight, value)` atoms with the law's first two moments.
    fn atoms(&self, k: usize, mu: f64) -> Vec<(f64, f64)> {
        match self {
            Noise::None => vec![(1.0, 0.0)],
            Noise::Gaussian(s) => vec![(0.5, s[k]), (0.5, -s[k])],
            Noise::TwoPoint(a) => vec![(0.5, a[k]), (0.5, -a[k])],
            Noise::Bernoulli => vec![(mu, 1.0 - mu), (1.0 - mu, -mu)],
            Noise::Poisson => vec![(0.5, mu.sqrt()), (0.5, -mu.sqrt())],
        }
    }

    fn variance(&self, k: usize, mu: f64) -> f64 {
        match self {
            Noise::None => 0.0,
            Noise::Gaussian(s) => s[k] * s[k],
            Noise::TwoPoint(a) => a[k] * a[k],
            Noise::Bernoulli => mu * (1.0 - mu),
            Noise::Poisson => mu,
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R, k: usize, mu: f64) -> f64 {
        match self {
            Noise::None => mu,
            Noise::Gaussian(s) => {
                let z: f64 = rng.sample(StandardNormal);
                mu + s[k] * z
            }
            Noise::TwoPoint(a) => {
                if rng.random::<bool>() {
                    mu + a[k]
                } else {
                    mu - a[k]
                }
            }
            Noise::Bernoulli => {
                if rng.random::<f64>() < mu {
                    1.0
                } else {
                    0.0
                }
            }
            Noise::Poisson => {
                if mu == 0.0 {
                    0.0
                } else {
                    Poisson::new(mu).expect("poisson mean is positive").sample(rng)
                }
            }
        }
    }
}

/// Joint law of `(Y, X)` with finite regressor support.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePopulation {
    names: Vec<String>,
    /// Support rows with the leading 1.
    support: Vec<Vec<f64>>,
    probs: Vec<f64>,
    surface: ResponseSurface,
    mu: Vec<f64>,
    noise: Noise,
}

impl DiscretePopulation {
    /// `points` are regressor values without the intercept.
    pub fn new(points: Vec<Vec<f64>>, probs: Vec<f64>, surface: ResponseSurface, noise: NoiseSpec) -> Result<Self> {
        let m = points.len();
        if m == 0 {
            return Err(Error::population("support", "must contain at least one point"));
        }
        let p = points[0].len();
        if points.iter().any(|x| x.len() != p) {
            return Err(Error::population("support", "all points need the same number of regressors"));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::population("support", "values must be finite"));
        }
        validate_probs(&probs, m, "probs")?;
        let support: Vec<Vec<f64>> = points
            .into_iter()
            .map(|x| std::iter::once(1.0).chain(x).collect())
            .collect();
        let mu = surface.evaluate(&support)?;
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::population("mu", "surface must be finite on the support"));
        }
        let noise = match noise {
            NoiseSpec::None => Noise::None,
            NoiseSpec::Gaussian { sigma } => Noise::Gaussian(sigma.expand(m, "noise.sigma")?),
            NoiseSpec::TwoPoint { a } => Noise::TwoPoint(a.expand(m, "noise.a")?),
            NoiseSpec::Bernoulli => {
                if mu.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                    return Err(Error::population("mu", "bernoulli noise needs mu in [0, 1]"));
                }
                Noise::Bernoulli
            }
            NoiseSpec::Poisson => {
                if mu.iter().any(|&v| v < 0.0) {
                    return Err(Error::population("mu", "poisson noise needs mu >= 0"));
                }
                Noise::Poisson
            }
        };
        Ok(DiscretePopulation {
            names: (1..=p).map(|j| format!("x{j}")).collect(),
            support,
            probs,
            surface,
            mu,
            noise,
        })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p() {
            return Err(Error::population("names", format!("expected {} names", self.p())));
        }
        self.names = names;
        Ok(self)
    }

    /// Same surface and noise under a different regressor law.
    pub fn with_probs(&self, probs: Vec<f64>) -> Result<Self> {
        validate_probs(&probs, self.support.len(), "probs")?;
        Ok(DiscretePopulation {
            probs,
            ..self.clone()
        })
    }

    /// Support points reordered by `order`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let points = order.iter().map(|&k| self.support[k][1..].to_vec()).collect();
        let probs = order.iter().map(|&k| self.probs[k]).collect();
        let surface = match &self.surface {
            ResponseSurface::Table { values } => ResponseSurface::Table {
                values: order.iter().map(|&k| values[k]).collect(),
            },
            other => other.clone(),
        };
        let noise = match &self.noise {
            Noise::None => NoiseSpec::None,
            Noise::Gaussian(s) => NoiseSpec::Gaussian {
                sigma: PerPoint::Values(order.iter().map(|&k| s[k]).collect()),
            },
            Noise::TwoPoint(a) => NoiseSpec::TwoPoint {
                a: PerPoint::Values(order.iter().map(|&k| a[k]).collect()),
            },
            Noise::Bernoulli => NoiseSpec::Bernoulli,
            Noise::Poisson => NoiseSpec::Poisson,
        };
        DiscretePopulation::new(points, probs, surface, noise)?.with_names(self.names.clone())
    }

    pub fn p(&self) -> usize {
        self.support[0].len() - 1
    }

    pub fn support(&self) -> &[Vec<f64>] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `μ` at each support point.
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn surface(&self) -> &ResponseSurface {
        &self.surface
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// `Var(ε | x_k)`.
    pub fn noise_variance(&self, k: usize) -> f64 {
        self.noise.variance(k, self.mu[k])
    }

    /// `E[X X']`.
    pub fn second_moment(&self) -> DMatrix<f64> {
        let d = self.p() + 1;
        let mut m = DMatrix::zeros(d, d);
        for (x, &p) in self.support.iter().zip(&self.probs) {
            for a in 0..d {
                for b in 0..d {
                    m[(a, b)] += p * x[a] * x[b];
                }
            }
        }
        m
    }

    /// `E[μ(X)]`.
    pub fn mean_response(&self) -> f64 {
        self.mu.iter().zip(&self.probs).map(|(m, p)| m * p).sum()
    }

    /// Expectation of `f(x_k, μ_k, ε)` over the support and noise atoms.
    pub fn expect<F: Fn(&[f64], f64, f64) -> f64>(&self, f: F) -> f64 {
        let mut acc = 0.0;
        for (k, x) in self.support.iter().enumerate() {
            let pk = self.probs[k];
            if pk == 0.0 {
                continue;
            }
            let inner: f64 = self
                .noise
                .atoms(k, self.mu[k])
                .into_iter()
                .map(|(w, e)| w * f(x, self.mu[k], e))
                .sum();
            acc += pk * inner;
        }
        acc
    }
}

fn validate_probs(probs: &[f64], m: usize, field: &str) -> Result<()> {
    if probs.len() != m {
        return Err(Error::population(field, format!("expected {m} probabilities, got {}", probs.len())));
    }
    if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::population(field, "probabilities must be nonnegative"));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::population(field, format!("probabilities sum to {total}, not 1")));
    }
    Ok(())
}

/// If `μ` is exactly linear on the support, its coefficients.
///
/// The fit is unweighted, so the answer does not depend on the regressor
/// law: a surface inside the regressor span is its own best approximation
/// under every full-rank law.
fn linear_coefficients_on_support(pop: &DiscretePopulation) -> Option<DVector<f64>> {
    let d = pop.p() + 1;
    let m = pop.support.len();
    if m < d {
        return None;
    }
    let x = DMatrix::from_fn(m, d, |r, c| pop.support[r][c]);
    let mu = DVector::from_column_slice(&pop.mu);
    let xtx = x.tr_mul(&x);
    let (min, max) = eigen_extremes(&xtx);
    if min <= RANK_TOLERANCE * max {
        return None;
    }
    let mut c = solve_spd(&xtx, &x.tr_mul(&mu)).ok()?;
    let r = &mu - &x * &c;
    c += solve_spd(&xtx, &x.tr_mul(&r)).ok()?;
    let scale = pop.mu.iter().fold(1.0_f64, |s, v| s.max(v.abs()));
    let resid = (&mu - &x * &c).amax();
    (resid <= 1e-13 * scale).then_some(c)
}

/// Best linear approximation `β(P) = E[XX']⁻¹ E[X μ(X)]`.
pub fn population_beta(pop: &DiscretePopulation) -> Result<DVector<f64>> {
    let second = pop.second_moment();
    let (min, max) = eigen_extremes(&second);
    if !(max > 0.0) || min <= RANK_TOLERANCE * max {
        return Err(Error::CollinearPopulation(min));
    }
    if let Some(c) = linear_coefficients_on_support(pop) {
        return Ok(c);
    }
    let d = pop.p() + 1;
    let mut cross = DVector::zeros(d);
    for (k, x) in pop.support.iter().enumerate() {
        for a in 0..d {
            cross[a] += pop.probs[k] * x[a] * pop.mu[k];
        }
    }
    let mut beta = solve_spd(&second, &cross)?;
    for _ in 0..2 {
        let r = &cross - &second * &beta;
        beta += solve_spd(&second, &r)?;
    }
    Ok(beta)
}

/// Population moments used by the orthogonality identities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationMoments {
    pub mean_delta: f64,
    pub mean_eta: f64,
    pub mean_eps: f64,
    /// `E[X_j δ]` for j = 0..=p (j = 0 repeats `E[δ]`).
    pub x_delta: Vec<f64>,
    pub x_eta: Vec<f64>,
    pub x_eps: Vec<f64>,
    /// `E[δ² X X']`, the sandwich meat.
    #[serde(skip)]
    pub delta2_xx: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationDecomposition {
    pub beta: DVector<f64>,
    /// `η(x_k) = μ(x_k) − β'x_k`, which is also `E[δ | X = x_k]`.
    pub eta: Vec<f64>,
    pub moments: PopulationMoments,
}

/// Moments of `δ = Y − β'X`, `η` and `ε` for an arbitrary `β`.
pub fn moments_at(pop: &DiscretePopulation, beta: &DVector<f64>) -> PopulationMoments {
    let d = pop.p() + 1;
    let fitted = |x: &[f64]| -> f64 { x.iter().zip(beta.iter()).map(|(a, b)| a * b).sum() };
    let x_delta: Vec<f64> = (0..d)
        .map(|j| pop.expect(|x, mu, e| x[j] * (mu + e - fitted(x))))
        .collect();
    let x_eta: Vec<f64> = (0..d).map(|j| pop.expect(|x, mu, _| x[j] * (mu - fitted(x)))).collect();
    let x_eps: Vec<f64> = (0..d).map(|j| pop.expect(|x, _, e| x[j] * e)).collect();
    let mut delta2_xx = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            delta2_xx[(a, b)] = pop.expect(|x, mu, e| {
                let delta = mu + e - fitted(x);
                delta * delta * x[a] * x[b]
            });
        }
    }
    PopulationMoments {
        mean_delta: pop.expect(|x, mu, e| mu + e - fitted(x)),
        mean_eta: pop.expect(|x, mu, _| mu - fitted(x)),
        mean_eps: pop.expect(|_, _, e| e),
        x_delta,
        x_eta,
        x_eps,
        delta2_xx,
    }
}

pub fn decompose(pop: &DiscretePopulation) -> Result<PopulationDecomposition> {
    let beta = population_beta(pop)?;
    let eta = pop
        .support
        .iter()
        .zip(&pop.mu)
        .map(|(x, mu)| mu - x.iter().zip(beta.iter()).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let moments = moments_at(pop, &beta);
    Ok(PopulationDecomposition { beta, eta, moments })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentCheck {
    pub moment: String,
    pub value: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrthogonalityReport {
    pub tolerance: f64,
    pub checks: Vec<MomentCheck>,
}

impl OrthogonalityReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&MomentCheck> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

/// Checks `E[δ], E[η], E[ε]` and `E[X_j δ], E[X_j η], E[X_j ε]` against
/// `tolerance` at the given coefficient vector.
pub fn check_orthogonality_at(pop: &DiscretePopulation, beta: &DVector<f64>, tolerance: f64) -> OrthogonalityReport {
    let m = moments_at(pop, beta);
    let mut checks = Vec::new();
    let mut push = |name: String, value: f64| {
        checks.push(MomentCheck {
            moment: name,
            pass: value.abs() <= tolerance,
            value,
        })
    };
    push("E[delta]".into(), m.mean_delta);
    push("E[eta]".into(), m.mean_eta);
    push("E[eps]".into(), m.mean_eps);
    for j in 1..m.x_delta.len() {
        push(format!("E[X{j} delta]"), m.x_delta[j]);
        push(format!("E[X{j} eta]"), m.x_eta[j]);
        push(format!("E[X{j} eps]"), m.x_eps[j]);
    }
    OrthogonalityReport { tolerance, checks }
}

/// [`check_orthogonality_at`] at `β(P)`.
pub fn check_orthogonality(pop: &DiscretePopulation, tolerance: f64) -> Result<OrthogonalityReport> {
    let beta = population_beta(pop)?;
    Ok(check_orthogonality_at(pop, &beta, tolerance))
}

/// Population-level asymptotic variances of the OLS slope estimates:
/// `(sandwich, conventional)` per observation, i.e. `B⁻¹ M B⁻¹` and
/// `E[δ²] B⁻¹` with `B = E[XX']`.
pub fn asymptotic_variances(pop: &DiscretePopulation) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let dec = decompose(pop)?;
    let bread_inv = crate::linalg::inverse_spd(&pop.second_moment())?;
    let sandwich = &bread_inv * &dec.moments.delta2_xx * &bread_inv;
    let sigma2 = pop.expect(|x, mu, e| {
        let fitted: f64 = x.iter().zip(dec.beta.iter()).map(|(a, b)| a * b).sum();
        let delta = mu + e - fitted;
        delta * delta
    });
    Ok((sandwich, bread_inv * sigma2))
}

/// GLM functional: minimizer of `E[b(X'β) − (X'β) μ(X)]` for the family's
/// cumulant `b`, found by damped Newton on the exact expectations.
pub fn population_glm_beta(pop: &DiscretePopulation, family: Family) -> Result<DVector<f64>> {
    if family == Family::Gaussian {
        return population_beta(pop);
    }
    let second = pop.second_moment();
    let (min, max) = eigen_extremes(&second);
    if !(max > 0.0) || min <= RANK_TOLERANCE * max {
        return Err(Error::CollinearPopulation(min));
    }
    let d = pop.p() + 1;
    let objective = |beta: &DVector<f64>| -> f64 {
        pop.support
            .iter()
            .enumerate()
            .map(|(k, x)| {
                let eta: f64 = x.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
                pop.probs[k] * family.loss(eta, pop.mu[k])
            })
            .sum()
    };
    let mut beta = DVector::zeros(d);
    if family == Family::Poisson {
        beta[0] = pop.mean_response().max(1e-8).ln();
    }
    let mut obj = objective(&beta);
    for _ in 0..200 {
        let mut grad = DVector::zeros(d);
        let mut hess = DMatrix::zeros(d, d);
        for (k, x) in pop.support.iter().enumerate() {
            let eta: f64 = x.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
            let mean = family.inverse_link(eta);
            let w = pop.probs[k] * family.variance(mean);
            for a in 0..d {
                grad[a] += pop.probs[k] * (mean - pop.mu[k]) * x[a];
                for b in 0..d {
                    hess[(a, b)] += w * x[a] * x[b];
                }
            }
        }
        let step = solve_spd(&hess, &grad)?;
        let mut t = 1.0;
        let mut next = &beta - &step * t;
        let mut next_obj = objective(&next);
        let mut halvings = 0;
        while !(next_obj <= obj) && halvings < 30 {
            t *= 0.5;
            halvings += 1;
            next = &beta - &step * t;
            next_obj = objective(&next);
        }
        let change = (&next - &beta).amax();
        beta = next;
        obj = next_obj;
        if beta.amax() > 1e3 {
            return Err(Error::Separation {
                iterations: 0,
                max_abs_beta: beta.amax(),
            });
        }
        if change <= 1e-14 * beta.amax().max(1.0) {
            return Ok(beta);
        }
    }
    Ok(beta)
}

/// `n` i.i.d. draws from the population, deterministic in `seed`.
pub fn sample(pop: &DiscretePopulation, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Invalid("sample size must be at least 1".into()));
    }
    let picker = WeightedIndex::new(&pop.probs).map_err(|e| Error::population("probs", e.to_string()))?;
    let mut r = rng::stream(seed, 0);
    let mut ys = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let k = picker.sample(&mut r);
        ys.push(pop.noise.draw(&mut r, k, pop.mu[k]));
        rows.push(pop.support[k][1..].to_vec());
    }
    Dataset::new("y", pop.names.clone(), ys, rows)
}

/// Probabilists' Gauss–Hermite rule: `m` nodes and weights that integrate
/// polynomials of degree up to `2m − 1` exactly against N(0, 1).
pub fn normal_grid(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1, "grid needs at least one point");
    // Golub–Welsch: the Jacobi matrix of He_k has off-diagonal sqrt(k).
    let jacobi = DMatrix::from_fn(m, m, |r, c| {
        if r + 1 == c {
            (c as f64).sqrt()
        } else if c + 1 == r {
            (r as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..m)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // enforce exact symmetry about zero
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m {
        let j = m - 1 - i;
        nodes[i] = 0.5 * (pairs[i].0 - pairs[j].0);
        weights[i] = 0.5 * (pairs[i].1 + pairs[j].1);
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    (nodes, weights)
}

/// `β(P)` under two regressor laws with the surface held fixed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftResult {
    pub beta_1: Vec<f64>,
    pub beta_2: Vec<f64>,
    pub max_abs_difference: f64,
}

impl ShiftResult {
    /// Plot-ready rows: support point, μ, and the best linear
    /// approximation under each law.
    pub fn plot_csv(&self, pop: &DiscretePopulation) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = pop.names().to_vec();
        header.extend(["mu".to_string(), "fit_law_1".to_string(), "fit_law_2".to_string()]);
        w.write_record(&header)?;
        for (k, x) in pop.support().iter().enumerate() {
            let f1: f64 = x.iter().zip(&self.beta_1).map(|(a, b)| a * b).sum();
            let f2: f64 = x.iter().zip(&self.beta_2).map(|(a, b)| a * b).sum();
            let mut rec: Vec<String> = x[1..].iter().map(|v| v.to_string()).collect();
            rec.extend([pop.mu()[k].to_string(), f1.to_string(), f2.to_string()]);
            w.write_record(&rec)?;
        }
        crate::bootstrap::into_string(w)
    }
}

/// Compares the best linear approximation of the same surface under the
/// population's own regressor law and under `alternative_probs`.
pub fn regressor_shift_experiment(pop: &DiscretePopulation, alternative_probs: &[f64]) -> Result<ShiftResult> {
    let other = pop.with_probs(alternative_probs.to_vec())?;
    let b1 = population_beta(pop)?;
    let b2 = population_beta(&other)?;
    let max_abs_difference = (&b1 - &b2).amax();
    Ok(ShiftResult {
        beta_1: b1.iter().copied().collect(),
        beta_2: b2.iter().copied().collect(),
        max_abs_difference,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverageMethod {
    Conventional,
    Sandwich,
    XyBootstrap,
    ResidualBootstrap,
}

impl CoverageMethod {
    pub fn tag(self) -> &'static str {
        match self {
            CoverageMethod::Conventional => "conventional",
            CoverageMethod::Sandwich => "sandwich",
            CoverageMethod::XyBootstrap => "xy-bootstrap",
            CoverageMethod::ResidualBootstrap => "residual-bootstrap",
        }
    }
}

impl std::str::FromStr for CoverageMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conventional" => Ok(CoverageMethod::Conventional),
            "sandwich" => Ok(CoverageMethod::Sandwich),
            "xy-bootstrap" | "xy" | "bootstrap" => Ok(CoverageMethod::XyBootstrap),
            "residual-bootstrap" | "residual" => Ok(CoverageMethod::ResidualBootstrap),
            other => Err(Error::Invalid(format!("unknown coverage method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageConfig {
    pub n: usize,
    pub replications: usize,
    pub methods: Vec<CoverageMethod>,
    pub level: f64,
    pub family: Family,
    /// Bootstrap replicates per replication, for the bootstrap methods.
    pub bootstrap_replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageResult {
    pub method: CoverageMethod,
    pub coefficient: usize,
    pub level: f64,
    pub coverage: f64,
    pub mean_width: f64,
    /// Replications that entered the average.
    pub replications: usize,
    pub failures: usize,
    pub mc_se: f64,
}

pub fn coverage_results_csv(results: &[CoverageResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "method",
        "coefficient",
        "level",
        "coverage",
        "mc_se",
        "mean_width",
        "replications",
        "failures",
    ])?;
    for r in results {
        w.write_record(&[
            r.method.tag().to_string(),
            r.coefficient.to_string(),
            r.level.to_string(),
            r.coverage.to_string(),
            r.mc_se.to_string(),
            r.mean_width.to_string(),
            r.replications.to_string(),
            r.failures.to_string(),
        ])?;
    }
    crate::bootstrap::into_string(w)
}

/// Two-sided standard normal critical value for `level`.
pub fn normal_critical(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Level(level));
    }
    Ok(Normal::standard().inverse_cdf(1.0 - (1.0 - level) / 2.0))
}

/// Standard errors per method for one fitted sample.
fn method_ses(ds: &Dataset, family: Family, cfg: &CoverageConfig, boot_seed: u64) -> Result<Vec<Vec<f64>>> {
    let dm = build_design(ds);
    let f = fit(&dm, ds.response(), family)?;
    let mut out = Vec::with_capacity(cfg.methods.len() + 1);
    out.push(f.beta_hat.iter().copied().collect());
    for m in &cfg.methods {
        let se = match m {
            CoverageMethod::Conventional => conventional_cov(&f)?.standard_errors(),
            CoverageMethod::Sandwich => sandwich_cov(&f)?.standard_errors(),
            CoverageMethod::XyBootstrap => {
                bootstrap_se(&xy_bootstrap(ds, family, cfg.bootstrap_replicates, boot_seed)?)?
            }
            CoverageMethod::ResidualBootstrap => {
                bootstrap_se(&residual_bootstrap(ds, family, cfg.bootstrap_replicates, boot_seed)?)?
            }
        };
        out.push(se);
    }
    Ok(out)
}

/// Monte Carlo coverage of Wald intervals `β̂_j ± z SE_j` for the
/// population functional, one result per method and coefficient.
pub fn coverage_experiment(pop: &DiscretePopulation, cfg: &CoverageConfig) -> Result<Vec<CoverageResult>> {
    let z = normal_critical(cfg.level)?;
    if cfg.methods.is_empty() {
        return Err(Error::Invalid("at least one coverage method is required".into()));
    }
    if cfg.replications == 0 {
        return Err(Error::Invalid("at least one replication is required".into()));
    }
    let target = population_glm_beta(pop, cfg.family)?;
    let d = target.len();

    let outcomes: Vec<std::result::Result<Vec<Vec<f64>>, String>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let sample_seed = rng::child_seed(cfg.seed, 2 * r as u64);
            let boot_seed = rng::child_seed(cfg.seed, 2 * r as u64 + 1);
            let ds = sample(pop, cfg.n, sample_seed).map_err(|e| e.to_string())?;
            method_ses(&ds, cfg.family, cfg, boot_seed).map_err(|e| e.to_string())
        })
        .collect();

    let mut reasons: Vec<String> = Vec::new();
    let kept: Vec<&Vec<Vec<f64>>> = outcomes
        .iter()
        .filter_map(|o| match o {
            Ok(v) => Some(v),
            Err(e) => {
                if !reasons.contains(e) {
                    reasons.push(e.clone());
                }
                None
            }
        })
        .collect();
    let failures = cfg.replications - kept.len();
    if failures as f64 > MAX_FAILURE_FRACTION * cfg.replications as f64 {
        return Err(Error::ExcessiveFailures {
            failures,
            replicates: cfg.replications,
            reasons,
        });
    }

    let retained = kept.len();
    let mut results = Vec::with_capacity(cfg.methods.len() * d);
    for (mi, &method) in cfg.methods.iter().enumerate() {
        for j in 0..d {
            let mut covered = 0usize;
            let mut width = 0.0;
            for rep in &kept {
                let beta = rep[0][j];
                let se = rep[mi + 1][j];
                if (beta - target[j]).abs() <= z * se {
                    covered += 1;
                }
                width += 2.0 * z * se;
            }
            let c = covered as f64 / retained as f64;
            results.push(CoverageResult {
                method,
                coefficient: j,
                level: cfg.level,
                coverage: c,
                mean_width: width / retained as f64,
                replications: retained,
                failures,
                mc_se: (c * (1.0 - c) / retained as f64).sqrt(),
            });
        }
    }
    Ok(results)
}

/// JSON form of a population definition file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
    /// Regressor values per support point, without the intercept.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    /// Alternative to `support` + `probs`: a one-regressor normal grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    /// Second regressor law for the shift experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alternative_probs: Option<Vec<f64>>,
    pub mu: ResponseSurface,
    pub noise: NoiseSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    /// Gauss–Hermite discretization of N(mean, sd²).
    Normal {
        points: usize,
        #[serde(default)]
        mean: f64,
        #[serde(default = "one")]
        sd: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl PopulationFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::population("<file>", e.to_string()))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn build(&self) -> Result<DiscretePopulation> {
        let (points, probs) = match (&self.support, &self.probs, &self.grid) {
            (Some(s), Some(p), None) => (s.clone(), p.clone()),
            (None, None, Some(GridSpec::Normal { points, mean, sd })) => {
                if *points == 0 || !(*sd > 0.0) {
                    return Err(Error::population("grid", "needs points >= 1 and sd > 0"));
                }
                let (nodes, weights) = normal_grid(*points);
                (nodes.iter().map(|z| vec![mean + sd * z]).collect(), weights)
            }
            (Some(_), None, _) => return Err(Error::population("probs", "missing")),
            (None, Some(_), _) | (None, None, None) => {
                return Err(Error::population("support", "missing (give support + probs, or grid)"))
            }
            (Some(_), Some(_), Some(_)) => {
                return Err(Error::population("grid", "cannot be combined with support/probs"))
            }
        };
        let pop = DiscretePopulation::new(points, probs, self.mu.clone(), self.noise.clone())?;
        match &self.names {
            Some(n) => pop.with_names(n.clone()),
            None => Ok(pop),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn quad(probs: Vec<f64>, xs: &[f64]) -> DiscretePopulation {
        DiscretePopulation::new(
            xs.iter().map(|&x| vec![x]).collect(),
            probs,
            ResponseSurface::Polynomial {
                coefficients: vec![0.0, 0.0, 1.0],
            },
            NoiseSpec::None,
        )
        .unwrap()
    }

    #[test]
    fn symmetric_quadratic() {
        let pop = quad(vec![1.0 / 3.0; 3], &[-1.0, 0.0, 1.0]);
        let b = population_beta(&pop).unwrap();
        assert_abs_diff_eq!(b[0], 2.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(b[1], 0.0, epsilon = 1e-14);
        let d = decompose(&pop).unwrap();
        for (e, want) in d.eta.iter().zip([1.0 / 3.0, -2.0 / 3.0, 1.0 / 3.0]) {
            assert_abs_diff_eq!(*e, want, epsilon = 1e-14);
        }
    }

    #[test]
    fn shifted_quadratic() {
        let pop = quad(vec![1.0 / 3.0; 3], &[0.0, 1.0, 2.0]);
        let b = population_beta(&pop).unwrap();
        assert_abs_diff_eq!(b[0], -1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(b[1], 2.0, epsilon = 1e-14);
        let s = regressor_shift_experiment(&pop, &[0.6, 0.3, 0.1]).unwrap();
        assert_abs_diff_eq!(s.beta_2[1], 5.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.beta_2[0], -2.0 / 15.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.max_abs_difference, 1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn linear_surface_is_its_own_projection() {
        let pop = DiscretePopulation::new(
            vec![vec![0.0], vec![1.0], vec![3.0]],
            vec![0.2, 0.5, 0.3],
            ResponseSurface::Linear {
                coefficients: vec![1.5, -2.0],
            },
            NoiseSpec::Gaussian {
                sigma: PerPoint::Scalar(1.0),
            },
        )
        .unwrap();
        let b = population_beta(&pop).unwrap();
        assert_abs_diff_eq!(b[0], 1.5, epsilon = 1e-14);
        assert_abs_diff_eq!(b[1], -2.0, epsilon = 1e-14);
        let d = decompose(&pop).unwrap();
        assert!(d.eta.iter().all(|e| e.abs() < 1e-14));
        let s = regressor_shift_experiment(&pop, &[0.7, 0.1, 0.2]).unwrap();
        assert_eq!(s.max_abs_difference, 0.0);
    }

    #[test]
    fn collinear_population_rejected() {
        let pop = quad(vec![1.0], &[2.0]);
        assert!(matches!(population_beta(&pop), Err(Error::CollinearPopulation(_))));
    }

    #[test]
    fn perturbed_beta_breaks_orthogonality() {
        let pop = quad(vec![0.2, 0.5, 0.3], &[0.0, 1.0, 2.0]);
        assert!(check_orthogonality(&pop, ORTHOGONALITY_TOLERANCE).unwrap().all_pass());
        let b = population_beta(&pop).unwrap().add_scalar(0.1);
        let r = check_orthogonality_at(&pop, &b, ORTHOGONALITY_TOLERANCE);
        assert!(r.failures().iter().any(|c| c.moment == "E[X1 delta]"));
    }

    #[test]
    fn two_point_noise_is_orthogonal() {
        let pop = DiscretePopulation::new(
            vec![vec![0.5], vec![1.7], vec![-2.0]],
            vec![0.3, 0.3, 0.4],
            ResponseSurface::Polynomial {
                coefficients: vec![1.0, 0.0, 0.0, 1.0],
            },
            NoiseSpec::TwoPoint {
                a: PerPoint::Values(vec![0.3, 1.9, 4.2]),
            },
        )
        .unwrap();
        let m = decompose(&pop).unwrap().moments;
        assert!(m.x_eps.iter().all(|v| *v == 0.0));
        assert!(check_orthogonality(&pop, ORTHOGONALITY_TOLERANCE).unwrap().all_pass());
    }

    #[test]
    fn no_noise_sample_hits_surface() {
        let pop = quad(vec![0.2, 0.5, 0.3], &[0.0, 1.0, 2.0]);
        let ds = sample(&pop, 200, 9).unwrap();
        for i in 0..ds.n() {
            let x = ds.regressors()[(i, 0)];
            assert_eq!(ds.response()[i], x * x);
        }
        assert_eq!(ds, sample(&pop, 200, 9).unwrap());
    }

    #[test]
    fn normal_grid_moments() {
        let (x, w) = normal_grid(31);
        let moment = |k: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum::<f64>();
        assert_abs_diff_eq!(moment(0), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(moment(1), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(moment(2), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(moment(4), 3.0, epsilon = 1e-11);
        assert_abs_diff_eq!(moment(6), 15.0, epsilon = 1e-10);
    }

    #[test]
    fn quadratic_sandwich_ratio_is_eleven_thirds() {
        let (x, w) = normal_grid(31);
        let pop = DiscretePopulation::new(
            x.iter().map(|&v| vec![v]).collect(),
            w,
            ResponseSurface::Polynomial {
                coefficients: vec![0.0, 0.0, 1.0],
            },
            NoiseSpec::Gaussian {
                sigma: PerPoint::Scalar(1.0),
            },
        )
        .unwrap();
        let (sand, conv) = asymptotic_variances(&pop).unwrap();
        assert_abs_diff_eq!(sand[(1, 1)], 11.0, epsilon = 1e-9);
        assert_abs_diff_eq!(conv[(1, 1)], 3.0, epsilon = 1e-9);
    }

    #[test]
    fn level_domain() {
        assert!(matches!(normal_critical(1.0), Err(Error::Level(_))));
        assert!(matches!(normal_critical(0.0), Err(Error::Level(_))));
        assert_abs_diff_eq!(normal_critical(0.95).unwrap(), 1.959964, epsilon = 1e-6);
    }

    #[test]
    fn population_file_errors_name_fields() {
        let bad = r#"{"support": [[0],[1]], "probs": [0.5, 0.6], "mu": {"kind":"polynomial","coefficients":[0,1]}, "noise": {"kind":"none"}}"#;
        match PopulationFile::parse(bad).unwrap().build().unwrap_err() {
            Error::Population { field, .. } => assert_eq!(field, "probs"),
            other => panic!("unexpected {other:?}"),
        }
        let missing = r#"{"probs": [1.0], "mu": {"kind":"table","values":[1]}, "noise": {"kind":"none"}}"#;
        match PopulationFile::parse(missing).unwrap().build().unwrap_err() {
            Error::Population { field, .. } => assert_eq!(field, "support"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn grid_file_builds() {
        let text = r#"{"grid": {"kind": "normal", "points": 31}, "mu": {"kind":"polynomial","coefficients":[0,0,1]}, "noise": {"kind":"gaussian","sigma":1.0}}"#;
        let pop = PopulationFile::parse(text).unwrap().build().unwrap();
        assert_eq!(pop.support().len(), 31);
    }
}
