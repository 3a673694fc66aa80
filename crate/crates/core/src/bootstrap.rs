//! Pairs (x-y) bootstrap, the residual bootstrap used as a foil, bootstrap
//! standard errors and the normal-quantile diagnostic for replicate
//! distributions.
//!
//! Replicate `b` draws its resampling indices from [`rng::stream`]`(seed, b)`,
//! so results are bit-identical regardless of how many worker threads run
//! the replicates.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::covariance::{CovarianceEstimate, CovarianceMethod};
use crate::data::{build_design, Dataset};
use crate::error::{Error, Result};
use crate::fit::{fit, fit_ols, Family};
use crate::rng;

/// Largest tolerated fraction of failed replicates.
pub const MAX_FAILURE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Xy,
    Residual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapDraws {
    /// One row per retained replicate, one column per coefficient.
    pub draws: DMatrix<f64>,
    /// Replicate index of each retained row.
    pub replicate_ids: Vec<usize>,
    pub labels: Vec<String>,
    pub scheme: Scheme,
    pub seed: u64,
    pub replicates: usize,
    pub failures: usize,
}

impl BootstrapDraws {
    pub fn retained(&self) -> usize {
        self.draws.nrows()
    }

    pub fn column(&self, j: usize) -> Result<Vec<f64>> {
        if j >= self.draws.ncols() {
            return Err(Error::Index {
                index: j,
                len: self.draws.ncols(),
            });
        }
        Ok(self.draws.column(j).iter().copied().collect())
    }

    /// `replicate,<label>...` rows in replicate order.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["replicate".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for (row, id) in self.replicate_ids.iter().enumerate() {
            let mut rec = vec![id.to_string()];
            rec.extend(self.draws.row(row).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        into_string(w)
    }
}

pub(crate) fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn resample_indices(seed: u64, b: usize, n: usize) -> Vec<usize> {
    let mut r = rng::stream(seed, b as u64);
    (0..n).map(|_| r.random_range(0..n)).collect()
}

fn assemble(
    results: Vec<std::result::Result<DVector<f64>, String>>,
    labels: Vec<String>,
    scheme: Scheme,
    seed: u64,
) -> Result<BootstrapDraws> {
    let replicates = results.len();
    let mut reasons: BTreeMap<String, usize> = BTreeMap::new();
    let mut rows = Vec::with_capacity(replicates);
    let mut ids = Vec::with_capacity(replicates);
    for (b, r) in results.into_iter().enumerate() {
        match r {
            Ok(beta) => {
                rows.push(beta);
                ids.push(b);
            }
            Err(reason) => *reasons.entry(reason).or_default() += 1,
        }
    }
    let failures = replicates - rows.len();
    if failures as f64 > MAX_FAILURE_FRACTION * replicates as f64 {
        return Err(Error::ExcessiveFailures {
            failures,
            replicates,
            reasons: reasons.into_iter().map(|(r, c)| format!("{c}x {r}")).collect(),
        });
    }
    let k = labels.len();
    let draws = DMatrix::from_fn(rows.len(), k, |r, c| rows[r][c]);
    Ok(BootstrapDraws {
        draws,
        replicate_ids: ids,
        labels,
        scheme,
        seed,
        replicates,
        failures,
    })
}

fn classify(e: &Error) -> String {
    match e {
        Error::Singular { .. } => "singular design".into(),
        Error::NonConvergence { .. } => "non-convergence".into(),
        Error::Separation { .. } => "separation".into(),
        Error::Family(_) => "family support".into(),
        other => other.to_string(),
    }
}

/// Resamples whole `(Y_i, X_i)` tuples with replacement and refits the
/// working model on each of `replicates` resamples.
pub fn xy_bootstrap(ds: &Dataset, family: Family, replicates: usize, seed: u64) -> Result<BootstrapDraws> {
    if replicates == 0 {
        return Err(Error::Invalid("bootstrap needs at least one replicate".into()));
    }
    let n = ds.n();
    let labels = build_design(ds).labels().to_vec();
    let results: Vec<_> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let idx = resample_indices(seed, b, n);
            let sample = ds.select(&idx);
            let dm = build_design(&sample);
            fit(&dm, sample.response(), family)
                .map(|f| f.beta_hat)
                .map_err(|e| classify(&e))
        })
        .collect();
    assemble(results, labels, Scheme::Xy, seed)
}

/// Keeps the design fixed and resamples centered OLS residuals onto the
/// fitted values. Only meaningful for OLS.
pub fn residual_bootstrap(ds: &Dataset, family: Family, replicates: usize, seed: u64) -> Result<BootstrapDraws> {
    if family != Family::Gaussian {
        return Err(Error::Family(format!(
            "the residual bootstrap applies only to OLS, not {family}"
        )));
    }
    if replicates == 0 {
        return Err(Error::Invalid("bootstrap needs at least one replicate".into()));
    }
    let dm = build_design(ds);
    let base = fit_ols(&dm, ds.response())?;
    let n = ds.n();
    let center = base.residuals.mean();
    let centered = base.residuals.map(|r| r - center);
    let results: Vec<_> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let idx = resample_indices(seed, b, n);
            let y_star = DVector::from_iterator(n, (0..n).map(|i| base.fitted[i] + centered[idx[i]]));
            fit_ols(&dm, &y_star).map(|f| f.beta_hat).map_err(|e| classify(&e))
        })
        .collect();
    assemble(results, dm.labels().to_vec(), Scheme::Residual, seed)
}

/// Coordinatewise sample standard deviation of the retained draws.
pub fn bootstrap_se(draws: &BootstrapDraws) -> Result<Vec<f64>> {
    let m = draws.retained();
    if m < 2 {
        return Err(Error::InsufficientDraws { needed: 2, have: m });
    }
    Ok((0..draws.draws.ncols())
        .map(|j| sample_sd(draws.draws.column(j).iter().copied()))
        .collect())
}

fn sample_sd(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    (values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Sample covariance of the draws.
pub fn bootstrap_cov(draws: &BootstrapDraws, n: usize) -> Result<CovarianceEstimate> {
    let m = draws.retained();
    if m < 2 {
        return Err(Error::InsufficientDraws { needed: 2, have: m });
    }
    let k = draws.draws.ncols();
    let means: Vec<f64> = (0..k).map(|j| draws.draws.column(j).mean()).collect();
    let mut cov = DMatrix::zeros(k, k);
    for r in 0..m {
        for a in 0..k {
            let da = draws.draws[(r, a)] - means[a];
            for b in 0..k {
                cov[(a, b)] += da * (draws.draws[(r, b)] - means[b]);
            }
        }
    }
    Ok(CovarianceEstimate {
        matrix: cov / (m - 1) as f64,
        method: CovarianceMethod::Bootstrap,
        n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalityReport {
    pub coefficient: usize,
    pub sorted_draws: Vec<f64>,
    pub theoretical_quantiles: Vec<f64>,
    /// Pearson correlation of the two sequences; 0 for a degenerate
    /// (constant) replicate distribution.
    pub qq_correlation: f64,
}

impl NormalityReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["k", "theoretical_quantile", "draw"])?;
        for (k, (q, d)) in self.theoretical_quantiles.iter().zip(&self.sorted_draws).enumerate() {
            w.write_record(&[(k + 1).to_string(), q.to_string(), d.to_string()])?;
        }
        into_string(w)
    }
}

/// Standard normal quantiles at plotting positions `(k − 0.5)/m`.
pub fn normal_plotting_quantiles(m: usize) -> Vec<f64> {
    let std_normal = Normal::standard();
    (1..=m)
        .map(|k| std_normal.inverse_cdf((k as f64 - 0.5) / m as f64))
        .collect()
}

/// Normal-quantile pairing for a sample; see [`normality_diagnostic`].
pub fn qq_report(values: &[f64], coefficient: usize) -> Result<NormalityReport> {
    if values.len() < 10 {
        return Err(Error::InsufficientDraws {
            needed: 10,
            have: values.len(),
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quantiles = normal_plotting_quantiles(sorted.len());
    let qq_correlation = pearson(&sorted, &quantiles).unwrap_or(0.0);
    Ok(NormalityReport {
        coefficient,
        sorted_draws: sorted,
        theoretical_quantiles: quantiles,
        qq_correlation,
    })
}

pub fn normality_diagnostic(draws: &BootstrapDraws, j: usize) -> Result<NormalityReport> {
    let col = draws.column(j)?;
    qq_report(&col, j)
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}
