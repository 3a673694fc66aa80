//! Seeded synthetic datasets for demonstrations.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp, Gamma, Poisson};

use crate::data::Dataset;
use crate::error::Result;
use crate::rng;

pub const CHARGES_REGRESSORS: [&str; 6] = [
    "age",
    "male",
    "priors",
    "prior_sentences",
    "drug_priors",
    "age_first_charge",
];

/// Offender-style count data with a misspecified Poisson structure.
///
/// Recipe, per row, from `rng::stream(seed, 0)`:
///
/// * `age = 18 + floor(Exp(mean 12))`, capped at 75
/// * `male ~ Bernoulli(0.8)`
/// * `age_first_charge` uniform on the integers `18..=age`
/// * `priors ~ Poisson(0.6 (age − age_first_charge) + 1)`
/// * `prior_sentences ~ Binomial(priors, 0.3)`, `drug_priors ~ Binomial(priors, 0.35)`
/// * `log m = 1.8 − 0.015 age + 0.08 male + 0.012 priors − 0.015 drug_priors
///    + 0.25 sin(age_first_charge / 4)`
/// * `charges = 1 + Poisson(m G)` with `G ~ Gamma(shape 1/2, scale 2)`
///
/// The sine term and the gamma frailty make a log-linear Poisson model
/// wrong in both mean and variance, so its conventional standard errors
/// are too small.
pub fn charges_like(n: usize, seed: u64) -> Result<Dataset> {
    let mut r = rng::stream(seed, 0);
    let age_dist = Exp::new(1.0 / 12.0).expect("valid rate");
    let frailty = Gamma::new(0.5, 2.0).expect("valid gamma");
    let mut ys = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let wait: f64 = age_dist.sample(&mut r);
        let age = (18.0 + wait.floor()).min(75.0);
        let male = if r.random::<f64>() < 0.8 { 1.0 } else { 0.0 };
        let first = r.random_range(18..=age as u64) as f64;
        let prior_mean = 0.6 * (age - first) + 1.0;
        let priors = Poisson::new(prior_mean).expect("positive mean").sample(&mut r);
        let sentences = Binomial::new(priors as u64, 0.3).expect("valid binomial").sample(&mut r) as f64;
        let drug = Binomial::new(priors as u64, 0.35).expect("valid binomial").sample(&mut r) as f64;
        let log_m = 1.8 - 0.015 * age + 0.08 * male + 0.012 * priors - 0.015 * drug + 0.25 * (first / 4.0).sin();
        let mean = log_m.exp() * frailty.sample(&mut r);
        let count = if mean > 0.0 {
            Poisson::new(mean).expect("positive mean").sample(&mut r)
        } else {
            0.0
        };
        ys.push(1.0 + count);
        rows.push(vec![age, male, priors, sentences, drug, first]);
    }
    Dataset::new(
        "charges",
        CHARGES_REGRESSORS.iter().map(|s| s.to_string()).collect(),
        ys,
        rows,
    )
}
