//! Assumption-lean regression.
//!
//! Regression models here are working models: a fit estimates the best
//! approximation to the data-generating distribution within the model
//! class, whether or not the model is correct. Inference is built to stay
//! valid under that reading.
//!
//! * [`data`]: datasets, CSV ingestion, design matrices, rank checks
//! * [`fit`]: OLS and logistic/Poisson IRLS fits of the regression functional
//! * [`covariance`]: conventional and sandwich covariances, the coefficient table
//! * [`bootstrap`]: x-y and residual bootstrap, bootstrap SEs, QQ diagnostics
//! * [`population`]: exact finite-support populations, decompositions, coverage studies
//! * [`slopes`]: coefficients as weighted averages of pairwise slopes
//! * [`predict`]: prediction intervals with a calibrated multiplier
//! * [`report`]: SE-ratio and decision-reversal diagnostics
//! * [`cli`]: the `leanreg` command-line front end
//!
//! ```
//! use leanreg::data::{build_design, Dataset};
//! use leanreg::fit::fit_ols;
//! use leanreg::covariance::{conventional_cov, sandwich_cov};
//!
//! let x = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
//! let y: Vec<f64> = x.iter().map(|v| v * v).collect();
//! let ds = Dataset::new("y", vec!["x".into()], y, x.iter().map(|&v| vec![v]).collect()).unwrap();
//! let f = fit_ols(&build_design(&ds), ds.response()).unwrap();
//! let conv = conventional_cov(&f).unwrap();
//! let sand = sandwich_cov(&f).unwrap();
//! assert!(sand.standard_errors()[1] != conv.standard_errors()[1]);
//! ```

pub mod bootstrap;
pub mod cli;
pub mod covariance;
pub mod data;
pub mod datasets;
pub mod error;
pub mod fit;
pub mod linalg;
pub mod population;
pub mod predict;
pub mod report;
pub mod rng;
pub mod slopes;

pub use error::{Error, Result};
