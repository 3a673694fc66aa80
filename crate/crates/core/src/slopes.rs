//! Regression slopes as weighted averages of pairwise slopes.
//!
//! For a pair of observations the slope of the connecting line is
//! `(y_i − y_j)/(x_i − x_j)`; weighting it by `(x_i − x_j)²` and averaging
//! over all pairs reproduces the least-squares slope. For a multiple
//! regression the same holds once `x_j` has been linearly adjusted for the
//! other regressors (intercept included), which also centers it.
//!
//! The sums here enumerate all `n(n−1)` ordered pairs on purpose: they are
//! an O(n²) route to the coefficient that shares no algebra with the
//! normal-equation solver.

use nalgebra::DVector;
use serde::Serialize;

use crate::data::{check_rank, DesignMatrix};
use crate::error::{Error, Result};
use crate::fit::fit_ols;
use crate::linalg::eigen_extremes;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairwiseSlopeSummary {
    pub beta: f64,
    /// Σ (x_i − x_j)² over ordered pairs.
    pub total_weight: f64,
    /// Ordered pairs with nonzero weight.
    pub pair_count: usize,
}

/// Weighted average of pairwise slopes over ordered pairs. Pairs with
/// `x_i = x_j` carry zero weight and never contribute.
pub fn pairwise_slope_simple(x: &[f64], y: &[f64]) -> Result<PairwiseSlopeSummary> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: y.len(),
        });
    }
    let n = x.len();
    let mut num = 0.0;
    let mut den = 0.0;
    let mut pair_count = 0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let dx = x[i] - x[j];
            if dx == 0.0 {
                continue;
            }
            num += dx * (y[i] - y[j]);
            den += dx * dx;
            pair_count += 1;
        }
    }
    if den == 0.0 {
        return Err(Error::ZeroWeight);
    }
    Ok(PairwiseSlopeSummary {
        beta: num / den,
        total_weight: den,
        pair_count,
    })
}

/// One unordered pair's contribution: normalized weight and slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairContribution {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
    pub slope: f64,
}

/// Unordered pairs `i < j` with nonzero weight; weights sum to one.
pub fn pair_table(x: &[f64], y: &[f64]) -> Result<Vec<PairContribution>> {
    let summary = pairwise_slope_simple(x, y)?;
    let half_total = summary.total_weight / 2.0;
    let mut out = Vec::with_capacity(summary.pair_count / 2);
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            let dx = x[i] - x[j];
            if dx != 0.0 {
                out.push(PairContribution {
                    i,
                    j,
                    weight: dx * dx / half_total,
                    slope: (y[i] - y[j]) / dx,
                });
            }
        }
    }
    Ok(out)
}

pub fn pair_table_csv(pairs: &[PairContribution]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["i", "j", "weight", "slope"])?;
    for p in pairs {
        w.write_record(&[p.i.to_string(), p.j.to_string(), p.weight.to_string(), p.slope.to_string()])?;
    }
    crate::bootstrap::into_string(w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedRegressor {
    /// Residual of column `j` regressed on every other design column.
    pub x_adj: Vec<f64>,
    pub y: Vec<f64>,
}

/// Linearly adjusts design column `j ≥ 1` for all other columns.
pub fn adjust_regressor(dm: &DesignMatrix, y: &DVector<f64>, j: usize) -> Result<AdjustedRegressor> {
    if j == 0 || j >= dm.ncols() {
        return Err(Error::Index {
            index: j,
            len: dm.ncols(),
        });
    }
    if y.len() != dm.n() {
        return Err(Error::Dimension {
            expected: dm.n(),
            got: y.len(),
        });
    }
    let rank = check_rank(dm);
    if !rank.full_rank {
        let second = dm.matrix().tr_mul(dm.matrix()) / dm.n() as f64;
        return Err(Error::Singular {
            min_eigenvalue: rank.min_eigenvalue,
            max_eigenvalue: eigen_extremes(&second).1,
        });
    }
    let others = dm.matrix().clone().remove_column(j);
    let labels: Vec<String> = dm
        .labels()
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != j)
        .map(|(_, l)| l.clone())
        .collect();
    let reduced = DesignMatrix::from_matrix(others, labels)?;
    let target = dm.matrix().column(j).into_owned();
    let aux = fit_ols(&reduced, &target)?;
    Ok(AdjustedRegressor {
        x_adj: aux.residuals.iter().copied().collect(),
        y: y.iter().copied().collect(),
    })
}

/// Coefficient `j` of the multiple regression as a weighted average of
/// pairwise slopes of `y` on the adjusted regressor.
pub fn pairwise_slope_multiple(dm: &DesignMatrix, y: &DVector<f64>, j: usize) -> Result<PairwiseSlopeSummary> {
    let adj = adjust_regressor(dm, y, j)?;
    pairwise_slope_simple(&adj.x_adj, &adj.y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_design, Dataset};
    use approx::assert_abs_diff_eq;

    #[test]
    fn quadratic_three_points() {
        let s = pairwise_slope_simple(&[0.0, 1.0, 2.0], &[0.0, 1.0, 4.0]).unwrap();
        assert_abs_diff_eq!(s.beta, 2.0, epsilon = 1e-15);
        assert_eq!(s.pair_count, 6);
        assert_eq!(s.total_weight, 12.0);
    }

    #[test]
    fn constant_pairwise_slopes() {
        let x = [0.3, -1.0, 2.5, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0).collect();
        assert_abs_diff_eq!(pairwise_slope_simple(&x, &y).unwrap().beta, 3.0, epsilon = 1e-14);
    }

    #[test]
    fn tied_pair_has_zero_weight() {
        let s = pairwise_slope_simple(&[0.0, 0.0, 1.0], &[0.0, 5.0, 1.0]).unwrap();
        assert_abs_diff_eq!(s.beta, -1.5, epsilon = 1e-15);
        assert_eq!(s.pair_count, 4);
        let table = pair_table(&[0.0, 0.0, 1.0], &[0.0, 5.0, 1.0]).unwrap();
        assert_eq!(table.len(), 2);
        assert_abs_diff_eq!(table.iter().map(|p| p.weight).sum::<f64>(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn all_equal_x_is_an_error() {
        assert!(matches!(pairwise_slope_simple(&[2.0, 2.0], &[0.0, 1.0]), Err(Error::ZeroWeight)));
    }

    fn two_regressors(rows: &[[f64; 2]], y: &[f64]) -> (DesignMatrix, DVector<f64>) {
        let ds = Dataset::new(
            "y",
            vec!["a".into(), "b".into()],
            y.to_vec(),
            rows.iter().map(|r| r.to_vec()).collect(),
        )
        .unwrap();
        (build_design(&ds), ds.response().clone())
    }

    #[test]
    fn single_regressor_adjustment_is_centering() {
        let ds = Dataset::new(
            "y",
            vec!["x".into()],
            vec![1.0, 0.0, 2.0, 5.0],
            vec![vec![1.0], vec![2.0], vec![4.0], vec![9.0]],
        )
        .unwrap();
        let adj = adjust_regressor(&build_design(&ds), ds.response(), 1).unwrap();
        for (a, x) in adj.x_adj.iter().zip([1.0, 2.0, 4.0, 9.0]) {
            assert_abs_diff_eq!(*a, x - 4.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn orthogonal_centered_regressors_are_unchanged() {
        let rows = [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];
        let (dm, y) = two_regressors(&rows, &[1.0, 2.0, 0.5, 3.0]);
        let adj = adjust_regressor(&dm, &y, 1).unwrap();
        for (a, r) in adj.x_adj.iter().zip(rows) {
            assert_abs_diff_eq!(*a, r[0], epsilon = 1e-12);
        }
        let multiple = pairwise_slope_multiple(&dm, &y, 1).unwrap();
        let simple = pairwise_slope_simple(&[1.0, 1.0, -1.0, -1.0], &[1.0, 2.0, 0.5, 3.0]).unwrap();
        assert_abs_diff_eq!(multiple.beta, simple.beta, epsilon = 1e-12);
    }

    #[test]
    fn collinear_and_index_errors() {
        let rows = [[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [5.0, 5.0]];
        let (dm, y) = two_regressors(&rows, &[1.0, 2.0, 0.5, 3.0]);
        assert!(matches!(adjust_regressor(&dm, &y, 1), Err(Error::Singular { .. })));
        let rows = [[1.0, 0.0], [2.0, 2.0], [3.0, 1.0], [5.0, 7.0]];
        let (dm, y) = two_regressors(&rows, &[1.0, 2.0, 0.5, 3.0]);
        assert!(matches!(adjust_regressor(&dm, &y, 0), Err(Error::Index { .. })));
        assert!(matches!(adjust_regressor(&dm, &y, 3), Err(Error::Index { .. })));
    }

    #[test]
    fn multiple_matches_ols() {
        let rows = [[0.2, 1.0], [1.4, -0.3], [2.2, 0.8], [3.1, 2.5], [4.7, 1.1], [5.0, -1.4]];
        let y = [1.0, 2.1, 2.9, 5.3, 4.4, 5.2];
        let (dm, yv) = two_regressors(&rows, &y);
        let ols = fit_ols(&dm, &yv).unwrap();
        for j in 1..3 {
            let s = pairwise_slope_multiple(&dm, &yv, j).unwrap();
            assert_abs_diff_eq!(s.beta, ols.beta_hat[j], epsilon = 1e-11);
        }
    }
}
