//! OLS coefficients as weighted averages of pairwise slopes, with the
//! other regressors linearly adjusted out.

use leanreg::data::{build_design, Dataset};
use leanreg::fit::fit_ols;
use leanreg::slopes::{adjust_regressor, pair_table, pairwise_slope_multiple, pairwise_slope_simple};

fn main() -> leanreg::Result<()> {
    let x = [1.0, 2.0, 4.0, 7.0];
    let y = [1.0, 4.0, 16.0, 49.0];
    let s = pairwise_slope_simple(&x, &y)?;
    println!("simple: beta = {:.6} from {} ordered pairs", s.beta, s.pair_count);
    for p in pair_table(&x, &y)? {
        println!("  ({}, {})  weight {:.4}  slope {:.2}", p.i, p.j, p.weight, p.slope);
    }

    let rows = vec![
        vec![0.5, 1.0],
        vec![1.5, 0.0],
        vec![2.0, 2.0],
        vec![3.5, 1.0],
        vec![4.0, 3.0],
        vec![6.0, 2.0],
    ];
    let resp = vec![1.2, 2.9, 3.1, 6.0, 5.2, 9.4];
    let ds = Dataset::new("y", vec!["a".into(), "b".into()], resp, rows)?;
    let dm = build_design(&ds);
    let ols = fit_ols(&dm, ds.response())?;
    for j in 1..dm.ncols() {
        let adj = adjust_regressor(&dm, ds.response(), j)?;
        let m = pairwise_slope_multiple(&dm, ds.response(), j)?;
        println!(
            "{}: pairwise {:.10}  OLS {:.10}  (adjusted regressor sums to {:.1e})",
            dm.labels()[j],
            m.beta,
            ols.beta_hat[j],
            adj.x_adj.iter().sum::<f64>()
        );
    }
    Ok(())
}
