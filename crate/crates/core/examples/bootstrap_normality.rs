//! x-y bootstrap of an OLS fit on a misspecified population, compared with
//! the sandwich, plus the QQ correlation of each coefficient's draws.

use leanreg::bootstrap::{bootstrap_se, normality_diagnostic, xy_bootstrap};
use leanreg::covariance::sandwich_cov;
use leanreg::data::build_design;
use leanreg::fit::{fit_ols, Family};
use leanreg::population::{normal_grid, sample, DiscretePopulation, NoiseSpec, PerPoint, ResponseSurface};

fn main() -> leanreg::Result<()> {
    let (nodes, weights) = normal_grid(31);
    let pop = DiscretePopulation::new(
        nodes.iter().map(|&z| vec![z]).collect(),
        weights,
        ResponseSurface::Polynomial {
            coefficients: vec![0.0, 0.0, 1.0],
        },
        NoiseSpec::Gaussian {
            sigma: PerPoint::Scalar(1.0),
        },
    )?;
    let ds = sample(&pop, 1000, 3)?;
    let f = fit_ols(&build_design(&ds), ds.response())?;
    let sand = sandwich_cov(&f)?.standard_errors();

    let draws = xy_bootstrap(&ds, Family::Gaussian, 2000, 11)?;
    let boot = bootstrap_se(&draws)?;
    for j in 0..boot.len() {
        let qq = normality_diagnostic(&draws, j)?;
        println!(
            "{:<12} Boot.SE {:.4}  Sand.SE {:.4}  QQ correlation {:.5}",
            draws.labels[j], boot[j], sand[j], qq.qq_correlation
        );
    }
    Ok(())
}
