//! Calibrated prediction intervals on a heteroskedastic, nonlinear
//! population: training, cross-validated and fixed normal-theory
//! multipliers, judged on fresh samples.

use leanreg::data::build_design;
use leanreg::fit::fit_ols;
use leanreg::population::{normal_critical, normal_grid, sample, DiscretePopulation, NoiseSpec, PerPoint, ResponseSurface};
use leanreg::predict::{calibrated_band, cv_calibrate_k, future_coverage};

fn main() -> leanreg::Result<()> {
    let (nodes, weights) = normal_grid(21);
    let sigma = nodes.iter().map(|z| 0.3 + z.abs()).collect();
    let pop = DiscretePopulation::new(
        nodes.iter().map(|&z| vec![z]).collect(),
        weights,
        ResponseSurface::Polynomial {
            coefficients: vec![0.0, 1.0, 0.5],
        },
        NoiseSpec::Gaussian {
            sigma: PerPoint::Values(sigma),
        },
    )?;
    let alpha = 0.05;
    let train = sample(&pop, 1000, 1)?;
    let test = sample(&pop, 20_000, 2)?;
    let f = fit_ols(&build_design(&train), train.response())?;

    let (cal, band) = calibrated_band(&f, alpha)?;
    println!("K_hat {:.4}, training coverage {:.4}", cal.k_hat, cal.training_coverage);
    println!("future coverage {:.4}", future_coverage(&band, &test)?.coverage);

    let k_cv = cv_calibrate_k(&train, alpha, 10, 3)?;
    println!("cv K {:.4}, future coverage {:.4}", k_cv, future_coverage(&band.with_k(k_cv), &test)?.coverage);

    let z = normal_critical(1.0 - alpha)?;
    let fixed = future_coverage(&band.with_k(z), &test)?;
    println!("fixed K = {z:.4}: future coverage {:.4}", fixed.coverage);
    if let Some(c) = fixed.caveat {
        println!("  {c}");
    }
    Ok(())
}
