//! The best linear approximation depends on where the regressors fall when
//! the surface is nonlinear, and does not when it is linear.

use leanreg::population::{regressor_shift_experiment, DiscretePopulation, NoiseSpec, ResponseSurface};

fn population(coefficients: Vec<f64>) -> leanreg::Result<DiscretePopulation> {
    DiscretePopulation::new(
        vec![vec![0.0], vec![1.0], vec![2.0]],
        vec![1.0 / 3.0; 3],
        ResponseSurface::Polynomial { coefficients },
        NoiseSpec::None,
    )
}

fn main() -> leanreg::Result<()> {
    let shifted = [0.6, 0.3, 0.1];

    let quad = population(vec![0.0, 0.0, 1.0])?;
    let s = regressor_shift_experiment(&quad, &shifted)?;
    println!("mu = x^2:      slope {:.6} (uniform) vs {:.6} (shifted)", s.beta_1[1], s.beta_2[1]);
    print!("{}", s.plot_csv(&quad)?);

    let line = population(vec![1.0, 2.0])?;
    let s = regressor_shift_experiment(&line, &shifted)?;
    println!("mu = 1 + 2x:   max |difference| = {:e}", s.max_abs_difference);
    Ok(())
}
