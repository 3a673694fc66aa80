//! Poisson working model on offender-style count data: coefficient table
//! with conventional, x-y bootstrap and sandwich standard errors, followed
//! by the misspecification diagnostics.
//!
//!     cargo run --release --example fit_report

use leanreg::bootstrap::{bootstrap_se, xy_bootstrap};
use leanreg::covariance::{coefficient_table, conventional_cov, sandwich_cov};
use leanreg::data::build_design;
use leanreg::datasets::charges_like;
use leanreg::fit::{exp_coef, fit, Family};
use leanreg::report::{misspec_indicator, DEFAULT_LEVEL, DEFAULT_RATIO_THRESHOLD};
use leanreg::rng::DEFAULT_SEED;

fn main() -> leanreg::Result<()> {
    let ds = charges_like(3000, 7)?;
    let dm = build_design(&ds);
    let f = fit(&dm, ds.response(), Family::Poisson)?;

    let draws = xy_bootstrap(&ds, Family::Poisson, 1000, DEFAULT_SEED)?;
    let boot = bootstrap_se(&draws)?;
    let table = coefficient_table(&f, &conventional_cov(&f)?, &sandwich_cov(&f)?, Some(&boot))?;
    print!("{}", table.render_text());
    println!();
    print!("{}", misspec_indicator(&table, DEFAULT_LEVEL, DEFAULT_RATIO_THRESHOLD)?.render_text());

    println!();
    println!("ten more years of age multiplies expected charges by {:.3}", exp_coef(&f, 1, 10.0)?);
    println!("being male multiplies expected charges by {:.3}", exp_coef(&f, 2, 1.0)?);
    Ok(())
}
