//! Monte Carlo coverage of 95% Wald intervals for the population slope
//! when the working model is linear but the surface is quadratic.
//!
//!     cargo run --release --example coverage_study

use leanreg::fit::Family;
use leanreg::population::{coverage_experiment, CoverageConfig, CoverageMethod, PopulationFile};

fn main() -> leanreg::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/quadratic.json");
    let pop = PopulationFile::load(path)?.build()?;
    let cfg = CoverageConfig {
        n: 1000,
        replications: 500,
        methods: vec![CoverageMethod::Conventional, CoverageMethod::Sandwich],
        level: 0.95,
        family: Family::Gaussian,
        bootstrap_replicates: 0,
        seed: 42,
    };
    for r in coverage_experiment(&pop, &cfg)?.iter().filter(|r| r.coefficient == 1) {
        println!(
            "{:<13} coverage {:.3} ± {:.3}  mean width {:.4}",
            r.method.tag(),
            r.coverage,
            r.mc_se,
            r.mean_width
        );
    }
    Ok(())
}
