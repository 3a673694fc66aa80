//! Command-line front end.
//!
//! Every run is a pure function of its flags: the seed defaults to
//! [`rng::DEFAULT_SEED`], never the clock, and parallel work is assembled
//! by task index, so repeated runs are byte-identical for any `--threads`.
//!
//! Exit codes: 0 success, 1 computational error, 2 usage error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bootstrap::{bootstrap_se, normality_diagnostic, residual_bootstrap, xy_bootstrap, NormalityReport};
use crate::covariance::{coefficient_table, conventional_cov, format_4, sandwich_cov};
use crate::data::{build_design, load_csv, Dataset};
use crate::error::{Error, Result};
use crate::fit::{fit, Family};
use crate::population::{
    asymptotic_variances, coverage_experiment, coverage_results_csv, population_glm_beta,
    regressor_shift_experiment, CoverageConfig, CoverageMethod, CoverageResult, PopulationFile, ShiftResult,
};
use crate::predict::{calibrated_band, cv_calibrate_k, future_coverage, intervals_csv, FutureCoverage};
use crate::report::{misspec_indicator, DEFAULT_RATIO_THRESHOLD};
use crate::rng::DEFAULT_SEED;
use crate::slopes::{adjust_regressor, pair_table, pairwise_slope_multiple, PairContribution};

pub const DEFAULT_BOOT: usize = 1000;
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Run configuration for one `leanreg` invocation.
#[derive(Debug, Clone, Parser)]
#[command(name = "leanreg", version, about = "Assumption-lean regression with sandwich and x-y bootstrap inference")]
pub struct Cli {
    /// Worker threads for bootstrap and simulation (output does not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Fit a working model and report conventional, bootstrap and sandwich inference.
    Fit(FitArgs),
    /// Bootstrap draws plus normal-quantile diagnostics, written to a directory.
    Bootstrap(BootstrapArgs),
    /// Prediction intervals with a calibrated multiplier.
    Predict(PredictArgs),
    /// Population functionals, regressor-shift and coverage experiments.
    Simulate(SimulateArgs),
    /// Coefficients as weighted averages of pairwise slopes.
    Slopes(SlopesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Ols,
    Logit,
    Poisson,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Ols => Family::Gaussian,
            FamilyArg::Logit => Family::Bernoulli,
            FamilyArg::Poisson => Family::Poisson,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Xy,
    Residual,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub input: PathBuf,
    /// Response column.
    #[arg(long)]
    pub response: String,
    /// Comma-separated regressor columns (empty for intercept only).
    #[arg(long, value_delimiter = ',', default_value = "")]
    pub regressors: Vec<String>,
    #[arg(long, value_enum, default_value = "ols")]
    pub family: FamilyArg,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let regs: Vec<&str> = self.regressors.iter().map(String::as_str).filter(|s| !s.is_empty()).collect();
        load_csv(&self.input, &self.response, &regs)
    }
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Bootstrap replicates for the Boot.SE column (0 disables it).
    #[arg(long = "boot", default_value_t = DEFAULT_BOOT)]
    pub boot: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Significance level used to detect decision reversals.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// SE-ratio cutoff for the misspecification flags.
    #[arg(long, default_value_t = DEFAULT_RATIO_THRESHOLD)]
    pub ratio_threshold: f64,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long = "boot", default_value_t = DEFAULT_BOOT)]
    pub boot: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "xy")]
    pub scheme: SchemeArg,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
    /// Directory for `bootstrap_draws.csv`, `qq_<j>.csv` and `normality_summary.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// `train`, `cv` or `cv:F` with F folds.
    #[arg(long, default_value = "train")]
    pub calibration: String,
    /// Folds for `--calibration cv`.
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Optional test CSV with the same columns; intervals are emitted for it
    /// and its coverage is reported.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Interval CSV destination (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Population definition (JSON).
    #[arg(long)]
    pub population: PathBuf,
    /// Sample size per replication.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Monte Carlo replications (0 skips the coverage experiment).
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    /// Comma-separated: conventional, sandwich, xy-bootstrap, residual-bootstrap.
    #[arg(long, value_delimiter = ',', default_value = "conventional,sandwich")]
    pub methods: Vec<String>,
    #[arg(long, value_enum, default_value = "ols")]
    pub family: FamilyArg,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long = "boot", default_value_t = DEFAULT_BOOT)]
    pub boot: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Plot-ready CSV of the regressor-shift experiment.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SlopesArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the pair table (coefficient, i, j, weight, slope).
    #[arg(long)]
    pub pairs: Option<PathBuf>,
}

/// What a run prints: the primary output and an optional summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub primary: String,
    pub summary: Option<String>,
}

impl Outcome {
    fn primary(primary: String) -> Self {
        Outcome { primary, summary: None }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Runs the configured subcommand, honoring `--threads`.
pub fn run(cli: &Cli) -> Result<Outcome> {
    match cli.threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t.max(1))
                .build()
                .map_err(|e| Error::Invalid(e.to_string()))?;
            pool.install(|| dispatch(&cli.command))
        }
        None => dispatch(&cli.command),
    }
}

fn dispatch(cmd: &Command) -> Result<Outcome> {
    match cmd {
        Command::Fit(a) => run_fit(a).map(Outcome::primary),
        Command::Bootstrap(a) => run_diagnostics(a).map(Outcome::primary),
        Command::Predict(a) => run_predict(a),
        Command::Simulate(a) => run_simulate(a).map(Outcome::primary),
        Command::Slopes(a) => run_slopes(a).map(Outcome::primary),
    }
}

/// Routes an outcome to `out` (or stdout) and the summary to stdout (or
/// stderr when the primary went to stdout).
pub fn emit(outcome: &Outcome, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            write_file(path, &outcome.primary)?;
            if let Some(s) = &outcome.summary {
                print!("{s}");
            }
        }
        None => {
            print!("{}", outcome.primary);
            if let Some(s) = &outcome.summary {
                eprint!("{s}");
            }
        }
    }
    Ok(())
}

impl Command {
    /// File that receives the primary output, if any.
    pub fn out_path(&self) -> Option<&Path> {
        match self {
            Command::Fit(a) => a.out.as_deref(),
            Command::Bootstrap(_) => None,
            Command::Predict(a) => a.out.as_deref(),
            Command::Simulate(a) => a.out.as_deref(),
            Command::Slopes(a) => a.out.as_deref(),
        }
    }
}

#[derive(Serialize)]
struct FitReport<'a> {
    fit: crate::fit::FitSummary,
    table: &'a crate::covariance::CoefficientTable,
    diagnostics: &'a crate::report::MisspecIndicator,
    #[serde(skip_serializing_if = "Option::is_none")]
    bootstrap: Option<BootstrapMeta>,
}

#[derive(Serialize)]
struct BootstrapMeta {
    replicates: usize,
    failures: usize,
    seed: u64,
}

/// Fit, conventional/sandwich (and bootstrap) inference, and diagnostics.
pub fn run_fit(a: &FitArgs) -> Result<String> {
    let ds = a.data.load()?;
    let family: Family = a.data.family.into();
    let dm = build_design(&ds);
    let f = fit(&dm, ds.response(), family)?;
    let conv = conventional_cov(&f)?;
    let sand = sandwich_cov(&f)?;
    let (boot_se, meta) = if a.boot > 0 {
        let draws = xy_bootstrap(&ds, family, a.boot, a.seed)?;
        let meta = BootstrapMeta {
            replicates: draws.replicates,
            failures: draws.failures,
            seed: a.seed,
        };
        (Some(bootstrap_se(&draws)?), Some(meta))
    } else {
        (None, None)
    };
    let table = coefficient_table(&f, &conv, &sand, boot_se.as_deref())?;
    let diag = misspec_indicator(&table, a.alpha, a.ratio_threshold)?;
    match a.format {
        Format::Text => {
            let mut out = String::new();
            let _ = writeln!(
                out,
                "Family: {}, response: {}, n = {}, iterations: {}",
                f.family,
                ds.response_name(),
                f.n(),
                f.iterations
            );
            if let Some(m) = &meta {
                let _ = writeln!(
                    out,
                    "x-y bootstrap: {} replicates, {} failed, seed {}",
                    m.replicates, m.failures, m.seed
                );
            }
            out.push('\n');
            out.push_str(&table.render_text());
            out.push('\n');
            out.push_str(&diag.render_text());
            Ok(out)
        }
        Format::Json => {
            let report = FitReport {
                fit: f.summary(),
                table: &table,
                diagnostics: &diag,
                bootstrap: meta,
            };
            Ok(serde_json::to_string_pretty(&report)? + "\n")
        }
        Format::Csv => table.render_csv(),
    }
}

#[derive(Serialize)]
struct NormalitySummary {
    label: String,
    coefficient: usize,
    qq_correlation: f64,
    se: f64,
}

/// Bootstrap draws, per-coefficient QQ tables and a correlation summary.
pub fn run_diagnostics(a: &BootstrapArgs) -> Result<String> {
    if a.boot < 10 {
        return Err(Error::InsufficientDraws {
            needed: 10,
            have: a.boot,
        });
    }
    let ds = a.data.load()?;
    let family: Family = a.data.family.into();
    let draws = match a.scheme {
        SchemeArg::Xy => xy_bootstrap(&ds, family, a.boot, a.seed)?,
        SchemeArg::Residual => residual_bootstrap(&ds, family, a.boot, a.seed)?,
    };
    let se = bootstrap_se(&draws)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    write_file(&a.out.join("bootstrap_draws.csv"), &draws.to_csv()?)?;
    let mut summaries = Vec::new();
    for j in 0..draws.labels.len() {
        let report: NormalityReport = normality_diagnostic(&draws, j)?;
        write_file(&a.out.join(format!("qq_{j}.csv")), &report.to_csv()?)?;
        summaries.push(NormalitySummary {
            label: draws.labels[j].clone(),
            coefficient: j,
            qq_correlation: report.qq_correlation,
            se: se[j],
        });
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["coefficient", "label", "bootstrap_se", "qq_correlation"])?;
    for s in &summaries {
        w.write_record(&[
            s.coefficient.to_string(),
            s.label.clone(),
            s.se.to_string(),
            s.qq_correlation.to_string(),
        ])?;
    }
    let summary_csv = crate::bootstrap::into_string(w)?;
    write_file(&a.out.join("normality_summary.csv"), &summary_csv)?;

    match a.format {
        Format::Json => Ok(serde_json::to_string_pretty(&summaries)? + "\n"),
        Format::Csv => Ok(summary_csv),
        Format::Text => {
            let mut out = String::new();
            let _ = writeln!(
                out,
                "{:?} bootstrap: {} replicates, {} retained, seed {}",
                a.scheme,
                draws.replicates,
                draws.retained(),
                draws.seed
            );
            let w = summaries.iter().map(|s| s.label.len()).max().unwrap_or(0);
            for s in &summaries {
                let _ = writeln!(
                    out,
                    "  {:<w$}  Boot.SE = {}  QQ correlation = {}",
                    s.label,
                    format_4(s.se),
                    format_4(s.qq_correlation)
                );
            }
            let _ = writeln!(out, "files written to {}", a.out.display());
            Ok(out)
        }
    }
}

enum CalibrationMode {
    Train,
    Cv(usize),
}

fn parse_calibration(s: &str, default_folds: usize) -> Result<CalibrationMode> {
    match s {
        "train" => Ok(CalibrationMode::Train),
        "cv" => Ok(CalibrationMode::Cv(default_folds)),
        other => match other.strip_prefix("cv:").map(str::parse::<usize>) {
            Some(Ok(f)) => Ok(CalibrationMode::Cv(f)),
            _ => Err(Error::Invalid(format!("calibration must be train, cv or cv:F, got `{other}`"))),
        },
    }
}

/// Interval CSV plus a calibration summary.
pub fn run_predict(a: &PredictArgs) -> Result<Outcome> {
    let mode = parse_calibration(&a.calibration, a.folds)?;
    let ds = a.data.load()?;
    let family: Family = a.data.family.into();
    if family != Family::Gaussian {
        return Err(Error::Family("prediction intervals are calibrated for OLS fits only".into()));
    }
    let dm = build_design(&ds);
    let f = fit(&dm, ds.response(), family)?;
    let (train_cal, band) = calibrated_band(&f, a.alpha)?;
    let (band, label) = match mode {
        CalibrationMode::Train => (band, "train".to_string()),
        CalibrationMode::Cv(folds) => (band.with_k(cv_calibrate_k(&ds, a.alpha, folds, a.seed)?), format!("cv:{folds}")),
    };
    let training = future_coverage(&band, &ds)?;
    let mut summary = String::new();
    let _ = writeln!(summary, "calibration: {label}");
    let _ = writeln!(summary, "alpha: {}", a.alpha);
    let _ = writeln!(summary, "K_hat: {}", band.k);
    let _ = writeln!(summary, "sigma_hat: {}", band.sigma_hat);
    let _ = writeln!(summary, "training_coverage: {}", training.coverage);
    if matches!(mode, CalibrationMode::Cv(_)) {
        let _ = writeln!(summary, "training_K_hat: {}", train_cal.k_hat);
    }
    let primary = match &a.test {
        Some(path) => {
            let regs: Vec<&str> = a.data.regressors.iter().map(String::as_str).filter(|s| !s.is_empty()).collect();
            let test = load_csv(path, &a.data.response, &regs)?;
            let fc: FutureCoverage = future_coverage(&band, &test)?;
            let _ = writeln!(summary, "test_coverage: {}", fc.coverage);
            if let Some(c) = fc.caveat {
                let _ = writeln!(summary, "caveat: {c}");
            }
            intervals_csv(&band, &test)?
        }
        None => intervals_csv(&band, &ds)?,
    };
    Ok(Outcome {
        primary,
        summary: Some(summary),
    })
}

#[derive(Serialize)]
struct SimulateReport {
    family: Family,
    labels: Vec<String>,
    population_beta: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    asymptotic_se_ratio: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    shift: Option<ShiftResult>,
    coverage: Vec<CoverageResult>,
}

/// Population functional, optional shift experiment and coverage study.
pub fn run_simulate(a: &SimulateArgs) -> Result<String> {
    let file = PopulationFile::load(&a.population)?;
    let pop = file.build()?;
    let family: Family = a.family.into();
    let methods = a
        .methods
        .iter()
        .filter(|m| !m.is_empty())
        .map(|m| m.parse())
        .collect::<Result<Vec<CoverageMethod>>>()?;
    let beta = population_glm_beta(&pop, family)?;
    let mut labels = vec![crate::data::INTERCEPT_LABEL.to_string()];
    labels.extend(pop.names().iter().cloned());

    let se_ratio = if family == Family::Gaussian {
        let (sand, conv) = asymptotic_variances(&pop)?;
        Some(
            (0..labels.len())
                .map(|j| (sand[(j, j)] / conv[(j, j)]).sqrt())
                .collect(),
        )
    } else {
        None
    };
    let shift = match &file.alternative_probs {
        Some(alt) => Some(regressor_shift_experiment(&pop, alt)?),
        None => None,
    };
    if let (Some(path), Some(s)) = (&a.plot, &shift) {
        write_file(path, &s.plot_csv(&pop)?)?;
    }
    let coverage = if a.reps > 0 {
        let cfg = CoverageConfig {
            n: a.n,
            replications: a.reps,
            methods,
            level: 1.0 - a.alpha,
            family,
            bootstrap_replicates: a.boot,
            seed: a.seed,
        };
        coverage_experiment(&pop, &cfg)?
    } else {
        Vec::new()
    };

    let report = SimulateReport {
        family,
        labels,
        population_beta: beta.iter().copied().collect(),
        asymptotic_se_ratio: se_ratio,
        shift,
        coverage,
    };
    match a.format {
        Format::Json => Ok(serde_json::to_string_pretty(&report)? + "\n"),
        Format::Csv => coverage_results_csv(&report.coverage),
        Format::Text => Ok(render_simulation(&report, a)),
    }
}

fn render_simulation(r: &SimulateReport, a: &SimulateArgs) -> String {
    let mut out = String::new();
    let w = r.labels.iter().map(|l| l.len()).max().unwrap_or(0);
    let _ = writeln!(out, "Population functional ({}):", r.family);
    for (l, b) in r.labels.iter().zip(&r.population_beta) {
        let _ = writeln!(out, "  {l:<w$}  {}", format_4(*b));
    }
    if let Some(ratios) = &r.asymptotic_se_ratio {
        let _ = writeln!(out, "Asymptotic SE ratio, sandwich / conventional:");
        for (l, q) in r.labels.iter().zip(ratios) {
            let _ = writeln!(out, "  {l:<w$}  {}", format_4(*q));
        }
    }
    if let Some(s) = &r.shift {
        let _ = writeln!(out, "Regressor shift (same surface, two regressor laws):");
        for (j, l) in r.labels.iter().enumerate() {
            let _ = writeln!(
                out,
                "  {l:<w$}  law 1: {}  law 2: {}",
                format_4(s.beta_1[j]),
                format_4(s.beta_2[j])
            );
        }
        let _ = writeln!(out, "  max |difference|: {}", format_4(s.max_abs_difference));
    }
    if !r.coverage.is_empty() {
        let _ = writeln!(
            out,
            "Coverage at level {} (n = {}, replications = {}, seed {}):",
            1.0 - a.alpha,
            a.n,
            a.reps,
            a.seed
        );
        let _ = writeln!(
            out,
            "  {:<20} {:<w$}  {:>8}  {:>8}  {:>10}",
            "method", "coefficient", "coverage", "mc_se", "mean_width"
        );
        for c in &r.coverage {
            let _ = writeln!(
                out,
                "  {:<20} {:<w$}  {:>8}  {:>8}  {:>10}",
                c.method.tag(),
                r.labels[c.coefficient],
                format_4(c.coverage),
                format_4(c.mc_se),
                format_4(c.mean_width)
            );
        }
    }
    out
}

#[derive(Serialize)]
struct SlopeRow {
    label: String,
    coefficient: usize,
    pairwise_beta: f64,
    ols_beta: f64,
    total_weight: f64,
    pair_count: usize,
}

/// Pairwise-slope decomposition of every non-intercept coefficient.
pub fn run_slopes(a: &SlopesArgs) -> Result<String> {
    let ds = a.data.load()?;
    let dm = build_design(&ds);
    let f = crate::fit::fit_ols(&dm, ds.response())?;
    let mut rows = Vec::new();
    let mut pairs: Vec<(usize, PairContribution)> = Vec::new();
    for j in 1..dm.ncols() {
        let s = pairwise_slope_multiple(&dm, ds.response(), j)?;
        rows.push(SlopeRow {
            label: dm.labels()[j].clone(),
            coefficient: j,
            pairwise_beta: s.beta,
            ols_beta: f.beta_hat[j],
            total_weight: s.total_weight,
            pair_count: s.pair_count,
        });
        if a.pairs.is_some() {
            let adj = adjust_regressor(&dm, ds.response(), j)?;
            pairs.extend(pair_table(&adj.x_adj, &adj.y)?.into_iter().map(|p| (j, p)));
        }
    }
    if let Some(path) = &a.pairs {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["coefficient", "i", "j", "weight", "slope"])?;
        for (c, p) in &pairs {
            w.write_record(&[
                c.to_string(),
                p.i.to_string(),
                p.j.to_string(),
                p.weight.to_string(),
                p.slope.to_string(),
            ])?;
        }
        write_file(path, &crate::bootstrap::into_string(w)?)?;
    }
    match a.format {
        Format::Json => Ok(serde_json::to_string_pretty(&rows)? + "\n"),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["label", "pairwise_beta", "ols_beta", "total_weight", "pair_count"])?;
            for r in &rows {
                w.write_record(&[
                    r.label.clone(),
                    r.pairwise_beta.to_string(),
                    r.ols_beta.to_string(),
                    r.total_weight.to_string(),
                    r.pair_count.to_string(),
                ])?;
            }
            crate::bootstrap::into_string(w)
        }
        Format::Text => {
            let mut out = String::new();
            let w = rows.iter().map(|r| r.label.len()).max().unwrap_or(0);
            let _ = writeln!(out, "{:<w$}  {:>14}  {:>14}  {:>8}", "", "pairwise", "OLS", "pairs");
            for r in &rows {
                let _ = writeln!(
                    out,
                    "{:<w$}  {:>14.8}  {:>14.8}  {:>8}",
                    r.label, r.pairwise_beta, r.ols_beta, r.pair_count
                );
            }
            Ok(out)
        }
    }
}
