use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use leanreg::covariance::{CoefficientRow, CoefficientTable};
use leanreg::report::misspec_indicator;

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn leanreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leanreg")).args(args).output().unwrap()
}

fn stdout(args: &[&str]) -> String {
    let out = leanreg(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

const REGS: &str = "age,male,priors,prior_sentences,drug_priors,age_first_charge";

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(leanreg(&["fit"]).status.code(), Some(2));
    assert_eq!(leanreg(&["fit", "--family", "probit"]).status.code(), Some(2));
    assert_eq!(leanreg(&["nonsense"]).status.code(), Some(2));
}

#[test]
fn computational_errors_exit_with_one() {
    let charges = data("charges.csv");
    let out = leanreg(&["fit", "--input", &charges, "--response", "charges", "--regressors", "height"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("height"));

    let out = leanreg(&["fit", "--input", "/no/such/file.csv", "--response", "y"]);
    assert_eq!(out.status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let out = leanreg(&[
        "bootstrap", "--input", &charges, "--response", "charges", "--regressors", "age", "--boot", "5", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));

    let out = leanreg(&[
        "bootstrap", "--input", &charges, "--response", "charges", "--regressors", "age", "--scheme", "residual",
        "--family", "poisson", "--boot", "20", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn text_and_json_report_the_same_numbers() {
    let charges = data("charges.csv");
    let base = ["fit", "--input", &charges, "--response", "charges", "--regressors", REGS, "--family", "poisson", "--boot", "100"];
    let text = stdout(&base);
    let mut json_args = base.to_vec();
    json_args.extend(["--format", "json"]);
    let json: serde_json::Value = serde_json::from_str(&stdout(&json_args)).unwrap();

    let rows = json["table"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 7);
    for row in rows {
        let label = row["label"].as_str().unwrap();
        let line = text.lines().find(|l| l.starts_with(label) && !l.contains("Sand.SE/SE")).unwrap();
        let cells: Vec<&str> = line[label.len()..].split_whitespace().collect();
        let keys = ["coef", "se_conv", "p_conv", "se_boot", "se_sand", "p_sand"];
        for (cell, key) in cells.iter().zip(keys) {
            let v = row[key].as_f64().unwrap();
            let shown = format!("{v:.4}");
            let shown = if shown == "-0.0000" { "0.0000".to_string() } else { shown };
            assert_eq!(*cell, shown, "{label} {key}");
        }
    }
    assert!(json["diagnostics"]["ratios"].as_array().unwrap().len() == 7);
    assert!(text.contains("Misspecification diagnostics"));
}

#[test]
fn csv_table_has_the_report_columns() {
    let charges = data("charges.csv");
    let csv = stdout(&["fit", "--input", &charges, "--response", "charges", "--regressors", "age", "--boot", "0", "--format", "csv"]);
    assert_eq!(csv.lines().next().unwrap(), "label,Coeff,SE,p-value,Sand.SE,Sand-p");
}

#[test]
fn bootstrap_writes_documented_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("diag");
    stdout(&[
        "bootstrap", "--input", &data("charges.csv"), "--response", "charges", "--regressors", "age,priors", "--boot", "100",
        "--out", out.to_str().unwrap(),
    ]);
    for f in ["bootstrap_draws.csv", "qq_0.csv", "qq_1.csv", "qq_2.csv", "normality_summary.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let draws = std::fs::read_to_string(out.join("bootstrap_draws.csv")).unwrap();
    assert_eq!(draws.lines().count(), 101);
}

#[test]
fn simulate_reports_the_shift_slopes() {
    let dir = tempfile::tempdir().unwrap();
    let plot: PathBuf = dir.path().join("shift.csv");
    let text = stdout(&["simulate", "--population", &data("fig2.json"), "--reps", "0", "--plot", plot.to_str().unwrap()]);
    let line = text.lines().find(|l| l.trim_start().starts_with("x") && l.contains("law 1")).unwrap();
    assert!(line.contains("2.0000") && line.contains("1.6667"), "{line}");
    assert_eq!(std::fs::read_to_string(plot).unwrap().lines().count(), 4);
}

#[test]
fn predict_emits_intervals_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("intervals.csv");
    let charges = data("charges.csv");
    let res = leanreg(&[
        "predict", "--input", &charges, "--response", "charges", "--regressors", "age,priors", "--test", &charges, "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    let summary = String::from_utf8(res.stdout).unwrap();
    assert!(summary.contains("K_hat") && summary.contains("test_coverage"));
    let csv = std::fs::read_to_string(out).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "age,priors,yhat,lower,upper");
    assert_eq!(csv.lines().count(), 2001);
}

#[test]
fn slopes_agree_with_ols_and_write_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs.csv");
    let csv = dir.path().join("small.csv");
    std::fs::write(&csv, "y,x\n1,1\n4,2\n16,4\n49,7\n").unwrap();
    let json: serde_json::Value = serde_json::from_str(&stdout(&[
        "slopes", "--input", csv.to_str().unwrap(), "--response", "y", "--regressors", "x", "--format", "json", "--pairs",
        pairs.to_str().unwrap(),
    ]))
    .unwrap();
    let row = &json[0];
    assert!((row["pairwise_beta"].as_f64().unwrap() - row["ols_beta"].as_f64().unwrap()).abs() < 1e-12);
    assert_eq!(std::fs::read_to_string(pairs).unwrap().lines().count(), 7);
}

#[test]
fn published_table_renders_and_flags_the_reversal() {
    let rows = [
        ("(Intercept)", 1.8802, 0.0205, 0.0000, 0.0522, 0.0526, 0.0000),
        ("Age", -0.0147, 0.0006, 0.0000, 0.0016, 0.0016, 0.0000),
        ("Male", 0.0823, 0.0127, 0.0000, 0.0284, 0.0299, 0.0058),
        ("Number of Priors", 0.0031, 0.0002, 0.0000, 0.0005, 0.0005, 0.0000),
        ("Number of Prior Sentences", 0.0002, 0.0016, 0.8868, 0.0040, 0.0039, 0.9519),
        ("Number of Drug Priors", -0.0138, 0.0008, 0.0000, 0.0021, 0.0020, 0.0000),
        ("Age At First Charge", 0.0028, 0.0009, 0.0012, 0.0022, 0.0021, 0.1935),
    ];
    let table = CoefficientTable {
        rows: rows
            .iter()
            .map(|&(label, coef, se, p, boot, sand, sp)| CoefficientRow {
                label: label.into(),
                coef,
                se_conv: se,
                p_conv: p,
                se_boot: Some(boot),
                se_sand: sand,
                p_sand: sp,
            })
            .collect(),
    };
    let golden = include_str!("golden/table1.txt");
    assert_eq!(table.render_text(), golden);
    let ind = misspec_indicator(&table, 0.05, 1.5).unwrap();
    assert_eq!(ind.decision_reversals.len(), 1);
    assert_eq!(ind.decision_reversals[0].label, "Age At First Charge");
    assert!(ind.flagged.contains(&"Male".to_string()));
}
