use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mlnltp_bench::sim::simulate_mln;

fn mlnltp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlnltp")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn simulate_fit_and_ppc_succeed_with_deterministic_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = mlnltp(&["simulate", "--n", "12", "--d", "4", "--q", "2", "--seed", "3", "--out", p(&data)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let counts = data.join("counts.csv");
    let covariates = data.join("covariates.csv");

    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let fit_dir = dir.path().join(run);
        let out = mlnltp(&[
            "fit",
            "--counts",
            p(&counts),
            "--covariates",
            p(&covariates),
            "--draws",
            "300",
            "--seed",
            "9",
            "--out",
            p(&fit_dir),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let lambda = fs::read(fit_dir.join("lambda.csv")).unwrap();
        let diagnostics = fs::read(fit_dir.join("diagnostics.csv")).unwrap();
        assert!(fit_dir.join("timing.csv").exists());
        reports.push((lambda, diagnostics));
    }
    assert_eq!(reports[0], reports[1]);
    let lambda = String::from_utf8(reports[0].0.clone()).unwrap();
    assert!(lambda.starts_with("coord,category,covariate,mean,sd,q2.5,q97.5\n"));
    // Simulated tables carry names, which must reach the report.
    assert!(lambda.lines().nth(1).unwrap().starts_with("alr,c1,x1,"));

    let ppc = dir.path().join("ppc.csv");
    let out =
        mlnltp(&["ppc", "--counts", p(&counts), "--covariates", p(&covariates), "--draws", "200", "--out", p(&ppc)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(&ppc).unwrap();
    assert!(table.starts_with("category,sample,observed,mean,q2.5,q97.5\n"));
    assert_eq!(table.lines().count(), 1 + 4 * 12);
}

#[test]
fn header_names_reach_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("counts.tsv");
    let covariates = dir.path().join("covariates.tsv");
    fs::write(
        &counts,
        "taxon\tS1\tS2\tS3\tS4\tS5\n\
         Bacteroides\t120\t80\t95\t140\t60\n\
         Prevotella\t30\t55\t10\t22\t41\n\
         Other\t300\t260\t310\t280\t330\n",
    )
    .unwrap();
    fs::write(&covariates, "covariate\tS1\tS2\tS3\tS4\tS5\nintercept\t1\t1\t1\t1\t1\nage\t-1\t-0.5\t0\t0.5\t1\n")
        .unwrap();
    let fit_dir = dir.path().join("fit");
    let out = mlnltp(&["fit", "--counts", p(&counts), "--covariates", p(&covariates), "--out", p(&fit_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let lambda = fs::read_to_string(fit_dir.join("lambda.csv")).unwrap();
    let labels: Vec<(String, String)> = lambda
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (format!("{}:{}", f[0], f[1]), f[2].to_string())
        })
        .collect();
    for name in ["alr:Bacteroides", "alr:Prevotella", "clr:Bacteroides", "clr:Prevotella", "clr:Other"] {
        assert!(labels.iter().any(|(c, _)| c == name), "{name} missing");
    }
    // The reference category has no ALR row.
    assert!(!labels.iter().any(|(c, _)| c == "alr:Other"));
    assert!(labels.iter().any(|(_, q)| q == "age") && labels.iter().any(|(_, q)| q == "intercept"));
}

#[test]
fn parse_and_config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("counts.csv");
    let covariates = dir.path().join("covariates.csv");
    fs::write(&counts, "3,0,4\n1,7,2\n").unwrap();
    fs::write(&covariates, "1,1,1\n").unwrap();
    let fit_dir = dir.path().join("fit");
    let fit = |counts: &Path, config: Option<&Path>| {
        let mut args = vec!["fit", "--counts", p(counts), "--covariates", p(&covariates), "--out", p(&fit_dir)];
        if let Some(c) = config {
            args.extend(["--config", p(c)]);
        }
        mlnltp(&args)
    };

    let bad_cell = dir.path().join("bad.csv");
    fs::write(&bad_cell, "3,x,4\n1,7,2\n").unwrap();
    let out = fit(&bad_cell, None);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("column 2"));

    let negative = dir.path().join("negative.csv");
    fs::write(&negative, "3,-1,4\n1,7,2\n").unwrap();
    assert_eq!(code(&fit(&negative, None)), 2);

    let unknown = dir.path().join("unknown.toml");
    fs::write(&unknown, "draws = 10\nsweeps = 3\n").unwrap();
    assert_eq!(code(&fit(&counts, Some(&unknown))), 2);

    let wrong_type = dir.path().join("wrong_type.toml");
    fs::write(&wrong_type, "draws = \"many\"\n").unwrap();
    assert_eq!(code(&fit(&counts, Some(&wrong_type))), 2);

    assert_eq!(code(&mlnltp(&["fit", "--counts", p(&counts)])), 2);
    assert_eq!(code(&mlnltp(&["simulate", "--n", "0", "--d", "3", "--q", "1", "--out", p(&fit_dir)])), 2);
    assert_eq!(
        code(&mlnltp(&["--threads", "0", "simulate", "--n", "3", "--d", "3", "--q", "1", "--out", p(&fit_dir)])),
        2
    );
    assert_eq!(code(&fit(&counts, None)), 0);
}

#[test]
fn numerical_failure_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("counts.csv");
    let covariates = dir.path().join("covariates.csv");
    fs::write(&counts, "3,0,4\n1,7,2\n").unwrap();
    // X Xᵀ overflows, so the collapsed column scale is not positive definite.
    fs::write(&covariates, "1e200,1,1\n").unwrap();
    let out = mlnltp(&["fit", "--counts", p(&counts), "--covariates", p(&covariates), "--out", p(dir.path())]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bench_writes_a_metric_table() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("bench.csv");
    let out = mlnltp(&["bench", "--grid", "15x4x2", "--replicates", "2", "--draws", "200", "--out", p(&table)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&table).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert_eq!(code(&mlnltp(&["bench", "--grid", "15x4"])), 2);
}

#[test]
fn simulated_files_round_trip_through_the_loaders() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate_mln(7, 3, 2, 1).unwrap();
    data.write(dir.path()).unwrap();
    let y = mlnltp_bench::io::load_counts(&dir.path().join("counts.csv")).unwrap();
    let x = mlnltp_bench::io::load_covariates(&dir.path().join("covariates.csv")).unwrap();
    assert_eq!(&y, &data.y);
    assert_eq!(x, data.x);
}
