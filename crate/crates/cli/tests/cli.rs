use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_krrcheck"));
    c.env_remove("KRRCHECK_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn nsw_csv() -> PathBuf {
    [env!("CARGO_MANIFEST_DIR"), "..", "core", "data", "nsw_dw.csv"].iter().collect()
}

/// y = 1 + x1 - 0.5 x2 + small deterministic wiggle.
fn toy_csv(dir: &Path) -> PathBuf {
    let mut s = String::from("y,x1,x2\n");
    for i in 0..60 {
        let x1 = (i as f64 * 0.37).sin() * 2.0;
        let x2 = (i as f64 * 0.11).cos();
        let e = ((i * 7919) % 13) as f64 / 13.0 - 0.5;
        s.push_str(&format!("{},{x1},{x2}\n", 1.0 + x1 - 0.5 * x2 + e));
    }
    let p = dir.join("toy.csv");
    fs::write(&p, s).unwrap();
    p
}

fn lines(p: &Path) -> usize {
    fs::read_to_string(p).unwrap().lines().count()
}

#[test]
fn test_command_writes_reports_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let csv = toy_csv(dir.path());
    let out = |name: &str| dir.path().join(name);
    let args = |o: &Path| {
        vec![
            "test".to_string(),
            "--input".into(),
            csv.display().to_string(),
            "--y-col".into(),
            "y".into(),
            "--x-cols".into(),
            "x1,x2".into(),
            "--statistic".into(),
            "proj1,rand2,icm".into(),
            "--B".into(),
            "49".into(),
            "--seed".into(),
            "5".into(),
            "--output".into(),
            o.display().to_string(),
        ]
    };
    for name in ["a", "b"] {
        let o = bin().args(args(&out(name))).output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("proj1"));
    }
    let a = fs::read(out("a").join("report.json")).unwrap();
    let b = fs::read(out("b").join("report.json")).unwrap();
    assert_eq!(a, b);
    assert!(out("a").join("summary.txt").exists());

    let v: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["seed"], 5);
    assert_eq!(v["bootstrap"], 49);
    let results = v["groups"][0]["results"].as_array().unwrap();
    let names: Vec<&str> = results.iter().map(|r| r["statistic"].as_str().unwrap()).collect();
    assert_eq!(names, ["proj1", "rand2", "icm"]);
    for r in results {
        let p = r["p_value"].as_f64().unwrap();
        assert!(p > 0.0 && p <= 1.0);
    }
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let csv = toy_csv(dir.path());
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "input = {:?}\ny_col = \"y\"\nx_cols = [\"x1\", \"x2\"]\nstatistics = [\"proj2\"]\nbootstrap = 19\nseed = 3\ngamma = 0.5\nlambda = 0.01\n",
            csv.display().to_string()
        ),
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = bin()
        .args(["test", "--config", cfg.to_str().unwrap(), "--B", "29"])
        .env("KRRCHECK_OUT", &out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(v["bootstrap"], 29);
    let r = &v["groups"][0]["results"][0];
    assert_eq!(r["statistic"], "proj2");
    assert_eq!(r["gamma"], 0.5);
    assert_eq!(r["lambda"], 0.01);
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let csv = toy_csv(dir.path());
    let o = run(&["test", "--input", csv.to_str().unwrap(), "--y-col", "y", "--x-cols", "x1,nope"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope"));

    let o = run(&[
        "test", "--input", csv.to_str().unwrap(), "--y-col", "y", "--x-cols", "x1", "--level", "1.5",
    ]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["test", "--input", "/nonexistent/file.csv", "--y-col", "y", "--x-cols", "x1"]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["test", "--lambda", "often"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("sep.csv");
    // treatment perfectly separated by x
    let mut s = String::from("y,t,x\n");
    for i in 0..40 {
        let x = i as f64 - 19.5;
        s.push_str(&format!("0,{},{x}\n", u8::from(x > 0.0)));
    }
    fs::write(&p, s).unwrap();
    let o = run(&[
        "test", "--input", p.to_str().unwrap(), "--model", "probit", "--y-col", "y", "--t-col", "t", "--x-cols", "x",
        "--B", "9",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn nsw_model_reports_both_groups() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "test",
        "--input",
        nsw_csv().to_str().unwrap(),
        "--model",
        "nsw",
        "--statistic",
        "proj2",
        "--B",
        "49",
        "--output",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    let groups = v["groups"].as_array().unwrap();
    assert_eq!(groups.len(), 2);
    assert_eq!(groups[0]["name"], "individual");
    assert_eq!(groups[0]["n"], 445);
    assert_eq!(groups[1]["name"], "joint");
    assert_eq!(groups[1]["components"], 2);
}

#[test]
fn tune_writes_cv_table() {
    let dir = tempfile::tempdir().unwrap();
    let csv = toy_csv(dir.path());
    let o = run(&[
        "tune",
        "--input",
        csv.to_str().unwrap(),
        "--y-col",
        "y",
        "--x-cols",
        "x1,x2",
        "--output",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("lambda = "));
    assert_eq!(lines(&dir.path().join("cv_table.csv")), 1 + 13 * 7 * 5);
}

#[test]
fn witness_from_dgp_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "witness",
        "--dgp",
        "fig1_dgp1",
        "--n",
        "120",
        "--output",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("witness_grid.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "x1,x2,w_1");
    assert_eq!(text.lines().count(), 1 + 60 * 60);

    let csv = toy_csv(dir.path());
    let out = dir.path().join("w");
    let o = run(&[
        "witness",
        "--input",
        csv.to_str().unwrap(),
        "--y-col",
        "y",
        "--x-cols",
        "x1,x2",
        "--gamma",
        "0.5",
        "--lambda",
        "0.1",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("gamma = 0.5"));
    assert_eq!(lines(&out.join("witness_grid.csv")), 1 + 60 * 60);
}

#[test]
fn simulate_emits_one_row_per_cell_and_statistic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cells.toml");
    fs::write(
        &cfg,
        r#"
[[cell]]
dgp = "dgp0"
n = 40
d = 2
statistics = ["proj1", "gp"]
replications = 3
bootstrap = 19
seed = 1

[[cell]]
dgp = "dgp3"
n = 40
d = 2
statistics = ["proj2", "rand1", "icm"]
replications = 3
bootstrap = 19
seed = 2
"#,
    )
    .unwrap();
    let o = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--workers",
        "2",
        "--output",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("cells.csv")).unwrap();
    let mut rows = text.lines();
    assert!(rows.next().unwrap().starts_with("dgp,n,d,statistic"));
    assert_eq!(rows.count(), 5);
}

#[test]
fn power_vs_j_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "power-vs-j",
        "--dgp",
        "dgp2",
        "--n",
        "40",
        "--d",
        "2",
        "--R",
        "2",
        "--B",
        "19",
        "--j-max",
        "4",
        "--output",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("power_vs_j.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "J,statistic,rejection_rate,mc_se");
    assert_eq!(text.lines().count(), 1 + 4 * 2);

    let o = run(&["power-vs-j", "--dgp", "dgp2", "--j-max", "16"]);
    assert_eq!(o.status.code(), Some(2));
}
