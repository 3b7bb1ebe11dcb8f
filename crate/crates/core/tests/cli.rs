use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn longmem(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_longmem"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

/// Data rows of a CSV written by the CLI, after checking its schema line.
fn table(dir: &Path, name: &str) -> Vec<Vec<String>> {
    let text = fs::read_to_string(dir.join(format!("{name}.csv"))).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), format!("# longmem/{name}/v1"));
    lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

const SIMULATE: &str =
    "[simulate]\nn = 96\nreplicates = 2\nseed = 4\n[simulate.model]\nd = 0.0\ntheta = [0.0]\n";

#[test]
fn simulate_then_fit_white_noise() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "sim.toml", SIMULATE);
    let out = longmem(dir.path(), &["simulate", "--config", &cfg]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let paths = table(dir.path(), "paths");
    assert_eq!(paths[0], vec!["x1", "x2"]);
    assert_eq!(paths.len(), 97);
    let gamma = table(dir.path(), "gamma");
    assert_eq!(gamma[0], vec!["lag", "gamma"]);

    let fit_cfg = write(
        dir.path(),
        "fit.toml",
        "[mcmc]\niterations = 3000\nburn_in = 500\nfix_k = 0\nseed = 2\n",
    );
    let one = write(
        dir.path(),
        "one.toml",
        &SIMULATE.replace("replicates = 2", "replicates = 1"),
    );
    assert!(longmem(dir.path(), &["simulate", "--config", &one])
        .status
        .success());
    let data = dir.path().join("paths.csv");
    let out = longmem(
        dir.path(),
        &[
            "fit",
            data.to_str().unwrap(),
            "--config",
            &fit_cfg,
            "--grid",
            "16",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    let d_hat: f64 = stdout
        .trim()
        .strip_prefix("d_hat = ")
        .unwrap()
        .parse()
        .unwrap();
    assert!((-0.2..=0.2).contains(&d_hat), "{d_hat}");
    let est = table(dir.path(), "estimates");
    assert_eq!(est[0], vec!["lambda", "f_hat", "q05", "q95"]);
    assert_eq!(est.len(), 17);
    assert_eq!(
        table(dir.path(), "chain")[0][..4],
        ["iter", "d", "k", "theta0"]
    );
    assert_eq!(
        table(dir.path(), "diagnostics")[0],
        vec!["metric", "key", "value"]
    );
    assert!(dir.path().join("posterior_mean.json").exists());

    let first = fs::read(dir.path().join("chain.csv")).unwrap();
    let out = longmem(
        dir.path(),
        &[
            "fit",
            data.to_str().unwrap(),
            "--config",
            &fit_cfg,
            "--grid",
            "16",
        ],
    );
    assert!(out.status.success());
    assert_eq!(first, fs::read(dir.path().join("chain.csv")).unwrap());
}

#[test]
fn seed_flag_overrides_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "sim.toml", SIMULATE);
    let run = |seed: &str| {
        assert!(
            longmem(dir.path(), &["simulate", "--config", &cfg, "--seed", seed])
                .status
                .success()
        );
        fs::read_to_string(dir.path().join("paths.csv")).unwrap()
    };
    let a = run("11");
    assert_eq!(a, run("11"));
    assert_ne!(a, run("12"));
}

#[test]
fn input_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let no_n = write(
        dir.path(),
        "bad.toml",
        "[simulate]\nreplicates = 2\n[simulate.model]\nd = 0.1\ntheta = [0.0]\n",
    );
    let out = longmem(dir.path(), &["simulate", "--config", &no_n]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`n`"));

    assert_eq!(longmem(dir.path(), &["simulate"]).status.code(), Some(2));

    let empty = write(dir.path(), "empty.csv", "");
    assert_eq!(longmem(dir.path(), &["fit", &empty]).status.code(), Some(2));

    let missing = dir.path().join("nope.csv");
    assert_eq!(
        longmem(dir.path(), &["fit", missing.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );

    let unknown = write(dir.path(), "unknown.toml", "[mcmc]\nbogus = 1\n");
    let x = write(dir.path(), "x.csv", "x\n0.1\n-0.3\n0.2\n");
    assert_eq!(
        longmem(dir.path(), &["fit", &x, "--config", &unknown])
            .status
            .code(),
        Some(2)
    );

    let bad_d = write(dir.path(), "a.json", r#"{"d": 0.7, "theta": [0.0]}"#);
    assert_eq!(
        longmem(dir.path(), &["distances", &bad_d, &bad_d, "--n", "8"])
            .status
            .code(),
        Some(2)
    );

    assert_eq!(longmem(dir.path(), &["frobnicate"]).status.code(), Some(2));
}

#[test]
fn distances_report_zero_and_closed_forms() {
    let dir = TempDir::new().unwrap();
    let a = write(dir.path(), "a.json", r#"{"d": 0.2, "theta": [0.1, -0.3]}"#);
    let out = longmem(dir.path(), &["distances", &a, &a, "--n", "32"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = table(dir.path(), "distances");
    assert_eq!(
        rows[0],
        vec!["n", "kl_n", "kl_inf", "h_n", "h", "b_n", "b", "ell"]
    );
    assert_eq!(rows[1][0], "32");
    for v in &rows[1][1..] {
        assert!(v.parse::<f64>().unwrap().abs() < 1e-10, "{rows:?}");
    }

    // θ_0 + ln 2 doubles the density.
    let b = write(
        dir.path(),
        "b.json",
        &format!(r#"{{"d": 0.2, "theta": [{}, -0.3]}}"#, 0.1 + 2f64.ln()),
    );
    assert!(longmem(dir.path(), &["distances", &a, &b, "--n", "64"])
        .status
        .success());
    let r: Vec<f64> = table(dir.path(), "distances")[1]
        .iter()
        .map(|v| v.parse().unwrap())
        .collect();
    assert!((r[1] - (2f64.ln() - 0.5) / 2.0).abs() < 1e-8);
    assert!((r[4] - 0.25).abs() < 1e-8);
    assert!((r[6] - 0.125).abs() < 1e-8);
}

#[test]
fn verify_suites_pass() {
    let dir = TempDir::new().unwrap();
    let out = longmem(
        dir.path(),
        &["verify", "appendix_d", "--trials", "40", "--seed", "3"],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    assert!(String::from_utf8_lossy(&out.stdout)
        .trim_end()
        .ends_with("PASS"));
    assert_eq!(table(dir.path(), "appendix_d").len(), 1 + 5 * 40);

    let cfg = write(
        dir.path(),
        "tc.toml",
        "[trace_convergence]\nns = [64, 128, 256, 512]\n",
    );
    let out = longmem(
        dir.path(),
        &["verify", "trace_convergence", "--config", &cfg],
    );
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(table(dir.path(), "trace_convergence").len(), 5);
}

#[test]
fn rate_study_single_n_has_no_slope() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "study.toml",
        "[study]\nns = [64]\nreplicates = 2\nseed = 3\n[study.truth]\nd = 0.3\ntheta = [0.0]\n\
         [prior]\n[mcmc]\niterations = 300\nburn_in = 100\n",
    );
    let out = longmem(
        dir.path(),
        &["rate_study", "--config", &cfg, "--workers", "2"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rates = table(dir.path(), "rates");
    assert_eq!(rates[0], vec!["n", "rmse_d", "median_ell", "slope"]);
    assert_eq!(rates.len(), 2);
    assert!(rates[1][2].parse::<f64>().unwrap() > 0.0);
    assert_eq!(rates[1][3], "");
    let first = fs::read(dir.path().join("rates_replicates.csv")).unwrap();
    assert!(longmem(
        dir.path(),
        &["rate-study", "--config", &cfg, "--workers", "1"]
    )
    .status
    .success());
    assert_eq!(
        first,
        fs::read(dir.path().join("rates_replicates.csv")).unwrap()
    );
}
