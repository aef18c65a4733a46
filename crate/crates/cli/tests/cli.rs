use std::path::Path;
use std::process::{Command, Stdio};

fn run(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_fh-gauss")).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn malformed_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "ts = [0.1, \ngammas = 1");
    assert_eq!(run(&["compute", "--config", &cfg]).0, 1);
    let cfg = write_config(dir.path(), "dup.toml", "ts = [0.3, 0.3]\ngammas = [1, 1]\n");
    assert_eq!(run(&["verify", "--config", &cfg]).0, 1);
    assert_eq!(run(&["verify", "--config", "/nonexistent/cfg.toml"]).0, 1);
}

#[test]
fn gaussian_compute_emits_half_integer_betas() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "g.toml", "ts = [0.2]\ngammas = [0]\nn_max = 5\n");
    let (code, err) = run(&["compute", "--config", &cfg, "--out", out.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(code, 0, "{err}");
    let mut rdr = csv::Reader::from_path(out.join("compute.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let bi = headers.iter().position(|h| h == "beta").unwrap();
    let ni = headers.iter().position(|h| h == "n").unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 6);
    for row in rows {
        let n: f64 = row[ni].parse().unwrap();
        let beta: f64 = row[bi].parse().unwrap();
        assert!((beta - n / 2.0).abs() < 1e-20);
    }
}

#[test]
fn sweep_produces_rows_in_grid_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(
        dir.path(),
        "s.toml",
        "ts = [-0.5, 0.5]\ngammas = [1, 0.5]\nn_max = 3\nsweep_start = [-0.6, 0.4]\nsweep_stop = [-0.4, 0.6]\nsweep_steps = [2, 2]\n",
    );
    let (code, err) = run(&["compute", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let doc = json(&out.join("compute.json"));
    let rows = doc["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4 * 4);
    let points: Vec<&str> = rows.iter().map(|r| r[0].as_str().unwrap()).collect();
    assert_eq!(points[0], "0");
    assert_eq!(points[15], "3");
    assert!(points.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(doc["summary"]["points"], 4);
}

#[test]
fn suite_filter_and_forced_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "l.toml", "ts = [-0.6, 0.8]\ngammas = [0.5, 1.5]\nn_max = 4\nsuite = \"ladder\"\n");
    let (code, err) = run(&["verify", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let doc = json(&out.join("verify.json"));
    let names: std::collections::BTreeSet<&str> =
        doc["reports"].as_array().unwrap().iter().map(|r| r["identity"].as_str().unwrap()).collect();
    assert_eq!(names.into_iter().collect::<Vec<_>>(), vec!["lowering", "raising", "s1", "s2", "s2_prime"]);
    assert_eq!(doc["config_echo"]["suite"], "ladder");
    assert!(doc["summary"]["max_residual"]["lowering"].as_f64().unwrap() < 1e-25);

    let cfg = write_config(dir.path(), "z.toml", "ts = [-0.6, 0.8]\ngammas = [0.5, 1.5]\nn_max = 4\nsuite = \"ladder\"\nverify_tol = 0\n");
    let (code, err) = run(&["verify", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("lowering"), "{err}");
    let doc = json(&out.join("verify.json"));
    assert!(doc["summary"]["failed"].as_u64().unwrap() > 0);
}

#[test]
fn iterate_reports_per_degree_deviation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "i.toml", "ts = [0.5]\ngammas = [1]\nn_max = 10\n");
    let (code, err) = run(&["iterate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let doc = json(&out.join("iterate.json"));
    assert_eq!(doc["rows"].as_array().unwrap().len(), 11);
    assert!(doc["summary"]["max_deviation"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn verify_is_byte_identical_across_runs_and_directories() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "d.toml", "ts = [0.5]\ngammas = [1]\nn_max = 4\n");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let status = Command::new(env!("CARGO_BIN_EXE_fh-gauss"))
            .args(["verify", "--config", &cfg, "--out", out.to_str().unwrap(), "--format", "csv"])
            .env("FH_GAUSS_THREADS", threads)
            .stdout(Stdio::null())
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(std::fs::read(a.join("verify.csv")).unwrap(), std::fs::read(b.join("verify.csv")).unwrap());
}
