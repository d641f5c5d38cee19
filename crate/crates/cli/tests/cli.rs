use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fot"))
        .args(args)
        .env_remove("FOT_OUT_DIR")
        .output()
        .expect("run fot")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_str(stdout(o).trim()).expect("JSON on stdout")
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

#[test]
fn train_ten_steps_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = fot(&[
        "train",
        "--dataset",
        "gaussians8",
        "--gen-loss",
        "frechet",
        "--steps",
        "10",
        "--batch-size",
        "32",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(
        lines.next(),
        Some("step,d_loss,g_loss,d_ms,g_fwd_ms,g_bwd_ms,mode_coverage,hq_fraction")
    );
    assert_eq!(lines.count(), 10);
    assert!(out.join("checkpoint.json").exists());
    assert!(out.join("snapshots/step_000010.csv").exists());
    assert_eq!(json(&o)["steps"], 10);
}

#[test]
fn train_without_dataset_or_config_is_a_usage_error() {
    let o = fot(&["train", "--steps", "3"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("--dataset") && err.contains("Usage"), "{err}");
}

#[test]
fn unknown_flags_are_rejected() {
    assert_eq!(
        fot(&["train", "--dataset", "gaussians8", "--bogus"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(fot(&["sample", "--dataset", "nope"]).status.code(), Some(2));
}

#[test]
fn training_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = fot(&[
            "--seed",
            "7",
            "train",
            "--dataset",
            "gaussians8",
            "--steps",
            "8",
            "--batch-size",
            "32",
            "--snapshot-every",
            "4",
            "--no-timings",
            "--out-dir",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(out.join("metrics.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let toml = dir.path().join("cfg.toml");
    write(
        &toml,
        "gen_loss = \"ot\"\nsteps = 5\nbatch_size = 16\nsnapshot_every = 0\n\n[dataset]\nkind = \"gaussians25\"\n",
    );
    let out = dir.path().join("toml");
    let o = fot(&[
        "train",
        "--config",
        toml.to_str().unwrap(),
        "--steps",
        "3",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["steps"], 3);
    assert_eq!(v["gen_loss"], "ot");
    assert_eq!(v["dataset"], "gaussians25");
    assert_eq!(
        fs::read_to_string(out.join("metrics.csv"))
            .unwrap()
            .lines()
            .count(),
        4
    );

    let js = dir.path().join("cfg.json");
    write(
        &js,
        r#"{"gen_loss": "swg", "steps": 2, "batch_size": 16, "swg_projections": 8}"#,
    );
    let o = fot(&[
        "train",
        "--config",
        js.to_str().unwrap(),
        "--out-dir",
        dir.path().join("json").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&o)["gen_loss"], "swg");

    let bad = dir.path().join("bad.toml");
    write(&bad, "stepz = 3\n");
    assert_eq!(
        fot(&["train", "--config", bad.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    let invalid = dir.path().join("invalid.toml");
    write(&invalid, "batch_size = 1\n");
    let o = fot(&[
        "train",
        "--config",
        invalid.to_str().unwrap(),
        "--out-dir",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn out_dir_defaults_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("env-out");
    let o = Command::new(env!("CARGO_BIN_EXE_fot"))
        .args(["sample", "--dataset", "gaussians8", "--n", "5"])
        .env("FOT_OUT_DIR", &out)
        .output()
        .unwrap();
    assert!(o.status.success());
    let text = fs::read_to_string(out.join("samples.csv")).unwrap();
    assert!(text.starts_with("x,y\n"));
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn check_sqrt_rows_and_convergence() {
    let o = fot(&[
        "check-sqrt",
        "--d",
        "32",
        "--t-values",
        "1,15",
        "--trials",
        "3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,trial,residual,grad_rel_err"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 2 * 3);
    for r in &rows {
        if r[0] == 15.0 {
            assert!(r[2] <= 1e-6, "{r:?}");
        } else {
            assert!(r[2] > 1e-2, "{r:?}");
        }
    }
    assert_eq!(fot(&["check-sqrt", "--d", "300"]).status.code(), Some(2));
}

#[test]
fn distances_between_identical_files_are_zero() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("x.csv");
    let s = fot(&[
        "--seed",
        "3",
        "sample",
        "--dataset",
        "gaussians25",
        "--n",
        "64",
    ]);
    fs::write(&f, &s.stdout).unwrap();
    let path = f.to_str().unwrap();
    for method in ["frechet", "ot", "swg", "max-swg"] {
        let o = fot(&["distances", path, path, "--method", method]);
        assert!(
            o.status.success(),
            "{method}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        let v = json(&o)["value"].as_f64().unwrap();
        assert!(v.abs() < 1e-9, "{method}: {v}");
    }
    let o = fot(&["distances", path, path, "--method", "max-swg"]);
    assert_eq!(json(&o)["direction"].as_array().unwrap().len(), 2);
}

#[test]
fn single_row_ot_is_squared_euclidean() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = (dir.path().join("x.csv"), dir.path().join("y.csv"));
    write(&x, "1.0,2.0\n");
    write(&y, "4.0,-2.0\n");
    let o = fot(&[
        "distances",
        x.to_str().unwrap(),
        y.to_str().unwrap(),
        "--method",
        "ot",
    ]);
    assert!(o.status.success());
    assert_eq!(json(&o)["value"].as_f64().unwrap(), 25.0);
    let o = fot(&[
        "distances",
        x.to_str().unwrap(),
        y.to_str().unwrap(),
        "--method",
        "ot",
        "--p",
        "1",
    ]);
    assert_eq!(json(&o)["value"].as_f64().unwrap(), 5.0);
}

#[test]
fn frechet_of_sample_files_matches_the_analytic_value() {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    // N((0,0), I) against N((1,0), diag(4, 1)): 1 + (1 + 4 − 2·2) + 0 = 2.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let mut a = String::from("x,y\n");
    let mut b = String::from("x,y\n");
    for _ in 0..2000 {
        let (u, v): (f64, f64) = (
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        );
        a.push_str(&format!("{u},{v}\n"));
        let (u, v): (f64, f64) = (
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        );
        b.push_str(&format!("{},{v}\n", 1.0 + 2.0 * u));
    }
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    write(&x, &a);
    write(&y, &b);
    for route in ["eig", "newton-schulz"] {
        let o = fot(&[
            "distances",
            x.to_str().unwrap(),
            y.to_str().unwrap(),
            "--method",
            "frechet",
            "--sqrt",
            route,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let v = json(&o)["value"].as_f64().unwrap();
        assert!((v - 2.0).abs() / 2.0 < 0.1, "{route}: {v}");
    }
}

#[test]
fn bad_distance_inputs_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y, z, junk) = (
        dir.path().join("x.csv"),
        dir.path().join("y.csv"),
        dir.path().join("z.csv"),
        dir.path().join("junk.csv"),
    );
    write(&x, "0,0\n1,1\n");
    write(&y, "0,0,0\n1,1,1\n");
    write(&z, "0,0\n1,1\n2,2\n");
    write(&junk, "x,y\n1,oops\n");
    let p = |f: &Path| f.to_str().unwrap().to_owned();
    let code = |args: &[&str]| fot(args).status.code();
    assert_eq!(
        code(&["distances", &p(&x), &p(&y), "--method", "swg"]),
        Some(2)
    );
    assert_eq!(
        code(&["distances", &p(&x), &p(&z), "--method", "ot"]),
        Some(2)
    );
    assert_eq!(
        code(&["distances", &p(&x), &p(&junk), "--method", "frechet"]),
        Some(2)
    );
    assert_eq!(
        code(&["distances", &p(&x), &p(&x), "--method", "ot", "--p", "3"]),
        Some(2)
    );
    assert_eq!(
        code(&[
            "distances",
            &p(&x),
            &p(&dir.path().join("missing.csv")),
            "--method",
            "ot"
        ]),
        Some(2)
    );
}

#[test]
fn bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = fot(&[
        "bench",
        "--methods",
        "frechet,ot",
        "--n-values",
        "8,16",
        "--d",
        "4",
        "--trials",
        "3",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("method,n,d,trial,forward_ms,backward_ms")
    );
    assert_eq!(lines.count(), 2 * 2 * 2);
    assert_eq!(fot(&["bench", "--trials", "2"]).status.code(), Some(2));
}
