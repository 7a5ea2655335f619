use std::path::Path;
use std::process::{Command, Output};

use smoothrf::data::make_step_data;

fn smoothrf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smoothrf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = smoothrf(args);
    assert!(
        out.status.success(),
        "smoothrf {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn step_csv(dir: &Path, name: &str, n: usize, seed: u64) -> String {
    let path = dir.join(name);
    make_step_data(n, 0.0, 1.0, 0.1, seed)
        .unwrap()
        .save_csv(&path)
        .unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn train_then_predict() {
    let dir = tempfile::tempdir().unwrap();
    let data = step_csv(dir.path(), "train.csv", 80, 1);
    let model = dir.path().join("model.json");
    let model = model.to_str().unwrap();
    ok(&[
        "train", "--data", &data, "--target", "y", "--trees", "10", "--seed", "4", "--out", model,
    ]);

    let query = dir.path().join("query.csv");
    std::fs::write(&query, "x0\n-0.5\n0.0\n0.7\n").unwrap();
    let out = ok(&[
        "predict",
        "--model",
        model,
        "--data",
        query.to_str().unwrap(),
    ]);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("mean,variance,intra,inter,noise"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert_eq!(r[1], r[2] + r[3] + r[4]);
        assert!(r[2..].iter().all(|&v| v >= 0.0));
    }
    assert!(rows[0][0] < 0.3 && rows[2][0] > 0.7, "{rows:?}");

    // A file with the target column gives the same predictions once it is dropped.
    let with_target = ok(&[
        "predict", "--model", model, "--data", &data, "--target", "y",
    ]);
    assert_eq!(with_target.lines().count(), 81);
    let by_name = ok(&["predict", "--model", model, "--data", &data]);
    assert_eq!(by_name, with_target);

    let wrong = dir.path().join("wrong.csv");
    std::fs::write(&wrong, "a,b\n1,2\n").unwrap();
    let out = smoothrf(&[
        "predict",
        "--model",
        model,
        "--data",
        wrong.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
}

#[test]
fn train_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let data = step_csv(dir.path(), "train.csv", 40, 1);
    let model = dir.path().join("m.json");
    let out = smoothrf(&[
        "train",
        "--data",
        &data,
        "--target",
        "nope",
        "--out",
        model.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
    let out = smoothrf(&[
        "train",
        "--data",
        &data,
        "--target",
        "y",
        "--calibration",
        "both",
        "--out",
        model.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
}

#[test]
fn bench_is_deterministic_and_honours_config() {
    let dir = tempfile::tempdir().unwrap();
    let a = step_csv(dir.path(), "step.csv", 60, 2);
    let b = step_csv(dir.path(), "other.csv", 50, 3);
    let run = |out: &str| {
        ok(&[
            "bench",
            "--data",
            &a,
            &b,
            "--target",
            "y",
            "--sizes",
            "20,40",
            "--reps",
            "2",
            "--models",
            "rf,srf-global,srf-local,rf-large",
            "--base-trees",
            "10",
            "--large-trees",
            "30",
            "--seed",
            "9",
            "--out",
            out,
        ]);
        std::fs::read(Path::new(out).join("records.csv")).unwrap()
    };
    let first = run(dir.path().join("o1").to_str().unwrap());
    let second = run(dir.path().join("o2").to_str().unwrap());
    assert_eq!(first, second);
    let text = String::from_utf8(first).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 2 * 4);
    assert!(text.starts_with(
        "dataset,training_size,repetition,model,train_hash,test_size,oob_mse,oob_log_loss"
    ));
    for file in ["timings.csv", "summary.csv", "summary_by_size.csv"] {
        assert!(dir.path().join("o1").join(file).exists(), "{file}");
    }

    let config = dir.path().join("bench.toml");
    std::fs::write(
        &config,
        format!(
            "data = [{a:?}]\ntarget = \"y\"\nsizes = [30]\nreps = 5\nmodels = [\"rf\", \"srf-local\"]\nbase_trees = 8\nseed = 1\n"
        ),
    )
    .unwrap();
    let out = dir.path().join("o3");
    ok(&[
        "bench",
        "--config",
        config.to_str().unwrap(),
        "--reps",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(out.join("records.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 2);
}

#[test]
fn bench_errors() {
    let dir = tempfile::tempdir().unwrap();
    let a = step_csv(dir.path(), "step.csv", 30, 2);
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();
    let too_big = smoothrf(&[
        "bench", "--data", &a, "--target", "y", "--sizes", "31", "--models", "rf", "--out", out,
    ]);
    assert!(!too_big.status.success());
    assert!(String::from_utf8_lossy(&too_big.stderr).contains("exceeds"));
    let unknown = smoothrf(&[
        "bench", "--data", &a, "--target", "y", "--sizes", "10", "--models", "gp", "--out", out,
    ]);
    assert!(!unknown.status.success());
}

#[test]
fn theorem1_report_and_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let hist = dir.path().join("hist.csv");
    let out = ok(&[
        "theorem1",
        "--n",
        "500",
        "--w",
        "1",
        "--reps",
        "600",
        "--seed",
        "3",
        "--bins",
        "12",
        "--histogram",
        hist.to_str().unwrap(),
    ]);
    let variance: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("variance = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(variance > 1.5 && variance < 2.5, "{variance}");
    assert!(out.contains("ks_distance = "));
    let hist = std::fs::read_to_string(hist).unwrap();
    assert_eq!(hist.lines().count(), 13);
    assert!(hist.starts_with("lower,upper,count,density,laplace_density"));
}
