mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{small_cohort, tiny_experiment, tiny_network};
use mrsdistill::cli::TrainJob;
use mrsdistill::nn::TrainConfig;
use mrsdistill::pipeline::SweepGrid;
use mrsdistill::spectra::load_dataset;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mrsdistill"))
        .args(args)
        .env_remove("MRSDISTILL_CONFIG")
        .env_remove("MRSDISTILL_OUT")
        .env_remove("MRSDISTILL_SEED")
        .env_remove("MRSDISTILL_JOBS")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> String {
    std::fs::write(path, serde_json::to_string(v).unwrap()).unwrap();
    path.display().to_string()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&bin(&[])), 2);
    assert_eq!(code(&bin(&["frobnicate"])), 2);
    assert_eq!(code(&bin(&["--help"])), 0);
    let o = bin(&["--config", "/no/such/file.json", "--out", "/tmp/x.csv", "generate"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("/no/such/file.json"));
    assert_eq!(code(&bin(&["generate"])), 2, "missing --out");
    assert_eq!(code(&bin(&["cluster", "--data", "/no/such.csv", "--out", "/tmp/c"])), 2);
}

#[test]
fn end_to_end_verbs() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).display().to_string();

    let cohort = write_json(&dir.path().join("cohort.json"), &small_cohort(6, [3, 4], 5));
    let o = bin(&["--config", &cohort, "--out", &p("data.csv"), "generate"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ds = load_dataset(p("data.csv")).unwrap();
    assert_eq!(ds.patients().len(), 6);

    // same seed, same bytes
    let o = bin(&["--config", &cohort, "--out", &p("data2.csv"), "generate"]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        std::fs::read(p("data.csv")).unwrap(),
        std::fs::read(p("data2.csv")).unwrap()
    );

    assert_eq!(
        code(&bin(&[
            "--out",
            &p("folds.json"),
            "split",
            "--data",
            &p("data.csv"),
            "--folds",
            "3"
        ])),
        0
    );
    let folds: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p("folds.json")).unwrap()).unwrap();
    assert_eq!(folds.as_array().unwrap().len(), 3);

    let job = TrainJob {
        network: tiny_network(),
        train: TrainConfig {
            epochs: 1,
            batch_size: 8,
            ..TrainConfig::default()
        },
    };
    let job = write_json(&dir.path().join("train.json"), &job);
    let o = bin(&[
        "--config",
        &job,
        "--out",
        &p("model.ckpt"),
        "train",
        "--data",
        &p("data.csv"),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let o = bin(&[
        "--out",
        &p("eval"),
        "evaluate",
        "--model",
        &p("model.ckpt"),
        "--data",
        &p("data.csv"),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let line: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((0.0..=1.0).contains(&line["auc"].as_f64().unwrap()));
    assert!(Path::new(&p("eval/roc.csv")).is_file());

    let o = bin(&[
        "--out",
        &p("cam.csv"),
        "cam",
        "--model",
        &p("model.ckpt"),
        "--data",
        &p("data.csv"),
        "--index",
        "1",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cam = std::fs::read_to_string(p("cam.csv")).unwrap();
    assert_eq!(cam.lines().count(), 289);
    let o = bin(&[
        "--out",
        &p("cam.csv"),
        "cam",
        "--model",
        &p("model.ckpt"),
        "--data",
        &p("data.csv"),
        "--index",
        "100000",
    ]);
    assert_eq!(code(&o), 1);

    let o = bin(&[
        "--out",
        &p("clusters"),
        "cluster",
        "--data",
        &p("data.csv"),
        "--k",
        "2",
        "--k-range",
        "1-3",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read_to_string(p("clusters/elbow.csv"))
            .unwrap()
            .lines()
            .count(),
        4
    );
    assert_eq!(
        code(&bin(&[
            "--out",
            &p("clusters"),
            "cluster",
            "--data",
            &p("data.csv"),
            "--k-range",
            "5-2"
        ])),
        2
    );
    assert_eq!(
        code(&bin(&[
            "--out",
            &p("clusters"),
            "cluster",
            "--data",
            &p("data.csv"),
            "--k",
            "100000"
        ])),
        1
    );

    let aug = write_json(
        &dir.path().join("aug.json"),
        &serde_json::json!({"strategy": "both", "alpha": 0.5, "factor": 2}),
    );
    let o = bin(&[
        "--config",
        &aug,
        "--out",
        &p("aug.csv"),
        "augment",
        "--data",
        &p("data.csv"),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(load_dataset(p("aug.csv")).unwrap().len(), 2 * ds.len());
}

#[test]
fn sweep_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_experiment();
    cfg.strategies = vec![mrsdistill::pipeline::Arm::Both];
    cfg.sweep = Some(SweepGrid {
        factor: vec![0, 1],
        alpha: vec![0.3],
        ..SweepGrid::default()
    });
    let cfg_path = write_json(&dir.path().join("exp.json"), &cfg);
    let out = dir.path().join("runs").display().to_string();
    let o = bin(&["--config", &cfg_path, "--out", &out, "sweep", "--axis", "factor"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let run_dir = stdout.lines().next().unwrap().to_string();
    // header plus one row per factor value
    assert_eq!(stdout.lines().count(), 4);
    assert!(stdout.contains("both,0.5,0,2,") && stdout.contains("both,0.5,1,2,"));

    let o = bin(&["report", "--run", &run_dir]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(Path::new(&run_dir).join("tables").join("sweep.csv").is_file());
    assert_eq!(code(&bin(&["report", "--run", "/nonexistent"])), 2);
    assert_eq!(
        code(&bin(&[
            "--config", &cfg_path, "--out", &out, "sweep", "--axis", "gamma"
        ])),
        2
    );
}
