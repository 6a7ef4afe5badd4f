//! End-to-end checks of the `uccl` binary: subcommand wiring, exit codes,
//! and the on-disk artifacts each command leaves behind.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_uccl")
}

fn work_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("uccl-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_micro_config(dir: &Path) -> PathBuf {
    let path = dir.join("micro.conf");
    let text = format!(
        "data_root = {}\n\
         height = 32\n\
         width = 32\n\
         classes = 4\n\
         scenes = 12\n\
         val_scenes = 4\n\
         max_shapes = 2\n\
         ratio = 1/4\n\
         feature_dim = 8\n\
         conv_blocks = 2\n\
         stride = 4\n\
         epochs = 2\n\
         batch_size = 4\n\
         base_lr = 0.005\n\
         eval_every = 1\n",
        dir.join("dataset").display()
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn uccl")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn uccl")
}

#[test]
fn gen_data_writes_counts_and_is_idempotent() {
    let dir = work_dir("gendata");
    let cfg = write_micro_config(&dir);
    let out = run(&["gen-data", "--config", cfg.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("16 scenes"), "{stdout}");
    assert!(
        stdout.contains("3 labeled / 9 unlabeled / 4 val"),
        "{stdout}"
    );

    let image = dir.join("dataset/data/images/00000.png");
    let mask = dir.join("dataset/data/masks/00007.png");
    let first = (
        std::fs::read(&image).unwrap(),
        std::fs::read(&mask).unwrap(),
    );
    let rerun = run(&["gen-data", "--config", cfg.to_str().unwrap()]);
    assert!(rerun.status.success());
    assert_eq!(
        std::fs::read(&image).unwrap(),
        first.0,
        "images changed on rerun"
    );
    assert_eq!(
        std::fs::read(&mask).unwrap(),
        first.1,
        "masks changed on rerun"
    );
    for split in ["labeled.txt", "unlabeled.txt", "val.txt"] {
        assert!(dir.join("dataset/splits").join(split).exists());
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn train_writes_run_directory_and_is_seed_deterministic() {
    let dir = work_dir("train");
    let cfg = write_micro_config(&dir);
    let cfg_s = cfg.to_str().unwrap();
    assert!(run(&["gen-data", "--config", cfg_s]).status.success());

    let out_a = dir.join("run-a");
    let out_b = dir.join("run-b");
    for out in [&out_a, &out_b] {
        let r = run(&[
            "train",
            "--config",
            cfg_s,
            "--seed",
            "1",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    for name in [
        "config.snapshot.conf",
        "metrics.csv",
        "eval.csv",
        "summary.txt",
    ] {
        assert!(out_a.join(name).exists(), "missing {name}");
    }
    assert!(out_a.join("checkpoints/final.json").exists());

    // Identical seeds give identical logs modulo the wall-clock column.
    let strip_time = |p: &Path| -> Vec<String> {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    assert_eq!(
        strip_time(&out_a.join("metrics.csv")),
        strip_time(&out_b.join("metrics.csv"))
    );
    assert_eq!(
        std::fs::read(out_a.join("eval.csv")).unwrap(),
        std::fs::read(out_b.join("eval.csv")).unwrap()
    );

    // Replaying a run's own config snapshot reproduces the run.
    let out_c = dir.join("run-c");
    let snap = out_a.join("config.snapshot.conf");
    let r = run(&[
        "train",
        "--config",
        snap.to_str().unwrap(),
        "--out",
        out_c.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(
        strip_time(&out_a.join("metrics.csv")),
        strip_time(&out_c.join("metrics.csv"))
    );
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn train_rejects_out_of_range_tau() {
    let dir = work_dir("badtau");
    let cfg = write_micro_config(&dir);
    let out = run(&["train", "--config", cfg.to_str().unwrap(), "--tau", "1.0"]);
    assert_eq!(out.status.code(), Some(1), "tau=1.0 must be a usage error");
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("tau"), "{err}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn train_without_dataset_fails_with_hint() {
    let dir = work_dir("nodataset");
    let cfg = write_micro_config(&dir);
    let out = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.join("r").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gen-data"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn train_divergence_exits_with_code_three() {
    let dir = work_dir("diverge");
    let cfg = write_micro_config(&dir);
    let cfg_s = cfg.to_str().unwrap();
    assert!(run(&["gen-data", "--config", cfg_s]).status.success());
    // A learning rate at the f64 ceiling overflows the parameters to
    // infinity within a couple of steps, driving the loss to NaN.
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("base_lr = 0.005", "base_lr = 1e308");
    std::fs::write(&cfg, text).unwrap();
    let out = run(&[
        "train",
        "--config",
        cfg_s,
        "--out",
        dir.join("r").to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn no_sbu_no_ckr_flags_zero_the_terms() {
    let dir = work_dir("baseline");
    let cfg = write_micro_config(&dir);
    let cfg_s = cfg.to_str().unwrap();
    assert!(run(&["gen-data", "--config", cfg_s]).status.success());
    let out_dir = dir.join("run");
    let r = run(&[
        "train",
        "--config",
        cfg_s,
        "--no-sbu",
        "--no-ckr",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(r.status.success());
    let metrics = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    for line in metrics.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[4], "0", "l_su on a baseline run: {line}");
        assert_eq!(f[5], "0", "l_cr on a baseline run: {line}");
    }
    // The snapshot records the effective flags.
    let snapshot = std::fs::read_to_string(out_dir.join("config.snapshot.conf")).unwrap();
    assert!(snapshot.contains("enable_sbu = false"));
    assert!(snapshot.contains("enable_ckr = false"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn check_campaigns_pass_and_write_reports() {
    let dir = work_dir("check");
    let out_dir = dir.join("check-run");
    let r = run(&["check", "oracle", "--out", out_dir.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let report = std::fs::read_to_string(out_dir.join("reports/oracle.csv")).unwrap();
    let rows: Vec<&str> = report.lines().collect();
    assert_eq!(rows[0], "case,metric,vectorized,oracle,rel_err,pass");
    assert_eq!(rows.len(), 1 + 400, "200 cases for each of the two losses");
    assert!(rows[1..].iter().all(|r| r.ends_with("true")));

    let r = run(&["check", "grad", "--out", out_dir.to_str().unwrap()]);
    assert!(r.status.success());
    let report = std::fs::read_to_string(out_dir.join("reports/grad.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 24 * 3);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn plot_emits_three_figures_for_a_completed_run() {
    let dir = work_dir("plot");
    let cfg = write_micro_config(&dir);
    let cfg_s = cfg.to_str().unwrap();
    assert!(run(&["gen-data", "--config", cfg_s]).status.success());
    let out_dir = dir.join("run");
    assert!(run(&[
        "train",
        "--config",
        cfg_s,
        "--out",
        out_dir.to_str().unwrap()
    ])
    .status
    .success());
    let r = run(&["plot", "--out", out_dir.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let figures = out_dir.join("figures");
    let count = std::fs::read_dir(&figures).unwrap().count();
    assert!(count >= 3, "expected >= 3 figures, found {count}");
    for f in ["loss_curves.png", "miou_curve.png", "predictions.png"] {
        assert!(figures.join(f).exists(), "missing {f}");
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn plot_warns_and_emits_loss_curves_only_on_empty_eval() {
    let dir = work_dir("plot-empty");
    let cfg = write_micro_config(&dir);
    let cfg_s = cfg.to_str().unwrap();
    assert!(run(&["gen-data", "--config", cfg_s]).status.success());
    let out_dir = dir.join("run");
    assert!(run(&[
        "train",
        "--config",
        cfg_s,
        "--out",
        out_dir.to_str().unwrap()
    ])
    .status
    .success());
    // Truncate the eval log to its header.
    let eval = std::fs::read_to_string(out_dir.join("eval.csv")).unwrap();
    std::fs::write(out_dir.join("eval.csv"), eval.lines().next().unwrap()).unwrap();
    let r = run(&["plot", "--out", out_dir.to_str().unwrap()]);
    assert!(r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("warning"));
    assert!(out_dir.join("figures/loss_curves.png").exists());
    assert!(!out_dir.join("figures/miou_curve.png").exists());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn eval_prints_miou_for_a_run() {
    let dir = work_dir("eval");
    let cfg = write_micro_config(&dir);
    let cfg_s = cfg.to_str().unwrap();
    assert!(run(&["gen-data", "--config", cfg_s]).status.success());
    let out_dir = dir.join("run");
    assert!(run(&[
        "train",
        "--config",
        cfg_s,
        "--out",
        out_dir.to_str().unwrap()
    ])
    .status
    .success());
    let r = run(&["eval", "--out", out_dir.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let stdout = String::from_utf8_lossy(&r.stdout);
    assert!(stdout.contains("miou:"), "{stdout}");
    assert!(stdout.contains("iou_class_0:"), "{stdout}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn uccl_out_env_sets_the_default_run_root() {
    let dir = work_dir("envroot");
    let out = Command::new(bin())
        .env("UCCL_OUT", dir.join("custom-root").as_os_str())
        .args(["check", "oracle", "--seed", "7"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.join("custom-root/check-s7/reports/oracle.csv").exists());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn help_exits_zero_and_unknown_flag_exits_one() {
    let dir = work_dir("exitcodes");
    assert_eq!(run_in(&dir, &["--help"]).status.code(), Some(0));
    assert_eq!(
        run_in(&dir, &["train", "--bogus-flag"]).status.code(),
        Some(1)
    );
    assert_eq!(run_in(&dir, &["not-a-command"]).status.code(), Some(1));
    std::fs::remove_dir_all(&dir).unwrap();
}
