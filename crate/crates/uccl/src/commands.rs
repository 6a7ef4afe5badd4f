//! Implementations behind the CLI subcommands. Each returns `AppError` with
//! its exit-code mapping; printing goes to stdout so runs are scriptable.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use uccl_core::model::Model;
use uccl_core::tensor::Tensor4;
use uccl_core::trainer::{evaluate, Sgd};
use uccl_core::verification::{run_grad_campaign, run_oracle_campaign, OracleReport};

use crate::config::{load_config, FullConfig, Overrides};
use crate::dataset_io::{load_dataset, write_dataset};
use crate::plot::{plot_curves, prediction_panel, PanelRow, Series};
use crate::run::train_run;
use crate::rundir::{read_eval_csv, read_metrics_csv, RunDir};
use crate::{checkpoint, AppError};

/// Default run root: `$UCCL_OUT` or `./runs`.
pub fn run_root() -> PathBuf {
    std::env::var_os("UCCL_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn default_out(kind: &str, seed: u64) -> PathBuf {
    run_root().join(format!("{kind}-s{seed}"))
}

pub fn cmd_gen_data(
    config: Option<&Path>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<(), AppError> {
    let overrides = Overrides {
        seed,
        data_root: out.map(Path::to_path_buf),
        ..Overrides::default()
    };
    let cfg = load_config(config, &overrides).map_err(usage)?;
    let manifest = write_dataset(
        &cfg.data_root,
        &cfg.train.dataset,
        cfg.train.ratio,
        cfg.train.seed,
    )
    .map_err(AppError::Other)?;
    println!(
        "wrote {} scenes ({} labeled / {} unlabeled / {} val) under {}",
        cfg.train.dataset.scenes + cfg.train.dataset.val_scenes,
        manifest.labeled_ids.len(),
        manifest.unlabeled_ids.len(),
        cfg.train.dataset.val_scenes,
        cfg.data_root.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_train(
    config: Option<&Path>,
    seed: Option<u64>,
    tau: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    no_sbu: bool,
    no_ckr: bool,
    out: Option<&Path>,
) -> Result<(), AppError> {
    let overrides = Overrides {
        seed,
        tau,
        alpha,
        beta,
        no_sbu,
        no_ckr,
        data_root: None,
    };
    let cfg = load_config(config, &overrides).map_err(usage)?;
    let out = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_out("train", cfg.train.seed));
    let run = RunDir::create(&out).map_err(AppError::Other)?;
    let record = train_run(&cfg, &run)?;
    println!("run directory: {}", run.root.display());
    print!("{}", crate::run::summary_table(&cfg, &record));
    Ok(())
}

pub fn cmd_eval(config: Option<&Path>, out: Option<&Path>) -> Result<(), AppError> {
    let out = out
        .map(Path::to_path_buf)
        .ok_or_else(|| AppError::Usage("eval needs --out RUN_DIR".into()))?;
    let run = RunDir::open(&out).map_err(AppError::Other)?;
    // Prefer the run's own snapshot so evaluation matches the training setup.
    let cfg_path = if config.is_none() && run.config_snapshot().exists() {
        Some(run.config_snapshot())
    } else {
        config.map(Path::to_path_buf)
    };
    let cfg = load_config(cfg_path.as_deref(), &Overrides::default()).map_err(usage)?;

    let ckpt_path = if run.best_checkpoint().exists() {
        run.best_checkpoint()
    } else {
        run.final_checkpoint()
    };
    let (model, _) = restore_model(&cfg, &ckpt_path)?;

    let ds = load_dataset(&cfg.data_root, &cfg.train.dataset, cfg.train.ratio)
        .map_err(AppError::Other)?;
    let scenes: Vec<&uccl_core::data::Scene> = if ds.val.is_empty() {
        ds.manifest
            .labeled_ids
            .iter()
            .map(|&id| &ds.train[id])
            .collect()
    } else {
        ds.val.iter().collect()
    };
    let result = evaluate(&model, &scenes, cfg.train.batch_size)
        .map_err(|e| AppError::Other(anyhow!("evaluation: {e}")))?;
    println!("checkpoint: {}", ckpt_path.display());
    println!("miou: {:.6}", result.miou);
    for (c, iou) in result.per_class.iter().enumerate() {
        match iou {
            Some(v) => println!("iou_class_{c}: {v:.6}"),
            None => println!("iou_class_{c}: absent"),
        }
    }
    Ok(())
}

pub fn restore_model(cfg: &FullConfig, ckpt_path: &Path) -> Result<(Model, usize), AppError> {
    let ckpt = checkpoint::load(ckpt_path).map_err(AppError::Other)?;
    let mut model = Model::init(&cfg.train.model, cfg.train.seed)
        .map_err(|e| AppError::Usage(format!("model init: {e}")))?;
    let mut opt = Sgd::new(&model, cfg.train.momentum, cfg.train.weight_decay);
    checkpoint::restore(&mut model, &mut opt, &ckpt).map_err(AppError::Other)?;
    Ok((model, ckpt.step))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    Oracle,
    Grad,
}

/// Campaign sizes and tolerances are pinned here; the CSV mirrors the
/// in-memory reports.
pub fn cmd_check(kind: CheckKind, seed: Option<u64>, out: Option<&Path>) -> Result<(), AppError> {
    let seed = seed.unwrap_or(0);
    let (name, reports) = match kind {
        CheckKind::Oracle => ("oracle", run_oracle_campaign(seed, 200, 1e-6)),
        CheckKind::Grad => ("grad", run_grad_campaign(seed, 24, 1e-4)),
    };
    let out = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_out("check", seed));
    let run = RunDir::create(&out).map_err(AppError::Other)?;
    let csv_path = run.reports().join(format!("{name}.csv"));
    write_report_csv(&csv_path, &reports).map_err(AppError::Other)?;

    let failed = reports.iter().filter(|r| !r.pass).count();
    println!(
        "{name} campaign: {} checks, {failed} failed (report: {})",
        reports.len(),
        csv_path.display()
    );
    if failed > 0 {
        return Err(AppError::Verification {
            failed,
            total: reports.len(),
        });
    }
    Ok(())
}

pub fn write_report_csv(path: &Path, reports: &[OracleReport]) -> Result<()> {
    let mut text = String::from("case,metric,vectorized,oracle,rel_err,pass\n");
    for r in reports {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.descriptor.case, r.metric, r.vectorized, r.oracle, r.rel_err, r.pass
        ));
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn cmd_plot(out: Option<&Path>) -> Result<(), AppError> {
    let out = out
        .map(Path::to_path_buf)
        .ok_or_else(|| AppError::Usage("plot needs --out RUN_DIR".into()))?;
    let run = RunDir::open(&out).map_err(AppError::Other)?;
    let metrics = read_metrics_csv(&run.metrics_csv()).map_err(AppError::Other)?;
    if metrics.is_empty() {
        return Err(AppError::Usage("metrics.csv has no rows".into()));
    }

    // Loss curves: columns are lr,l_s,l_x,l_su,l_cr,total,step_time_s.
    let series_spec: [(&str, usize, [u8; 3]); 5] = [
        ("l_s", 1, [214, 39, 40]),
        ("l_x", 2, [31, 119, 180]),
        ("l_su", 3, [44, 160, 44]),
        ("l_cr", 4, [148, 103, 189]),
        ("total", 5, [20, 20, 20]),
    ];
    let series: Vec<Series> = series_spec
        .iter()
        .map(|&(name, col, color)| Series {
            name,
            color,
            points: metrics.iter().map(|(s, v)| (*s as f64, v[col])).collect(),
        })
        .collect();
    let loss_path = run.figures().join("loss_curves.png");
    plot_curves(&loss_path, "training loss", &series).map_err(AppError::Other)?;
    let mut emitted = vec![loss_path];

    let evals = match read_eval_csv(&run.eval_csv()) {
        Ok(rows) => rows,
        Err(_) => Vec::new(),
    };
    if evals.is_empty() {
        eprintln!("warning: eval.csv empty; emitting loss curves only");
        println!("figures: {}", emitted[0].display());
        return Ok(());
    }

    let miou_path = run.figures().join("miou_curve.png");
    plot_curves(
        &miou_path,
        "validation miou",
        &[Series {
            name: "miou",
            color: [255, 127, 14],
            points: evals.iter().map(|(s, m, _)| (*s as f64, *m)).collect(),
        }],
    )
    .map_err(AppError::Other)?;
    emitted.push(miou_path);

    // Prediction panel from the best checkpoint over the first few eval
    // scenes.
    let cfg_path = run.config_snapshot();
    let cfg = load_config(Some(&cfg_path), &Overrides::default()).map_err(usage)?;
    let ckpt_path = if run.best_checkpoint().exists() {
        run.best_checkpoint()
    } else {
        run.final_checkpoint()
    };
    let (model, _) = restore_model(&cfg, &ckpt_path)?;
    let ds = load_dataset(&cfg.data_root, &cfg.train.dataset, cfg.train.ratio)
        .map_err(AppError::Other)?;
    let scenes: Vec<&uccl_core::data::Scene> = if ds.val.is_empty() {
        ds.manifest
            .labeled_ids
            .iter()
            .map(|&id| &ds.train[id])
            .collect()
    } else {
        ds.val.iter().collect()
    };
    let picks: Vec<&uccl_core::data::Scene> = scenes.iter().take(4).copied().collect();
    let mut preds = Vec::with_capacity(picks.len());
    for scene in &picks {
        let plane = scene.height * scene.width;
        let mut images = Tensor4::zeros(1, 3, scene.height, scene.width);
        for c in 0..3 {
            images
                .plane_mut(0, c)
                .copy_from_slice(&scene.image[c * plane..(c + 1) * plane]);
        }
        let pred = uccl_core::trainer::predict_batch(&model, &images)
            .map_err(|e| AppError::Other(anyhow!("prediction: {e}")))?;
        preds.push(pred.data);
    }
    let rows: Vec<PanelRow> = picks
        .iter()
        .zip(&preds)
        .map(|(scene, pred)| PanelRow {
            image: &scene.image,
            gt: &scene.mask,
            pred,
            height: scene.height,
            width: scene.width,
        })
        .collect();
    let panel_path = run.figures().join("predictions.png");
    prediction_panel(&panel_path, &rows).map_err(AppError::Other)?;
    emitted.push(panel_path);

    println!("figures:");
    for p in &emitted {
        println!("  {}", p.display());
    }
    Ok(())
}

fn usage(e: anyhow::Error) -> AppError {
    AppError::Usage(e.to_string())
}
