//! End-to-end training run: seeded epochs over the on-disk dataset, periodic
//! evaluation, best/final checkpoints, and the metrics/eval/summary files.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use uccl_core::data::{epoch_batches, Scene};
use uccl_core::losses::LossError;
use uccl_core::model::Model;
use uccl_core::trainer::{evaluate, poly_lr, train_step, EvalRow, Sgd, StepRow, TrainError};

use crate::checkpoint;
use crate::config::{config_hash, render_config, FullConfig};
use crate::dataset_io::load_dataset;
use crate::rundir::{write_eval_csv, write_metrics_csv, RunDir};
use crate::AppError;

/// Everything a finished run leaves behind, in memory and on disk.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub steps: Vec<StepRow>,
    pub evals: Vec<EvalRow>,
    pub config_hash: String,
    pub best_miou: Option<f64>,
    pub best_step: usize,
    pub final_miou: Option<f64>,
    pub param_count: usize,
    pub mean_step_time_s: f64,
    pub final_checkpoint: PathBuf,
    pub best_checkpoint: Option<PathBuf>,
}

fn diverged(step: usize, e: &TrainError) -> AppError {
    AppError::Diverged {
        step,
        message: e.to_string(),
    }
}

/// Train per the config, logging into `run`. The config snapshot lands on
/// disk before the first step; its hash is stamped into every checkpoint.
pub fn train_run(cfg: &FullConfig, run: &RunDir) -> Result<RunRecord, AppError> {
    cfg.train
        .validate()
        .map_err(|e| AppError::Usage(format!("invalid configuration: {e}")))?;

    let snapshot = render_config(cfg);
    std::fs::write(run.config_snapshot(), &snapshot)
        .with_context(|| format!("writing {}", run.config_snapshot().display()))
        .map_err(AppError::Other)?;
    let hash = config_hash(&snapshot);

    let ds = load_dataset(&cfg.data_root, &cfg.train.dataset, cfg.train.ratio)
        .map_err(AppError::Other)?;

    // Evaluation split: held-out scenes when present, otherwise the labeled
    // training scenes (overfit / smoke runs).
    let eval_scenes: Vec<&Scene> = if ds.val.is_empty() {
        ds.manifest
            .labeled_ids
            .iter()
            .map(|&id| &ds.train[id])
            .collect()
    } else {
        ds.val.iter().collect()
    };

    let mut model = Model::init(&cfg.train.model, cfg.train.seed)
        .map_err(|e| AppError::Usage(format!("model init: {e}")))?;
    let mut opt = Sgd::new(&model, cfg.train.momentum, cfg.train.weight_decay);
    let param_count = model.param_count();

    let longest = ds
        .manifest
        .labeled_ids
        .len()
        .max(ds.manifest.unlabeled_ids.len());
    let steps_per_epoch = longest.div_ceil(cfg.train.batch_size).max(1);
    let total_steps = steps_per_epoch * cfg.train.epochs;

    let mut steps: Vec<StepRow> = Vec::with_capacity(total_steps);
    let mut evals: Vec<EvalRow> = Vec::new();
    let mut best: Option<(f64, usize)> = None;
    let mut global_step = 0usize;

    for epoch in 0..cfg.train.epochs {
        let batches = epoch_batches(
            &ds.train,
            &ds.manifest,
            &cfg.train.augment,
            cfg.train.batch_size,
            cfg.train.seed,
            epoch,
        )
        .map_err(|e| AppError::Usage(format!("batching: {e}")))?;
        for batch in batches {
            let lr = poly_lr(global_step, total_steps, cfg.train.base_lr)
                .map_err(|e| AppError::Usage(e.to_string()))?;
            let started = Instant::now();
            let breakdown =
                train_step(&mut model, &mut opt, &batch, &cfg.train, lr).map_err(|e| match &e {
                    TrainError::Loss(LossError::NonFinite(_)) => diverged(global_step, &e),
                    _ => AppError::Other(anyhow!("step {global_step}: {e}")),
                })?;
            steps.push(StepRow {
                step: global_step,
                lr,
                losses: breakdown,
                step_time_s: started.elapsed().as_secs_f64(),
            });
            global_step += 1;
        }

        let is_last = epoch + 1 == cfg.train.epochs;
        if (epoch + 1) % cfg.train.eval_every.max(1) == 0 || is_last {
            let result = evaluate(&model, &eval_scenes, cfg.train.batch_size)
                .map_err(|e| AppError::Other(anyhow!("evaluation: {e}")))?;
            evals.push(EvalRow {
                step: global_step,
                miou: result.miou,
                per_class: result.per_class,
            });
            // Strictly-greater keeps the earliest step on ties.
            if best.map(|(m, _)| result.miou > m).unwrap_or(true) {
                best = Some((result.miou, global_step));
                checkpoint::save(
                    &run.best_checkpoint(),
                    &checkpoint::capture(&model, &opt, global_step, &hash),
                )
                .map_err(AppError::Other)?;
            }
        }
    }

    checkpoint::save(
        &run.final_checkpoint(),
        &checkpoint::capture(&model, &opt, global_step, &hash),
    )
    .map_err(AppError::Other)?;

    write_metrics_csv(&run.metrics_csv(), &steps).map_err(AppError::Other)?;
    write_eval_csv(&run.eval_csv(), &evals, cfg.train.dataset.classes).map_err(AppError::Other)?;

    let mean_step_time_s = if steps.is_empty() {
        0.0
    } else {
        steps.iter().map(|s| s.step_time_s).sum::<f64>() / steps.len() as f64
    };
    let record = RunRecord {
        config_hash: hash,
        best_miou: best.map(|(m, _)| m),
        best_step: best.map(|(_, s)| s).unwrap_or(0),
        final_miou: evals.last().map(|e| e.miou),
        param_count,
        mean_step_time_s,
        final_checkpoint: run.final_checkpoint(),
        best_checkpoint: best.map(|_| run.best_checkpoint()),
        steps,
        evals,
    };
    std::fs::write(run.summary(), summary_table(cfg, &record))
        .context("writing summary")
        .map_err(AppError::Other)?;
    Ok(record)
}

/// One cell of the component-ablation grid.
#[derive(Debug, Clone)]
pub struct AblationCell {
    pub enable_sbu: bool,
    pub enable_ckr: bool,
    pub seed: u64,
    pub best_miou: f64,
    pub final_miou: f64,
    pub param_count: usize,
    pub mean_step_time_s: f64,
}

/// Train the four component variants (baseline, +reweighting, +regulation,
/// +both) for every seed. Runs are independent, so they execute on a small
/// worker pool; each keeps its own run directory under `out_root`.
pub fn ablation_grid(
    base: &FullConfig,
    seeds: &[u64],
    out_root: &std::path::Path,
    workers: usize,
) -> Result<Vec<AblationCell>, AppError> {
    let variants = [(false, false), (true, false), (false, true), (true, true)];
    let mut jobs: Vec<(bool, bool, u64)> = Vec::new();
    for &seed in seeds {
        for &(sbu, ckr) in &variants {
            jobs.push((sbu, ckr, seed));
        }
    }

    let queue = std::sync::Mutex::new(jobs);
    let results = std::sync::Mutex::new(Vec::<AblationCell>::new());
    let failure = std::sync::Mutex::new(None::<String>);
    std::thread::scope(|scope| {
        for _ in 0..workers.max(1) {
            scope.spawn(|| loop {
                let job = { queue.lock().unwrap().pop() };
                let Some((sbu, ckr, seed)) = job else { break };
                let mut cfg = base.clone();
                cfg.train.enable_sbu = sbu;
                cfg.train.enable_ckr = ckr;
                cfg.train.seed = seed;
                let tag = format!(
                    "ablate-{}{}-s{seed}",
                    if sbu { "sbu" } else { "x" },
                    if ckr { "ckr" } else { "x" }
                );
                let outcome = RunDir::create(&out_root.join(tag))
                    .map_err(AppError::Other)
                    .and_then(|dir| train_run(&cfg, &dir));
                match outcome {
                    Ok(record) => results.lock().unwrap().push(AblationCell {
                        enable_sbu: sbu,
                        enable_ckr: ckr,
                        seed,
                        best_miou: record.best_miou.unwrap_or(0.0),
                        final_miou: record.final_miou.unwrap_or(0.0),
                        param_count: record.param_count,
                        mean_step_time_s: record.mean_step_time_s,
                    }),
                    Err(e) => {
                        *failure.lock().unwrap() = Some(e.to_string());
                        break;
                    }
                }
            });
        }
    });
    if let Some(msg) = failure.into_inner().unwrap() {
        return Err(AppError::Other(anyhow!("ablation run failed: {msg}")));
    }
    let mut cells = results.into_inner().unwrap();
    cells.sort_by_key(|c| (c.enable_sbu, c.enable_ckr, c.seed));
    Ok(cells)
}

/// Mean best-mIoU per variant over the grid's seeds, in the component-table
/// layout.
pub fn ablation_table(cells: &[AblationCell]) -> String {
    let mut out = String::from("sbu  ckr  seeds  mean_miou  params  time_per_batch_s\n");
    for &(sbu, ckr) in &[(false, false), (true, false), (false, true), (true, true)] {
        let rows: Vec<&AblationCell> = cells
            .iter()
            .filter(|c| c.enable_sbu == sbu && c.enable_ckr == ckr)
            .collect();
        if rows.is_empty() {
            continue;
        }
        let mean = rows.iter().map(|c| c.best_miou).sum::<f64>() / rows.len() as f64;
        let time = rows.iter().map(|c| c.mean_step_time_s).sum::<f64>() / rows.len() as f64;
        let on_off = |b: bool| if b { "on " } else { "off" };
        out.push_str(&format!(
            "{}  {}  {:>5}  {:>9.4}  {:>6}  {:.4}\n",
            on_off(sbu),
            on_off(ckr),
            rows.len(),
            mean,
            rows[0].param_count,
            time,
        ));
    }
    out
}

/// Component table in the ablation layout: which terms were on, the mIoU
/// they reached, the parameter count, and the mean time per batch.
pub fn summary_table(cfg: &FullConfig, record: &RunRecord) -> String {
    let on_off = |b: bool| if b { "on " } else { "off" };
    let fmt_miou = |m: Option<f64>| m.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
    let mut out = String::new();
    out.push_str("sbu  ckr  best_miou  final_miou  params  time_per_batch_s\n");
    out.push_str(&format!(
        "{}  {}  {:>9}  {:>10}  {:>6}  {:.4}\n",
        on_off(cfg.train.enable_sbu),
        on_off(cfg.train.enable_ckr),
        fmt_miou(record.best_miou),
        fmt_miou(record.final_miou),
        record.param_count,
        record.mean_step_time_s,
    ));
    out
}
