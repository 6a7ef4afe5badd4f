//! Run-directory layout and the metrics/eval CSV formats.
//!
//! Layout under one run root:
//!   config.snapshot.conf   written before the first training step
//!   metrics.csv            step,lr,l_s,l_x,l_su,l_cr,total,step_time_s
//!   eval.csv               step,miou,iou_class_0..C-1
//!   summary.txt            component table (sbu/ckr on-off, miou, params, time)
//!   checkpoints/{best,final}.json
//!   figures/               emitted by `uccl plot`
//!   reports/               emitted by `uccl check`

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use uccl_core::trainer::{EvalRow, StepRow};

#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<RunDir> {
        fs::create_dir_all(root.join("checkpoints"))?;
        fs::create_dir_all(root.join("figures"))?;
        fs::create_dir_all(root.join("reports"))?;
        Ok(RunDir {
            root: root.to_path_buf(),
        })
    }

    pub fn open(root: &Path) -> Result<RunDir> {
        if !root.is_dir() {
            bail!("run directory {} does not exist", root.display());
        }
        Ok(RunDir {
            root: root.to_path_buf(),
        })
    }

    pub fn config_snapshot(&self) -> PathBuf {
        self.root.join("config.snapshot.conf")
    }

    pub fn metrics_csv(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }

    pub fn eval_csv(&self) -> PathBuf {
        self.root.join("eval.csv")
    }

    pub fn summary(&self) -> PathBuf {
        self.root.join("summary.txt")
    }

    pub fn best_checkpoint(&self) -> PathBuf {
        self.root.join("checkpoints/best.json")
    }

    pub fn final_checkpoint(&self) -> PathBuf {
        self.root.join("checkpoints/final.json")
    }

    pub fn figures(&self) -> PathBuf {
        self.root.join("figures")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }
}

pub fn write_metrics_csv(path: &Path, rows: &[StepRow]) -> Result<()> {
    let mut text = String::from("step,lr,l_s,l_x,l_su,l_cr,total,step_time_s\n");
    for r in rows {
        let l = &r.losses;
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.step, r.lr, l.l_s, l.l_x, l.l_su, l.l_cr, l.total, r.step_time_s
        ));
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_eval_csv(path: &Path, rows: &[EvalRow], classes: usize) -> Result<()> {
    let mut header = String::from("step,miou");
    for c in 0..classes {
        header.push_str(&format!(",iou_class_{c}"));
    }
    header.push('\n');
    let mut text = header;
    for r in rows {
        text.push_str(&format!("{},{}", r.step, r.miou));
        for c in 0..classes {
            match r.per_class.get(c).copied().flatten() {
                Some(iou) => text.push_str(&format!(",{iou}")),
                None => text.push(','),
            }
        }
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Parsed-back metrics rows for plotting: `(step, [lr, l_s, l_x, l_su, l_cr,
/// total, step_time_s])`.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<(usize, Vec<f64>)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let step: usize = fields.next().context("metrics step")?.parse()?;
        let values: Result<Vec<f64>, _> = fields.map(|f| f.parse::<f64>()).collect();
        rows.push((step, values?));
    }
    Ok(rows)
}

/// Parsed-back eval rows: `(step, miou, per-class ious)`, empty fields -> None.
pub fn read_eval_csv(path: &Path) -> Result<Vec<(usize, f64, Vec<Option<f64>>)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let step: usize = fields.next().context("eval step")?.parse()?;
        let miou: f64 = fields.next().context("eval miou")?.parse()?;
        let per_class = fields
            .map(|f| {
                if f.is_empty() {
                    Ok(None)
                } else {
                    f.parse::<f64>().map(Some)
                }
            })
            .collect::<Result<Vec<_>, std::num::ParseFloatError>>()?;
        rows.push((step, miou, per_class));
    }
    Ok(rows)
}
