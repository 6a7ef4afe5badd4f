//! One flat key-value config file drives every command. Unknown keys are
//! rejected so typos cannot silently fall back to defaults; missing keys take
//! the defaults below. The canonical rendering (fixed key order) is what gets
//! snapshotted into run directories and hashed into checkpoints.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use uccl_core::data::SplitRatio;
use uccl_core::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct FullConfig {
    pub train: TrainConfig,
    /// Dataset root holding `data/images`, `data/masks`, and `splits/`.
    pub data_root: PathBuf,
}

impl Default for FullConfig {
    fn default() -> Self {
        FullConfig {
            train: TrainConfig::default(),
            data_root: PathBuf::from("dataset"),
        }
    }
}

/// Flag-level overrides; explicit flags beat file values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tau: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub no_sbu: bool,
    pub no_ckr: bool,
    pub data_root: Option<PathBuf>,
}

fn parse_ratio(s: &str) -> Result<SplitRatio> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("full") {
        return Ok(SplitRatio::Fraction(1, 1));
    }
    if let Some((num, den)) = s.split_once('/') {
        let num: u32 = num.trim().parse().context("ratio numerator")?;
        let den: u32 = den.trim().parse().context("ratio denominator")?;
        return Ok(SplitRatio::Fraction(num, den));
    }
    let n: usize = s.parse().context("absolute labeled count")?;
    Ok(SplitRatio::Absolute(n))
}

fn render_ratio(r: SplitRatio) -> String {
    match r {
        SplitRatio::Fraction(n, d) => format!("{n}/{d}"),
        SplitRatio::Absolute(n) => format!("{n}"),
    }
}

pub fn parse_config(text: &str) -> Result<FullConfig> {
    let mut cfg = FullConfig::default();
    let mut seen = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected `key = value`", lineno + 1))?;
        let key = key.trim();
        let value = value.trim();
        if seen.insert(key.to_string(), lineno).is_some() {
            bail!("line {}: duplicate key `{key}`", lineno + 1);
        }
        apply_key(&mut cfg, key, value)
            .with_context(|| format!("line {}: key `{key}`", lineno + 1))?;
    }
    // The model always tracks the dataset geometry.
    cfg.train.model.height = cfg.train.dataset.height;
    cfg.train.model.width = cfg.train.dataset.width;
    cfg.train.model.classes = cfg.train.dataset.classes;
    Ok(cfg)
}

fn apply_key(cfg: &mut FullConfig, key: &str, value: &str) -> Result<()> {
    let t = &mut cfg.train;
    match key {
        "data_root" => cfg.data_root = PathBuf::from(value),
        "height" => t.dataset.height = value.parse()?,
        "width" => t.dataset.width = value.parse()?,
        "classes" => t.dataset.classes = value.parse()?,
        "scenes" => t.dataset.scenes = value.parse()?,
        "val_scenes" => t.dataset.val_scenes = value.parse()?,
        "max_shapes" => t.dataset.max_shapes = value.parse()?,
        "noise" => t.dataset.noise = value.parse()?,
        "photometric" => t.augment.photometric = parse_bool(value)?,
        "jitter_min" => t.augment.jitter_min = value.parse()?,
        "jitter_max" => t.augment.jitter_max = value.parse()?,
        "gray_prob" => t.augment.gray_prob = value.parse()?,
        "blur_prob" => t.augment.blur_prob = value.parse()?,
        "blur_sigma_min" => t.augment.blur_sigma_min = value.parse()?,
        "blur_sigma_max" => t.augment.blur_sigma_max = value.parse()?,
        "feature_dim" => t.model.feature_dim = value.parse()?,
        "stride" => t.model.stride = value.parse()?,
        "conv_blocks" => t.model.conv_blocks = value.parse()?,
        "ratio" => t.ratio = parse_ratio(value)?,
        "tau" => t.tau = value.parse()?,
        "alpha" => t.alpha = value.parse()?,
        "beta" => t.beta = value.parse()?,
        "base_lr" => t.base_lr = value.parse()?,
        "momentum" => t.momentum = value.parse()?,
        "weight_decay" => t.weight_decay = value.parse()?,
        "epochs" => t.epochs = value.parse()?,
        "batch_size" => t.batch_size = value.parse()?,
        "seed" => t.seed = value.parse()?,
        "eval_every" => t.eval_every = value.parse()?,
        "enable_sbu" => t.enable_sbu = parse_bool(value)?,
        "enable_ckr" => t.enable_ckr = parse_bool(value)?,
        other => bail!("unknown config key `{other}`"),
    }
    Ok(())
}

fn parse_bool(s: &str) -> Result<bool> {
    match s {
        "true" | "1" | "on" | "yes" => Ok(true),
        "false" | "0" | "off" | "no" => Ok(false),
        other => bail!("expected a boolean, got `{other}`"),
    }
}

/// Canonical snapshot: every key, fixed order, current values.
pub fn render_config(cfg: &FullConfig) -> String {
    let t = &cfg.train;
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    kv("data_root", cfg.data_root.display().to_string());
    kv("height", t.dataset.height.to_string());
    kv("width", t.dataset.width.to_string());
    kv("classes", t.dataset.classes.to_string());
    kv("scenes", t.dataset.scenes.to_string());
    kv("val_scenes", t.dataset.val_scenes.to_string());
    kv("max_shapes", t.dataset.max_shapes.to_string());
    kv("noise", t.dataset.noise.to_string());
    kv("photometric", t.augment.photometric.to_string());
    kv("jitter_min", t.augment.jitter_min.to_string());
    kv("jitter_max", t.augment.jitter_max.to_string());
    kv("gray_prob", t.augment.gray_prob.to_string());
    kv("blur_prob", t.augment.blur_prob.to_string());
    kv("blur_sigma_min", t.augment.blur_sigma_min.to_string());
    kv("blur_sigma_max", t.augment.blur_sigma_max.to_string());
    kv("feature_dim", t.model.feature_dim.to_string());
    kv("stride", t.model.stride.to_string());
    kv("conv_blocks", t.model.conv_blocks.to_string());
    kv("ratio", render_ratio(t.ratio));
    kv("tau", t.tau.to_string());
    kv("alpha", t.alpha.to_string());
    kv("beta", t.beta.to_string());
    kv("base_lr", t.base_lr.to_string());
    kv("momentum", t.momentum.to_string());
    kv("weight_decay", t.weight_decay.to_string());
    kv("epochs", t.epochs.to_string());
    kv("batch_size", t.batch_size.to_string());
    kv("seed", t.seed.to_string());
    kv("eval_every", t.eval_every.to_string());
    kv("enable_sbu", t.enable_sbu.to_string());
    kv("enable_ckr", t.enable_ckr.to_string());
    out
}

/// FNV-1a over the canonical snapshot text.
pub fn config_hash(snapshot: &str) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in snapshot.bytes() {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

/// Load the config file (defaults when absent) and fold in the overrides.
pub fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<FullConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            parse_config(&text)?
        }
        None => FullConfig::default(),
    };
    if let Some(seed) = overrides.seed {
        cfg.train.seed = seed;
    }
    if let Some(tau) = overrides.tau {
        cfg.train.tau = tau;
    }
    if let Some(alpha) = overrides.alpha {
        cfg.train.alpha = alpha;
    }
    if let Some(beta) = overrides.beta {
        cfg.train.beta = beta;
    }
    if overrides.no_sbu {
        cfg.train.enable_sbu = false;
    }
    if overrides.no_ckr {
        cfg.train.enable_ckr = false;
    }
    if let Some(root) = &overrides.data_root {
        cfg.data_root = root.clone();
    }
    cfg.train
        .validate()
        .map_err(|e| anyhow!("invalid configuration: {e}"))?;
    Ok(cfg)
}
