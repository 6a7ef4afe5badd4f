//! JSON checkpoints: trainable parameters, batch-norm running statistics,
//! optimizer momentum, the step counter, and the config hash. JSON floats
//! round-trip exactly (shortest-representation printing), so a reloaded
//! checkpoint evaluates bit-identically.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use uccl_core::model::Model;
use uccl_core::trainer::Sgd;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub step: usize,
    /// Parameter groups in `Model::params` order.
    pub params: Vec<Vec<f64>>,
    /// Batch-norm `(running_mean, running_var)` per block.
    pub running: Vec<(Vec<f64>, Vec<f64>)>,
    /// Optimizer momentum buffers, same order as `params`.
    pub momentum: Vec<Vec<f64>>,
}

pub fn capture(model: &Model, opt: &Sgd, step: usize, config_hash: &str) -> Checkpoint {
    Checkpoint {
        version: CHECKPOINT_VERSION,
        config_hash: config_hash.to_string(),
        step,
        params: model.params().iter().map(|p| p.to_vec()).collect(),
        running: model.running_stats(),
        momentum: opt.velocity_vecs().to_vec(),
    }
}

pub fn restore(model: &mut Model, opt: &mut Sgd, ckpt: &Checkpoint) -> Result<()> {
    if ckpt.version != CHECKPOINT_VERSION {
        bail!("unsupported checkpoint version {}", ckpt.version);
    }
    model
        .set_params(&ckpt.params)
        .map_err(|e| anyhow::anyhow!("restoring params: {e}"))?;
    model
        .set_running_stats(&ckpt.running)
        .map_err(|e| anyhow::anyhow!("restoring running stats: {e}"))?;
    opt.set_velocity(ckpt.momentum.clone())
        .map_err(|e| anyhow::anyhow!("restoring optimizer: {e}"))?;
    Ok(())
}

pub fn save(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let json = serde_json::to_string(ckpt)?;
    std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use uccl_core::model::ModelConfig;

    #[test]
    fn save_load_round_trips_bit_exactly() {
        let cfg = ModelConfig {
            height: 32,
            width: 32,
            feature_dim: 8,
            conv_blocks: 2,
            ..ModelConfig::default()
        };
        let model = Model::init(&cfg, 3).unwrap();
        let opt = Sgd::new(&model, 0.9, 1e-4);
        let ckpt = capture(&model, &opt, 17, "deadbeef");

        let path = std::env::temp_dir().join(format!("uccl-ckpt-{}.json", std::process::id()));
        save(&path, &ckpt).unwrap();
        let loaded = load(&path).unwrap();
        std::fs::remove_file(&path).unwrap();

        assert_eq!(loaded.step, 17);
        assert_eq!(loaded.config_hash, "deadbeef");
        assert_eq!(loaded.params, ckpt.params);
        assert_eq!(loaded.running, ckpt.running);

        let mut model2 = Model::init(&cfg, 99).unwrap();
        let mut opt2 = Sgd::new(&model2, 0.9, 1e-4);
        restore(&mut model2, &mut opt2, &loaded).unwrap();
        for (a, b) in model.params().iter().zip(model2.params().iter()) {
            assert_eq!(a, b);
        }
    }
}
