//! The two-branch optimization step and evaluation. One step runs a labeled
//! forward (supervised term) and a single concatenated forward over the
//! weak+strong unlabeled views (shared parameters, joint batch-norm
//! statistics), combines the loss family, and applies one SGD update.
//! The run orchestration (epochs, checkpoints, CSV logging) lives in the
//! companion crate; everything here is IO-free.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::{AugmentConfig, DataError, DatasetConfig, SplitRatio, TrainBatch};
use crate::losses::{self, LossBreakdown, LossError};
use crate::metrics::{ConfusionMatrix, MetricError};
use crate::model::{Model, ModelConfig, ModelError, ModelGrads, PredictionMap};
use crate::tensor::{LabelMap, Tensor4};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dataset: DatasetConfig,
    pub augment: AugmentConfig,
    pub model: ModelConfig,
    pub ratio: SplitRatio,
    /// Confidence threshold separating certain from uncertain pixels.
    pub tau: f64,
    /// Reweighting-loss coefficient.
    pub alpha: f64,
    /// Regulation-loss coefficient.
    pub beta: f64,
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub enable_sbu: bool,
    pub enable_ckr: bool,
    /// Evaluate every this many epochs (and always after the last).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dataset: DatasetConfig::default(),
            augment: AugmentConfig::default(),
            model: ModelConfig::default(),
            ratio: SplitRatio::Fraction(1, 4),
            tau: 0.95,
            alpha: losses::DEFAULT_ALPHA,
            beta: losses::DEFAULT_BETA,
            base_lr: 0.001,
            momentum: 0.9,
            weight_decay: 1e-4,
            epochs: 40,
            batch_size: 8,
            seed: 0,
            enable_sbu: true,
            enable_ckr: true,
            eval_every: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    Config(&'static str),
    Model(ModelError),
    Loss(LossError),
    Data(DataError),
    Metric(MetricError),
    EmptySplit,
    ZeroTotalSteps,
}

impl core::fmt::Display for TrainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TrainError::Config(msg) => write!(f, "bad train config: {msg}"),
            TrainError::Model(e) => write!(f, "model: {e}"),
            TrainError::Loss(e) => write!(f, "loss: {e}"),
            TrainError::Data(e) => write!(f, "data: {e}"),
            TrainError::Metric(e) => write!(f, "metric: {e}"),
            TrainError::EmptySplit => write!(f, "evaluation split is empty"),
            TrainError::ZeroTotalSteps => write!(f, "schedule needs at least one step"),
        }
    }
}

impl From<ModelError> for TrainError {
    fn from(e: ModelError) -> Self {
        TrainError::Model(e)
    }
}

impl From<LossError> for TrainError {
    fn from(e: LossError) -> Self {
        TrainError::Loss(e)
    }
}

impl From<DataError> for TrainError {
    fn from(e: DataError) -> Self {
        TrainError::Data(e)
    }
}

impl From<MetricError> for TrainError {
    fn from(e: MetricError) -> Self {
        TrainError::Metric(e)
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(TrainError::Config("tau must lie in (0, 1)"));
        }
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(TrainError::Config("loss coefficients must be nonnegative"));
        }
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch size must be at least 1"));
        }
        Ok(())
    }
}

/// Polynomial decay `base_lr * (1 - step/total)^0.9`.
pub fn poly_lr(step: usize, total_steps: usize, base_lr: f64) -> Result<f64, TrainError> {
    if total_steps == 0 {
        return Err(TrainError::ZeroTotalSteps);
    }
    let frac = 1.0 - step as f64 / total_steps as f64;
    Ok(base_lr * crate::mathf::powf(frac.max(0.0), 0.9))
}

/// SGD with momentum and (uniform) weight decay.
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(model: &Model, momentum: f64, weight_decay: f64) -> Self {
        Sgd {
            momentum,
            weight_decay,
            velocity: model.params().iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn step(&mut self, model: &mut Model, grads: &ModelGrads, lr: f64) {
        for ((param, grad), vel) in model
            .params_mut()
            .into_iter()
            .zip(&grads.bufs)
            .zip(&mut self.velocity)
        {
            for i in 0..param.len() {
                let g = grad[i] + self.weight_decay * param[i];
                vel[i] = self.momentum * vel[i] + g;
                param[i] -= lr * vel[i];
            }
        }
    }

    pub fn velocity_vecs(&self) -> &[Vec<f64>] {
        &self.velocity
    }

    pub fn set_velocity(&mut self, v: Vec<Vec<f64>>) -> Result<(), TrainError> {
        if v.len() != self.velocity.len()
            || v.iter()
                .zip(&self.velocity)
                .any(|(a, b)| a.len() != b.len())
        {
            return Err(TrainError::Config("optimizer state shape mismatch"));
        }
        self.velocity = v;
        Ok(())
    }
}

/// One optimization step over a synchronized batch pair. Disabled terms
/// contribute an exact zero to the breakdown and to the gradients.
pub fn train_step(
    model: &mut Model,
    opt: &mut Sgd,
    batch: &TrainBatch,
    cfg: &TrainConfig,
    lr: f64,
) -> Result<LossBreakdown, TrainError> {
    let mut grads = model.zero_grads();

    // Labeled branch: weak view against ground truth.
    let (f_l, ecache_l) = model.encode_train(&batch.labeled.images, true)?;
    let (p_l, dcache_l) = model.decode(&f_l)?;
    let (l_s, g_logits_l) = losses::supervised_loss_grad(&p_l.logits, &batch.labeled.masks)?;
    let gf_l = model.decode_backward(&dcache_l, &g_logits_l, &mut grads);
    model.encode_backward(&ecache_l, &gf_l, &mut grads);

    // Unlabeled branch: one concatenated forward over (weak, strong) so
    // batch-norm statistics are shared between the views.
    let (mut l_x, mut l_su, mut l_cr) = (0.0, 0.0, 0.0);
    if let Some(unlabeled) = &batch.unlabeled {
        let bu = unlabeled.weak.b;
        let cat = Tensor4::concat_batch(&unlabeled.weak, &unlabeled.strong);
        let (f_cat, ecache_u) = model.encode_train(&cat, true)?;
        let (p_cat, dcache_u) = model.decode(&f_cat)?;

        let f_w = crate::model::FeatureMap {
            values: f_cat.values.slice_batch(0, bu),
            stride: f_cat.stride,
        };
        let f_s = crate::model::FeatureMap {
            values: f_cat.values.slice_batch(bu, 2 * bu),
            stride: f_cat.stride,
        };
        let p_w = PredictionMap::from_logits(p_cat.logits.slice_batch(0, bu));
        let p_s = PredictionMap::from_logits(p_cat.logits.slice_batch(bu, 2 * bu));

        let (lx, g_ps_x) = losses::certainty_consistency_loss_grad(&p_s, &p_w, cfg.tau)?;
        l_x = lx;

        // Gradient wrt the strong half's logits: consistency plus (optionally)
        // the reweighting term. The weak half's logits stay at exact zero.
        let mut g_ps = g_ps_x;
        if cfg.enable_sbu {
            let (lsu, g_ps_su, _artifacts) =
                losses::sbu_loss_grad(&p_s, &p_w, &f_s, &f_w, cfg.tau)?;
            l_su = lsu;
            for (g, a) in g_ps.data.iter_mut().zip(&g_ps_su.data) {
                *g += cfg.alpha * a;
            }
        }

        let mut g_logits_cat =
            Tensor4::zeros(2 * bu, p_cat.logits.c, p_cat.logits.h, p_cat.logits.w);
        let strong_lo = bu * p_cat.logits.c * p_cat.logits.h * p_cat.logits.w;
        g_logits_cat.data[strong_lo..].copy_from_slice(&g_ps.data);

        let mut gf_cat = model.decode_backward(&dcache_u, &g_logits_cat, &mut grads);

        if cfg.enable_ckr {
            let (lcr, g_fs_cr) = losses::ckr_loss_grad(&f_s, &f_w, &p_w)?;
            l_cr = lcr;
            let lo = bu * f_cat.values.c * f_cat.values.h * f_cat.values.w;
            for (g, a) in gf_cat.data[lo..].iter_mut().zip(&g_fs_cr.data) {
                *g += cfg.beta * a;
            }
        }

        model.encode_backward(&ecache_u, &gf_cat, &mut grads);
    }

    let breakdown = losses::total_loss(l_s, l_x, l_su, l_cr, cfg.alpha, cfg.beta)?;
    opt.step(model, &grads, lr);
    Ok(breakdown)
}

/// Evaluation-mode class predictions for a batch of raw images.
pub fn predict_batch(model: &Model, images: &Tensor4) -> Result<LabelMap, TrainError> {
    let f = model.encode_eval(images)?;
    let (p, _) = model.decode(&f)?;
    Ok(p.pseudo_labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub miou: f64,
    pub per_class: Vec<Option<f64>>,
    pub confusion: ConfusionMatrix,
}

/// Accumulate a global confusion matrix over un-augmented scenes and derive
/// per-class and mean IoU.
pub fn evaluate(
    model: &Model,
    scenes: &[&crate::data::Scene],
    batch_size: usize,
) -> Result<EvalResult, TrainError> {
    if scenes.is_empty() {
        return Err(TrainError::EmptySplit);
    }
    let classes = model.cfg.classes;
    let mut confusion = ConfusionMatrix::new(classes);
    for chunk in scenes.chunks(batch_size.max(1)) {
        let (h, w) = (chunk[0].height, chunk[0].width);
        let mut images = Tensor4::zeros(chunk.len(), 3, h, w);
        let mut gt = LabelMap::zeros(chunk.len(), h, w);
        for (bi, scene) in chunk.iter().enumerate() {
            let plane = h * w;
            for c in 0..3 {
                images
                    .plane_mut(bi, c)
                    .copy_from_slice(&scene.image[c * plane..(c + 1) * plane]);
            }
            gt.plane_mut(bi).copy_from_slice(&scene.mask);
        }
        let pred = predict_batch(model, &images)?;
        confusion.accumulate(&pred, &gt)?;
    }
    let per_class = confusion.per_class_iou();
    let miou = confusion.mean_iou()?;
    Ok(EvalResult {
        miou,
        per_class,
        confusion,
    })
}

/// Per-step log row; wall-clock is supplied by the runner.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRow {
    pub step: usize,
    pub lr: f64,
    pub losses: LossBreakdown,
    pub step_time_s: f64,
}

/// Per-evaluation log row.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub step: usize,
    pub miou: f64,
    pub per_class: Vec<Option<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{epoch_batches, generate_scene, make_splits, Scene};

    #[test]
    fn poly_lr_endpoints_and_midpoint() {
        assert_eq!(poly_lr(0, 100, 0.001).unwrap(), 0.001);
        assert_eq!(poly_lr(100, 100, 0.001).unwrap(), 0.0);
        let mid = poly_lr(50, 100, 0.001).unwrap();
        assert!((mid - 5.358867312681466e-4).abs() < 1e-12, "{mid}");
        assert!(matches!(
            poly_lr(1, 0, 0.001),
            Err(TrainError::ZeroTotalSteps)
        ));
    }

    #[test]
    fn poly_lr_is_strictly_decreasing() {
        let mut prev = f64::INFINITY;
        for step in 0..=50 {
            let lr = poly_lr(step, 50, 0.01).unwrap();
            assert!(lr < prev);
            prev = lr;
        }
    }

    fn tiny_setup() -> (TrainConfig, Vec<Scene>) {
        let dataset = DatasetConfig {
            height: 32,
            width: 32,
            classes: 4,
            scenes: 8,
            val_scenes: 0,
            max_shapes: 2,
            noise: 0.03,
        };
        let cfg = TrainConfig {
            model: ModelConfig {
                height: 32,
                width: 32,
                classes: 4,
                feature_dim: 8,
                stride: 4,
                conv_blocks: 2,
                ..ModelConfig::default()
            },
            dataset: dataset.clone(),
            batch_size: 4,
            epochs: 1,
            ..TrainConfig::default()
        };
        let scenes = (0..8)
            .map(|i| generate_scene(i, &dataset).unwrap())
            .collect();
        (cfg, scenes)
    }

    #[test]
    fn train_step_produces_finite_breakdown_and_identity() {
        let (cfg, scenes) = tiny_setup();
        let mut model = Model::init(&cfg.model, 0).unwrap();
        let mut opt = Sgd::new(&model, cfg.momentum, cfg.weight_decay);
        let manifest = make_splits(8, SplitRatio::Fraction(1, 2), 0).unwrap();
        let batch = epoch_batches(&scenes, &manifest, &cfg.augment, 4, 0, 0)
            .unwrap()
            .next()
            .unwrap();
        let b = train_step(&mut model, &mut opt, &batch, &cfg, 0.01).unwrap();
        assert!(b.total.is_finite());
        let recomposed = b.l_s + b.l_x + b.alpha * b.l_su + b.beta * b.l_cr;
        assert!((b.total - recomposed).abs() < 1e-7);
        assert!(b.l_s > 0.0);
    }

    #[test]
    fn disabled_terms_contribute_exact_zero() {
        let (mut cfg, scenes) = tiny_setup();
        cfg.enable_sbu = false;
        cfg.enable_ckr = false;
        let mut model = Model::init(&cfg.model, 0).unwrap();
        let mut opt = Sgd::new(&model, cfg.momentum, cfg.weight_decay);
        let manifest = make_splits(8, SplitRatio::Fraction(1, 2), 0).unwrap();
        let batch = epoch_batches(&scenes, &manifest, &cfg.augment, 4, 0, 0)
            .unwrap()
            .next()
            .unwrap();
        let b = train_step(&mut model, &mut opt, &batch, &cfg, 0.01).unwrap();
        assert_eq!(b.l_su, 0.0);
        assert_eq!(b.l_cr, 0.0);
        assert_eq!(b.total, b.l_s + b.l_x);
    }

    #[test]
    fn zero_coefficients_match_disabled_updates() {
        // alpha = beta = 0 with terms enabled must produce the same parameter
        // update as disabling the terms outright.
        let (cfg, scenes) = tiny_setup();
        let manifest = make_splits(8, SplitRatio::Fraction(1, 2), 0).unwrap();

        let run = |enable: bool| -> Vec<Vec<f64>> {
            let mut cfg = cfg.clone();
            cfg.enable_sbu = enable;
            cfg.enable_ckr = enable;
            cfg.alpha = 0.0;
            cfg.beta = 0.0;
            let mut model = Model::init(&cfg.model, 0).unwrap();
            let mut opt = Sgd::new(&model, cfg.momentum, cfg.weight_decay);
            let batch = epoch_batches(&scenes, &manifest, &cfg.augment, 4, 0, 0)
                .unwrap()
                .next()
                .unwrap();
            train_step(&mut model, &mut opt, &batch, &cfg, 0.01).unwrap();
            model.params().iter().map(|p| p.to_vec()).collect()
        };
        let with_terms = run(true);
        let without_terms = run(false);
        for (a, b) in with_terms.iter().zip(&without_terms) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x, y);
            }
        }
    }

    #[test]
    fn supervised_only_step_works_without_unlabeled() {
        let (cfg, scenes) = tiny_setup();
        let mut model = Model::init(&cfg.model, 0).unwrap();
        let mut opt = Sgd::new(&model, cfg.momentum, cfg.weight_decay);
        let manifest = make_splits(8, SplitRatio::Fraction(1, 1), 0).unwrap();
        let batch = epoch_batches(&scenes, &manifest, &cfg.augment, 4, 0, 0)
            .unwrap()
            .next()
            .unwrap();
        assert!(batch.unlabeled.is_none());
        let b = train_step(&mut model, &mut opt, &batch, &cfg, 0.01).unwrap();
        assert_eq!(b.l_x, 0.0);
        assert_eq!(b.total, b.l_s);
    }

    #[test]
    fn evaluate_matches_naive_miou() {
        let (cfg, scenes) = tiny_setup();
        let model = Model::init(&cfg.model, 1).unwrap();
        let refs: Vec<&Scene> = scenes.iter().collect();
        let res = evaluate(&model, &refs, 4).unwrap();

        // Rebuild predictions and compare against the naive counter.
        let mut all_pred = Vec::new();
        let mut all_gt = Vec::new();
        for s in &scenes {
            let mut images = Tensor4::zeros(1, 3, s.height, s.width);
            let plane = s.height * s.width;
            for c in 0..3 {
                images
                    .plane_mut(0, c)
                    .copy_from_slice(&s.image[c * plane..(c + 1) * plane]);
            }
            let pred = predict_batch(&model, &images).unwrap();
            all_pred.extend_from_slice(&pred.data);
            all_gt.extend_from_slice(&s.mask);
        }
        let pred = LabelMap::from_vec(all_pred, 1, 1, all_gt.len());
        let gt = LabelMap::from_vec(all_gt, 1, 1, pred.data.len());
        let (_, naive) = crate::verification::miou_naive(&pred, &gt, 4).unwrap();
        assert_eq!(res.miou, naive);
    }

    #[test]
    fn evaluate_rejects_empty_split() {
        let (cfg, _) = tiny_setup();
        let model = Model::init(&cfg.model, 0).unwrap();
        assert!(matches!(
            evaluate(&model, &[], 4),
            Err(TrainError::EmptySplit)
        ));
    }

    #[test]
    fn every_parameter_stays_finite_after_a_step() {
        let (cfg, scenes) = tiny_setup();
        let mut model = Model::init(&cfg.model, 7).unwrap();
        let mut opt = Sgd::new(&model, cfg.momentum, cfg.weight_decay);
        let manifest = make_splits(8, SplitRatio::Fraction(1, 2), 0).unwrap();
        for (i, batch) in epoch_batches(&scenes, &manifest, &cfg.augment, 4, 0, 0)
            .unwrap()
            .enumerate()
        {
            train_step(&mut model, &mut opt, &batch, &cfg, 0.01).unwrap();
            for group in model.params() {
                assert!(group.iter().all(|v| v.is_finite()), "step {i}");
            }
        }
    }

    /// Degenerate-configuration sanity: photometric augmentation off makes
    /// the strong view equal the weak view, so cross-view similarity is 1
    /// everywhere and the regulation loss vanishes; a tiny threshold leaves
    /// no uncertain pixels, so the reweighting loss is exactly zero.
    #[test]
    fn identical_views_collapse_the_consistency_terms() {
        let (mut cfg, scenes) = tiny_setup();
        cfg.augment.photometric = false;
        cfg.tau = 0.01; // below 1/C, so no pixel is uncertain
        let mut model = Model::init(&cfg.model, 0).unwrap();
        let mut opt = Sgd::new(&model, cfg.momentum, cfg.weight_decay);
        let manifest = make_splits(8, SplitRatio::Fraction(1, 2), 0).unwrap();
        let batch = epoch_batches(&scenes, &manifest, &cfg.augment, 4, 0, 0)
            .unwrap()
            .next()
            .unwrap();
        let unlabeled = batch.unlabeled.as_ref().unwrap();
        assert_eq!(unlabeled.weak.data, unlabeled.strong.data);

        let (f_cat, _) = model
            .encode_train(
                &Tensor4::concat_batch(&unlabeled.weak, &unlabeled.strong),
                false,
            )
            .unwrap();
        let bu = unlabeled.weak.b;
        let f_w = crate::model::FeatureMap {
            values: f_cat.values.slice_batch(0, bu),
            stride: f_cat.stride,
        };
        let f_s = crate::model::FeatureMap {
            values: f_cat.values.slice_batch(bu, 2 * bu),
            stride: f_cat.stride,
        };
        let sim = losses::per_location_similarity(&f_s, &f_w).unwrap();
        for v in &sim.values.data {
            assert!((v - 1.0).abs() < 1e-6, "similarity {v}");
        }

        let b = train_step(&mut model, &mut opt, &batch, &cfg, 0.01).unwrap();
        assert_eq!(b.l_su, 0.0);
        assert!(b.l_cr.abs() < 1e-6, "l_cr {}", b.l_cr);
    }

    #[test]
    fn config_validation_rejects_bad_tau() {
        let mut cfg = TrainConfig::default();
        cfg.tau = 1.0;
        assert!(cfg.validate().is_err());
        cfg.tau = 0.0;
        assert!(cfg.validate().is_err());
        cfg.tau = 0.95;
        assert!(cfg.validate().is_ok());
    }
}
