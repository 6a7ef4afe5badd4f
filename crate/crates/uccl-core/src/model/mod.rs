//! Small encoder-decoder with one shared parameter set for every view.
//!
//! The encoder is a stack of conv blocks (conv3x3 -> batch norm -> ReLU)
//! whose strides multiply to the configured output stride; the decoder is a
//! 1x1 classifier head on the feature map followed by bilinear upsampling
//! back to input resolution. Encode and decode are exposed separately so the
//! unlabeled pipeline can read features and predictions independently.

mod layers;

pub use layers::{
    relu, relu_backward, upsample_bilinear, upsample_bilinear_backward, BatchNorm2d, BnCache,
    Conv2d,
};

use alloc::vec;
use alloc::vec::Vec;

use crate::rng::Rng;
use crate::tensor::{LabelMap, Tensor3, Tensor4};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Input image height/width; must be divisible by `stride`.
    pub height: usize,
    pub width: usize,
    pub in_channels: usize,
    pub classes: usize,
    /// Encoder output channels D.
    pub feature_dim: usize,
    /// Total spatial reduction of the encoder.
    pub stride: usize,
    /// Number of conv blocks; at least the number of strided blocks.
    pub conv_blocks: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            height: 64,
            width: 64,
            in_channels: 3,
            classes: 4,
            feature_dim: 64,
            stride: 4,
            conv_blocks: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    NotDivisible { dim: usize, stride: usize },
    BadConfig(&'static str),
    ShapeMismatch(&'static str),
}

impl core::fmt::Display for ModelError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ModelError::NotDivisible { dim, stride } => {
                write!(f, "input dim {dim} not divisible by stride {stride}")
            }
            ModelError::BadConfig(msg) => write!(f, "bad model config: {msg}"),
            ModelError::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
        }
    }
}

/// Encoder output `F`: `(B, D, h, w)` at `h = H/stride`, `w = W/stride`.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    pub values: Tensor4,
    pub stride: usize,
}

/// Decoder output with the derived per-pixel quantities the losses consume.
#[derive(Debug, Clone)]
pub struct PredictionMap {
    pub logits: Tensor4,
    pub probabilities: Tensor4,
    /// Maximum softmax probability per pixel.
    pub confidence: Tensor3,
    /// Argmax class per pixel (ties resolve to the lowest index).
    pub pseudo_labels: LabelMap,
}

impl PredictionMap {
    pub fn from_logits(logits: Tensor4) -> Self {
        let (b, c, h, w) = (logits.b, logits.c, logits.h, logits.w);
        let mut probabilities = Tensor4::zeros(b, c, h, w);
        let mut confidence = Tensor3::zeros(b, h, w);
        let mut pseudo_labels = LabelMap::zeros(b, h, w);
        let plane = h * w;
        for bi in 0..b {
            for p in 0..plane {
                let mut max_z = f64::NEG_INFINITY;
                let mut arg = 0u8;
                for ci in 0..c {
                    let z = logits.data[(bi * c + ci) * plane + p];
                    if z > max_z {
                        max_z = z;
                        arg = ci as u8;
                    }
                }
                let mut denom = 0.0;
                for ci in 0..c {
                    let e = crate::mathf::exp(logits.data[(bi * c + ci) * plane + p] - max_z);
                    probabilities.data[(bi * c + ci) * plane + p] = e;
                    denom += e;
                }
                let mut best = 0.0;
                for ci in 0..c {
                    let idx = (bi * c + ci) * plane + p;
                    probabilities.data[idx] /= denom;
                    if probabilities.data[idx] > best {
                        best = probabilities.data[idx];
                    }
                }
                confidence.data[bi * plane + p] = best;
                pseudo_labels.data[bi * plane + p] = arg;
            }
        }
        PredictionMap {
            logits,
            probabilities,
            confidence,
            pseudo_labels,
        }
    }

    pub fn classes(&self) -> usize {
        self.logits.c
    }
}

struct ConvBlock {
    conv: Conv2d,
    bn: BatchNorm2d,
}

/// Encoder-decoder with a single trainable parameter set.
pub struct Model {
    pub cfg: ModelConfig,
    pub init_seed: u64,
    blocks: Vec<ConvBlock>,
    head: Conv2d,
}

/// Per-block activations retained for the backward pass.
pub struct EncodeCache {
    inputs: Vec<Tensor4>,
    bn: Vec<BnCache>,
    outputs: Vec<Tensor4>,
}

pub struct DecodeCache {
    feature: Tensor4,
    small_h: usize,
    small_w: usize,
}

/// Gradient buffers aligned with [`Model::params`] order.
pub struct ModelGrads {
    pub bufs: Vec<Vec<f64>>,
}

/// Decompose the total stride into per-block conv strides (factors of two
/// first, then one odd remainder).
fn stride_factors(mut s: usize) -> Vec<usize> {
    let mut f = Vec::new();
    while s % 2 == 0 && s > 1 {
        f.push(2);
        s /= 2;
    }
    if s > 1 {
        f.push(s);
    }
    f
}

impl Model {
    /// Deterministic initialization from `(cfg, seed)`.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Model, ModelError> {
        if cfg.classes < 2 {
            return Err(ModelError::BadConfig("need at least two classes"));
        }
        if cfg.stride == 0 || cfg.feature_dim == 0 || cfg.conv_blocks == 0 {
            return Err(ModelError::BadConfig("zero-sized model dimension"));
        }
        if cfg.height % cfg.stride != 0 {
            return Err(ModelError::NotDivisible {
                dim: cfg.height,
                stride: cfg.stride,
            });
        }
        if cfg.width % cfg.stride != 0 {
            return Err(ModelError::NotDivisible {
                dim: cfg.width,
                stride: cfg.stride,
            });
        }
        let factors = stride_factors(cfg.stride);
        let n_blocks = cfg.conv_blocks.max(factors.len());
        let mut rng = Rng::from_stream(seed, 0x6d6f64656c); // "model" stream
        let mut blocks = Vec::with_capacity(n_blocks);
        let mut in_ch = cfg.in_channels;
        for i in 0..n_blocks {
            let stride = factors.get(i).copied().unwrap_or(1);
            let conv = Conv2d::init(cfg.feature_dim, in_ch, 3, stride, 1, &mut rng);
            let bn = BatchNorm2d::init(cfg.feature_dim);
            blocks.push(ConvBlock { conv, bn });
            in_ch = cfg.feature_dim;
        }
        let head = Conv2d::init(cfg.classes, cfg.feature_dim, 1, 1, 0, &mut rng);
        Ok(Model {
            cfg: cfg.clone(),
            init_seed: seed,
            blocks,
            head,
        })
    }

    pub fn feature_dims(&self) -> (usize, usize) {
        (
            self.cfg.height / self.cfg.stride,
            self.cfg.width / self.cfg.stride,
        )
    }

    fn check_input(&self, x: &Tensor4) -> Result<(), ModelError> {
        if x.c != self.cfg.in_channels || x.h != self.cfg.height || x.w != self.cfg.width {
            return Err(ModelError::ShapeMismatch("encode input"));
        }
        Ok(())
    }

    /// Training-mode forward through the encoder. Batch-norm uses batch
    /// statistics; running statistics update only when `update_running`.
    pub fn encode_train(
        &mut self,
        x: &Tensor4,
        update_running: bool,
    ) -> Result<(FeatureMap, EncodeCache), ModelError> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.blocks.len());
        let mut bn_caches = Vec::with_capacity(self.blocks.len());
        let mut outputs = Vec::with_capacity(self.blocks.len());
        let mut cur = x.clone();
        for block in &mut self.blocks {
            let pre = block.conv.forward(&cur);
            inputs.push(cur);
            let (normed, cache) = block.bn.forward_train(&pre, update_running);
            bn_caches.push(cache);
            let out = relu(&normed);
            outputs.push(out.clone());
            cur = out;
        }
        Ok((
            FeatureMap {
                values: cur,
                stride: self.cfg.stride,
            },
            EncodeCache {
                inputs,
                bn: bn_caches,
                outputs,
            },
        ))
    }

    /// Evaluation-mode forward: pure function of `(params, x)` using running
    /// batch-norm statistics.
    pub fn encode_eval(&self, x: &Tensor4) -> Result<FeatureMap, ModelError> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for block in &self.blocks {
            let pre = block.conv.forward(&cur);
            let normed = block.bn.forward_eval(&pre);
            cur = relu(&normed);
        }
        Ok(FeatureMap {
            values: cur,
            stride: self.cfg.stride,
        })
    }

    /// Classifier head plus bilinear upsampling to input resolution.
    pub fn decode(&self, feature: &FeatureMap) -> Result<(PredictionMap, DecodeCache), ModelError> {
        let f = &feature.values;
        if f.c != self.cfg.feature_dim {
            return Err(ModelError::ShapeMismatch("decode feature channels"));
        }
        let small = self.head.forward(f);
        let logits = upsample_bilinear(&small, feature.stride);
        Ok((
            PredictionMap::from_logits(logits),
            DecodeCache {
                feature: f.clone(),
                small_h: small.h,
                small_w: small.w,
            },
        ))
    }

    /// Backprop `d loss/d logits` through the decoder; returns the gradient
    /// with respect to the feature map.
    pub fn decode_backward(
        &self,
        cache: &DecodeCache,
        grad_logits: &Tensor4,
        grads: &mut ModelGrads,
    ) -> Tensor4 {
        let grad_small =
            upsample_bilinear_backward(grad_logits, cache.small_h, cache.small_w, self.cfg.stride);
        let n = self.blocks.len();
        let (gw, gb) = {
            let (a, b) = grads.bufs.split_at_mut(4 * n + 1);
            (&mut a[4 * n], &mut b[0])
        };
        self.head
            .backward(&cache.feature, &grad_small, gw, gb, true)
            .expect("head input grad")
    }

    /// Backprop `d loss/d feature` through the encoder, accumulating every
    /// block's parameter gradients.
    pub fn encode_backward(
        &self,
        cache: &EncodeCache,
        grad_feature: &Tensor4,
        grads: &mut ModelGrads,
    ) {
        let mut g = grad_feature.clone();
        for i in (0..self.blocks.len()).rev() {
            let block = &self.blocks[i];
            g = relu_backward(&g, &cache.outputs[i]);
            let (gg, gbeta) = {
                let (a, b) = grads.bufs.split_at_mut(4 * i + 3);
                (&mut a[4 * i + 2], &mut b[0])
            };
            g = block.bn.backward(&cache.bn[i], &g, gg, gbeta);
            let want_input = i > 0;
            let (gw, gb) = {
                let (a, b) = grads.bufs.split_at_mut(4 * i + 1);
                (&mut a[4 * i], &mut b[0])
            };
            match block
                .conv
                .backward(&cache.inputs[i], &g, gw, gb, want_input)
            {
                Some(gin) => g = gin,
                None => break,
            }
        }
    }

    /// Parameter slices in a fixed order: per block `(conv.w, conv.b,
    /// bn.gamma, bn.beta)`, then the head `(w, b)`.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::with_capacity(4 * self.blocks.len() + 2);
        for b in &self.blocks {
            v.push(&b.conv.weight);
            v.push(&b.conv.bias);
            v.push(&b.bn.gamma);
            v.push(&b.bn.beta);
        }
        v.push(&self.head.weight);
        v.push(&self.head.bias);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut v: Vec<&mut Vec<f64>> = Vec::with_capacity(4 * self.blocks.len() + 2);
        for b in &mut self.blocks {
            v.push(&mut b.conv.weight);
            v.push(&mut b.conv.bias);
            v.push(&mut b.bn.gamma);
            v.push(&mut b.bn.beta);
        }
        v.push(&mut self.head.weight);
        v.push(&mut self.head.bias);
        v
    }

    pub fn zero_grads(&self) -> ModelGrads {
        ModelGrads {
            bufs: self.params().iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Batch-norm running `(mean, var)` pairs, block order.
    pub fn running_stats(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        self.blocks
            .iter()
            .map(|b| (b.bn.running_mean.clone(), b.bn.running_var.clone()))
            .collect()
    }

    pub fn set_running_stats(&mut self, stats: &[(Vec<f64>, Vec<f64>)]) -> Result<(), ModelError> {
        if stats.len() != self.blocks.len() {
            return Err(ModelError::ShapeMismatch("running stats block count"));
        }
        for (b, (mean, var)) in self.blocks.iter_mut().zip(stats) {
            if mean.len() != b.bn.channels || var.len() != b.bn.channels {
                return Err(ModelError::ShapeMismatch("running stats channels"));
            }
            b.bn.running_mean = mean.clone();
            b.bn.running_var = var.clone();
        }
        Ok(())
    }

    pub fn set_params(&mut self, values: &[Vec<f64>]) -> Result<(), ModelError> {
        let mut slots = self.params_mut();
        if values.len() != slots.len() {
            return Err(ModelError::ShapeMismatch("param group count"));
        }
        for (slot, vals) in slots.iter_mut().zip(values) {
            if slot.len() != vals.len() {
                return Err(ModelError::ShapeMismatch("param group length"));
            }
            slot.clone_from(vals);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ModelConfig {
        ModelConfig {
            height: 16,
            width: 16,
            in_channels: 3,
            classes: 4,
            feature_dim: 8,
            stride: 4,
            conv_blocks: 2,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = small_cfg();
        let a = Model::init(&cfg, 9).unwrap();
        let b = Model::init(&cfg, 9).unwrap();
        for (pa, pb) in a.params().iter().zip(b.params().iter()) {
            assert_eq!(pa, pb);
        }
        let c = Model::init(&cfg, 10).unwrap();
        assert_ne!(a.params()[0], c.params()[0]);
    }

    #[test]
    fn feature_dims_follow_stride() {
        let cfg = ModelConfig {
            height: 64,
            width: 64,
            feature_dim: 64,
            stride: 4,
            ..ModelConfig::default()
        };
        let model = Model::init(&cfg, 0).unwrap();
        assert_eq!(model.feature_dims(), (16, 16));
    }

    #[test]
    fn indivisible_stride_is_rejected() {
        let cfg = ModelConfig {
            height: 64,
            width: 64,
            stride: 3,
            ..ModelConfig::default()
        };
        assert!(matches!(
            Model::init(&cfg, 0),
            Err(ModelError::NotDivisible { .. })
        ));
    }

    #[test]
    fn encode_decode_round_trips_shapes() {
        let cfg = small_cfg();
        let mut model = Model::init(&cfg, 1).unwrap();
        let mut rng = Rng::new(2);
        let x = Tensor4::from_vec(rng.normal_vec(2 * 3 * 16 * 16, 1.0), 2, 3, 16, 16);
        let (f, _) = model.encode_train(&x, true).unwrap();
        assert_eq!(
            (f.values.b, f.values.c, f.values.h, f.values.w),
            (2, 8, 4, 4)
        );
        let (p, _) = model.decode(&f).unwrap();
        assert_eq!(
            (p.logits.b, p.logits.c, p.logits.h, p.logits.w),
            (2, 4, 16, 16)
        );
        assert!(p.logits.is_finite());
    }

    #[test]
    fn zero_input_gives_finite_features() {
        let cfg = small_cfg();
        let mut model = Model::init(&cfg, 3).unwrap();
        let x = Tensor4::zeros(1, 3, 16, 16);
        let (f, _) = model.encode_train(&x, false).unwrap();
        assert!(f.values.is_finite());
        let f2 = model.encode_eval(&x).unwrap();
        assert!(f2.values.is_finite());
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let cfg = small_cfg();
        let model = Model::init(&cfg, 4).unwrap();
        let mut rng = Rng::new(5);
        let x = Tensor4::from_vec(rng.normal_vec(3 * 16 * 16, 1.0), 1, 3, 16, 16);
        let a = model.encode_eval(&x).unwrap();
        let b = model.encode_eval(&x).unwrap();
        assert_eq!(a.values.data, b.values.data);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut rng = Rng::new(6);
        let logits = Tensor4::from_vec(rng.normal_vec(2 * 4 * 3 * 3, 3.0), 2, 4, 3, 3);
        let p = PredictionMap::from_logits(logits);
        for b in 0..2 {
            for y in 0..3 {
                for x in 0..3 {
                    let s: f64 = (0..4).map(|c| p.probabilities.at(b, c, y, x)).sum();
                    assert!((s - 1.0).abs() < 1e-5);
                    assert!(p.confidence.at(b, y, x) > 0.0 && p.confidence.at(b, y, x) <= 1.0);
                    assert!(p.pseudo_labels.at(b, y, x) < 4);
                }
            }
        }
    }

    #[test]
    fn uniform_logits_confidence_is_one_over_c() {
        let logits = Tensor4::from_vec(vec![0.7; 4 * 2 * 2], 1, 4, 2, 2);
        let p = PredictionMap::from_logits(logits);
        for v in &p.confidence.data {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    /// Full-model analytic gradients against central differences on a tiny
    /// instance (supervised CE objective, batch-stat batch norm).
    #[test]
    fn model_gradients_match_finite_differences() {
        let cfg = ModelConfig {
            height: 8,
            width: 8,
            in_channels: 3,
            classes: 3,
            feature_dim: 4,
            stride: 2,
            conv_blocks: 2,
            ..ModelConfig::default()
        };
        let mut model = Model::init(&cfg, 11).unwrap();
        let mut rng = Rng::new(12);
        let x = Tensor4::from_vec(rng.normal_vec(2 * 3 * 8 * 8, 1.0), 2, 3, 8, 8);
        let labels = LabelMap::from_vec(
            (0..2 * 8 * 8).map(|_| rng.below(3) as u8).collect(),
            2,
            8,
            8,
        );

        let loss_of = |m: &mut Model| -> f64 {
            let (f, _) = m.encode_train(&x, false).unwrap();
            let (p, _) = m.decode(&f).unwrap();
            crate::losses::supervised_loss(&p.logits, &labels).unwrap()
        };

        // Analytic.
        let mut grads = model.zero_grads();
        let (f, ecache) = model.encode_train(&x, false).unwrap();
        let (p, dcache) = model.decode(&f).unwrap();
        let (_, glogits) = crate::losses::supervised_loss_grad(&p.logits, &labels).unwrap();
        let gf = model.decode_backward(&dcache, &glogits, &mut grads);
        model.encode_backward(&ecache, &gf, &mut grads);

        // Spot-check a deterministic subset of parameters per group.
        let eps = 1e-5;
        let n_groups = grads.bufs.len();
        for gi in 0..n_groups {
            let len = grads.bufs[gi].len();
            let picks = [0, len / 2, len.saturating_sub(1)];
            for &pi in &picks {
                let orig = model.params()[gi][pi];
                model.params_mut()[gi][pi] = orig + eps;
                let fp = loss_of(&mut model);
                model.params_mut()[gi][pi] = orig - eps;
                let fm = loss_of(&mut model);
                model.params_mut()[gi][pi] = orig;
                let fd = (fp - fm) / (2.0 * eps);
                let an = grads.bufs[gi][pi];
                assert!(
                    (an - fd).abs() <= 1e-4 * fd.abs().max(1e-3),
                    "group {gi} idx {pi}: analytic {an} vs fd {fd}"
                );
            }
        }
    }
}
