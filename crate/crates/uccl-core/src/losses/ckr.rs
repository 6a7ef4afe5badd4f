//! Class-prototype regulation: confidence-weighted class prototypes are
//! built per image for both views, broadcast back to every pixel of their
//! class, and pulled together by a cosine objective. The weak prototypes and
//! the confidence weights are constants; gradient reaches the strong
//! features through the strong prototypes.

use alloc::vec::Vec;

use super::sbu::downsampled_confidence;
use super::LossError;
use crate::mathf;
use crate::model::{FeatureMap, PredictionMap};
use crate::tensor::{nn_downsample_labels, LabelMap, Tensor4};

const NORM_EPS: f64 = 1e-8;

/// One class's prototypes within one image.
#[derive(Debug, Clone)]
pub struct PrototypeEntry {
    /// Confidence-softmax weighted average of weak features (gradient
    /// constant).
    pub weak: Vec<f64>,
    /// Same weights applied to strong features (carries gradient).
    pub strong: Vec<f64>,
    /// Softmax weights over member pixels, in `members` order.
    pub weights: Vec<f64>,
    /// Flat pixel indices (into the `h*w` plane) of the member pixels.
    pub members: Vec<usize>,
}

impl PrototypeEntry {
    /// Member pixel count E.
    pub fn member_count(&self) -> usize {
        self.members.len()
    }
}

/// Per-image prototype table indexed by class id; `None` for classes absent
/// from the image's downsampled pseudo-label map.
#[derive(Debug, Clone)]
pub struct ClassPrototypes {
    pub per_image: Vec<Vec<Option<PrototypeEntry>>>,
    pub feature_dim: usize,
}

/// Feature map whose every pixel holds its class's prototype.
#[derive(Debug, Clone)]
pub struct ClassFeatureMap {
    pub values: Tensor4,
}

/// Build both views' prototypes from the weak prediction: member sets come
/// from the nearest-downsampled pseudo-labels, weights from a softmax over
/// the member pixels' downsampled confidences.
pub fn class_prototypes(
    f_w: &FeatureMap,
    f_s: &FeatureMap,
    p_w: &PredictionMap,
) -> Result<ClassPrototypes, LossError> {
    let (w_vals, s_vals) = (&f_w.values, &f_s.values);
    if !w_vals.same_shape(s_vals) {
        return Err(LossError::ShapeMismatch("feature maps"));
    }
    if p_w.confidence.h % w_vals.h != 0 || p_w.confidence.w % w_vals.w != 0 {
        return Err(LossError::ShapeMismatch(
            "feature dims must divide image dims",
        ));
    }
    if p_w.logits.b != w_vals.b {
        return Err(LossError::ShapeMismatch("prediction vs feature batch"));
    }
    let (b, d, h, w) = (w_vals.b, w_vals.c, w_vals.h, w_vals.w);
    let classes = p_w.classes();
    let plane = h * w;
    let class_map = nn_downsample_labels(&p_w.pseudo_labels, h, w);
    let conf = downsampled_confidence(p_w, h, w);

    let mut per_image = Vec::with_capacity(b);
    for bi in 0..b {
        let mut table: Vec<Option<PrototypeEntry>> = (0..classes).map(|_| None).collect();
        for class in 0..classes {
            let members: Vec<usize> = (0..plane)
                .filter(|&p| class_map.data[bi * plane + p] as usize == class)
                .collect();
            if members.is_empty() {
                continue;
            }
            // Softmax over member confidences, max-subtracted.
            let mut max_c = f64::NEG_INFINITY;
            for &p in &members {
                max_c = max_c.max(conf.data[bi * plane + p]);
            }
            let mut weights: Vec<f64> = members
                .iter()
                .map(|&p| mathf::exp(conf.data[bi * plane + p] - max_c))
                .collect();
            let denom: f64 = weights.iter().sum();
            for wv in &mut weights {
                *wv /= denom;
            }
            let mut weak = alloc::vec![0.0; d];
            let mut strong = alloc::vec![0.0; d];
            for (k, &p) in members.iter().enumerate() {
                let hk = weights[k];
                for c in 0..d {
                    weak[c] += hk * w_vals.data[(bi * d + c) * plane + p];
                    strong[c] += hk * s_vals.data[(bi * d + c) * plane + p];
                }
            }
            table[class] = Some(PrototypeEntry {
                weak,
                strong,
                weights,
                members,
            });
        }
        per_image.push(table);
    }
    Ok(ClassPrototypes {
        per_image,
        feature_dim: d,
    })
}

/// Broadcast the prototypes back to pixels: every pixel of class `c` holds
/// that class's prototype vector. Returns `(strong_map, weak_map)`.
pub fn class_feature_maps(
    protos: &ClassPrototypes,
    class_map: &LabelMap,
) -> (ClassFeatureMap, ClassFeatureMap) {
    let (b, h, w) = (class_map.b, class_map.h, class_map.w);
    let d = protos.feature_dim;
    let plane = h * w;
    let mut strong = Tensor4::zeros(b, d, h, w);
    let mut weak = Tensor4::zeros(b, d, h, w);
    for bi in 0..b {
        for p in 0..plane {
            let class = class_map.data[bi * plane + p] as usize;
            if let Some(entry) = protos.per_image[bi].get(class).and_then(|e| e.as_ref()) {
                for c in 0..d {
                    strong.data[(bi * d + c) * plane + p] = entry.strong[c];
                    weak.data[(bi * d + c) * plane + p] = entry.weak[c];
                }
            }
        }
    }
    (
        ClassFeatureMap { values: strong },
        ClassFeatureMap { values: weak },
    )
}

fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    dot / ((mathf::sqrt(nu) + NORM_EPS) * (mathf::sqrt(nv) + NORM_EPS))
}

/// Regulation loss `1 - mean_pixels cos(strong map, weak map)`. Because the
/// broadcast maps are constant on each class region, the pixel mean reduces
/// to the member-count-weighted mean over present classes, which is how it
/// is accumulated here.
pub fn ckr_loss(f_s: &FeatureMap, f_w: &FeatureMap, p_w: &PredictionMap) -> Result<f64, LossError> {
    ckr_loss_grad(f_s, f_w, p_w).map(|(v, _)| v)
}

/// Loss plus gradient with respect to the strong features.
pub fn ckr_loss_grad(
    f_s: &FeatureMap,
    f_w: &FeatureMap,
    p_w: &PredictionMap,
) -> Result<(f64, Tensor4), LossError> {
    if f_s.values.b == 0 {
        return Err(LossError::EmptyBatch);
    }
    let protos = class_prototypes(f_w, f_s, p_w)?;
    let (b, d, h, w) = (f_s.values.b, f_s.values.c, f_s.values.h, f_s.values.w);
    let plane = h * w;
    let n = plane as f64;
    let scale = 1.0 / (b as f64 * n);
    let mut cos_sum = 0.0;
    let mut grad = Tensor4::zeros(b, d, h, w);
    for bi in 0..b {
        for entry in protos.per_image[bi].iter().flatten() {
            let e_count = entry.member_count() as f64;
            let u = &entry.strong;
            let v = &entry.weak;
            let cos = cosine(u, v);
            cos_sum += e_count * cos;

            // d cos / d u = v / ((|u|+eps)(|v|+eps)) - cos * u / (|u| (|u|+eps))
            let nu = mathf::sqrt(u.iter().map(|a| a * a).sum::<f64>());
            let nv = mathf::sqrt(v.iter().map(|a| a * a).sum::<f64>());
            let denom = (nu + NORM_EPS) * (nv + NORM_EPS);
            let self_term = if nu > 0.0 {
                cos / (nu * (nu + NORM_EPS))
            } else {
                0.0
            };
            // dL/du = -(E / (B*N)) * dcos/du, then distributed to members by
            // their softmax weights.
            let coeff = -e_count * scale;
            for (k, &p) in entry.members.iter().enumerate() {
                let hk = entry.weights[k];
                for c in 0..d {
                    let dcos = v[c] / denom - self_term * u[c];
                    grad.data[(bi * d + c) * plane + p] += coeff * hk * dcos;
                }
            }
        }
    }
    Ok((1.0 - scale * cos_sum, grad))
}
