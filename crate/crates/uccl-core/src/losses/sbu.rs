//! Uncertain-pixel reweighting: cross-view feature similarity turns into
//! per-class softmax weights over the uncertain region, which then scale the
//! pseudo-label cross-entropy. Lower similarity earns a larger weight.

use alloc::vec::Vec;

use super::pixel::cross_entropy_map;
use super::LossError;
use crate::mathf;
use crate::model::{FeatureMap, PredictionMap};
use crate::tensor::{
    nn_downsample_labels, nn_downsample_values, nn_upsample_values, LabelMap, Tensor3, Tensor4,
};

/// Per-location cosine similarity of two feature maps, `(B, h, w)` in
/// `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct SimilarityMap {
    pub values: Tensor3,
}

/// Binary map of pixels whose weak-view confidence falls strictly below the
/// threshold, evaluated at full resolution and then nearest-neighbor
/// downsampled to feature resolution.
#[derive(Debug, Clone)]
pub struct UncertainMask {
    pub values: LabelMap,
    pub tau: f64,
}

/// Per-class softmax of negated similarities over uncertain member pixels;
/// zero outside the mask. Treated as a constant during differentiation.
#[derive(Debug, Clone)]
pub struct SbuWeightMap {
    pub values: Tensor3,
}

/// Intermediate maps of one reweighting evaluation, exposed for inspection
/// and invariant tests.
#[derive(Debug, Clone)]
pub struct SbuArtifacts {
    pub similarity: SimilarityMap,
    pub mask: UncertainMask,
    pub weights: SbuWeightMap,
    /// Weak pseudo-labels at feature resolution.
    pub class_map: LabelMap,
}

const NORM_EPS: f64 = 1e-8;

/// Cosine similarity along the channel axis at every spatial location, with
/// a small epsilon added to each norm.
pub fn per_location_similarity(
    f_s: &FeatureMap,
    f_w: &FeatureMap,
) -> Result<SimilarityMap, LossError> {
    let (a, b) = (&f_s.values, &f_w.values);
    if !a.same_shape(b) {
        return Err(LossError::ShapeMismatch("feature maps"));
    }
    let plane = a.h * a.w;
    let mut out = Tensor3::zeros(a.b, a.h, a.w);
    for bi in 0..a.b {
        for p in 0..plane {
            let mut dot = 0.0;
            let mut na = 0.0;
            let mut nb = 0.0;
            for c in 0..a.c {
                let va = a.data[(bi * a.c + c) * plane + p];
                let vb = b.data[(bi * a.c + c) * plane + p];
                dot += va * vb;
                na += va * va;
                nb += vb * vb;
            }
            out.data[bi * plane + p] =
                dot / ((mathf::sqrt(na) + NORM_EPS) * (mathf::sqrt(nb) + NORM_EPS));
        }
    }
    Ok(SimilarityMap { values: out })
}

/// `confidence < tau` judged at full resolution, then nearest-neighbor
/// downsampled to `(h, w)`. Both inequalities of the pipeline are strict, so
/// a pixel at exactly `tau` is neither certain nor uncertain.
pub fn uncertain_mask(
    p_w: &PredictionMap,
    tau: f64,
    h: usize,
    w: usize,
) -> Result<UncertainMask, LossError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(LossError::InvalidThreshold(tau));
    }
    let conf = &p_w.confidence;
    if conf.h % h != 0 || conf.w % w != 0 {
        return Err(LossError::ShapeMismatch("mask dims must divide image dims"));
    }
    let mut full = LabelMap::zeros(conf.b, conf.h, conf.w);
    for (dst, &c) in full.data.iter_mut().zip(&conf.data) {
        *dst = u8::from(c < tau);
    }
    Ok(UncertainMask {
        values: nn_downsample_labels(&full, h, w),
        tau,
    })
}

/// For every `(image, class)` pair, softmax of the negated similarities over
/// that class's uncertain member pixels (max-subtracted). Non-member pixels
/// get zero; an empty member set contributes nothing.
pub fn sbu_weight_map(
    sim: &SimilarityMap,
    mask: &UncertainMask,
    class_map: &LabelMap,
    classes: usize,
) -> Result<SbuWeightMap, LossError> {
    let s = &sim.values;
    if s.b != class_map.b || s.h != class_map.h || s.w != class_map.w {
        return Err(LossError::ShapeMismatch("similarity vs class map"));
    }
    if mask.values.b != s.b || mask.values.h != s.h || mask.values.w != s.w {
        return Err(LossError::ShapeMismatch("similarity vs mask"));
    }
    let plane = s.h * s.w;
    let mut out = Tensor3::zeros(s.b, s.h, s.w);
    let mut members: Vec<usize> = Vec::with_capacity(plane);
    for bi in 0..s.b {
        for class in 0..classes {
            members.clear();
            for p in 0..plane {
                if mask.values.data[bi * plane + p] == 1
                    && class_map.data[bi * plane + p] as usize == class
                {
                    members.push(p);
                }
            }
            if members.is_empty() {
                continue;
            }
            let mut max_neg = f64::NEG_INFINITY;
            for &p in &members {
                max_neg = max_neg.max(-s.data[bi * plane + p]);
            }
            let mut denom = 0.0;
            for &p in &members {
                let e = mathf::exp(-s.data[bi * plane + p] - max_neg);
                out.data[bi * plane + p] = e;
                denom += e;
            }
            for &p in &members {
                out.data[bi * plane + p] /= denom;
            }
        }
    }
    Ok(SbuWeightMap { values: out })
}

/// The reweighting loss: per-class softmax weights over uncertain pixels,
/// upsampled to full resolution, scaling the pseudo-label cross-entropy of
/// the strong view. Normalized by batch size only; the per-class softmax
/// already makes each class's contribution a weighted mean.
pub fn sbu_loss(
    p_s: &PredictionMap,
    p_w: &PredictionMap,
    f_s: &FeatureMap,
    f_w: &FeatureMap,
    tau: f64,
) -> Result<f64, LossError> {
    sbu_loss_grad(p_s, p_w, f_s, f_w, tau).map(|(v, _, _)| v)
}

/// Loss, gradient with respect to the strong logits, and the intermediate
/// maps. The weight map, mask, and similarity are constants in the gradient
/// (the strong features influence the weights but receive no gradient from
/// them), so the term reweights rather than reshapes the similarity field.
pub fn sbu_loss_grad(
    p_s: &PredictionMap,
    p_w: &PredictionMap,
    f_s: &FeatureMap,
    f_w: &FeatureMap,
    tau: f64,
) -> Result<(f64, Tensor4, SbuArtifacts), LossError> {
    if !p_s.logits.same_shape(&p_w.logits) {
        return Err(LossError::ShapeMismatch("strong vs weak predictions"));
    }
    if p_s.logits.b == 0 {
        return Err(LossError::EmptyBatch);
    }
    let (fh, fw_dim) = (f_s.values.h, f_s.values.w);
    let similarity = per_location_similarity(f_s, f_w)?;
    let mask = uncertain_mask(p_w, tau, fh, fw_dim)?;
    let class_map = nn_downsample_labels(&p_w.pseudo_labels, fh, fw_dim);
    let weights = sbu_weight_map(&similarity, &mask, &class_map, p_w.classes())?;

    let up = nn_upsample_values(&weights.values, p_s.logits.h, p_s.logits.w);
    let scale = 1.0 / p_s.logits.b as f64;
    let (value, grad) = super::pixel::weighted_ce(&p_s.logits, &p_w.pseudo_labels, &up, scale)?;
    Ok((
        value,
        grad,
        SbuArtifacts {
            similarity,
            mask,
            weights,
            class_map,
        },
    ))
}

/// Loss value recomputed from prebuilt artifacts; used by tests that perturb
/// individual maps.
pub fn sbu_loss_from_weights(
    p_s: &PredictionMap,
    p_w: &PredictionMap,
    weights: &SbuWeightMap,
) -> Result<f64, LossError> {
    let up = nn_upsample_values(&weights.values, p_s.logits.h, p_s.logits.w);
    let ce = cross_entropy_map(&p_s.logits, &p_w.pseudo_labels)?;
    let mut sum = 0.0;
    for (w, l) in up.data.iter().zip(&ce.data) {
        sum += w * l;
    }
    Ok(sum / p_s.logits.b as f64)
}

/// Weak confidences sampled to feature resolution, shared by the prototype
/// builder.
pub fn downsampled_confidence(p_w: &PredictionMap, h: usize, w: usize) -> Tensor3 {
    nn_downsample_values(&p_w.confidence, h, w)
}
