//! Per-pixel cross-entropy and the two losses built directly on it: the
//! supervised term on labeled data and the certainty-gated consistency term
//! on unlabeled data.

use alloc::vec::Vec;

use super::LossError;
use crate::mathf;
use crate::model::PredictionMap;
use crate::tensor::{LabelMap, Tensor3, Tensor4};

fn check_targets(logits: &Tensor4, targets: &LabelMap) -> Result<(), LossError> {
    if logits.b != targets.b || logits.h != targets.h || logits.w != targets.w {
        return Err(LossError::ShapeMismatch("logits vs targets"));
    }
    for &t in &targets.data {
        if t as usize >= logits.c {
            return Err(LossError::ClassOutOfRange {
                class: t,
                classes: logits.c,
            });
        }
    }
    Ok(())
}

/// Per-pixel `-log softmax(logits)[target]`, stabilized by max subtraction.
pub fn cross_entropy_map(logits: &Tensor4, targets: &LabelMap) -> Result<Tensor3, LossError> {
    check_targets(logits, targets)?;
    let (b, c, h, w) = (logits.b, logits.c, logits.h, logits.w);
    let plane = h * w;
    let mut out = Tensor3::zeros(b, h, w);
    for bi in 0..b {
        for p in 0..plane {
            let mut max_z = f64::NEG_INFINITY;
            for ci in 0..c {
                max_z = max_z.max(logits.data[(bi * c + ci) * plane + p]);
            }
            let mut sum = 0.0;
            for ci in 0..c {
                sum += mathf::exp(logits.data[(bi * c + ci) * plane + p] - max_z);
            }
            let lse = max_z + mathf::ln(sum);
            let t = targets.data[bi * plane + p] as usize;
            out.data[bi * plane + p] = lse - logits.data[(bi * c + t) * plane + p];
        }
    }
    Ok(out)
}

/// Weighted-sum CE objective shared by the pixel losses:
/// value `= scale * sum_p weight_p * CE_p`, gradient w.r.t. the logits.
/// Pixels with zero weight cost nothing in the gradient.
pub(super) fn weighted_ce(
    logits: &Tensor4,
    targets: &LabelMap,
    weights: &Tensor3,
    scale: f64,
) -> Result<(f64, Tensor4), LossError> {
    check_targets(logits, targets)?;
    if weights.b != logits.b || weights.h != logits.h || weights.w != logits.w {
        return Err(LossError::ShapeMismatch("weights vs logits"));
    }
    let (b, c, h, w) = (logits.b, logits.c, logits.h, logits.w);
    let plane = h * w;
    let mut value = 0.0;
    let mut grad = Tensor4::zeros(b, c, h, w);
    let mut probs: Vec<f64> = alloc::vec![0.0; c];
    for bi in 0..b {
        for p in 0..plane {
            let wgt = weights.data[bi * plane + p];
            if wgt == 0.0 {
                continue;
            }
            let mut max_z = f64::NEG_INFINITY;
            for ci in 0..c {
                max_z = max_z.max(logits.data[(bi * c + ci) * plane + p]);
            }
            let mut sum = 0.0;
            for ci in 0..c {
                let e = mathf::exp(logits.data[(bi * c + ci) * plane + p] - max_z);
                probs[ci] = e;
                sum += e;
            }
            let lse = max_z + mathf::ln(sum);
            let t = targets.data[bi * plane + p] as usize;
            value += wgt * (lse - logits.data[(bi * c + t) * plane + p]);
            let gscale = scale * wgt;
            for ci in 0..c {
                let soft = probs[ci] / sum;
                let indicator = if ci == t { 1.0 } else { 0.0 };
                grad.data[(bi * c + ci) * plane + p] = gscale * (soft - indicator);
            }
        }
    }
    Ok((scale * value, grad))
}

/// Mean cross-entropy over the labeled batch and all pixels.
pub fn supervised_loss(logits: &Tensor4, labels: &LabelMap) -> Result<f64, LossError> {
    supervised_loss_grad(logits, labels).map(|(v, _)| v)
}

pub fn supervised_loss_grad(
    logits: &Tensor4,
    labels: &LabelMap,
) -> Result<(f64, Tensor4), LossError> {
    if logits.b == 0 {
        return Err(LossError::EmptyBatch);
    }
    let ones = Tensor3::from_vec(
        alloc::vec![1.0; logits.b * logits.h * logits.w],
        logits.b,
        logits.h,
        logits.w,
    );
    let scale = 1.0 / (logits.b * logits.h * logits.w) as f64;
    weighted_ce(logits, labels, &ones, scale)
}

/// Consistency loss over pixels whose weak-view confidence strictly exceeds
/// `tau`: CE between the strong logits and the weak pseudo-labels, averaged
/// over every pixel of the batch. The weak prediction is a constant.
pub fn certainty_consistency_loss(
    p_s: &PredictionMap,
    p_w: &PredictionMap,
    tau: f64,
) -> Result<f64, LossError> {
    certainty_consistency_loss_grad(p_s, p_w, tau).map(|(v, _)| v)
}

/// Returns the loss and its gradient with respect to the strong logits.
pub fn certainty_consistency_loss_grad(
    p_s: &PredictionMap,
    p_w: &PredictionMap,
    tau: f64,
) -> Result<(f64, Tensor4), LossError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(LossError::InvalidThreshold(tau));
    }
    if !p_s.logits.same_shape(&p_w.logits) {
        return Err(LossError::ShapeMismatch("strong vs weak predictions"));
    }
    if p_s.logits.b == 0 {
        return Err(LossError::EmptyBatch);
    }
    let gate: Vec<f64> = p_w
        .confidence
        .data
        .iter()
        .map(|&conf| if conf > tau { 1.0 } else { 0.0 })
        .collect();
    let gate = Tensor3::from_vec(gate, p_w.confidence.b, p_w.confidence.h, p_w.confidence.w);
    let scale = 1.0 / (p_s.logits.b * p_s.logits.h * p_s.logits.w) as f64;
    weighted_ce(&p_s.logits, &p_w.pseudo_labels, &gate, scale)
}
